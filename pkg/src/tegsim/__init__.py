"""Self-oscillating thermoelectric generator model: open-system dynamics,
slow-piston power, junction thermodynamics and plasma-mode estimates."""

__version__ = "0.1.0"
