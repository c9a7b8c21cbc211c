"""Slow-piston heat engine: driving, power and heat, averaged power.

The piston is a classical periodic modulation ``xi(t) = g sin(Omega t)`` of a
Hermitian operator ``M`` that commutes with the bare Hamiltonian. Three routes
to the stationary average power are provided:

* ``average_power_numeric``: brute-force RK4 evolution and time averaging;
* ``average_power_resolvent``: second-order expansion in ``g`` at finite ``Omega``;
* ``average_power_second_order``: the same expansion in the limit where
  ``Omega`` is far above the relaxation rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, IntegrationError, SingularSystemError
from .lindblad import (
    NEGATIVE_EIG_LIMIT,
    TRACE_DRIFT_LIMIT,
    GeneratorSpec,
    adjoint_apply,
    adjoint_liouvillian,
    apply_generator,
    as_operator,
    check_density_matrix,
    commutator,
    dagger,
    is_hermitian,
    liouvillian,
    spectral_gap,
    steady_state,
)

DEFAULT_H_XI = 1e-4


@dataclass(frozen=True)
class DrivingSpec:
    g: float
    Omega: float
    M: np.ndarray

    def __post_init__(self):
        m = as_operator(self.M)
        if not is_hermitian(m, 1e-12 * max(1.0, np.max(np.abs(m)))):
            raise ConfigError("modulation operator M must be Hermitian")
        object.__setattr__(self, "M", m)
        if not self.g >= 0:
            raise ConfigError(f"drive amplitude g must be >= 0, got {self.g}")
        if not self.Omega > 0:
            raise ConfigError(f"drive frequency Omega must be > 0, got {self.Omega}")

    def xi(self, t):
        return self.g * np.sin(self.Omega * t)

    def hamiltonian_rate(self, t):
        """Time derivative of the drive term, ``g Omega cos(Omega t) M``."""
        return self.g * self.Omega * np.cos(self.Omega * t) * self.M


@dataclass(frozen=True)
class EngineModel:
    """Bare Hamiltonian, drive, and the generator family ``xi -> L[xi]``.

    ``generator_family(xi)`` must carry the full Hamiltonian ``H0 + xi M``.
    ``stationary_family`` optionally supplies ``rho_bar[xi]`` in closed form;
    by default it is the kernel of ``generator_family(xi)``.
    """

    h0: np.ndarray
    driving: DrivingSpec
    generator_family: Callable[[float], GeneratorSpec]
    stationary_family: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        h0 = as_operator(self.h0)
        object.__setattr__(self, "h0", h0)
        if h0.shape != self.driving.M.shape:
            raise ConfigError("H0 and M have different dimensions")
        comm = np.max(np.abs(commutator(h0, self.driving.M)))
        if comm > 1e-10:
            raise ConfigError(f"[H0, M] must vanish, max entry {comm:.3e}")

    def generator(self, xi: float) -> GeneratorSpec:
        return self.generator_family(xi)

    def stationary(self, xi: float) -> np.ndarray:
        if self.stationary_family is not None:
            return self.stationary_family(xi)
        return steady_state(self.generator_family(xi))

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.h0 + self.driving.xi(t) * self.driving.M

    def stationary_derivative(self, xi: float = 0.0, h_xi: float = DEFAULT_H_XI) -> np.ndarray:
        return (self.stationary(xi + h_xi) - self.stationary(xi - h_xi)) / (2 * h_xi)


def instantaneous_power_and_heat(model: EngineModel, rho, t: float) -> tuple[float, float]:
    """Power ``-Tr(rho dH/dt)`` delivered to the piston and heat current ``Tr(H L rho)``."""
    rho = as_operator(rho, model.h0.shape[0])
    drv = model.driving
    power = -np.trace(rho @ drv.hamiltonian_rate(t))
    gen = model.generator_family(drv.xi(t))
    heat = np.trace(model.hamiltonian(t) @ apply_generator(gen, rho))
    for name, val in (("power", power), ("heat current", heat)):
        if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
            raise ValueError(f"{name} has imaginary residue {val.imag:.3e}")
    return float(power.real), float(heat.real)


def default_transient(model: EngineModel, n_gaps: float = 10.0) -> float:
    """``n_gaps / gap`` with ``gap`` the slowest relaxation rate of ``L[0]``."""
    return n_gaps / spectral_gap(model.generator_family(0.0))


def average_power_numeric(model: EngineModel, t_transient: float | None = None,
                          n_periods: int = 10, dt: float = 0.05,
                          rho0=None) -> float:
    """Stationary cycle-averaged power from direct RK4 evolution.

    The step is shrunk so that an integer number of steps fills one period; the
    transient is rounded up to whole periods, so averaging starts at zero phase.
    The stage generators repeat every period and are built only once.
    """
    if n_periods < 10:
        raise ConfigError("n_periods must be at least 10")
    drv = model.driving
    if drv.g == 0:
        return 0.0
    period = 2 * math.pi / drv.Omega
    steps_per_period = max(1, math.ceil(period / dt - 1e-12))
    h = period / steps_per_period
    if t_transient is None:
        t_transient = default_transient(model)
    n_transient = math.ceil(t_transient / period - 1e-12) * steps_per_period
    n_average = n_periods * steps_per_period

    # generators at half-step phases 0, h/2, h, ... (2 * steps_per_period per period)
    sups = []
    for j in range(2 * steps_per_period):
        xi = drv.xi(0.5 * j * h)
        sups.append(liouvillian(model.generator_family(xi)))

    d = model.h0.shape[0]
    rho = model.stationary(0.0) if rho0 is None else check_density_matrix(rho0)
    vec = rho.reshape(-1).astype(complex)
    m_row = model.driving.M.T.reshape(-1)  # Tr(rho M) = m_row @ vec(rho)
    cos_phase = np.cos(drv.Omega * h * np.arange(steps_per_period))

    acc = 0.0
    total = n_transient + n_average
    for k in range(total):
        j = k % steps_per_period
        if k >= n_transient:
            acc += (m_row @ vec).real * cos_phase[j]
        l0 = sups[2 * j]
        lh = sups[2 * j + 1]
        l1 = sups[(2 * j + 2) % (2 * steps_per_period)]
        k1 = l0 @ vec
        k2 = lh @ (vec + 0.5 * h * k1)
        k3 = lh @ (vec + 0.5 * h * k2)
        k4 = l1 @ (vec + h * k3)
        vec = vec + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % steps_per_period == 0:
            vec = _check_period(vec, d, (k + 1) * h)
    return -drv.g * drv.Omega * acc / n_average


def _check_period(vec, d, t):
    rho = vec.reshape(d, d)
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_DRIFT_LIMIT:
        raise IntegrationError(f"trace drift {abs(tr - 1):.3e} at t={t:.6g}", time=t)
    rho = rho / tr
    rho = 0.5 * (rho + dagger(rho))
    if np.linalg.eigvalsh(rho)[0] < NEGATIVE_EIG_LIMIT:
        raise IntegrationError(f"negative eigenvalue at t={t:.6g}", time=t)
    return rho.reshape(-1)


def average_power_second_order(model: EngineModel, h_xi: float = DEFAULT_H_XI) -> float:
    """``-1/2 g^2 Tr(rho_bar'[0] L*[0] M)`` with a central-difference ``rho_bar'``."""
    if not 1e-6 <= h_xi <= 1e-2:
        raise ConfigError("h_xi must lie in [1e-6, 1e-2]")
    drv = model.driving
    if drv.g == 0:
        return 0.0
    drho = model.stationary_derivative(0.0, h_xi)
    lm = adjoint_apply(model.generator_family(0.0), drv.M)
    return float(-0.5 * drv.g ** 2 * np.trace(drho @ lm).real)


def average_power_resolvent(model: EngineModel, h_xi: float = DEFAULT_H_XI,
                            max_condition: float = 1e13) -> float:
    """Finite-frequency second-order power.

    Evaluates ``-1/2 g^2 Tr(rho_bar'[0] Y)`` where ``(Omega^2 + L*^2) Y = Omega^2 L* M``.
    """
    if not 1e-6 <= h_xi <= 1e-2:
        raise ConfigError("h_xi must lie in [1e-6, 1e-2]")
    drv = model.driving
    if drv.g == 0:
        return 0.0
    d = model.h0.shape[0]
    lstar = adjoint_liouvillian(model.generator_family(0.0))
    om2 = drv.Omega ** 2
    a = om2 * np.eye(d * d) + lstar @ lstar
    rhs = om2 * (lstar @ drv.M.reshape(-1))
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularSystemError(
            f"Omega^2 + L*^2 is near-singular (condition {cond:.3e}); Omega is close to a "
            "generator frequency, perturb Omega slightly")
    y = np.linalg.solve(a, rhs).reshape(d, d)
    drho = model.stationary_derivative(0.0, h_xi)
    return float(-0.5 * drv.g ** 2 * np.trace(drho @ y).real)


def stationarity_check(model: EngineModel, xi: float,
                       h_xi: float = DEFAULT_H_XI) -> tuple[float, float]:
    """Residuals of ``L[xi] rho[xi] = 0`` and of its xi-derivative.

    Returns ``(max|L rho|, max|L' rho + L rho'|)`` using central differences.
    """
    if abs(xi) >= 1:
        raise ConfigError("|xi| must be < 1")
    gen = model.generator_family(xi)
    rho = model.stationary(xi)
    r1 = float(np.max(np.abs(apply_generator(gen, rho))))
    drho = model.stationary_derivative(xi, h_xi)
    lp = apply_generator(model.generator_family(xi + h_xi), rho)
    lm = apply_generator(model.generator_family(xi - h_xi), rho)
    dl_rho = (lp - lm) / (2 * h_xi)
    r2 = float(np.max(np.abs(dl_rho + apply_generator(gen, drho))))
    return r1, r2
