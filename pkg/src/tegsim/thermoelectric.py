"""Two-box junction model of a thermoelectric generator.

Electrons occupy single-particle levels in box A (``modes_a``) and box B
(``modes_b``). The piston couples through

    M = E_g V_J (N_b / V_B - N_a / V_A),

so a drive ``xi`` lowers box-A levels by ``xi E_g V_J / V_A`` and raises box-B
levels by ``xi E_g V_J / V_B``. The hot bath transfers electrons across the
junction when ``|E_a(k) - E_b(l) - E_g| <= deltaE``; forward (A to B) at rate
``gamma0`` and backward at ``gamma0 exp(-E_g / T1)``.

Cold-bath processes (all at temperature ``T``):

* intra-box hopping between level pairs with detailed-balance rates, plus
  level dephasing. Both conserve each box's electron number;
* particle exchange of every level with its box's reservoir at potential
  ``mu_a`` or ``mu_b`` (rate ``gamma_r``). This pins the electrochemical
  potentials and makes the stationary state unique.

Natural units: ``hbar = k_B = e = 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from scipy import constants as sc
from scipy.special import expit

from .engine import DrivingSpec, EngineModel
from .errors import CapacityError, ConfigError, InfeasibleError
from .lindblad import (
    MAX_MODES,
    FermionRegister,
    GeneratorSpec,
    LindbladTerm,
    build_fermion_register,
    product_state,
)

OCCUPANCY_TOL = 1e-10


class DeadJunctionWarning(RuntimeWarning):
    """No level pair satisfies the hot-bath energy window; power vanishes."""


def fermi_dirac(E, mu, T):
    """``1 / (exp((E - mu) / T) + 1)`` without overflow; works on arrays."""
    if not np.all(np.asarray(T) > 0):
        raise ValueError(f"temperature must be positive, got {T}")
    x = (np.asarray(E, dtype=float) - mu) / T
    out = expit(-x)
    return float(out) if out.ndim == 0 else out


def _filled_and_empty(levels, mu, T):
    # (f, 1 - f), each accurate in its own tail
    x = (np.atleast_1d(np.asarray(levels, dtype=float)) - mu) / T
    return expit(-x), expit(x)


def fermi_dirac_derivative(E, mu, T):
    """``d f / d E``; equals ``-f (1 - f) / T``."""
    f = np.asarray(fermi_dirac(E, mu, T))
    out = -f * (1.0 - f) / T
    return float(out) if out.ndim == 0 else out


def chemical_potential_from_density(modes: Sequence[float], n_target: float,
                                    volume: float, T: float) -> float:
    """Bisection for ``mu`` with ``sum_k f(E_k, mu, T) = n_target * volume``."""
    modes = np.asarray(modes, dtype=float)
    if T <= 0:
        raise ValueError("temperature must be positive")
    target = n_target * volume
    if not 0 < target < len(modes):
        raise InfeasibleError(
            f"target occupancy {target} outside (0, {len(modes)}) for {len(modes)} levels")

    def excess(mu):
        return float(np.sum(fermi_dirac(modes, mu, T))) - target

    # occupancy of a level is within 1e-300 of 0/1 once |E - mu| > 700 T
    lo = modes.min() - 50.0 * T
    hi = modes.max() + 50.0 * T
    while excess(lo) > 0:
        lo -= 50.0 * T
    while excess(hi) < 0:
        hi += 50.0 * T
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        val = excess(mid)
        if abs(val) <= 0.01 * OCCUPANCY_TOL or hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
        if val < 0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    if abs(excess(mu)) > OCCUPANCY_TOL:
        raise InfeasibleError("bisection did not reach the occupancy tolerance")
    return mu


@dataclass(frozen=True)
class DeviceParams:
    """Junction parameters. ``mu_center`` fixes where the voltage is split.

    ``gamma_r`` is the reservoir exchange rate; ``None`` means ``gamma_c``.
    """

    E_g: float = 1.0
    V_A: float = 1.0
    V_B: float = 1.0
    V_J: float = 0.05
    T: float = 0.05
    T1: float = 0.1
    g: float = 0.02
    Omega: float = 0.5
    modes_a: tuple = (1.0,)
    modes_b: tuple = (0.0,)
    gamma0: float = 1e-3
    deltaE: float = 0.2
    gamma_c: float = 1e-2
    gamma_r: Optional[float] = None
    mu_center: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "modes_a", tuple(float(e) for e in self.modes_a))
        object.__setattr__(self, "modes_b", tuple(float(e) for e in self.modes_b))
        problems = []
        if not self.T > 0:
            problems.append("T must be > 0")
        if not self.T1 >= self.T:
            problems.append("T1 must be >= T")
        if not self.E_g > 0:
            problems.append("E_g must be > 0")
        for name in ("V_A", "V_B", "V_J", "deltaE", "Omega"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("gamma0", "gamma_c", "g"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be >= 0")
        if self.gamma_r is not None and not self.gamma_r >= 0:
            problems.append("gamma_r must be >= 0")
        if not self.modes_a or not self.modes_b:
            problems.append("each box needs at least one level")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def reservoir_rate(self) -> float:
        return self.gamma_c if self.gamma_r is None else self.gamma_r

    @property
    def coupling(self) -> float:
        """``E_g V_J``, the energy scale of the piston coupling."""
        return self.E_g * self.V_J

    @property
    def center(self) -> float:
        if self.mu_center is not None:
            return self.mu_center
        return 0.5 * (float(np.mean(self.modes_a)) + float(np.mean(self.modes_b)))

    def replace(self, **changes) -> "DeviceParams":
        data = asdict(self)
        data.update(changes)
        return DeviceParams(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown device parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes_a"] = list(d["modes_a"])
        d["modes_b"] = list(d["modes_b"])
        return d


@dataclass(frozen=True)
class OperatingPoint:
    mu_a: float
    mu_b: float
    Phi: float
    n_a: float
    n_b: float

    def __post_init__(self):
        if abs(self.Phi - (self.mu_a - self.mu_b)) > 1e-12 * max(1.0, abs(self.Phi)):
            raise ConfigError("operating point must satisfy Phi = mu_a - mu_b")
        if self.n_a < 0 or self.n_b < 0:
            raise ConfigError("densities must be non-negative")

    @classmethod
    def from_potentials(cls, params: DeviceParams, mu_a: float, mu_b: float,
                        Phi: float | None = None) -> "OperatingPoint":
        n_a = float(np.sum(fermi_dirac(params.modes_a, mu_a, params.T))) / params.V_A
        n_b = float(np.sum(fermi_dirac(params.modes_b, mu_b, params.T))) / params.V_B
        return cls(mu_a, mu_b, mu_a - mu_b if Phi is None else Phi, n_a, n_b)

    @classmethod
    def from_voltage(cls, params: DeviceParams, Phi: float,
                     center: float | None = None) -> "OperatingPoint":
        """Split ``Phi`` symmetrically about ``center`` (default ``params.center``)."""
        c = params.center if center is None else center
        return cls.from_potentials(params, c + 0.5 * Phi, c - 0.5 * Phi, Phi)

    @classmethod
    def from_densities(cls, params: DeviceParams, n_a: float, n_b: float) -> "OperatingPoint":
        mu_a = chemical_potential_from_density(params.modes_a, n_a, params.V_A, params.T)
        mu_b = chemical_potential_from_density(params.modes_b, n_b, params.V_B, params.T)
        return cls.from_potentials(params, mu_a, mu_b)


def shifted_levels(params: DeviceParams, xi: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-particle levels of ``H0 + xi M``."""
    c = params.coupling
    ea = np.asarray(params.modes_a) - xi * c / params.V_A
    eb = np.asarray(params.modes_b) + xi * c / params.V_B
    return ea, eb


def active_pairs(params: DeviceParams, xi: float = 0.0) -> list[tuple[int, int]]:
    """Level pairs ``(k, l)`` inside the hot-bath window at drive ``xi``."""
    ea, eb = shifted_levels(params, xi)
    return [(k, l) for k in range(len(ea)) for l in range(len(eb))
            if abs(ea[k] - eb[l] - params.E_g) <= params.deltaE]


@dataclass
class Device:
    """Operators of a built junction on one fermionic register.

    Box-A levels occupy register modes ``0 .. len(modes_a) - 1``; box-B levels follow.
    """

    params: DeviceParams
    op_point: OperatingPoint
    register: FermionRegister
    idx_a: list = field(default_factory=list)
    idx_b: list = field(default_factory=list)

    @property
    def n_a_op(self):
        return self.register.total_number(self.idx_a)

    @property
    def n_b_op(self):
        return self.register.total_number(self.idx_b)

    def h0(self) -> np.ndarray:
        return self.hamiltonian(0.0)

    def modulation(self) -> np.ndarray:
        p = self.params
        return p.coupling * (self.n_b_op / p.V_B - self.n_a_op / p.V_A)

    def hamiltonian(self, xi: float) -> np.ndarray:
        ea, eb = shifted_levels(self.params, xi)
        reg = self.register
        h = np.zeros((reg.dim, reg.dim), dtype=complex)
        for e, i in zip(ea, self.idx_a):
            h += e * reg.number(i)
        for e, i in zip(eb, self.idx_b):
            h += e * reg.number(i)
        return h

    def hot_terms(self, xi: float = 0.0) -> list[LindbladTerm]:
        p = self.params
        reg = self.register
        back = p.gamma0 * math.exp(-p.E_g / p.T1)
        terms = []
        for k, l in active_pairs(p, xi):
            a_k = reg.lowering[self.idx_a[k]]
            b_l = reg.lowering[self.idx_b[l]]
            terms.append(LindbladTerm(a_k @ b_l.conj().T, p.gamma0))
            terms.append(LindbladTerm(a_k.conj().T @ b_l, back))
        return terms

    def cold_terms(self, xi: float = 0.0) -> list[LindbladTerm]:
        """Number-conserving cold-bath terms: intra-box hopping and dephasing."""
        p = self.params
        reg = self.register
        ea, eb = shifted_levels(p, xi)
        terms = []
        for levels, idx in ((ea, self.idx_a), (eb, self.idx_b)):
            for i, ei in zip(idx, levels):
                terms.append(LindbladTerm(reg.number(i), p.gamma_c))
                for j, ej in zip(idx, levels):
                    if i == j:
                        continue
                    # electron i -> j; ratio of opposite rates is exp(-(E_j - E_i)/T)
                    rate = p.gamma_c * fermi_dirac(ej, ei, p.T)
                    terms.append(LindbladTerm(reg.raising(j) @ reg.lowering[i], rate))
        return terms

    def reservoir_terms(self, xi: float = 0.0) -> list[LindbladTerm]:
        """Particle exchange with the box reservoirs at ``mu_a`` and ``mu_b``."""
        p = self.params
        reg = self.register
        ea, eb = shifted_levels(p, xi)
        rate = p.reservoir_rate
        terms = []
        for levels, idx, mu in ((ea, self.idx_a, self.op_point.mu_a),
                                (eb, self.idx_b, self.op_point.mu_b)):
            for i, e in zip(idx, levels):
                f = fermi_dirac(e, mu, p.T)
                terms.append(LindbladTerm(reg.raising(i), rate * f))
                terms.append(LindbladTerm(reg.lowering[i], rate * (1.0 - f)))
        return terms

    def generator(self, xi: float) -> GeneratorSpec:
        terms = self.hot_terms(xi) + self.cold_terms(xi) + self.reservoir_terms(xi)
        return GeneratorSpec(self.hamiltonian(xi), tuple(terms))

    def grand_canonical(self, xi: float = 0.0) -> np.ndarray:
        return stationary_state_xi(self.params, self.op_point, xi, register=self.register)


def assemble_device(params: DeviceParams, op_point: OperatingPoint) -> Device:
    n = len(params.modes_a) + len(params.modes_b)
    if n > MAX_MODES:
        raise CapacityError(f"device needs {n} modes, cap is {MAX_MODES}")
    labels = [("a", k) for k in range(len(params.modes_a))]
    labels += [("b", l) for l in range(len(params.modes_b))]
    reg = build_fermion_register(n, labels)
    idx_a = list(range(len(params.modes_a)))
    idx_b = list(range(len(params.modes_a), n))
    return Device(params, op_point, reg, idx_a, idx_b)


def build_device(params: DeviceParams, op_point: OperatingPoint) -> EngineModel:
    """Engine model of the junction with the drive ``g sin(Omega t) M``.

    When ``gamma0 == 0`` the stationary family is the closed-form grand-canonical
    product; otherwise it is the kernel of the generator.
    """
    dev = assemble_device(params, op_point)
    if params.gamma0 > 0 and not active_pairs(params, 0.0):
        warnings.warn("no level pair inside the hot-bath energy window; power will be 0",
                      DeadJunctionWarning, stacklevel=2)
    driving = DrivingSpec(params.g, params.Omega, dev.modulation())
    stationary = dev.grand_canonical if params.gamma0 == 0 else None
    return EngineModel(dev.h0(), driving, dev.generator, stationary)


def stationary_state_xi(params: DeviceParams, op_point: OperatingPoint, xi: float,
                        register: FermionRegister | None = None) -> np.ndarray:
    """Product of box grand-canonical states at temperature ``T`` for ``H0 + xi M``."""
    if abs(xi) >= 1:
        raise ConfigError("|xi| must be < 1")
    ea, eb = shifted_levels(params, xi)
    occ = np.concatenate([
        np.atleast_1d(fermi_dirac(ea, op_point.mu_a, params.T)),
        np.atleast_1d(fermi_dirac(eb, op_point.mu_b, params.T)),
    ])
    if register is None:
        register = build_fermion_register(len(occ))
    return product_state(register, occ)


def occupations(params: DeviceParams, op_point: OperatingPoint):
    """Level occupations and vacancies ``(f_a, 1 - f_a, f_b, 1 - f_b)``."""
    fa, ea = _filled_and_empty(params.modes_a, op_point.mu_a, params.T)
    fb, eb = _filled_and_empty(params.modes_b, op_point.mu_b, params.T)
    return fa, ea, fb, eb


def transfer_rate_factor(params: DeviceParams, op_point: OperatingPoint) -> float:
    """``Gamma = (1 / (V_A V_B)) sum_{active kl} gamma_kl (1 - f_b(l)) f_a(k)``."""
    fa, _, _, vb = occupations(params, op_point)
    total = sum(params.gamma0 * vb[l] * fa[k] for k, l in active_pairs(params))
    return total / (params.V_A * params.V_B)


def _power_prefactor(params, op_point):
    p = params
    return (p.g ** 2 * p.coupling ** 2 / p.T) * (p.V_A + p.V_B) * (op_point.n_b - op_point.n_a)


def analytic_power(params: DeviceParams, op_point: OperatingPoint) -> float:
    """Closed-form leading-order power in the ``Gamma``-factored form.

    ``P = (g^2 E_g^2 V_J^2 / T)(V_A + V_B)(n_b - n_a) Gamma
    (exp(((1 - T/T1) E_g - Phi) / T) - 1)``.
    """
    p = params
    gam = transfer_rate_factor(p, op_point)
    expo = ((1.0 - p.T / p.T1) * p.E_g - op_point.Phi) / p.T
    return _power_prefactor(p, op_point) * gam * math.expm1(expo)


def analytic_power_mode_sum(params: DeviceParams, op_point: OperatingPoint) -> float:
    """Unreduced mode-sum form of the leading-order power.

    Agrees with ``analytic_power`` when every active pair satisfies
    ``E_a(k) - E_b(l) = E_g`` exactly.
    """
    p = params
    fa, va, fb, vb = occupations(p, op_point)
    back = math.exp(-p.E_g / p.T1)
    total = sum(p.gamma0 * (back * va[k] * fb[l] - vb[l] * fa[k])
                for k, l in active_pairs(p))
    return _power_prefactor(p, op_point) * total / (p.V_A * p.V_B)


def open_circuit_voltage(params: DeviceParams) -> float:
    """``Phi0 = E_g (1 - T / T1)`` (charge unit 1)."""
    return params.E_g * (1.0 - params.T / params.T1)


def seebeck_coefficient(params: DeviceParams) -> float:
    """``E_g / T1`` in natural units (``k_B / e``)."""
    return params.E_g / params.T1


def seebeck_si(params: DeviceParams) -> float:
    """Seebeck coefficient in V/K; unit-independent since only ``E_g / T1`` enters."""
    return seebeck_coefficient(params) * sc.k / sc.e


@dataclass
class SweepResult:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)


IV_COLUMNS = ["phi", "power", "gamma", "n_a", "n_b"]


def iv_point(params: DeviceParams, phi: float, center: float | None = None) -> list:
    op = OperatingPoint.from_voltage(params, phi, center)
    return [float(phi), analytic_power(params, op), transfer_rate_factor(params, op),
            op.n_a, op.n_b]


def iv_sweep(params: DeviceParams, phi_values: Sequence[float],
             center: float | None = None, workers: int = 1) -> SweepResult:
    """Power against voltage with the grand-canonical operating point per ``Phi``.

    Rows come back in input order regardless of ``workers``.
    """
    phis = [float(v) for v in phi_values]
    if not all(math.isfinite(v) for v in phis):
        raise ConfigError("phi values must be finite")
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda v: iv_point(params, v, center), phis))
    else:
        rows = [iv_point(params, v, center) for v in phis]
    return SweepResult(list(IV_COLUMNS), rows,
                       {"phi0": open_circuit_voltage(params)})


def sign_changes(values: Sequence[float]) -> list[int]:
    """Indices ``i`` with a strict sign change between ``values[i]`` and ``values[i+1]``.

    Exact zeros are skipped over, so ``+, 0, -`` counts as one change.
    """
    out = []
    last_idx, last_sign = None, 0
    for i, v in enumerate(values):
        s = int(np.sign(v))
        if s == 0:
            continue
        if last_sign and s != last_sign:
            out.append(last_idx)
        last_idx, last_sign = i, s
    return out
