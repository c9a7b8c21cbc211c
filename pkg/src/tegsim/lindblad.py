"""Dense operator algebra, fermionic registers and GKSL generators.

Operators are plain ``numpy`` complex arrays of shape ``(dim, dim)``.
Superoperators act on row-major vectorized matrices, so that
``vec(A @ X @ B) == kron(A, B.T) @ vec(X)`` with ``vec = X.reshape(-1)``.
Units are natural (hbar = k_B = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import (
    CapacityError,
    DegeneracyError,
    IntegrationError,
    ShapeError,
)

MAX_MODES = 12

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8

# fixed-step integration guards
TRACE_DRIFT_LIMIT = 1e-8
NEGATIVE_EIG_LIMIT = -1e-6


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def as_operator(a, dim: int | None = None) -> np.ndarray:
    """Validate ``a`` as a finite square complex matrix and return it."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ShapeError(f"operator must be a non-empty square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ShapeError(f"operator has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("operator has non-finite entries")
    return arr


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def check_density_matrix(rho, tol_trace: float = TRACE_TOL,
                         tol_herm: float = HERMITIAN_TOL,
                         tol_pos: float = POSITIVITY_TOL) -> np.ndarray:
    """Return ``rho`` as an array after checking trace, hermiticity and positivity."""
    rho = as_operator(rho)
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol_trace:
        raise ValueError(f"density matrix trace is {tr}, expected 1")
    if not is_hermitian(rho, tol_herm):
        raise ValueError("density matrix is not Hermitian")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0]
    if min_eig < -tol_pos:
        raise ValueError(f"density matrix has negative eigenvalue {min_eig:.3e}")
    return rho


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    diff = np.asarray(rho) - np.asarray(sigma)
    diff = 0.5 * (diff + dagger(diff))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


@dataclass(frozen=True)
class LindbladTerm:
    jump: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "jump", as_operator(self.jump))
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"Lindblad rate must be finite and >= 0, got {self.rate}")


@dataclass(frozen=True)
class GeneratorSpec:
    """Hamiltonian plus weighted jump operators of a GKSL generator."""

    hamiltonian: np.ndarray
    terms: tuple[LindbladTerm, ...] = ()

    def __post_init__(self):
        h = as_operator(self.hamiltonian)
        if not is_hermitian(h, 1e-10 * max(1.0, np.max(np.abs(h)))):
            raise ValueError("generator Hamiltonian is not Hermitian")
        object.__setattr__(self, "hamiltonian", h)
        terms = tuple(self.terms)
        for t in terms:
            if t.jump.shape != h.shape:
                raise ShapeError(
                    f"jump operator shape {t.jump.shape} does not match Hamiltonian {h.shape}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @cached_property
    def _active(self):
        # (rate, A, A^dag, A^dag A) for terms with nonzero rate
        out = []
        for t in self.terms:
            if t.rate > 0:
                ad = dagger(t.jump)
                out.append((t.rate, t.jump, ad, ad @ t.jump))
        return out

    @cached_property
    def _effective(self):
        # H_eff = H - i/2 sum r A^dag A, so -i[H,rho] - 1/2{K,rho} = -i(H_eff rho - rho H_eff^dag)
        k = np.zeros_like(self.hamiltonian)
        for rate, _, _, ada in self._active:
            k += rate * ada
        return self.hamiltonian - 0.5j * k


def apply_generator(gen: GeneratorSpec, rho) -> np.ndarray:
    """Return ``-i[H, rho] + sum r (A rho A^dag - 1/2 {A^dag A, rho})``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != gen.hamiltonian.shape:
        raise ShapeError(f"state shape {rho.shape} does not match generator dim {gen.dim}")
    heff = gen._effective
    out = -1j * (heff @ rho - rho @ dagger(heff))
    for rate, a, ad, _ in gen._active:
        out += rate * (a @ rho @ ad)
    return out


def adjoint_apply(gen: GeneratorSpec, x) -> np.ndarray:
    """Heisenberg-picture generator: ``i[H, X] + sum r (A^dag X A - 1/2 {A^dag A, X})``."""
    x = np.asarray(x, dtype=complex)
    if x.shape != gen.hamiltonian.shape:
        raise ShapeError(f"operator shape {x.shape} does not match generator dim {gen.dim}")
    heff = gen._effective
    out = 1j * (dagger(heff) @ x - x @ heff)
    for rate, a, ad, _ in gen._active:
        out += rate * (ad @ x @ a)
    return out


def _left(a):
    return np.kron(a, np.eye(a.shape[0]))


def _right(b):
    return np.kron(np.eye(b.shape[0]), b.T)


def liouvillian(gen: GeneratorSpec) -> np.ndarray:
    """Matrix of ``apply_generator`` acting on row-major ``vec(rho)``."""
    heff = gen._effective
    sup = -1j * (_left(heff) - _right(dagger(heff)))
    for rate, a, ad, _ in gen._active:
        sup += rate * np.kron(a, ad.T)
    return sup


def adjoint_liouvillian(gen: GeneratorSpec) -> np.ndarray:
    """Matrix of ``adjoint_apply`` acting on row-major ``vec(X)``."""
    heff = gen._effective
    sup = 1j * (_left(dagger(heff)) - _right(heff))
    for rate, a, ad, _ in gen._active:
        sup += rate * np.kron(ad, a.T)
    return sup


def spectral_gap(gen: GeneratorSpec, tol: float = 1e-9) -> float:
    """Smallest nonzero ``|Re lambda|`` over the generator's eigenvalues."""
    ev = np.linalg.eigvals(liouvillian(gen))
    re = np.abs(ev.real)
    scale = max(1.0, float(np.max(np.abs(ev))))
    nz = re[re > tol * scale]
    if nz.size == 0:
        raise DegeneracyError("generator has no relaxing modes")
    return float(nz.min())


def steady_state(gen: GeneratorSpec, rtol: float = 1e-10) -> np.ndarray:
    """Unique trace-one fixed point of ``gen`` from the superoperator kernel.

    Raises DegeneracyError when the kernel is not one-dimensional.
    """
    d = gen.dim
    sup = liouvillian(gen)
    _, s, vh = np.linalg.svd(sup)
    cutoff = rtol * max(1.0, s[0])
    kernel_dim = int(np.sum(s <= cutoff))
    if kernel_dim != 1:
        raise DegeneracyError(
            f"generator kernel has dimension {kernel_dim}, expected 1; "
            "add symmetry breaking or use evolve()")
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + dagger(rho))
    rho = _polish_kernel(sup, rho)
    return rho


def _polish_kernel(sup, rho):
    # diagonal rows of L are dependent (trace preservation); swap row (0,0) for Tr(rho) = 1
    d = rho.shape[0]
    a = sup.copy()
    a[0, :] = 0.0
    a[0, np.arange(d) * (d + 1)] = 1.0
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    try:
        sol = np.linalg.solve(a, b).reshape(d, d)
    except np.linalg.LinAlgError:
        return rho
    sol = 0.5 * (sol + dagger(sol))
    if np.max(np.abs(sup @ sol.reshape(-1))) > np.max(np.abs(sup @ rho.reshape(-1))):
        return rho
    return sol / np.trace(sol).real


@dataclass(frozen=True)
class FermionRegister:
    """Lowering operators of ``n_modes`` fermionic modes on a ``2**n_modes`` space."""

    n_modes: int
    labels: tuple
    lowering: tuple

    @property
    def dim(self) -> int:
        return 2 ** self.n_modes

    def index(self, label) -> int:
        return self.labels.index(label)

    def raising(self, i: int) -> np.ndarray:
        return dagger(self.lowering[i])

    def number(self, i: int) -> np.ndarray:
        a = self.lowering[i]
        return dagger(a) @ a

    def total_number(self, modes: Sequence[int] | None = None) -> np.ndarray:
        modes = range(self.n_modes) if modes is None else modes
        n = np.zeros((self.dim, self.dim), dtype=complex)
        for i in modes:
            n += self.number(i)
        return n

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def occupation_basis(self) -> np.ndarray:
        """Occupation bits per basis state, shape ``(dim, n_modes)``; mode 0 is the leading slot."""
        idx = np.arange(self.dim)
        shifts = self.n_modes - 1 - np.arange(self.n_modes)
        return (idx[:, None] >> shifts[None, :]) & 1


_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
_PARITY = np.diag([1.0, -1.0]).astype(complex)
_ID2 = np.eye(2, dtype=complex)


def build_fermion_register(n_modes: int, labels: Sequence | None = None) -> FermionRegister:
    """Jordan-Wigner register: mode i acts on slot i with a parity string on slots < i."""
    if not isinstance(n_modes, (int, np.integer)) or not 1 <= n_modes <= MAX_MODES:
        raise CapacityError(f"n_modes must be an integer in [1, {MAX_MODES}], got {n_modes!r}")
    n_modes = int(n_modes)
    labels = tuple(range(n_modes)) if labels is None else tuple(labels)
    if len(labels) != n_modes:
        raise ValueError("need exactly one label per mode")
    lowering = []
    for i in range(n_modes):
        op = np.ones((1, 1), dtype=complex)
        for slot in range(n_modes):
            if slot < i:
                factor = _PARITY
            elif slot == i:
                factor = _SIGMA_MINUS
            else:
                factor = _ID2
            op = np.kron(op, factor)
        lowering.append(op)
    return FermionRegister(n_modes, labels, tuple(lowering))


def product_state(register: FermionRegister, occupations: Sequence[float]) -> np.ndarray:
    """Diagonal product state with independent mode occupations ``f_i``."""
    f = np.asarray(occupations, dtype=float)
    if f.shape != (register.n_modes,):
        raise ShapeError(f"need {register.n_modes} occupations, got {f.shape}")
    if np.any(f < 0) or np.any(f > 1):
        raise ValueError("occupations must lie in [0, 1]")
    bits = register.occupation_basis()
    probs = np.prod(np.where(bits == 1, f[None, :], 1.0 - f[None, :]), axis=1)
    return np.diag(probs).astype(complex)


def _fermi(x):
    # overflow-safe 1/(e^x + 1)
    return expit(-np.asarray(x, dtype=float))


def grand_canonical_state(h_single, mu: float, T: float,
                          register: FermionRegister) -> np.ndarray:
    """``exp(-(H - mu N)/T) / Z`` for a quadratic diagonal ``H``.

    ``h_single`` is a list of ``(energy, mode_index)`` pairs. Modes absent from
    the list are taken as empty. The state is assembled mode by mode, so no
    large exponentials are formed.
    """
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    occ = np.zeros(register.n_modes)
    seen = set()
    for energy, idx in h_single:
        if idx in seen:
            raise ValueError(f"mode {idx} listed twice")
        seen.add(idx)
        occ[idx] = _fermi((energy - mu) / T)
    return product_state(register, occ)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    max_trace_drift: float = 0.0  # largest |Tr rho - 1| seen before renormalization
    min_eigenvalue: float = 1.0

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.times)


GeneratorLike = Union[GeneratorSpec, Callable[[float], GeneratorSpec]]


def evolve(gen_of_t: GeneratorLike, rho0, t_span: tuple[float, float], dt: float,
           store_every: int = 1) -> Trajectory:
    """Fixed-step RK4 integration of the master equation.

    ``gen_of_t`` is either a static GeneratorSpec or a callable ``t -> GeneratorSpec``.
    Every stored state is checked: trace drift above 1e-8 or an eigenvalue below
    -1e-6 raises IntegrationError; smaller trace drift is renormalized away.
    """
    rho = check_density_matrix(rho0).copy()
    t0, t1 = map(float, t_span)
    if dt <= 0 or t1 < t0:
        raise ValueError("need dt > 0 and t_span[1] >= t_span[0]")
    n_steps = int(round((t1 - t0) / dt))
    if n_steps and abs(n_steps * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ValueError("t_span length must be an integer multiple of dt")

    d = rho.shape[0]
    if isinstance(gen_of_t, GeneratorSpec):
        if gen_of_t.dim != d:
            raise ShapeError("initial state and generator dimensions differ")
        sup = liouvillian(gen_of_t)

        def rhs(t, r):
            return (sup @ r.reshape(-1)).reshape(d, d)
    else:
        def rhs(t, r):
            return apply_generator(gen_of_t(t), r)

    times = [t0]
    states = [rho.copy()]
    worst_drift, worst_eig = 0.0, float(np.linalg.eigvalsh(rho)[0])
    t = t0
    for k in range(1, n_steps + 1):
        k1 = rhs(t, rho)
        k2 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k2)
        k4 = rhs(t + dt, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + k * dt
        if k % store_every == 0 or k == n_steps:
            worst_drift = max(worst_drift, abs(np.trace(rho) - 1.0))
            rho = _guard_state(rho, t)
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(rho)[0]))
            times.append(t)
            states.append(rho.copy())
    return Trajectory(np.array(times), np.array(states), worst_drift, worst_eig)


def _guard_state(rho, t):
    tr = np.trace(rho)
    drift = abs(tr - 1.0)
    if drift > TRACE_DRIFT_LIMIT or not np.isfinite(drift):
        raise IntegrationError(f"trace drift {drift:.3e} at t={t:.6g}", time=t)
    rho = rho / tr
    rho = 0.5 * (rho + dagger(rho))
    min_eig = np.linalg.eigvalsh(rho)[0]
    if min_eig < NEGATIVE_EIG_LIMIT:
        raise IntegrationError(f"negative eigenvalue {min_eig:.3e} at t={t:.6g}", time=t)
    return rho


def operator_to_json(op) -> dict:
    """``{"dim": d, "entries": [[re, im], ...]}`` in row-major order."""
    op = as_operator(op)
    return {
        "dim": int(op.shape[0]),
        "entries": [[float(z.real), float(z.imag)] for z in op.reshape(-1)],
    }


def operator_from_json(data: dict) -> np.ndarray:
    d = int(data["dim"])
    entries = np.asarray(data["entries"], dtype=float)
    if entries.shape != (d * d, 2):
        raise ShapeError(f"expected {d * d} [re, im] pairs, got array of shape {entries.shape}")
    return (entries[:, 0] + 1j * entries[:, 1]).reshape(d, d)
