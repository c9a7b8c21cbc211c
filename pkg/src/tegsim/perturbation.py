"""Nondegenerate perturbation theory and diagonal effective Hamiltonians.

For ``H = H0 + lambda V`` the first-order correction keeps the diagonal of ``V``
in the eigenbasis of ``H0``; a drive oscillating fast compared with the level
dynamics instead contributes at second order through the time average of
``cos^2``, which is exactly one half.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegeneracyError
from .lindblad import as_operator, is_hermitian

DEGENERACY_RTOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    energies: np.ndarray
    vectors: np.ndarray
    min_gap: float

    @property
    def dim(self) -> int:
        return self.energies.size

    def projector(self, j: int) -> np.ndarray:
        v = self.vectors[:, j]
        return np.outer(v, v.conj())

    def in_basis(self, op) -> np.ndarray:
        """Matrix elements ``<phi_k|op|phi_j>``."""
        return self.vectors.conj().T @ op @ self.vectors

    def from_diagonal(self, diag) -> np.ndarray:
        return (self.vectors * np.asarray(diag)) @ self.vectors.conj().T


def spectral_decomposition(h0) -> SpectralDecomposition:
    """Eigen-decomposition of a Hermitian ``h0`` that must have a nondegenerate spectrum.

    Levels closer than ``1e-8 * ||h0||`` count as degenerate.
    """
    h0 = as_operator(h0)
    if not is_hermitian(h0, 1e-12 * max(1.0, np.max(np.abs(h0)))):
        raise ConfigError("H0 must be Hermitian")
    e, v = np.linalg.eigh(h0)
    norm = float(np.max(np.abs(e))) if e.size else 0.0
    gap = float(np.min(np.diff(e))) if e.size > 1 else np.inf
    if e.size > 1 and gap <= DEGENERACY_RTOL * norm or (e.size > 1 and norm == 0):
        raise DegeneracyError(f"H0 is degenerate: smallest gap {gap:.3e} vs norm {norm:.3e}")
    return SpectralDecomposition(e, v, gap)


def _coupling(h0, v):
    sd = spectral_decomposition(h0)
    v = as_operator(v, sd.dim)
    if not is_hermitian(v, 1e-12 * max(1.0, np.max(np.abs(v)))):
        raise ConfigError("V must be Hermitian")
    return sd, sd.in_basis(v)


def second_order_shifts(sd: SpectralDecomposition, vmat: np.ndarray) -> np.ndarray:
    """``sum_{k != j} |V_kj|^2 / (E_j - E_k)`` for each level ``j``."""
    diff = sd.energies[None, :] - sd.energies[:, None]  # [k, j] = E_j - E_k
    np.fill_diagonal(diff, np.inf)
    return np.sum(np.abs(vmat) ** 2 / diff, axis=0)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """``H0 + scale(t) * correction`` with both terms diagonal in the ``H0`` basis."""

    h0: np.ndarray
    correction: np.ndarray
    scale: Callable[[float], float]

    def __call__(self, t: float) -> np.ndarray:
        return self.h0 + self.scale(t) * self.correction

    def at_factor(self, factor: float) -> np.ndarray:
        return self.h0 + factor * self.correction


def effective_slow_hamiltonian(h0, v, lam: float,
                               envelope: Optional[Callable[[float], float]] = None
                               ) -> EffectiveHamiltonian:
    """First-order diagonal Hamiltonian ``H0 + lambda s(t) sum_j V_jj |phi_j><phi_j|``.

    ``envelope`` is the slow time factor ``s(t)``; it defaults to 1.
    """
    sd, vmat = _coupling(h0, v)
    corr = lam * sd.from_diagonal(np.real(np.diag(vmat)))
    s = envelope if envelope is not None else (lambda t: 1.0)
    return EffectiveHamiltonian(as_operator(h0), corr, s)


def effective_fast_hamiltonian(h0, v, lam: float,
                               f_envelope: Optional[Callable[[float], float]] = None
                               ) -> EffectiveHamiltonian:
    """Averaged Hamiltonian for a perturbation ``lambda f(t) cos(w t) V`` with fast ``w``.

    The correction is ``(1/2) lambda^2 f(t)^2 sum_j shift_j |phi_j><phi_j|`` with
    the second-order shifts of :func:`second_order_shifts`.
    """
    sd, vmat = _coupling(h0, v)
    corr = 0.5 * lam ** 2 * sd.from_diagonal(second_order_shifts(sd, vmat))
    f = f_envelope if f_envelope is not None else (lambda t: 1.0)
    return EffectiveHamiltonian(as_operator(h0), corr, lambda t: f(t) ** 2)


def perturbation_expansion(h0, v, lam: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Perturbed energies and normalized vectors, indexed like the ascending ``H0`` levels.

    Order 1 keeps the unperturbed vectors; order 2 adds the second-order energy
    shift and the first-order vector correction.
    """
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    sd, vmat = _coupling(h0, v)
    energies = sd.energies + lam * np.real(np.diag(vmat))
    if order == 1:
        return energies, sd.vectors.copy()
    energies = energies + lam ** 2 * second_order_shifts(sd, vmat)
    diff = sd.energies[None, :] - sd.energies[:, None]
    np.fill_diagonal(diff, np.inf)
    coeff = np.eye(sd.dim) + lam * vmat / diff  # column j: expansion of phi_j
    vecs = sd.vectors @ coeff
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return energies, vecs


def spectral_residual(h0, v, lam: float, order: int) -> float:
    """Sum of absolute differences between exact and perturbative sorted energies."""
    exact = np.linalg.eigvalsh(as_operator(h0) + lam * as_operator(v))
    approx, _ = perturbation_expansion(h0, v, lam, order)
    return float(np.sum(np.abs(np.sort(approx) - exact)))


def residual_exponent(h0, v, lambdas, order: int) -> float:
    """Log-log slope of :func:`spectral_residual` against ``lambda``."""
    lams = np.asarray(lambdas, float)
    res = np.array([spectral_residual(h0, v, lam, order) for lam in lams])
    if np.any(res <= 0):
        raise ConfigError("residual vanished; the exponent is undefined for this instance")
    return float(np.polyfit(np.log(lams), np.log(res), 1)[0])


def random_instance(dim: int, rng: np.random.Generator, min_gap: float = 1.0
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal ``H0`` with gaps of at least ``min_gap`` and a unit-norm Hermitian ``V``."""
    energies = np.cumsum(min_gap * (1.0 + rng.random(dim)))
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    v = 0.5 * (a + a.conj().T)
    v /= np.linalg.norm(v, 2)
    return np.diag(energies).astype(complex), v
