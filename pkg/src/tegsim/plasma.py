"""Hydrodynamic electron gas at a bimetallic junction (SI units).

The linearized density perturbation obeys a Klein-Gordon-like equation

    d2n/dt2 = c_F(x)^2 d2n/dx2 - omega_p(x)^2 n

with coefficients frozen per grid cell. A localized packet behaves like a
particle with Hamiltonian ``sqrt(c_F^2 p^2 + hbar^2 omega_p^2)``; near the bottom
of ``U = hbar omega_p`` it oscillates at ``sqrt(U'' / M_eff)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import constants as sc
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BoundaryExitError, ConfigError, InsufficientSpanError

E_CHARGE = sc.e
EPS0 = sc.epsilon_0
HBAR = sc.hbar
EV = sc.eV

CFL_LIMIT = 0.9


@dataclass(frozen=True)
class PlasmaMaterial:
    n: float  # m^-3
    m_star: float  # kg

    def __post_init__(self):
        if not (self.n > 0 and math.isfinite(self.n)):
            raise ConfigError(f"electron density must be positive, got {self.n}")
        if not (self.m_star > 0 and math.isfinite(self.m_star)):
            raise ConfigError(f"effective mass must be positive, got {self.m_star}")


class MaterialFunctions(NamedTuple):
    omega_p: float
    alpha: float
    c_F: float
    M_eff: float


def plasma_frequency(n, m_star):
    return np.sqrt(np.asarray(n) * E_CHARGE ** 2 / (m_star * EPS0))


def pressure_coefficient(m_star):
    """``alpha`` in the degenerate-gas law ``p = alpha n^(5/3)``."""
    return (3 * math.pi ** 2) ** (2 / 3) * HBAR ** 2 / (2 * m_star)


def sound_speed(n, m_star):
    """``c_F = sqrt((5/3) alpha n^(2/3) / m)``, equal to ``sqrt(5/6) v_F``."""
    return np.sqrt(5.0 / 3.0 * pressure_coefficient(m_star) * np.asarray(n) ** (2 / 3) / m_star)


def fermi_velocity(n, m_star):
    return HBAR * (3 * math.pi ** 2 * np.asarray(n)) ** (1 / 3) / m_star


def sound_speed_from_fermi_velocity(v_F):
    return math.sqrt(5.0 / 6.0) * v_F


def effective_mass(omega_p, c_F):
    """Packet mass ``hbar omega_p / c_F^2``."""
    return HBAR * np.asarray(omega_p) / np.asarray(c_F) ** 2


def well_frequency(delta_E: float, M_eff: float, L: float) -> float:
    """Oscillation frequency ``sqrt(2 dE / (M L^2))`` of a well of depth dE and width L."""
    for name, v in (("delta_E", delta_E), ("M_eff", M_eff), ("L", L)):
        if not v > 0:
            raise ConfigError(f"{name} must be positive, got {v}")
    return math.sqrt(2 * delta_E / (M_eff * L ** 2))


def material_functions(mat: PlasmaMaterial) -> MaterialFunctions:
    wp = float(plasma_frequency(mat.n, mat.m_star))
    cf = float(sound_speed(mat.n, mat.m_star))
    return MaterialFunctions(wp, pressure_coefficient(mat.m_star), cf, float(effective_mass(wp, cf)))


def density_for_plasma_frequency(omega_p, m_star):
    return np.asarray(omega_p) ** 2 * m_star * EPS0 / E_CHARGE ** 2


def material_from_plasma_and_fermi(omega_p: float, v_F: float) -> PlasmaMaterial:
    """Material whose plasma frequency and Fermi velocity hit the given values.

    With ``n`` tied to ``m`` through ``omega_p``, ``v_F`` scales as ``m^(-2/3)``,
    so the mass follows in closed form.
    """
    if not (omega_p > 0 and v_F > 0):
        raise ConfigError("omega_p and v_F must be positive")
    # v_F = hbar (3 pi^2 k m)^(1/3) / m with n = k m
    k = omega_p ** 2 * EPS0 / E_CHARGE ** 2
    m = (HBAR * (3 * math.pi ** 2 * k) ** (1 / 3) / v_F) ** 1.5
    return PlasmaMaterial(float(k * m), float(m))


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class JunctionProfile:
    """Background density on a uniform grid, with derived ``omega_p``, ``c_F``, ``U``."""

    x_grid: np.ndarray
    n_bar: np.ndarray
    m_star: float
    omega_p: np.ndarray = field(init=False, repr=False)
    c_F: np.ndarray = field(init=False, repr=False)
    U: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        n = np.asarray(self.n_bar, dtype=float)
        if x.ndim != 1 or x.shape != n.shape or x.size < 3:
            raise ConfigError("x_grid and n_bar must be 1-D arrays of equal length >= 3")
        dxs = np.diff(x)
        if not np.all(dxs > 0) or np.max(np.abs(dxs - dxs[0])) > 1e-9 * dxs[0]:
            raise ConfigError("x_grid must be uniform and increasing")
        if not np.all(np.isfinite(n)) or np.any(n <= 0):
            raise ConfigError("n_bar must be positive everywhere")
        if not self.m_star > 0:
            raise ConfigError("m_star must be positive")
        wp = plasma_frequency(n, self.m_star)
        for name, val in (("x_grid", x), ("n_bar", n), ("omega_p", wp),
                          ("c_F", sound_speed(n, self.m_star)), ("U", HBAR * wp)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def M_eff(self) -> np.ndarray:
        return effective_mass(self.omega_p, self.c_F)

    @classmethod
    def from_omega_p(cls, x_grid, omega_p, m_star: float) -> "JunctionProfile":
        return cls(np.asarray(x_grid, float), density_for_plasma_frequency(omega_p, m_star), m_star)

    def well_bottom(self) -> tuple[float, float]:
        """Position of the potential minimum and the small-oscillation frequency there.

        The curvature comes from a cubic spline of ``U``; the interior minimum is
        required.
        """
        spline = CubicSpline(self.x_grid, self.U)
        i = int(np.argmin(self.U))
        if i == 0 or i == self.U.size - 1:
            raise ConfigError("potential has no interior minimum")
        d1 = spline.derivative()
        lo, hi = self.x_grid[i - 1], self.x_grid[i + 1]
        x_min = brentq(d1, lo, hi) if d1(lo) * d1(hi) < 0 else float(self.x_grid[i])
        curv = float(spline.derivative(2)(x_min))
        if curv <= 0:
            raise ConfigError("potential minimum has non-positive curvature")
        wp = float(spline(x_min)) / HBAR
        cf = float(sound_speed(density_for_plasma_frequency(wp, self.m_star), self.m_star))
        return float(x_min), math.sqrt(curv / float(effective_mass(wp, cf)))


def uniform_grid(x_min: float, x_max: float, n_points: int) -> np.ndarray:
    if not (x_max > x_min and n_points >= 3):
        raise ConfigError("grid needs x_max > x_min and at least 3 points")
    return np.linspace(x_min, x_max, int(n_points))


def flat_profile(x_grid, material: PlasmaMaterial) -> JunctionProfile:
    return JunctionProfile(np.asarray(x_grid, float), np.full(len(x_grid), material.n), material.m_star)


def harmonic_well_profile(x_grid, m_star: float, omega_center: float,
                          delta_E: float, L: float) -> JunctionProfile:
    """``U(x) = hbar omega_center + delta_E (x/L)^2``, i.e. ``(1/2) M Omega^2 x^2`` at the bottom."""
    x = np.asarray(x_grid, float)
    return JunctionProfile.from_omega_p(x, omega_center + delta_E / HBAR * (x / L) ** 2, m_star)


def junction_well_profile(x_grid, m_star: float, omega_a: float, omega_b: float,
                          step_center: float, step_width: float,
                          dip_depth: float, dip_width: float) -> JunctionProfile:
    """Two bulk plateaus joined by a tanh step with a Gaussian dip in the middle.

    ``dip_depth`` is an energy (J); the dip has curvature ``2 dip_depth / dip_width^2``.
    """
    if not (step_width > 0 and dip_width > 0 and dip_depth >= 0):
        raise ConfigError("step_width, dip_width must be > 0 and dip_depth >= 0")
    x = np.asarray(x_grid, float)
    step = 0.5 * (1 + np.tanh((x - step_center) / step_width))
    wp = omega_a + (omega_b - omega_a) * step
    wp = wp - dip_depth / HBAR * np.exp(-((x - step_center) / dip_width) ** 2)
    if np.any(wp <= 0):
        raise ConfigError("dip deeper than the plasma energy: omega_p would turn negative")
    return JunctionProfile.from_omega_p(x, wp, m_star)


def profile_from_dict(spec: dict) -> JunctionProfile:
    """Build a profile from a JSON-style mapping.

    ``kind`` is ``"flat"``, ``"harmonic"`` or ``"junction"``; grid keys are
    ``x_min``, ``x_max``, ``n_points``. The medium is given either as ``m_star``
    or as ``omega_p`` plus ``v_F`` (which fixes ``m_star``).
    """
    spec = dict(spec)
    kind = spec.pop("kind", "harmonic")
    try:
        grid = uniform_grid(spec.pop("x_min"), spec.pop("x_max"), spec.pop("n_points"))
    except KeyError as exc:
        raise ConfigError(f"profile is missing grid key {exc}") from None

    def take(key, default=None):
        if key in spec:
            return spec.pop(key)
        if default is None:
            raise ConfigError(f"profile of kind {kind!r} needs {key!r}")
        return default

    if "v_F" in spec:
        mat = material_from_plasma_and_fermi(take("omega_p"), spec.pop("v_F"))
        m_star, omega_ref = mat.m_star, float(plasma_frequency(mat.n, mat.m_star))
    else:
        m_star = take("m_star")
        omega_ref = spec.pop("omega_p", None)

    if kind == "flat":
        if omega_ref is None:
            raise ConfigError("flat profile needs omega_p")
        prof = JunctionProfile.from_omega_p(grid, np.full(grid.size, omega_ref), m_star)
    elif kind == "harmonic":
        prof = harmonic_well_profile(grid, m_star, take("omega_center", omega_ref),
                                     take("delta_E_eV") * EV, take("L"))
    elif kind == "junction":
        prof = junction_well_profile(grid, m_star, take("omega_a"), take("omega_b"),
                                     take("step_center", 0.0), take("step_width"),
                                     take("dip_depth_eV") * EV, take("dip_width"))
    else:
        raise ConfigError(f"unknown profile kind {kind!r}")
    if spec:
        raise ConfigError(f"unknown profile keys: {sorted(spec)}")
    return prof


# ---------------------------------------------------------------- Klein-Gordon

@dataclass(frozen=True)
class WavePacketState:
    delta_n: np.ndarray
    delta_n_dot: np.ndarray

    def __post_init__(self):
        u = np.array(self.delta_n, dtype=float)
        v = np.array(self.delta_n_dot, dtype=float)
        if u.ndim != 1 or u.shape != v.shape:
            raise ConfigError("delta_n and delta_n_dot must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ConfigError("wave packet state has non-finite entries")
        u[[0, -1]] = 0.0
        v[[0, -1]] = 0.0
        object.__setattr__(self, "delta_n", u)
        object.__setattr__(self, "delta_n_dot", v)


def gaussian_packet(profile: JunctionProfile, x0: float, sigma: float | None = None,
                    amplitude: float = 1.0) -> WavePacketState:
    """Real Gaussian ``exp(-(x-x0)^2 / (2 sigma^2))`` released from rest.

    Without ``sigma`` the width of the oscillator ground state at the well bottom
    is used, which makes the packet a coherent state of the envelope motion.
    """
    if sigma is None:
        x_min, omega = profile.well_bottom()
        wp = float(np.interp(x_min, profile.x_grid, profile.omega_p))
        cf = float(np.interp(x_min, profile.x_grid, profile.c_F))
        sigma = math.sqrt(HBAR / (float(effective_mass(wp, cf)) * omega))
    x = profile.x_grid
    u = amplitude * np.exp(-0.5 * ((x - x0) / sigma) ** 2)
    return WavePacketState(u, np.zeros_like(u))


def standing_mode(profile: JunctionProfile, m: int) -> tuple[WavePacketState, float]:
    """``sin(m pi (x - x_0) / length)`` at rest, and its wavenumber."""
    x = profile.x_grid
    length = x[-1] - x[0]
    k = m * math.pi / length
    u = np.sin(k * (x - x[0]))
    return WavePacketState(u, np.zeros_like(u)), k


@dataclass
class KGTrajectory:
    x_grid: np.ndarray
    times: np.ndarray
    delta_n: np.ndarray  # (n_stored, n_x)
    delta_n_dot: np.ndarray
    energy: np.ndarray  # conserved leapfrog energy at each stored step
    omega_p: np.ndarray

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> WavePacketState:
        return WavePacketState(self.delta_n[i], self.delta_n_dot[i])

    def centroid(self, envelope: bool = True) -> np.ndarray:
        """Centroid ``sum x w / sum w``.

        With ``envelope`` the weight is ``n^2 + (dn/dt / omega_p)^2``, the squared
        local amplitude of the carrier; plain ``n^2`` carries a ripple at twice the
        plasma frequency whose size grows as the packet picks up spatial phase.
        """
        w = self.delta_n ** 2
        if envelope:
            w = w + (self.delta_n_dot / self.omega_p) ** 2
        norm = w.sum(axis=1)
        if np.any(norm == 0):
            raise InsufficientSpanError("centroid undefined for a vanishing field")
        return (w @ self.x_grid) / norm


def _laplacian(u, dx):
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx ** 2
    return out


def check_cfl(profile: JunctionProfile, dt: float) -> float:
    """CFL number ``max(c_F) dt / dx``; raises when above 0.9 or when the mass term destabilizes."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    cfl = float(np.max(profile.c_F) * dt / profile.dx)
    if cfl > CFL_LIMIT:
        raise ConfigError(f"CFL number {cfl:.4f} exceeds {CFL_LIMIT}")
    # leapfrog bound on the largest discrete frequency
    top = np.max(dt * np.sqrt(4 * profile.c_F ** 2 / profile.dx ** 2 + profile.omega_p ** 2))
    if top >= 2:
        raise ConfigError(f"dt too large for omega_p: dt*omega_max = {top:.3f} >= 2")
    return cfl


def kg_energy(profile: JunctionProfile, state: WavePacketState) -> float:
    """``(1/2) sum[(dn/dt)^2/c^2 + (dn/dx)^2 + omega_p^2 n^2/c^2] dx``.

    This is the conserved form for position-dependent ``c_F``; on a flat profile
    it is the textbook energy divided by ``c_F^2``.
    """
    u, v = state.delta_n, state.delta_n_dot
    c2 = profile.c_F ** 2
    du = np.diff(u) / profile.dx
    return 0.5 * profile.dx * float(np.sum(v ** 2 / c2) + np.sum(du ** 2)
                                    + np.sum(profile.omega_p ** 2 * u ** 2 / c2))


def kg_evolve(profile: JunctionProfile, init: WavePacketState, dt: float, n_steps: int,
              store_every: int = 1) -> KGTrajectory:
    """Leapfrog (velocity-Verlet form) integration with zero Dirichlet boundaries.

    The stored ``energy`` is the discrete invariant of the scheme,
    ``(1/2)|u_{n+1}-u_n|^2/dt^2 + (1/2) u_{n+1} . A u_n`` in the ``1/c^2`` weighted
    inner product, which is exactly conserved up to rounding.
    """
    if init.delta_n.shape != profile.x_grid.shape:
        raise ConfigError("initial state does not match the grid")
    if n_steps < 0 or store_every < 1:
        raise ConfigError("n_steps must be >= 0 and store_every >= 1")
    check_cfl(profile, dt)
    dx = profile.dx
    c2 = profile.c_F ** 2
    w2 = profile.omega_p ** 2
    inv_c2 = 1.0 / c2

    def accel(u):
        a = c2 * _laplacian(u, dx) - w2 * u
        a[[0, -1]] = 0.0
        return a

    def pair_energy(u_new, u_old, v_half):
        grad = np.sum(np.diff(u_new) * np.diff(u_old)) / dx ** 2
        return 0.5 * dx * (float(np.sum(v_half ** 2 * inv_c2)) + grad
                           + float(np.sum(w2 * u_new * u_old * inv_c2)))

    u = init.delta_n.copy()
    v = init.delta_n_dot.copy()
    a = accel(u)
    n_store = n_steps // store_every + 1
    us = np.empty((n_store, u.size))
    vs = np.empty_like(us)
    es = np.empty(n_store)
    ts = np.empty(n_store)
    us[0], vs[0], ts[0] = u, v, 0.0
    # invariant before the first step uses a virtual half step
    v_half = v + 0.5 * dt * a
    es[0] = pair_energy(u + dt * v_half, u, v_half)
    j = 1
    for n in range(1, n_steps + 1):
        v_half = v + 0.5 * dt * a
        u_new = u + dt * v_half
        u_new[[0, -1]] = 0.0
        a = accel(u_new)
        v = v_half + 0.5 * dt * a
        if n % store_every == 0:
            us[j], vs[j], ts[j] = u_new, v, n * dt
            es[j] = pair_energy(u_new, u, v_half)
            j += 1
        u = u_new
    return KGTrajectory(profile.x_grid, ts[:j], us[:j], vs[:j], es[:j], profile.omega_p)


# ---------------------------------------------------------------- frequency extraction

def zero_crossing_frequency(times, signal, hysteresis: float = 0.1) -> float:
    """Angular frequency from the spacing of zero crossings of ``signal - mean``.

    A crossing only counts once the signal has moved past ``hysteresis`` times its
    peak magnitude on the other side, which rejects fast ripple near zero.
    """
    t = np.asarray(times, float)
    s = np.asarray(signal, float)
    s = s - s.mean()
    peak = float(np.max(np.abs(s))) if s.size else 0.0
    if peak == 0 or not np.isfinite(peak):
        raise InsufficientSpanError("signal is constant; no zero crossings")
    band = hysteresis * peak
    crossings = []
    state = 0
    last_zero = None
    for i in range(1, s.size):
        if s[i - 1] * s[i] < 0 or (s[i] == 0 and s[i - 1] != 0):
            last_zero = t[i - 1] + (t[i] - t[i - 1]) * s[i - 1] / (s[i - 1] - s[i])
        new_state = 1 if s[i] > band else (-1 if s[i] < -band else state)
        if state and new_state != state and last_zero is not None:
            crossings.append(last_zero)
        state = new_state
    if len(crossings) < 3:
        raise InsufficientSpanError(f"only {len(crossings)} zero crossings; need at least 3")
    return math.pi * (len(crossings) - 1) / (crossings[-1] - crossings[0])


def extract_centroid_frequency(trajectory: KGTrajectory, envelope: bool = True) -> float:
    """Dominant angular frequency of the packet centroid (see ``KGTrajectory.centroid``)."""
    return zero_crossing_frequency(trajectory.times, trajectory.centroid(envelope))


def mode_frequency(trajectory: KGTrajectory, k: float) -> float:
    """Frequency of a standing mode, from its projection on ``sin(k (x - x_0))``."""
    basis = np.sin(k * (trajectory.x_grid - trajectory.x_grid[0]))
    return zero_crossing_frequency(trajectory.times, trajectory.delta_n @ basis, hysteresis=0.0)


# ---------------------------------------------------------------- effective particle

class _UniformSpline:
    """Cubic spline on a uniform grid returning value and slope as Python floats."""

    def __init__(self, x, y):
        cs = CubicSpline(x, y)
        self.x0 = float(x[0])
        self.dx = float(x[1] - x[0])
        self.n = len(x) - 1
        self.coef = cs.c.T.tolist()  # per interval: c3, c2, c1, c0

    def __call__(self, x):
        i = min(max(int((x - self.x0) / self.dx), 0), self.n - 1)
        c3, c2, c1, c0 = self.coef[i]
        u = x - (self.x0 + i * self.dx)
        return ((c3 * u + c2) * u + c1) * u + c0, (3 * c3 * u + 2 * c2) * u + c1


@dataclass
class ClassicalTrajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    energy: np.ndarray

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.x.tolist(), self.p.tolist()))

    def __len__(self):
        return self.times.size

    def frequency(self) -> float:
        return zero_crossing_frequency(self.times, self.x)


def classical_trajectory(profile: JunctionProfile, x0: float, p0: float, dt: float,
                         n_steps: int, store_every: int = 1) -> ClassicalTrajectory:
    """Integrate ``H = sqrt(c_F(x)^2 p^2 + hbar^2 omega_p(x)^2)`` with generalized leapfrog.

    The scheme is the implicit Stormer-Verlet method for non-separable
    Hamiltonians, solved by fixed-point iteration. ``c_F`` and ``omega_p`` are
    cubic-spline interpolants of the grid data so that values and gradients agree.
    """
    x_lo, x_hi = float(profile.x_grid[0]), float(profile.x_grid[-1])
    if not x_lo <= x0 <= x_hi:
        raise ConfigError("x0 lies outside the grid")
    if not dt > 0 or n_steps < 0 or store_every < 1:
        raise ConfigError("need dt > 0, n_steps >= 0, store_every >= 1")
    c_s = _UniformSpline(profile.x_grid, profile.c_F)
    w_s = _UniformSpline(profile.x_grid, profile.omega_p)
    hb2 = HBAR * HBAR

    def ham(x, p):
        c, _ = c_s(x)
        w, _ = w_s(x)
        return math.sqrt((c * p) ** 2 + hb2 * w * w)

    def h_x(x, p):
        c, dc = c_s(x)
        w, dw = w_s(x)
        return (c * dc * p * p + hb2 * w * dw) / math.sqrt((c * p) ** 2 + hb2 * w * w)

    def h_p(x, p):
        c, _ = c_s(x)
        w, _ = w_s(x)
        return c * c * p / math.sqrt((c * p) ** 2 + hb2 * w * w)

    def fixed_point(fn, guess, scale):
        y = guess
        for _ in range(100):
            y_new = fn(y)
            if abs(y_new - y) <= 1e-15 * scale:
                return y_new
            y = y_new
        return y

    p_scale = max(abs(p0), HBAR * float(np.max(profile.omega_p)) / float(np.max(profile.c_F)))
    x_scale = x_hi - x_lo
    x, p = float(x0), float(p0)
    n_store = n_steps // store_every + 1
    ts, xs, ps, es = (np.empty(n_store) for _ in range(4))
    ts[0], xs[0], ps[0], es[0] = 0.0, x, p, ham(x, p)
    j = 1
    for n in range(1, n_steps + 1):
        p_half = fixed_point(lambda q: p - 0.5 * dt * h_x(x, q), p, p_scale)
        hp0 = h_p(x, p_half)
        x_new = x + dt * hp0
        if not x_lo <= x_new <= x_hi:
            raise BoundaryExitError(f"trajectory left the grid at t={n * dt:.6g} s", time=n * dt)
        x_new = fixed_point(
            lambda y: x + 0.5 * dt * (hp0 + h_p(min(max(y, x_lo), x_hi), p_half)), x_new, x_scale)
        if not x_lo <= x_new <= x_hi:
            raise BoundaryExitError(f"trajectory left the grid at t={n * dt:.6g} s", time=n * dt)
        p = p_half - 0.5 * dt * h_x(x_new, p_half)
        x = x_new
        if n % store_every == 0:
            ts[j], xs[j], ps[j], es[j] = n * dt, x, p, ham(x, p)
            j += 1
    return ClassicalTrajectory(ts[:j], xs[:j], ps[:j], es[:j])
