"""Batch command line: ``tegsim <experiment> --config <path> [--output <path>] [--units ...]``.

The config file is a JSON object holding the experiment parameters. Results
are written only after the computation finishes, so a failed run leaves no
output behind. Every data file depends on the config alone; wall time and
version go to a separate ``<output>.meta.json``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import constants as sc

from . import __version__
from .engine import (
    average_power_numeric,
    average_power_resolvent,
    average_power_second_order,
)
from .errors import (
    BoundaryExitError,
    CapacityError,
    ConfigError,
    DegeneracyError,
    InfeasibleError,
    InsufficientSpanError,
    IntegrationError,
    ShapeError,
    SingularSystemError,
)
from .lindblad import evolve, product_state, trace_distance
from .perturbation import random_instance, residual_exponent
from .plasma import (
    classical_trajectory,
    extract_centroid_frequency,
    gaussian_packet,
    kg_evolve,
    profile_from_dict,
)
from .thermoelectric import (
    DeviceParams,
    OperatingPoint,
    assemble_device,
    build_device,
    iv_sweep,
    open_circuit_voltage,
    seebeck_coefficient,
    seebeck_si,
)

EXPERIMENTS = ("iv-sweep", "power-compare", "thermalize", "plasma", "perturb-check")
UNITS = ("natural", "si-display")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (IntegrationError, SingularSystemError, BoundaryExitError,
                  DegeneracyError, InsufficientSpanError, FloatingPointError)
INVALID_ERRORS = (ConfigError, CapacityError, ShapeError, InfeasibleError,
                  KeyError, TypeError, ValueError)


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------- config helpers

class Params:
    """Dict wrapper that records which keys were read, so leftovers can be rejected."""

    def __init__(self, data: dict, where: str = "config"):
        if not isinstance(data, dict):
            raise ConfigError(f"{where} must be a JSON object")
        self.data = data
        self.where = where
        self.used: set[str] = set()

    def get(self, key, default=None, kind: Callable | None = None):
        self.used.add(key)
        if key not in self.data:
            return default
        val = self.data[key]
        if kind is not None:
            try:
                val = kind(val)
            except (TypeError, ValueError):
                raise ConfigError(f"{self.where}.{key}: cannot interpret {val!r}") from None
        return val

    def require(self, key, kind: Callable | None = None):
        if key not in self.data:
            raise ConfigError(f"{self.where} is missing required key {key!r}")
        return self.get(key, kind=kind)

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.where} has unknown keys: {extra}")


def _grid(spec, where: str) -> list[float]:
    """A list of numbers, or ``{"start", "stop", "num"}`` for an even grid."""
    if isinstance(spec, list):
        vals = [float(v) for v in spec]
    elif isinstance(spec, dict):
        p = Params(spec, where)
        start, stop = p.require("start", float), p.require("stop", float)
        num = p.require("num", int)
        p.finish()
        if num < 1:
            raise ConfigError(f"{where}.num must be >= 1")
        vals = np.linspace(start, stop, num).tolist()
    else:
        raise ConfigError(f"{where} must be a list or a start/stop/num object")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{where} must be a non-empty list of finite numbers")
    return vals


def _positive(val, name):
    if not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
        raise ConfigError(f"{name} must be a positive number")
    return val


def _device(p: Params) -> DeviceParams:
    raw = p.get("device", {})
    if not isinstance(raw, dict):
        raise ConfigError("device must be a JSON object")
    return DeviceParams.from_dict(raw)


# ---------------------------------------------------------------- units

def _energy_scale(p: Params) -> float:
    """Joules per natural energy unit (config ``energy_unit_eV``, default 1 eV)."""
    return _positive(p.get("energy_unit_eV", 1.0, float), "energy_unit_eV") * sc.eV


def _natural_to_si(energy_unit: float) -> dict[str, tuple[str, float]]:
    time_unit = sc.hbar / energy_unit
    return {
        "phi": ("phi_V", energy_unit / sc.e),
        "power": ("power_W", energy_unit / time_unit),
        "gamma": ("gamma_per_s", 1.0 / time_unit),
        "p_numeric": ("p_numeric_W", energy_unit / time_unit),
        "p_second_order": ("p_second_order_W", energy_unit / time_unit),
        "p_resolvent": ("p_resolvent_W", energy_unit / time_unit),
        "t": ("t_s", time_unit),
    }


PLASMA_SI_DISPLAY = {"t": ("t_ps", 1e12), "x_c": ("x_c_nm", 1e9)}


def _convert(columns, rows, table):
    scales = [table.get(c, (c, 1.0)) for c in columns]
    new_cols = [s[0] for s in scales]
    new_rows = [[v * s[1] for v, s in zip(r, scales)] for r in rows]
    return new_cols, new_rows


# ---------------------------------------------------------------- experiments

class Result:
    def __init__(self, columns=None, rows=None, summary=None, json_only=False):
        self.columns = columns
        self.rows = rows
        self.summary = summary
        self.json_only = json_only


def run_iv_sweep(p: Params, units: str) -> Result:
    params = _device(p)
    phis = _grid(p.require("phi"), "phi")
    center = p.get("center", None, float)
    workers = p.get("workers", 1, int)
    scale = _energy_scale(p)
    p.finish()
    res = iv_sweep(params, phis, center=center, workers=max(1, workers))
    phi0 = open_circuit_voltage(params)
    seebeck = seebeck_coefficient(params)
    cols, rows = res.columns, res.rows
    if units == "si-display":
        cols, rows = _convert(cols, rows, _natural_to_si(scale))
        summary = {"phi0_V": phi0 * scale / sc.e,
                   "seebeck_mV_per_K": seebeck_si(params) * 1e3}
    else:
        summary = {"phi0": phi0, "seebeck": seebeck}
    return Result(cols, rows, summary)


def run_power_compare(p: Params, units: str) -> Result:
    params = _device(p)
    phi = p.get("phi", 0.2, float)
    gs = _grid(p.get("g", [0.01, 0.02, 0.04]), "g")
    dt = _positive(p.get("dt", 0.05, float), "dt")
    n_periods = p.get("n_periods", 10, int)
    h_xi = p.get("h_xi", 1e-4, float)
    scale = _energy_scale(p)
    p.finish()
    op = OperatingPoint.from_voltage(params, phi)
    rows = []
    for g in gs:
        model = build_device(params.replace(g=g), op)
        pn = average_power_numeric(model, n_periods=n_periods, dt=dt)
        p2 = average_power_second_order(model, h_xi)
        pr = average_power_resolvent(model, h_xi)
        err = abs(pn - p2) / abs(p2) if p2 != 0 else (0.0 if pn == 0 else math.inf)
        rows.append([g, pn, p2, pr, err])
    cols = ["g", "p_numeric", "p_second_order", "p_resolvent", "rel_err"]
    if units == "si-display":
        cols, rows = _convert(cols, rows, _natural_to_si(scale))
    return Result(cols, rows)


def run_thermalize(p: Params, units: str) -> Result:
    params = _device(p)
    phi = p.get("phi", 0.0, float)
    t_max = _positive(p.get("t_max", 2000.0, float), "t_max")
    dt = _positive(p.get("dt", 0.5, float), "dt")
    store_every = p.get("store_every", 20, int)
    initial = p.get("initial", "empty")
    scale = _energy_scale(p)
    p.finish()
    dev = assemble_device(params, OperatingPoint.from_voltage(params, phi))
    n = dev.register.n_modes
    if initial == "empty":
        occ = [0.0] * n
    elif initial == "full":
        occ = [1.0] * n
    elif isinstance(initial, list) and len(initial) == n:
        occ = [float(v) for v in initial]
    else:
        raise ConfigError(f"initial must be 'empty', 'full' or a list of {n} occupations")
    if store_every < 1:
        raise ConfigError("store_every must be >= 1")
    n_steps = round(t_max / dt)
    traj = evolve(dev.generator(0.0), product_state(dev.register, occ),
                  (0.0, n_steps * dt), dt, store_every)
    gibbs = dev.grand_canonical(0.0)
    rows = [[t, trace_distance(rho, gibbs)] for t, rho in traj]
    cols = ["t", "trace_distance_to_gibbs"]
    if units == "si-display":
        cols, rows = _convert(cols, rows, _natural_to_si(scale))
    return Result(cols, rows)


def run_plasma(p: Params, units: str) -> Result:
    profile = profile_from_dict(Params(p.require("profile"), "profile").data)
    packet = Params(p.get("packet", {}), "packet")
    x0 = packet.require("x0", float)
    sigma = packet.get("sigma", None, float)
    packet.finish()
    dt = _positive(p.require("dt", float), "dt")
    store_every = p.get("store_every", 10, int)
    _, omega_well = profile.well_bottom()
    if "n_steps" in p.data:
        n_steps = p.require("n_steps", int)
    else:
        periods = _positive(p.get("periods", 6.0, float), "periods")
        n_steps = int(math.ceil(periods * 2 * math.pi / omega_well / dt))
    classical_dt = p.get("classical_dt", None, float)
    p.finish()

    traj = kg_evolve(profile, gaussian_packet(profile, x0, sigma), dt, n_steps, store_every)
    omega = extract_centroid_frequency(traj)
    drift = float(np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]))
    summary: dict[str, Any] = {"omega_measured": omega, "omega_well": omega_well,
                               "rel_diff": abs(omega - omega_well) / omega_well,
                               "energy_drift": drift}
    if classical_dt is not None:
        cdt = _positive(classical_dt, "classical_dt")
        ct = classical_trajectory(profile, x0, 0.0, cdt, int(math.ceil(n_steps * dt / cdt)))
        summary["omega_classical"] = ct.frequency()
    rows = [[t, x] for t, x in zip(traj.times, traj.centroid())]
    cols = ["t", "x_c"]
    if units == "si-display":
        cols, rows = _convert(cols, rows, PLASMA_SI_DISPLAY)
        summary = {k + "_THz" if k.startswith("omega") else k:
                   (v / (2 * math.pi * 1e12) if k.startswith("omega") else v)
                   for k, v in summary.items()}
    return Result(cols, rows, summary)


def run_perturb_check(p: Params, units: str) -> Result:
    dim = p.get("dim", 6, int)
    instances = p.get("instances", 5, int)
    seed = p.get("seed", 0, int)
    min_gap = _positive(p.get("min_gap", 1.0, float), "min_gap")
    if "lambdas" in p.data:
        lams = _grid(p.get("lambdas"), "lambdas")
    else:
        exps = _grid(p.get("log10_lambdas", {"start": -3, "stop": -1, "num": 7}), "log10_lambdas")
        lams = [10.0 ** v for v in exps]
    p.finish()
    if dim < 2 or instances < 1:
        raise ConfigError("dim must be >= 2 and instances >= 1")
    if any(v <= 0 for v in lams):
        raise ConfigError("lambdas must be positive")
    rng = np.random.default_rng(seed)
    e1, e2 = [], []
    for _ in range(instances):
        h0, v = random_instance(dim, rng, min_gap)
        e1.append(residual_exponent(h0, v, lams, 1))
        e2.append(residual_exponent(h0, v, lams, 2))
    summary = {"lambdas": lams, "order_1": e1, "order_2": e2,
               "order_1_mean": float(np.mean(e1)), "order_2_mean": float(np.mean(e2))}
    return Result(summary=summary, json_only=True)


RUNNERS = {
    "iv-sweep": run_iv_sweep,
    "power-compare": run_power_compare,
    "thermalize": run_thermalize,
    "plasma": run_plasma,
    "perturb-check": run_perturb_check,
}


# ---------------------------------------------------------------- output

def _json_numbers(obj):
    if isinstance(obj, dict):
        return {k: _json_numbers(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_numbers(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj))
    return obj


def dumps(obj) -> str:
    return json.dumps(_json_numbers(obj), indent=2, sort_keys=True) + "\n"


def render_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_path(output: Path) -> Path:
    return output.with_name(output.stem + ".summary.json")


def meta_path(output: Path) -> Path:
    return output.with_name(output.name + ".meta.json")


# ---------------------------------------------------------------- entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tegsim", description="Thermoelectric generator simulations.")
    ap.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("--config", required=True, help="JSON parameter file")
    ap.add_argument("--output", help="output path (default: <experiment>.csv or .json)")
    ap.add_argument("--units", default="natural", help="natural | si-display")
    ap.add_argument("--version", action="version", version=f"tegsim {__version__}")
    return ap


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    t = getattr(exc, "time", None)
    if t is not None:
        err["time"] = t
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def run(experiment: str, config_path: str, output: str | None = None,
        units: str = "natural") -> int:
    start = time.perf_counter()
    try:
        if experiment not in RUNNERS:
            raise UsageError(f"unknown experiment {experiment!r}; choose from {list(EXPERIMENTS)}")
        if units not in UNITS:
            raise UsageError(f"unknown units {units!r}; choose from {list(UNITS)}")
        try:
            raw = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from None
        params = Params(data)
        result = RUNNERS[experiment](params, units)
        out = Path(output) if output else Path(
            experiment + (".json" if result.json_only else ".csv"))
        if not out.parent.is_dir():
            raise ConfigError(f"output directory {out.parent} does not exist")
    except UsageError as exc:
        return _fail(EXIT_INVALID, exc)
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, exc)
    except INVALID_ERRORS as exc:
        return _fail(EXIT_INVALID, exc)

    if result.json_only:
        _atomic_write(out, dumps(result.summary))
    else:
        _atomic_write(out, render_csv(result.columns, result.rows))
        if result.summary is not None:
            _atomic_write(summary_path(out), dumps(result.summary))
    meta = {"experiment": experiment, "units": units, "version": __version__,
            "config": raw, "wall_time_s": time.perf_counter() - start}
    _atomic_write(meta_path(out), json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_INVALID, exc)
    return run(args.experiment, args.config, args.output, args.units)


if __name__ == "__main__":
    sys.exit(main())
