import csv
import json
import subprocess
import sys

import pytest

from tegsim import __version__
from tegsim.cli import main

IV_CONFIG = {"device": {"T1": 0.08}, "phi": [0.0, 0.1875, 0.375, 0.75]}
PLASMA_CONFIG = {
    "profile": {"kind": "harmonic", "x_min": -1.5e-7, "x_max": 1.5e-7, "n_points": 301,
                "omega_p": 1e15, "v_F": 1e6, "delta_E_eV": 0.5, "L": 1e-7},
    "packet": {"x0": 1e-8}, "dt": 1e-16, "store_every": 5, "classical_dt": 1e-15,
}


def write(path, obj):
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(tmp_path, experiment, config, name="out.csv", extra=()):
    cfg = write(tmp_path / f"{experiment}.json", config)
    out = tmp_path / name
    code = main([experiment, "--config", cfg, "--output", str(out), *extra])
    return code, out


def test_iv_sweep_rows_and_sign_structure(tmp_path):
    code, out = run(tmp_path, "iv-sweep", IV_CONFIG)
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["phi", "power", "gamma", "n_a", "n_b"]
    assert len(rows) == 5
    assert abs(float(rows[3][1])) <= 1e-12
    assert float(rows[4][1]) < 0
    summary = json.loads((tmp_path / "out.summary.json").read_text())
    assert summary["phi0"] == pytest.approx(0.375)


def test_numbers_carry_17_significant_digits(tmp_path):
    _, out = run(tmp_path, "iv-sweep", IV_CONFIG)
    value = read_csv(out)[1][4]
    digits = value.split("e")[0].replace(".", "").replace("-", "").lstrip("0")
    assert len(digits) == 17


def test_power_compare_relative_errors(tmp_path):
    code, out = run(tmp_path, "power-compare", {"g": [0.01, 0.02, 0.04]})
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["g", "p_numeric", "p_second_order", "p_resolvent", "rel_err"]
    assert all(float(r[4]) <= 0.05 for r in rows[1:])


def test_thermalize_approaches_gibbs(tmp_path):
    code, out = run(tmp_path, "thermalize", {"device": {"T1": 0.05}, "t_max": 1000,
                                             "dt": 0.5, "store_every": 200})
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["t", "trace_distance_to_gibbs"]
    dist = [float(r[1]) for r in rows[1:]]
    assert dist[0] > 0.9 and dist[-1] < 1e-4


def test_plasma_summary(tmp_path):
    code, out = run(tmp_path, "plasma", PLASMA_CONFIG)
    assert code == 0
    assert read_csv(out)[0] == ["t", "x_c"]
    summary = json.loads((tmp_path / "out.summary.json").read_text())
    assert summary["omega_measured"] == pytest.approx(summary["omega_well"], rel=0.05)
    assert summary["omega_classical"] == pytest.approx(summary["omega_well"], rel=0.05)


def test_perturb_check_exponents(tmp_path):
    code, out = run(tmp_path, "perturb-check", {"instances": 3, "seed": 7}, name="fit.json")
    assert code == 0
    data = json.loads(out.read_text())
    assert data["order_1_mean"] == pytest.approx(2.0, abs=0.15)
    assert data["order_2_mean"] == pytest.approx(3.0, abs=0.15)


@pytest.mark.parametrize("experiment,config", [
    ("iv-sweep", IV_CONFIG),
    ("perturb-check", {"instances": 2}),
    ("thermalize", {"t_max": 50, "dt": 0.5, "store_every": 10}),
])
def test_identical_configs_give_identical_bytes(tmp_path, experiment, config):
    _, first = run(tmp_path, experiment, config, name="a.out")
    _, second = run(tmp_path, experiment, config, name="b.out")
    assert first.read_bytes() == second.read_bytes()


def test_metadata_sidecar(tmp_path):
    text = '{"phi": [0.1, 0.2],   "device": {"T1": 0.2}}'
    _, out = run(tmp_path, "iv-sweep", text)
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["config"] == text
    assert meta["version"] == __version__
    assert meta["wall_time_s"] >= 0


def test_si_display_units(tmp_path):
    code, out = run(tmp_path, "iv-sweep", IV_CONFIG, extra=("--units", "si-display"))
    assert code == 0
    assert read_csv(out)[0] == ["phi_V", "power_W", "gamma_per_s", "n_a", "n_b"]
    summary = json.loads((tmp_path / "out.summary.json").read_text())
    assert summary["seebeck_mV_per_K"] == pytest.approx(12.5 * 8.617333262e-2, rel=1e-9)


@pytest.mark.parametrize("config", [
    "{not json",
    "[1, 2, 3]",
    {"phi": [0.1], "device": {"E_gap": 1}},
    {"phi": [0.1], "colour": "red"},
    {"device": {"T1": 0.01}, "phi": [0.1]},
    {"phi": "many"},
])
def test_invalid_configs_exit_2_without_output(tmp_path, capsys, config):
    code, out = run(tmp_path, "iv-sweep", config)
    assert code == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["message"]


def test_unknown_experiment_and_units(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", IV_CONFIG)
    assert main(["warp-drive", "--config", cfg]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"
    assert main(["iv-sweep", "--config", cfg, "--units", "furlongs"]) == 2
    assert main(["iv-sweep"]) == 2


def test_missing_config_file(tmp_path):
    assert main(["iv-sweep", "--config", str(tmp_path / "nope.json")]) == 2


def test_numerical_instability_exits_3(tmp_path, capsys):
    code, out = run(tmp_path, "thermalize", {"device": {"gamma_c": 5.0}, "t_max": 40, "dt": 4.0,
                                             "store_every": 1})
    assert code == 3
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "IntegrationError" and err["time"] > 0


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path / "c.json", IV_CONFIG)
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "tegsim", "iv-sweep", "--config", cfg,
                           "--output", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
    bad = write(tmp_path / "bad.json", "{")
    proc = subprocess.run([sys.executable, "-m", "tegsim", "iv-sweep", "--config", bad],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["exit_code"] == 2
    assert not (tmp_path / "iv-sweep.csv").exists()
