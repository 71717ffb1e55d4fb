import json

import numpy as np
import pytest

from freezewave.cli import SUBCOMMANDS, run
from freezewave.core import load_field, load_timeseries
from freezewave.presets import preset, preset_names

FAST = {
    "simulate": ["--preset", "qne_front", "--set", "t_end=3", "--set", "x_minus=-20",
                 "--set", "x_plus=20"],
    "freeze": ["--preset", "qne_front", "--set", "t_end=3", "--set", "x_minus=-20",
               "--set", "x_plus=20", "--set", "snapshot_stride=5"],
    "freeze2d": ["--preset", "qcgl_spin", "--set", "n_per_axis=21", "--set", "t_pre=1",
                 "--set", "t_end=0.4", "--set", "dt_pre=0.2"],
    "wave": ["--preset", "qnwe_front", "--set", "t_end=2", "--set", "x_minus=-20",
             "--set", "x_plus=20"],
    "nls": ["--preset", "nls_soliton", "--set", "t_end=0.05", "--set", "log_stride=10"],
    "multiwave": ["--preset", "qne_2front", "--set", "t_end=4", "--set", "x_minus=-60",
                  "--set", "x_plus=60"],
    "spectrum": ["--preset", "qne_front", "--set", "radius=0.02", "--set", "n_nodes=16"],
    "dispersion": ["--preset", "qne_front", "--set", "n_omega=101"],
    "adspec": ["--preset", "qne_front", "--set", "n_samples=5"],
}


def _run(sub, tmp_path, *extra):
    out = tmp_path / sub
    code = run([sub, *FAST[sub], "--out", str(out), *extra])
    return code, out


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_subcommand_runs_and_writes_manifest(sub, tmp_path):
    code, out = _run(sub, tmp_path)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == sub and man["outputs"]
    for name in man["outputs"]:
        assert (out / name).exists()
    assert set(man["versions"]) == {"freezewave", "python", "numpy", "scipy"}


@pytest.mark.parametrize("sub", ["freeze", "multiwave", "spectrum", "nls"])
def test_outputs_are_bit_identical(sub, tmp_path):
    _, a = _run(sub, tmp_path / "a", "--seed", "7")
    _, b = _run(sub, tmp_path / "b", "--seed", "7")
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]
    assert ma["config_sha256"] == mb["config_sha256"]


def test_freeze_outputs_load(tmp_path):
    _, out = _run("freeze", tmp_path)
    ts = load_timeseries(out / "timeseries.csv")
    assert ts.header[:2] == ["t", "mu_1"]
    v = load_field(out / "final_profile.json")
    assert v.grid.n == 134
    assert list((out / "snapshots").glob("profile_*.json"))


def test_spectrum_goldstone(tmp_path):
    _, out = _run("spectrum", tmp_path)
    data = json.loads((out / "contour.json").read_text())
    lams = np.array([complex(*z) for z in data["eigenvalues"]])
    k = int(np.argmin(np.abs(lams)))
    assert abs(lams[k]) < 1e-6
    assert data["cosine_with_v_xi"][k] > 0.999


def test_exit_codes(tmp_path, capsys):
    assert run(["freeze", "--config", str(tmp_path / "missing.toml")]) == 2
    assert "config error" in capsys.readouterr().err
    assert run(["freeze"]) == 2
    assert run(["bogus"]) == 2
    assert run(["freeze", "--preset", "nope"]) == 2
    assert run(["freeze", "--preset", "qne_front", "--set", "novalue"]) == 2
    assert run(["freeze", "--preset", "nls_soliton", "--out", str(tmp_path / "x")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["freeze", "--config", str(bad)]) == 2
    # a solver failure: Newton iterations capped at zero
    assert run(["freeze", *FAST["freeze"], "--set", "max_iters=0",
                "--out", str(tmp_path / "y")]) == 1


def test_config_file_overrides_preset(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("t_end = 1.5\nx_minus = -15.0\nx_plus = 15.0\n")
    out = tmp_path / "o"
    assert run(["freeze", "--preset", "qne_front", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["t_end"] == 1.5 and man["preset"] == "qne_front"
    state = json.loads((out / "state.json").read_text())
    assert abs(state["t"] - 1.5) < 1e-12


@pytest.mark.parametrize("name", preset_names())
def test_presets_round_trip(name):
    cfg = preset(name)
    assert cfg.to_flat() == type(cfg).from_flat(cfg.to_flat()).to_flat()
