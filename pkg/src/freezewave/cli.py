"""Command-line front end.

Usage::

    freezewave SUBCOMMAND [--config PATH] [--preset NAME] [--out DIR]
                          [--set key=value ...] [--seed N]

Exit codes: 0 success, 1 solver failure, 2 configuration error. Every run
writes its outputs plus ``manifest.json`` (effective config, its SHA-256,
package versions, wall time and a SHA-256 per output file) to the output
directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy

from . import __version__
from .core import (ConfigError, MalformedFileError, RunConfig, load_field, parse_value,
                   read_config_mapping, save_field, save_timeseries)
from .presets import preset

log = logging.getLogger("freezewave")

SUBCOMMANDS = ("simulate", "freeze", "freeze2d", "wave", "nls", "multiwave", "spectrum",
               "dispersion", "adspec")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))


def _require(cfg: RunConfig, allowed, sub: str) -> None:
    if cfg.problem not in allowed:
        raise ConfigError(f"{sub}: problem {cfg.problem!r} not supported (use one of {sorted(allowed)})")


# --- subcommands -------------------------------------------------------------------

def _cmd_simulate(cfg: RunConfig, out: Path) -> List[Path]:
    from .freeze1d import direct_simulate, initial_profile, problem_from_config
    _require(cfg, {"qne", "nagumo3", "heat", "transport"}, "simulate")
    problem = problem_from_config(cfg)
    grid = cfg.grid1d()
    u0 = initial_profile(cfg, grid)
    stride = cfg.snapshot_stride or max(1, int(round(cfg.t_end / cfg.dt)) // 50)
    traj = direct_simulate(problem, u0, cfg.dt, cfg.t_end, record_stride=stride,
                           newton_tol=cfg.newton_tol)
    x = grid.nodes()
    path = out / "trajectory.csv"
    with open(path, "w") as fh:
        fh.write("t,x,component,value\n")
        for t, vals in zip(traj.t, traj.values):
            for k in range(vals.shape[1]):
                for xi, val in zip(x, vals[:, k]):
                    fh.write(f"{t!r},{float(xi)!r},{k},{float(val)!r}\n")
    final = out / "final_profile.json"
    save_field(traj.field(-1), final)
    return [path, final]


def _cmd_freeze(cfg: RunConfig, out: Path) -> List[Path]:
    from .freeze1d import run_freeze
    _require(cfg, {"qne", "nagumo3", "heat", "transport"}, "freeze")
    snaps = out / "snapshots" if cfg.snapshot_stride else None
    if snaps is not None:
        snaps.mkdir(exist_ok=True)
    ts, st = run_freeze(cfg, out_dir=snaps)
    files = [out / "timeseries.csv", out / "final_profile.json", out / "state.json"]
    save_timeseries(ts, files[0])
    save_field(st.v, files[1])
    _dump({"mu": st.mu, "gamma": st.gamma, "t": st.t, "phase_residual": st.phase_residual},
          files[2])
    if snaps is not None:
        files += sorted(snaps.glob("*.json"))
    return files


def _cmd_freeze2d(cfg: RunConfig, out: Path) -> List[Path]:
    from .freeze_se2 import run_freeze2d
    _require(cfg, {"qcgl", "heat2d"}, "freeze2d")
    ts, st = run_freeze2d(cfg)
    files = [out / "timeseries.csv", out / "final_profile.json", out / "state.json"]
    save_timeseries(ts, files[0])
    save_field(st.v, files[1])
    _dump({"S12": st.S12, "c": st.c.tolist(), "t": st.t, "gamma_Q": st.gamma.Q.tolist(),
           "gamma_b": st.gamma.b.tolist()}, files[2])
    return files


def _cmd_wave(cfg: RunConfig, out: Path) -> List[Path]:
    from .freeze_wave import wave_freeze_run
    _require(cfg, {"qnwe", "wave"}, "wave")
    ts, st = wave_freeze_run(cfg)
    files = [out / "timeseries.csv", out / "final_profile.json", out / "final_velocity.json",
             out / "state.json"]
    save_timeseries(ts, files[0])
    save_field(st.v, files[1])
    save_field(st.w, files[2])
    _dump({"mu1": st.mu1, "mu2": st.mu2, "gamma": st.gamma, "t": st.t}, files[3])
    return files


def _cmd_nls(cfg: RunConfig, out: Path) -> List[Path]:
    from .freeze_nls import run_nls_freeze
    _require(cfg, {"nls"}, "nls")
    ts, st = run_nls_freeze(cfg)
    files = [out / "timeseries.csv", out / "final_profile.json"]
    save_timeseries(ts, files[0])
    save_field(st.v, files[1])
    return files


def _cmd_multiwave(cfg: RunConfig, out: Path) -> List[Path]:
    from .multiwave import run_multiwave
    _require(cfg, {"qne"}, "multiwave")
    snaps = out / "snapshots" if cfg.snapshot_stride else None
    if snaps is not None:
        snaps.mkdir(exist_ok=True)
    series, st, prob = run_multiwave(cfg, out_dir=snaps)
    files = []
    for j, ts in enumerate(series, start=1):
        files.append(out / f"timeseries_wave{j}.csv")
        save_timeseries(ts, files[-1])
        files.append(out / f"profile_wave{j}.json")
        save_field(st.profiles[j - 1], files[-1])
    files.append(out / "superposition.json")
    save_field(prob.superpose(st), files[-1])
    files.append(out / "state.json")
    _dump({"mu": st.mus.tolist(), "gamma": st.gammas.tolist(), "t": st.t,
           "offsets": st.offsets.tolist()}, files[-1])
    if snaps is not None:
        files += sorted(snaps.glob("*.json"))
    return files


def _wave_1d(cfg: RunConfig):
    """Converged front for the spectral subcommands (``profile`` = ``solve`` or ``file:PATH``)."""
    from .freeze1d import (TemplateProfile, initial_profile, problem_from_config, solve_steady)
    problem = problem_from_config(cfg)
    src = str(cfg.get("profile", "solve"))
    if src == "solve":
        guess = initial_profile(cfg, cfg.grid1d())
    elif src.startswith("file:"):
        guess = load_field(src[5:])
    else:
        raise ConfigError(f"unknown profile source {src!r}")
    mu0 = cfg.get("mu_star")
    if mu0 is None:
        state_file = cfg.get("state")
        if state_file is None:
            raise ConfigError("mu_star or a state file is required")
        mu0 = json.loads(Path(state_file).read_text())["mu"]
    v, mu, _ = solve_steady(problem, guess, float(mu0), TemplateProfile.from_field(guess))
    return problem, v, mu


def _cmd_spectrum(cfg: RunConfig, out: Path) -> List[Path]:
    from .contour import ContourSpec, ProbeSet, solve_nlevp
    from .discretize import DiffOp1D
    from .spectral import ResolventPencil, linearize
    _require(cfg, {"qne", "nagumo3"}, "spectrum")
    problem, v, mu = _wave_1d(cfg)
    op = linearize(v, mu, problem)
    pen = ResolventPencil(op, str(cfg.get("bc", "projection")))
    spec = ContourSpec(complex(float(cfg.get("center_re", 0.0)), float(cfg.get("center_im", 0.0))),
                       float(cfg.get("radius", 0.05)), int(cfg.get("n_nodes", 32)))
    ell = int(cfg.get("ell", 5))
    probes = ProbeSet(pen.size, ell, int(cfg.get("p", 2 * ell)), cfg.seed, pen.weights)
    res = solve_nlevp(pen, spec, probes, float(cfg.get("rank_tol", 1e-8)), eigenvectors=True)
    data = res.to_json()
    vx = DiffOp1D("first_central", v.grid).apply_array(v.values).ravel()
    if res.eigenvectors is not None:
        data["cosine_with_v_xi"] = [float(abs(np.vdot(res.eigenvectors[:, k], vx)) / np.linalg.norm(vx))
                                    for k in range(res.eigenvectors.shape[1])]
    data["mu_star"] = mu
    data["bc_diagnostics"] = [{"lam": [d["lam"].real, d["lam"].imag],
                               "qep_residual": d["qep_residual"],
                               "block_identity_error": d["block_identity_error"]}
                              for d in pen.diagnostics]
    path = out / "contour.json"
    _dump(data, path)
    return [path]


def _cmd_dispersion(cfg: RunConfig, out: Path) -> List[Path]:
    from .spectral import dispersion_bound, linearize, wave_dispersion_bound, wave_pencil_build
    om = np.linspace(-float(cfg.get("omega_max", 100.0)), float(cfg.get("omega_max", 100.0)),
                     int(cfg.get("n_omega", 4001)))
    if cfg.problem in ("qnwe", "wave"):
        from .freeze_wave import _wave_initial, wave_problem_from_config
        wp = wave_problem_from_config(cfg)
        src = str(cfg.get("profile", "tanh"))
        v = load_field(src[5:]) if src.startswith("file:") else _wave_initial(cfg, cfg.grid1d())[0]
        samples = wave_dispersion_bound(wave_pencil_build(wp, v, float(cfg.get("mu_star", 0.0))), om)
    else:
        _require(cfg, {"qne", "nagumo3"}, "dispersion")
        problem, v, mu = _wave_1d(cfg)
        samples = dispersion_bound(linearize(v, mu, problem), om)
    csv_path, json_path = out / "dispersion.csv", out / "bound.json"
    samples.to_csv(csv_path)
    _dump({"beta_hat": samples.beta_hat, "argmax_omega": samples.argmax[0],
           "argmax_sign": samples.argmax[1], "violated": bool(samples.violated)}, json_path)
    return [csv_path, json_path]


def _cmd_adspec(cfg: RunConfig, out: Path) -> List[Path]:
    from .liegroup import (ad_spectrum, ad_spectrum_formula, containment_defect,
                           multiset_distance, random_algebra_element)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for d in cfg.get("dims", [2, 3]):
        for _ in range(int(cfg.get("n_samples", 100))):
            mu = random_algebra_element(int(d), rng)
            rows.append({"d": int(d), "coords": mu.coords().tolist(),
                         "formula_error": multiset_distance(ad_spectrum(mu), ad_spectrum_formula(mu)),
                         "containment_defect": containment_defect(mu)})
    path = out / "adspec.json"
    _dump({"samples": rows,
           "max_formula_error": max(r["formula_error"] for r in rows),
           "max_containment_defect": max(r["containment_defect"] for r in rows)}, path)
    return [path]


COMMANDS: Dict[str, Callable[[RunConfig, Path], List[Path]]] = {
    "simulate": _cmd_simulate, "freeze": _cmd_freeze, "freeze2d": _cmd_freeze2d,
    "wave": _cmd_wave, "nls": _cmd_nls, "multiwave": _cmd_multiwave,
    "spectrum": _cmd_spectrum, "dispersion": _cmd_dispersion, "adspec": _cmd_adspec,
}


# --- driver --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freezewave", description="Freezing-method wave solvers")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="JSON or TOML run configuration")
    p.add_argument("--preset", help="named parameter set (applied before --config)")
    p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> (RunConfig, dict):
    if args.preset is None and args.config is None:
        raise ConfigError("give --config PATH or --preset NAME")
    flat = {}
    if args.preset is not None:
        flat.update(preset(args.preset).to_flat())
    if args.config is not None:
        flat.update(read_config_mapping(args.config))
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        overrides[key.strip()] = parse_value(val)
    flat.update(overrides)
    if args.seed is not None:
        flat["seed"] = args.seed
    return RunConfig.from_flat(flat), overrides


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, overrides = resolve_config(args)
    except (ConfigError, MalformedFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        files = COMMANDS[args.subcommand](cfg, out)
    except (ConfigError, MalformedFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver failures of any kind end up here
        print(f"{args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    flat = cfg.to_flat()
    config_text = json.dumps(flat, sort_keys=True)
    manifest = {
        "subcommand": args.subcommand,
        "preset": args.preset,
        "config": flat,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "overrides": overrides,
        "seed": cfg.seed,
        "versions": {"freezewave": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time": time.perf_counter() - t0,
        "outputs": {str(f.relative_to(out)): _sha256(f) for f in files},
    }
    _dump(manifest, out / "manifest.json")
    return 0


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(run())
