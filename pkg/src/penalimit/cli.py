"""Command line drivers for the stationary and miscible displacement experiments.

    penalimit <experiment-id> --config <file> [--key value ...] --out <dir>

The config file is flat TOML; every key can be overridden on the command
line with ``--key value`` where ``value`` is parsed as a TOML value (so
``--sigmas "[1e3, 1e4]"`` gives a list and a bare word stays a string).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np
import tomli

from .adapt import AdaptPolicy
from .darcy import ImdParams
from .linalg import SingularMatrixError
from .mesh import build_uniform_mesh, full_region, make_region
from .nncf import NncfModel, PenaltyConfig, field_norms, layer_problem
from .storage import (
    CheckpointReference,
    checkpoint_path,
    snapshot_path,
    write_checkpoint,
    write_csv,
    write_vtk,
)
from .transport import ImdModel

log = logging.getLogger("penalimit")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SIGMAS = [10.0 ** k for k in range(3, 10)]


class ConfigError(ValueError):
    pass


_NNCF = {
    "n": 32, "r": 1, "q": 0, "threads": 1,
    "eps": 10.0, "theta": 1, "c_p": 10.0, "c_d": 0.1, "c_ar": 0.0,
    "sigmas": SIGMAS, "region": "all",
}
_IMD = {
    "n": 16, "r": 1, "q": 0, "threads": 1,
    **{f.name: f.default for f in dataclasses.fields(ImdParams) if f.name not in ("n", "r", "q")},
    "gravity": [0.0, 0.0], "injection_rate": -1.0, "production_rate": -1.0,
    "sigmas": SIGMAS, "tols": [1e-3, 1e-4, 1e-5], "include_cg": True,
    "period": 5, "include_boundary": False,
    "snapshot_every": 50, "snapshot_run": "reference", "reference": "",
}

DEFAULTS = {
    "nncf-sweep": _NNCF,
    "nncf-layer": {**_NNCF, "eps": 1e-4},
    "nncf-strip": {**_NNCF, "eps": 5e-4, "strip_a": [0, 1, 2, 3, 4, 5, 6, 7, 8]},
    "imd-sweep": _IMD,
    "imd-adapt": _IMD,
}


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        item = default[0] if default else 0.0
        return [_coerce(key, v, item) for v in value]
    if isinstance(default, str):
        return str(value)
    return value


def parse_value(text):
    """TOML scalar/array parsing for command line overrides; bare words are strings."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(experiment, path=None, overrides=None):
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {sorted(DEFAULTS)}")
    defaults = DEFAULTS[experiment]
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    raw.update(overrides or {})
    cfg = dict(defaults)
    for key, value in raw.items():
        key = key.replace("-", "_")
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} for {experiment}")
        if isinstance(value, dict):
            raise ConfigError(f"{key}: nested tables are not supported")
        cfg[key] = _coerce(key, value, defaults[key])
    validate(experiment, cfg)
    return cfg


def validate(experiment, cfg):
    if cfg["n"] < 1:
        raise ConfigError("n must be >= 1")
    if cfg["r"] not in (1, 2):
        raise ConfigError("r must be 1 or 2")
    if cfg["q"] != 0 and not 1 <= cfg["q"] <= 6:
        raise ConfigError("q must be 0 (automatic) or 1..6")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if any(s < 0 for s in cfg["sigmas"]):
        raise ConfigError("sigmas must be non-negative")
    if experiment.startswith("nncf"):
        if cfg["eps"] <= 0:
            raise ConfigError("eps must be positive")
        if cfg["region"] not in ("all", "none"):
            raise ConfigError("region must be 'all' or 'none'")
        try:
            penalty_config(cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if experiment == "nncf-strip":
            for a in cfg["strip_a"]:
                if a < 0 or a >= cfg["n"]:
                    raise ConfigError(f"strip width a={a} needs 0 <= a*h < 1")
    else:
        if any(t <= 0 for t in cfg["tols"]):
            raise ConfigError("tols must be positive")
        if cfg["period"] < 1 or cfg["snapshot_every"] < 0:
            raise ConfigError("period must be >= 1 and snapshot_every >= 0")
        try:
            imd_params(cfg).n_steps
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def penalty_config(cfg):
    return PenaltyConfig(theta=cfg["theta"], c_p=cfg["c_p"], c_d=cfg["c_d"],
                         c_ar=cfg["c_ar"], q=cfg["q"] or None)


def imd_params(cfg):
    kw = {f.name: cfg[f.name] for f in dataclasses.fields(ImdParams) if f.name in cfg}
    kw["q"] = cfg["q"] or None
    kw["gravity"] = tuple(cfg["gravity"])
    for key in ("injection_rate", "production_rate"):
        kw[key] = None if cfg[key] < 0 else cfg[key]
    return ImdParams(**kw)


# stationary problem ----------------------------------------------------------

SWEEP_COLUMNS = ["sigma", "diff_l2", "diff_h1", "diff_jump", "err_l2", "err_h1", "jump_l2",
                 "sigma_s_energy"]


def run_nncf_sweep(cfg, out):
    mesh = build_uniform_mesh(cfg["n"])
    region = full_region(mesh, cfg["region"] == "all")
    model = NncfModel(layer_problem(cfg["eps"]), penalty_config(cfg), region, r=cfg["r"])
    v = model.solve_cdg_direct().coeffs
    rows = []
    for sigma in cfg["sigmas"]:
        w = model.solve_super_penalized(sigma).coeffs
        d_l2, d_h1, d_jump = field_norms(model.tables, w - v)
        rep = model.norms(w)
        rows.append({"sigma": sigma, "diff_l2": d_l2, "diff_h1": d_h1, "diff_jump": d_jump,
                     "err_l2": rep.l2_error, "err_h1": rep.h1_semi_error, "jump_l2": rep.jump_l2,
                     "sigma_s_energy": sigma * rep.s_seminorm ** 2})
        log.info("sigma=%.1e |w-v|_L2=%.3e err_H1=%.3e", sigma, d_l2, rep.h1_semi_error)
    write_csv(Path(out) / "results.csv", SWEEP_COLUMNS, rows)
    return rows


STRIP_COLUMNS = ["space", "a", "dofs", "err_h1", "err_l2"]


def strip_region(mesh, a):
    """Continuous cells fill (0, 1 - a h)^2."""
    edge = mesh.n - a
    i, j = mesh.cell_index[:, 0], mesh.cell_index[:, 1]
    return make_region(mesh, (i < edge) & (j < edge))


def run_nncf_strip(cfg, out):
    mesh = build_uniform_mesh(cfg["n"])
    problem, pen = layer_problem(cfg["eps"]), penalty_config(cfg)
    rows = []
    for a in cfg["strip_a"]:
        model = NncfModel(problem, pen, strip_region(mesh, a), r=cfg["r"])
        rep = model.norms(model.solve_cdg_direct())
        rows.append({"space": "cdg", "a": a, "dofs": model.constraints.n_free,
                     "err_h1": rep.h1_semi_error, "err_l2": rep.l2_error})
    model = NncfModel(problem, pen, full_region(mesh, False), r=cfg["r"])
    rep = model.norms(model.solve_super_penalized(0.0))
    rows.append({"space": "dg", "a": -1, "dofs": model.dofmap.n_dofs,
                 "err_h1": rep.h1_semi_error, "err_l2": rep.l2_error})
    write_csv(Path(out) / "results.csv", STRIP_COLUMNS, rows)
    return rows


# miscible displacement -----------------------------------------------------------

STEP_COLUMNS = ["run", "step", "t", "mass", "energy", "dofs", "continuous_cells", "distance"]
IMD_COLUMNS = ["run", "mode", "sigma", "tol", "steps", "total_dofs", "dof_fraction", "l2l2_distance"]


class _Recorder:
    """Per-step callback writing checkpoints and snapshots for one run."""

    def __init__(self, model, label, out, checkpoints, snapshot_every):
        self.model, self.label = model, label
        self.ckpt_dir = Path(out) / "checkpoints" if checkpoints else None
        self.snap_dir = Path(out) / "snapshots" if snapshot_every else None
        self.every = snapshot_every
        self.rows = []

    def __call__(self, state, diag):
        self.rows.append({"run": self.label, **diag})
        bitmap = state.region.bitmap()
        if self.ckpt_dir is not None:
            write_checkpoint(checkpoint_path(self.ckpt_dir, state.step), state.step, state.t,
                             state.c, bitmap)
        if self.snap_dir is not None and (state.step % self.every == 0 or state.step == 1):
            t = self.model.tables
            mean = t.cell_values(state.c) @ t.cell_w
            write_vtk(snapshot_path(self.snap_dir, state.step), self.model.mesh,
                      {"concentration": mean, "discontinuous": bitmap.astype(np.int64)},
                      title=f"{self.label} t={state.t:.6f}")


def _reference(model, cfg, out, mode, region, steps):
    """Reference run written as checkpoints (or an existing checkpoint series)."""
    if cfg["reference"]:
        ref = CheckpointReference(cfg["reference"])
        ref(1)
        return ref, []
    snap = cfg["snapshot_every"] if cfg["snapshot_run"] == "reference" else 0
    rec = _Recorder(model, "reference", out, True, snap)
    model.run(mode, region=region, callback=rec)
    return CheckpointReference(Path(out) / "checkpoints"), rec.rows


def _candidate(model, cfg, out, label, **kwargs):
    snap = cfg["snapshot_every"] if cfg["snapshot_run"] == label else 0
    rec = _Recorder(model, label, out, False, snap)
    result = model.run(callback=rec, **kwargs)
    return result, rec.rows


def _summary(label, result, steps, dg_total, tol=math.nan):
    return {"run": label, "mode": result.mode, "sigma": result.sigma, "tol": tol, "steps": steps,
            "total_dofs": result.total_dofs, "dof_fraction": result.total_dofs / dg_total,
            "l2l2_distance": result.l2l2_distance}


def run_imd_sweep(cfg, out):
    params = imd_params(cfg)
    model = ImdModel(params)
    steps = params.n_steps
    dg_total = model.dofmap.n_dofs * steps
    region = full_region(model.mesh, True)
    ref, step_rows = _reference(model, cfg, out, "cdg", region, steps)
    rows = []
    for sigma in cfg["sigmas"]:
        label = f"sigma={sigma:.3e}"
        mode = "super" if sigma else "dg"
        res, srows = _candidate(model, cfg, out, label, mode=mode, sigma=sigma, region=region,
                                reference=ref)
        step_rows += srows
        rows.append(_summary(label, res, steps, dg_total))
        log.info("%s L2(L2) distance %.4e", label, res.l2l2_distance)
    write_csv(Path(out) / "results.csv", IMD_COLUMNS, rows)
    write_csv(Path(out) / "steps.csv", STEP_COLUMNS, step_rows)
    return rows


def run_imd_adapt(cfg, out):
    params = imd_params(cfg)
    model = ImdModel(params)
    steps = params.n_steps
    dg_total = model.dofmap.n_dofs * steps
    ref, step_rows = _reference(model, cfg, out, "dg", None, steps)
    rows = [{"run": "dg", "mode": "dg", "sigma": 0.0, "tol": 0.0, "steps": steps,
             "total_dofs": dg_total, "dof_fraction": 1.0, "l2l2_distance": 0.0}]
    tols = list(cfg["tols"]) + ([math.inf] if cfg["include_cg"] else [])
    for tol in tols:
        label = "cg" if math.isinf(tol) else f"tol={tol:.3e}"
        policy = AdaptPolicy(tol, period=cfg["period"], include_boundary=cfg["include_boundary"])
        res, srows = _candidate(model, cfg, out, label, mode="adaptive", policy=policy,
                                reference=ref)
        step_rows += srows
        rows.append(_summary(label, res, steps, dg_total, tol))
        log.info("%s dofs %d (%.1f%%) L2(L2) distance %.4e", label, res.total_dofs,
                 100 * res.total_dofs / dg_total, res.l2l2_distance)
    write_csv(Path(out) / "results.csv", IMD_COLUMNS, rows)
    write_csv(Path(out) / "steps.csv", STEP_COLUMNS, step_rows)
    return rows


EXPERIMENTS = {
    "nncf-sweep": run_nncf_sweep,
    "nncf-layer": run_nncf_sweep,
    "nncf-strip": run_nncf_strip,
    "imd-sweep": run_imd_sweep,
    "imd-adapt": run_imd_adapt,
}


def _split_overrides(extra):
    overrides = {}
    it = iter(extra)
    for token in it:
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, text = key.split("=", 1)
        else:
            text = next(it, None)
            if text is None:
                raise ConfigError(f"missing value for --{key}")
        overrides[key.replace("-", "_")] = parse_value(text)
    return overrides


def main(argv=None):
    parser = argparse.ArgumentParser(prog="penalimit", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", type=Path)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("-v", "--verbose", action="store_true")
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.experiment, args.config, _split_overrides(extra))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        EXPERIMENTS[args.experiment](cfg, args.out)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
