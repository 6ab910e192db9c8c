"""Command-line entry point: simulate, fit, transform, evaluate, sweep.

Every command resolves its configuration from defaults, an optional JSON
config file, and explicit flag overrides (in that precedence order), then
writes the resolved snapshot next to its outputs so any run can be
reproduced byte-for-byte from the snapshot alone.

Exit codes: 0 ok, 2 input, 3 domain, 4 infeasible, 5 schema, 6 sidecar,
7 sweep failure budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ._util import dumps17, fingerprint
from ._validation import encode_groups
from .errors import (ConfigError, DomainError, FairbaryError,
                     InfeasibilityError, SchemaError, SidecarError)
from .estimator import SolverConfig, map_error
from .maps import CongruentFamily, KnotGrid
from .measures import DomainInterval, EmpiricalMeasure, Weights
from .metrics import check_fairness_bound, unfairness, weighted_sq_distance
from .regression import FairRegressor, GroupSample, fit_base, fit_fair
from .synth import (ScenarioSpec, fresh_features, generate, make_truth,
                    oracle_family_from_measures, truth_error)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_INFEASIBLE = 4
EXIT_SCHEMA = 5
EXIT_SIDECAR = 6
EXIT_SWEEP_BUDGET = 7

SWEEP_ORACLE_LEVEL = 7


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def read_data_csv(path):
    """Parse the standard data CSV: header ``group,y,x1,...,xd``."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError("empty data file")
            header = [h.strip() for h in header]
            if header[:2] != ["group", "y"]:
                raise SchemaError(
                    f"data CSV must start with columns group,y; got {header[:2]}")
            d = len(header) - 2
            if d < 1:
                raise SchemaError("data CSV needs at least one feature column")
            groups, ys, xs = [], [], []
            for row in reader:
                if not row:
                    continue
                if len(row) != 2 + d:
                    raise SchemaError(f"row has {len(row)} fields, expected {2 + d}")
                groups.append(row[0])
                ys.append(float(row[1]))
                xs.append([float(v) for v in row[2:]])
    except OSError as exc:
        raise SchemaError(f"cannot read data file {path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(f"malformed numeric field in {path}: {exc}") from exc
    if not groups:
        raise SchemaError("data file has no rows")
    return groups, np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)


def write_data_csv(path, groups, X, y) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cols = ",".join(f"x{i + 1}" for i in range(X.shape[1]))
        fh.write(f"group,y,{cols}\n")
        for g, yv, xrow in zip(groups, y, X):
            xtxt = ",".join(repr(float(v)) for v in xrow)
            fh.write(f"{g},{float(yv)!r},{xtxt}\n")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps17(obj))
        fh.write("\n")


def save_bundle(outdir, fair: FairRegressor, manifest: dict,
                reg_halves) -> None:
    os.makedirs(outdir, exist_ok=True)
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    with open(os.path.join(outdir, "maps.json"), "w", encoding="utf-8") as fh:
        fh.write(fair.family.to_json())
        fh.write("\n")
    rows_groups, rows_x, rows_y = [], [], []
    for label, half in zip(manifest["group_labels"], reg_halves):
        rows_groups.extend([label] * half.n)
        rows_x.append(half.xs)
        rows_y.append(half.ys)
    write_data_csv(os.path.join(outdir, "base_data.csv"), rows_groups,
                   np.vstack(rows_x), np.concatenate(rows_y))
    report = fair.map_report
    if report is not None:
        report.trace_to_csv(os.path.join(outdir, "trace.csv"))


def load_bundle(bundle_dir):
    try:
        with open(os.path.join(bundle_dir, "manifest.json"),
                  encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(os.path.join(bundle_dir, "maps.json"),
                  encoding="utf-8") as fh:
            family = CongruentFamily.from_dict(json.load(fh))
        groups, X, y = read_data_csv(os.path.join(bundle_dir, "base_data.csv"))
    except OSError as exc:
        raise SchemaError(f"cannot load bundle {bundle_dir}: {exc}") from exc
    except (KeyError, json.JSONDecodeError) as exc:
        raise SchemaError(f"malformed bundle {bundle_dir}: {exc}") from exc
    labels = manifest["group_labels"]
    codes, _ = encode_groups(groups, known=labels)
    omega = DomainInterval(*manifest["omega"])
    w = Weights(np.asarray(manifest["weights"], dtype=float))
    bases = []
    for s in range(len(labels)):
        mask = codes == s
        sample = GroupSample(s, X[mask], y[mask])
        bases.append(fit_base(sample, omega, kind=manifest["base"]["kind"],
                              hyper=manifest["base"]["hyper_per_group"][s]))
    fair = FairRegressor(bases=tuple(bases), family=family, omega=omega,
                         weights=w)
    return fair, manifest


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _resolve(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    out = dict(defaults)
    for k, v in file_cfg.items():
        out[k] = v
    for k, v in flags.items():
        if v is not None:
            out[k] = v
    return out


def _default_seed() -> int:
    env = os.environ.get("FAIRBARY_SEED")
    return int(env) if env else 0


def _write_snapshot(outdir: str, command: str, cfg: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    snap = {"command": command}
    snap.update(cfg)
    _write_json(os.path.join(outdir, "config.json"), snap)


def _scenario_from_config(cfg: dict) -> ScenarioSpec:
    from .synth import _params_from_jsonable

    spec = ScenarioSpec.default(cfg["scenario"], seed=int(cfg["seed"]),
                                m=int(cfg.get("groups", 2)),
                                noise_sd=cfg.get("noise_sd"),
                                weights=cfg.get("weights"),
                                L=float(cfg.get("L", 3.0)))
    params = spec.params
    if cfg.get("params") is not None:
        params = _params_from_jsonable(spec.name, cfg["params"])
    omega = spec.omega
    if cfg.get("omega") is not None:
        omega = DomainInterval(*cfg["omega"])
    return ScenarioSpec(spec.name, spec.weights, params, spec.noise_sd,
                        omega, seed=spec.seed, L=spec.L)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    flags = {"scenario": args.scenario, "n": args.n, "seed": args.seed,
             "out": args.out, "noise_sd": args.noise_sd,
             "groups": args.groups}
    cfg = _resolve({"scenario": "translation", "n": [1000, 1000],
                    "seed": _default_seed(), "out": "sim_out",
                    "noise_sd": None, "groups": 2, "weights": None,
                    "omega": None, "L": 3.0},
                   _load_config_file(args.config), flags)
    if isinstance(cfg["n"], str):
        cfg["n"] = [int(v) for v in cfg["n"].split(",")]
    spec = _scenario_from_config(cfg)
    n_per_group = list(cfg["n"])
    if len(n_per_group) == 1:
        n_per_group = n_per_group * spec.m
    _write_snapshot(cfg["out"], "simulate", cfg)
    samples, truth = generate(spec, n_per_group)
    groups, X, y = [], [], []
    for s, smp in enumerate(samples):
        groups.extend([str(s)] * smp.n)
        X.append(smp.xs)
        y.append(smp.ys)
    write_data_csv(os.path.join(cfg["out"], "data.csv"), groups,
                   np.vstack(X), np.concatenate(y))
    sidecar = {
        "scenario": spec.to_dict(),
        "truth_level": int(math.log2(truth.theta_star.grid.size)),
        "theta_star": truth.theta_star.to_dict(),
    }
    _write_json(os.path.join(cfg["out"], "truth.json"), sidecar)
    print(f"wrote {os.path.join(cfg['out'], 'data.csv')} and truth.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    flags = {"data": args.data, "out": args.out, "seed": args.seed,
             "weights": _parse_floats(args.weights),
             "omega": _parse_floats(args.omega), "L": args.L,
             "alpha": args.alpha, "beta": args.beta,
             "base": args.base, "max_iters": args.max_iters,
             "step_scale": args.step_scale, "step_rule": args.step_rule,
             "tol_rel_obj": args.tol}
    cfg = _resolve({"data": None, "out": "fit_out", "seed": _default_seed(),
                    "weights": None, "omega": None, "L": 3.0, "alpha": 2.0,
                    "beta": 1.0, "base": "knn", "base_hyper": None,
                    "max_iters": 2500, "step_scale": 2.0,
                    "step_rule": "inverse-sqrt", "tol_rel_obj": 1e-7},
                   _load_config_file(args.config), flags)
    if cfg["data"] is None:
        print("fit: --data is required", file=sys.stderr)
        return EXIT_INPUT
    if not float(cfg["L"]) > 1.0:
        raise InfeasibilityError("map class requires L > 1")
    try:
        raw_groups, X, y = read_data_csv(cfg["data"])
    except SchemaError as exc:
        print(f"fit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    codes, labels = encode_groups(raw_groups)
    if len(labels) < 2:
        print("fit: need at least two groups in the data", file=sys.stderr)
        return EXIT_INPUT
    if cfg["omega"] is None:
        pad = 0.05 * (float(y.max()) - float(y.min()) + 1e-12)
        omega = DomainInterval(float(y.min()) - pad, float(y.max()) + pad)
        cfg["omega"] = [omega.lo, omega.hi]
    else:
        omega = DomainInterval(*cfg["omega"])
    if np.any(~omega.contains(y)):
        raise DomainError("outcomes fall outside the configured omega")
    counts = np.bincount(codes, minlength=len(labels))
    if cfg["weights"] is None:
        w = Weights(counts / counts.sum())
        cfg["weights"] = [float(v) for v in w.w]
    else:
        w = Weights(np.asarray(cfg["weights"], dtype=float))
        if w.m != len(labels):
            print("fit: weights length must match the number of groups",
                  file=sys.stderr)
            return EXIT_INPUT
    _write_snapshot(cfg["out"], "fit", cfg)
    samples = [GroupSample(s, X[codes == s], y[codes == s])
               for s in range(len(labels))]
    solver = SolverConfig(max_iters=int(cfg["max_iters"]),
                          tol_rel_obj=float(cfg["tol_rel_obj"]),
                          step_rule=cfg["step_rule"],
                          step_scale=float(cfg["step_scale"]),
                          seed=int(cfg["seed"]))
    fair = fit_fair(samples, w, omega, cfg=solver, base=cfg["base"],
                    base_hyper=cfg["base_hyper"], alpha=float(cfg["alpha"]),
                    beta=float(cfg["beta"]), L=float(cfg["L"]),
                    seed=int(cfg["seed"]))
    from .regression import default_k, split_sample
    reg_halves = []
    hyper_per_group = []
    for smp in samples:
        reg_half, _, _, _ = split_sample(smp, int(cfg["seed"]))
        reg_halves.append(reg_half)
        if cfg["base_hyper"] is not None:
            hyper_per_group.append(cfg["base_hyper"])
        elif cfg["base"] == "knn":
            hyper_per_group.append(default_k(reg_half.n, reg_half.dim))
        else:
            from .regression import default_bandwidth
            hyper_per_group.append(default_bandwidth(reg_half.xs))
    manifest = {
        "format": "fairbary-bundle-v1",
        "weights": [float(v) for v in w.w],
        "omega": [omega.lo, omega.hi],
        "L": float(cfg["L"]),
        "alpha": float(cfg["alpha"]),
        "beta": float(cfg["beta"]),
        "sieve_level": int(math.log2(fair.family.grid.size)),
        "seed": int(cfg["seed"]),
        "base": {"kind": cfg["base"], "hyper_per_group": hyper_per_group},
        "solver": {"max_iters": solver.max_iters,
                   "tol_rel_obj": solver.tol_rel_obj,
                   "step_rule": solver.step_rule,
                   "step_scale": solver.step_scale},
        "group_labels": [str(lab) for lab in labels],
        "fingerprints": [fingerprint(s.xs, s.ys) for s in samples],
        "converged": bool(fair.map_report.converged),
        "iterations_used": int(fair.map_report.iterations_used),
        "congruency_residual": float(fair.map_report.congruency_residual),
    }
    save_bundle(cfg["out"], fair, manifest, reg_halves)
    print(f"wrote bundle to {cfg['out']} "
          f"(level {manifest['sieve_level']}, "
          f"{manifest['iterations_used']} iterations)")
    return EXIT_OK


def _read_transform_input(path):
    """Data CSV with or without the outcome column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError("empty input file")
        header = [h.strip() for h in header]
        if header[0] != "group":
            raise SchemaError("input CSV must start with a group column")
        has_y = len(header) > 1 and header[1] == "y"
        x_start = 2 if has_y else 1
        groups, xs, ys = [], [], []
        for row in reader:
            if not row:
                continue
            groups.append(row[0])
            if has_y:
                ys.append(float(row[1]))
            xs.append([float(v) for v in row[x_start:]])
    if not groups:
        raise SchemaError("input file has no rows")
    y = np.asarray(ys, dtype=float) if has_y else None
    return groups, np.asarray(xs, dtype=float), y


def cmd_transform(args) -> int:
    flags = {"bundle": args.bundle, "data": args.data, "out": args.out}
    cfg = _resolve({"bundle": None, "data": None, "out": "predictions.csv"},
                   _load_config_file(args.config), flags)
    if cfg["bundle"] is None or cfg["data"] is None:
        print("transform: --bundle and --data are required", file=sys.stderr)
        return EXIT_INPUT
    fair, manifest = load_bundle(cfg["bundle"])
    groups, X, _ = _read_transform_input(cfg["data"])
    if X.shape[1] != fair.bases[0]._xs.shape[1]:
        raise SchemaError(
            f"feature dimension {X.shape[1]} does not match the bundle")
    try:
        codes, _ = encode_groups(groups, known=manifest["group_labels"])
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc
    base_pred = np.empty(X.shape[0])
    fair_pred = np.empty(X.shape[0])
    for s in range(len(manifest["group_labels"])):
        mask = codes == s
        if np.any(mask):
            base_pred[mask] = fair.predict_base(s, X[mask])
            fair_pred[mask] = fair.family.maps[s](base_pred[mask])
    outdir = os.path.dirname(cfg["out"])
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
        fh.write("row,group,base_prediction,fair_prediction\n")
        for i, (g, bp, fp) in enumerate(zip(groups, base_pred, fair_pred)):
            fh.write(f"{i},{g},{float(bp)!r},{float(fp)!r}\n")
    print(f"wrote {cfg['out']} ({X.shape[0]} rows)")
    return EXIT_OK


def _load_truth_sidecar(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        spec = ScenarioSpec.from_dict(raw["scenario"])
        level = int(raw["truth_level"])
    except OSError as exc:
        raise SidecarError(f"cannot read truth sidecar {path}: {exc}") from exc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise SidecarError(f"malformed truth sidecar {path}: {exc}") from exc
    try:
        return make_truth(spec, level=level)
    except FairbaryError as exc:
        raise SidecarError(f"truth sidecar is inconsistent: {exc}") from exc


def cmd_evaluate(args) -> int:
    flags = {"bundle": args.bundle, "data": args.data, "truth": args.truth,
             "out": args.out}
    cfg = _resolve({"bundle": None, "data": None, "truth": None,
                    "out": "metrics.csv"},
                   _load_config_file(args.config), flags)
    if cfg["bundle"] is None or cfg["data"] is None:
        print("evaluate: --bundle and --data are required", file=sys.stderr)
        return EXIT_INPUT
    fair, manifest = load_bundle(cfg["bundle"])
    groups, X, y = read_data_csv(cfg["data"])
    try:
        codes, _ = encode_groups(groups, known=manifest["group_labels"])
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc
    w = fair.weights
    m = len(manifest["group_labels"])
    feats = [X[codes == s] for s in range(m)]
    for s, f in enumerate(feats):
        if f.shape[0] == 0:
            raise SchemaError(
                f"test data has no rows for group "
                f"{manifest['group_labels'][s]!r}")
    rows = []
    for s in range(m):
        pred = fair.predict(s, feats[s])
        mse = float(np.mean((pred - y[codes == s]) ** 2))
        rows.append(("mse", manifest["group_labels"][s], mse))
    rep = unfairness(fair, feats, w)
    rows.append(("unfairness_upper_bound_w2half", "", rep.upper_bound))
    rows.append(("pairwise_max_w2half", "", rep.pairwise_max_w2))
    rows.append(("ks_max", "", rep.ks_max))
    truth_val = None
    if cfg["truth"] is not None:
        truth = _load_truth_sidecar(cfg["truth"])
        fns_f = [(lambda s_: lambda pts: fair.predict(
            s_, np.asarray(pts)[:, None]))(s) for s in range(m)]
        fns_g = [(lambda s_: lambda pts: truth.fair_bayes[s_](
            np.asarray(pts)[:, None]))(s) for s in range(m)]
        truth_val = weighted_sq_distance(
            fns_f, fns_g, [f[:, 0] for f in feats], w)
        rows.append(("truth_error", "", truth_val))
    outdir = os.path.dirname(cfg["out"])
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,group,value\n")
        for name, grp, val in rows:
            fh.write(f"{name},{grp},{float(val)!r}\n")
    meta = {"convention": "w2-half-quadratic",
            "bundle": cfg["bundle"], "data": cfg["data"],
            "seed": manifest.get("seed")}
    _write_json(cfg["out"] + ".meta.json", meta)
    for name, grp, val in rows:
        tag = f"{name}[{grp}]" if grp != "" else name
        print(f"{tag} = {val:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def run_sweep_cell(payload: dict) -> dict:
    """One (n, replicate) cell: simulate, fit, and score.  Pure function."""
    spec = ScenarioSpec.from_dict(payload["scenario"])
    n = int(payload["n"])
    rep = int(payload["replicate"])
    seed = int(payload["seed"])
    out = {"n": n, "replicate": rep, "seed": seed, "error": None}
    try:
        cell_spec = ScenarioSpec(spec.name, spec.weights, spec.params,
                                 spec.noise_sd, spec.omega, seed=seed,
                                 L=spec.L)
        samples, truth = generate(cell_spec, [n] * spec.m)
        fair = fit_fair(samples, spec.weights, spec.omega, seed=seed,
                        alpha=payload["alpha"], beta=payload["beta"],
                        L=spec.L)
        n_eval = max(1 << 16, 8 * n)
        feats = fresh_features(cell_spec, [n_eval] * spec.m, seed=seed + 1)
        push_ms = [EmpiricalMeasure.from_samples(fair.predict_base(s, feats[s]))
                   for s in range(spec.m)]
        ofam = oracle_family_from_measures(
            push_ms, spec.weights,
            KnotGrid.uniform(spec.omega, SWEEP_ORACLE_LEVEL), spec.L)
        out["map_error"] = map_error(fair.family, ofam, push_ms, spec.weights)
        terr = 0.0
        berr = 0.0
        for s in range(spec.m):
            diff = fair.predict(s, feats[s]) - truth.fair_bayes[s](feats[s])
            terr += spec.weights.w[s] * float(np.mean(diff * diff))
            bdiff = fair.predict_base(s, feats[s]) - truth.f_star[s](feats[s])
            berr += spec.weights.w[s] * float(np.mean(bdiff * bdiff))
        out["truth_error"] = terr
        out["base_error"] = berr
        rep_unf = unfairness(fair, feats, spec.weights)
        out["unfairness_ub"] = rep_unf.upper_bound
        bc = check_fairness_bound(fair, ofam, fair.pushforwards, spec.weights,
                                  feats)
        out["bound_ok"] = bool(bc.passed)
        out["bound_lhs"] = bc.lhs
        out["bound_rhs"] = bc.rhs
        out["congruency_residual"] = fair.family.congruency_residual()
        out["dense_residual"] = fair.family.congruency_residual(dense=4096)
    except Exception as exc:  # cell failures are recorded, not raised
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def run_sweep(spec: ScenarioSpec, n_values, replicates: int,
              master_seed: int = 0, workers: int | None = None,
              alpha: float = 2.0, beta: float = 1.0):
    """Run all sweep cells deterministically; returns per-cell records."""
    n_values = [int(n) for n in n_values]
    if sorted(set(n_values)) != n_values:
        raise ConfigError("n_values must be strictly increasing")
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    payloads = []
    for n in n_values:
        for rep in range(replicates):
            seed = int(np.random.SeedSequence(
                [master_seed, n, rep]).generate_state(1)[0] % (2 ** 31))
            payloads.append({"scenario": spec.to_dict(), "n": n,
                             "replicate": rep, "seed": seed,
                             "alpha": alpha, "beta": beta})
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(payloads) <= 1:
        cells = [run_sweep_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_sweep_cell, payloads))
    cells.sort(key=lambda c: (c["n"], c["replicate"]))
    return cells


def sweep_summary(cells, alpha: float, beta: float) -> dict:
    """Per-n medians plus fitted and theoretical log-log slopes."""
    byn = {}
    for c in cells:
        if c["error"] is None:
            byn.setdefault(c["n"], []).append(c)
    medians = {n: {
        "map_error": float(np.median([c["map_error"] for c in lst])),
        "truth_error": float(np.median([c["truth_error"] for c in lst])),
        "unfairness_ub": float(np.median([c["unfairness_ub"] for c in lst])),
    } for n, lst in sorted(byn.items())}
    slope = None
    if len(medians) >= 2:
        ns = np.array(sorted(medians))
        ys = np.array([medians[n]["map_error"] for n in ns])
        if np.all(ys > 0):
            slope = float(np.polyfit(np.log(ns), np.log(ys), 1)[0])
    return {
        "medians": medians,
        "fitted_slope": slope,
        "theoretical_slope": -alpha / (alpha + beta),
        "failed_cells": sum(1 for c in cells if c["error"] is not None),
        "total_cells": len(cells),
    }


def _svg_rate_plot(medians: dict, fitted_slope, theo_slope) -> str:
    """Static log-log SVG plot: median map errors, fitted and stated slopes."""
    width, height = 640, 480
    mleft, mright, mtop, mbot = 70, 20, 20, 50
    pts = [(math.log(n), math.log(v["map_error"]))
           for n, v in sorted(medians.items()) if v["map_error"] > 0]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if len(pts) >= 1:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
        y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1
        pad = 0.08 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

        def sx(x):
            return mleft + (x - x0) / (x1 - x0) * (width - mleft - mright)

        def sy(y):
            return height - mbot - (y - y0) / (y1 - y0) * (height - mtop - mbot)

        parts.append(
            f'<line x1="{mleft}" y1="{height - mbot}" x2="{width - mright}" '
            f'y2="{height - mbot}" stroke="black"/>')
        parts.append(
            f'<line x1="{mleft}" y1="{mtop}" x2="{mleft}" '
            f'y2="{height - mbot}" stroke="black"/>')
        for n, v in sorted(medians.items()):
            if v["map_error"] <= 0:
                continue
            cx, cy = sx(math.log(n)), sy(math.log(v["map_error"]))
            parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="4" '
                         f'fill="steelblue"/>')
            parts.append(f'<text x="{cx:.1f}" y="{height - mbot + 18}" '
                         f'font-size="11" text-anchor="middle">{n}</text>')
        for slope, color, label in ((fitted_slope, "steelblue", "fitted"),
                                    (theo_slope, "crimson", "stated")):
            if slope is None or len(pts) < 2:
                continue
            xa, ya = pts[0]
            yb = ya + slope * (pts[-1][0] - xa)
            parts.append(
                f'<line x1="{sx(xa):.1f}" y1="{sy(ya):.1f}" '
                f'x2="{sx(pts[-1][0]):.1f}" y2="{sy(yb):.1f}" '
                f'stroke="{color}" stroke-dasharray="6,3"/>')
            parts.append(
                f'<text x="{sx(pts[-1][0]) - 4:.1f}" y="{sy(yb) - 6:.1f}" '
                f'font-size="12" fill="{color}" text-anchor="end">'
                f'{label} slope {slope:.3f}</text>')
        parts.append(
            f'<text x="{(mleft + width - mright) / 2:.1f}" '
            f'y="{height - 12}" font-size="13" text-anchor="middle">'
            f'n per group (log scale)</text>')
        parts.append(
            f'<text x="16" y="{(mtop + height - mbot) / 2:.1f}" '
            f'font-size="13" transform="rotate(-90 16 '
            f'{(mtop + height - mbot) / 2:.1f})" text-anchor="middle">'
            f'median map error (log scale)</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_sweep(args) -> int:
    flags = {"scenario": args.scenario, "out": args.out, "seed": args.seed,
             "replicates": args.replicates, "workers": args.workers,
             "noise_sd": args.noise_sd, "groups": args.groups}
    if args.n_values is not None:
        flags["n_values"] = [int(v) for v in args.n_values.split(",")]
    cfg = _resolve({"scenario": "translation", "out": "sweep_out",
                    "seed": _default_seed(), "replicates": 20,
                    "n_values": [2 ** k for k in range(8, 15)],
                    "workers": None, "alpha": 2.0, "beta": 1.0,
                    "noise_sd": None, "groups": 2, "weights": None,
                    "omega": None, "L": 3.0},
                   _load_config_file(args.config), flags)
    spec = _scenario_from_config(cfg)
    _write_snapshot(cfg["out"], "sweep", cfg)
    cells = run_sweep(spec, cfg["n_values"], int(cfg["replicates"]),
                      master_seed=int(cfg["seed"]), workers=cfg["workers"],
                      alpha=float(cfg["alpha"]), beta=float(cfg["beta"]))
    os.makedirs(cfg["out"], exist_ok=True)
    rates_path = os.path.join(cfg["out"], "rates.csv")
    with open(rates_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("n,replicate,map_error,truth_error,unfairness_ub,seed\n")
        for c in cells:
            if c["error"] is None:
                fh.write(f"{c['n']},{c['replicate']},{float(c['map_error'])!r},"
                         f"{float(c['truth_error'])!r},"
                         f"{float(c['unfairness_ub'])!r},{c['seed']}\n")
            else:
                fh.write(f"{c['n']},{c['replicate']},NA,NA,NA,{c['seed']}\n")
    summary = sweep_summary(cells, float(cfg["alpha"]), float(cfg["beta"]))
    _write_json(os.path.join(cfg["out"], "summary.json"), summary)
    _write_json(rates_path + ".meta.json",
                {"convention": "w2-half-quadratic", "seed": int(cfg["seed"]),
                 "scenario": spec.to_dict()})
    svg = _svg_rate_plot(summary["medians"], summary["fitted_slope"],
                         summary["theoretical_slope"])
    with open(os.path.join(cfg["out"], "plot.svg"), "w",
              encoding="utf-8") as fh:
        fh.write(svg)
        fh.write("\n")
    print("n, median map_error, median truth_error, median unfairness_ub")
    for n, v in summary["medians"].items():
        print(f"{n}, {v['map_error']:.6g}, {v['truth_error']:.6g}, "
              f"{v['unfairness_ub']:.6g}")
    print(f"fitted slope: {summary['fitted_slope']}, "
          f"stated slope: {summary['theoretical_slope']}")
    failed = summary["failed_cells"]
    if failed > 0.10 * summary["total_cells"]:
        print(f"sweep: {failed}/{summary['total_cells']} cells failed",
              file=sys.stderr)
        return EXIT_SWEEP_BUDGET
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parse_floats(text):
    if text is None:
        return None
    return [float(v) for v in str(text).split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairbary",
        description="Fair regression by barycenter post-processing")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic data with truth")
    sim.add_argument("--config")
    sim.add_argument("--scenario")
    sim.add_argument("--n", help="comma-separated per-group sizes")
    sim.add_argument("--groups", type=int)
    sim.add_argument("--noise-sd", dest="noise_sd", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit the fair regression bundle")
    fit.add_argument("--config")
    fit.add_argument("--data")
    fit.add_argument("--out")
    fit.add_argument("--weights")
    fit.add_argument("--omega")
    fit.add_argument("--L", type=float)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--beta", type=float)
    fit.add_argument("--base", choices=["knn", "kernel"])
    fit.add_argument("--max-iters", dest="max_iters", type=int)
    fit.add_argument("--step-scale", dest="step_scale", type=float)
    fit.add_argument("--step-rule", dest="step_rule",
                     choices=["constant", "inverse-sqrt"])
    fit.add_argument("--tol", type=float)
    fit.add_argument("--seed", type=int)
    fit.set_defaults(func=cmd_fit)

    tr = sub.add_parser("transform", help="apply a fitted bundle to data")
    tr.add_argument("--config")
    tr.add_argument("--bundle")
    tr.add_argument("--data")
    tr.add_argument("--out")
    tr.set_defaults(func=cmd_transform)

    ev = sub.add_parser("evaluate", help="score a bundle on held-out data")
    ev.add_argument("--config")
    ev.add_argument("--bundle")
    ev.add_argument("--data")
    ev.add_argument("--truth")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="convergence-rate sweep with plot")
    sw.add_argument("--config")
    sw.add_argument("--scenario")
    sw.add_argument("--n-values", dest="n_values",
                    help="comma-separated per-group sizes")
    sw.add_argument("--replicates", type=int)
    sw.add_argument("--groups", type=int)
    sw.add_argument("--noise-sd", dest="noise_sd", type=float)
    sw.add_argument("--workers", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error (schema): {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SidecarError as exc:
        print(f"error (sidecar): {exc}", file=sys.stderr)
        return EXIT_SIDECAR
    except InfeasibilityError as exc:
        print(f"error (infeasible): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error (domain): {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
