"""Experiment harness: collect, learn, evaluate, sweep, rademacher-check.

Every command is driven by a flat YAML config plus a few flags; outputs are
plot-ready CSVs with fixed headers and 12 significant digits.  Exit codes:
0 success, 2 validation error (bad config, mismatched inputs), 3 runtime
error.

Sweep cells are independent jobs keyed by (n_episodes, seed); both
algorithms inside a cell consume the same collected dataset, and every seed
derives from the cell key, so CSVs are byte-identical across worker counts.
Per-row wall time is recorded only when record_wall_time is set, because
timing is the one column clock noise would leak into.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from srmrl.bounds import BoundReport, ConfidenceParams, lower_bound_return, rademacher_estimate_rl
from srmrl.config import ConfigError, ExperimentConfig, load_config
from srmrl.core import (
    CapacityError,
    DataFormatError,
    dataset_header,
    derive_seed,
    read_dataset,
    reindex_dataset,
    write_dataset,
)
from srmrl.domains import collect_random_dataset, true_return_mc
from srmrl.optimize import mr_select, srm_select
from srmrl.policies import Policy, load_policy, save_policy

SWEEP_COLUMNS = [
    "algorithm", "n_episodes", "seed", "selected_k", "true_return_mean",
    "true_return_stderr", "lower_bound", "v_mfmc", "discrepancy_d", "omega",
    "wall_time_s", "error",
]
SUMMARY_COLUMNS = [
    "algorithm", "n_episodes", "cells", "true_return_mean", "true_return_ci95",
    "selected_k_mean", "selected_k_ci95", "selected_k_median",
    "lower_bound_mean", "v_mfmc_mean",
]
BOUNDS_COLUMNS = ["selected"] + list(BoundReport.FIELDS)
RADEMACHER_COLUMNS = ["n_tilde", "sigma_draws", "exact", "monte_carlo", "gap"]
EVALUATE_COLUMNS = ["class_index", "mc_rollouts", "true_return_mean", "true_return_stderr"]

_RC_DRAWS = (10, 100, 1000, 10000)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % value
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


# ---------------------------------------------------------------------------
# collect / learn / evaluate
# ---------------------------------------------------------------------------

def cmd_collect(cfg: ExperimentConfig, seed: int, out: Path) -> int:
    spec = cfg.make_spec()
    episodes = collect_random_dataset(spec, cfg.n_episodes, seed)
    ds = reindex_dataset(episodes, return_range=spec.return_range)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.csv"
    write_dataset(ds, path, extra_header={"domain": spec.name, "seed": seed})
    print(f"collected N={ds.n_episodes} episodes, T={ds.horizon}, {len(ds)} transitions -> {path}")
    return 0


def _check_dataset_matches(cfg: ExperimentConfig, spec, data_path: Path) -> None:
    meta = dataset_header(data_path)
    name = meta.get("domain")
    if name is not None and name != spec.name:
        raise DataFormatError(
            f"{data_path}: dataset was collected on domain {name!r} but the config targets {spec.name!r}"
        )
    checks = {
        "d_S": spec.state_dim, "d_A": spec.action_dim, "T": spec.horizon,
    }
    for key, want in checks.items():
        got = int(meta[key])
        if got != want:
            raise DataFormatError(
                f"{data_path}: header {key}={got} does not match domain {spec.name!r} ({key}={want})"
            )
    for key, want in (("A", spec.return_range.lo), ("B", spec.return_range.hi)):
        if abs(float(meta[key]) - want) > 1e-9 * max(1.0, abs(want)):
            raise DataFormatError(
                f"{data_path}: header {key}={meta[key]} does not match domain {spec.name!r} ({key}={want})"
            )


def cmd_learn(cfg: ExperimentConfig, data_path: Path, algo: str, seed: int, out: Path) -> int:
    spec = cfg.make_spec()
    _check_dataset_matches(cfg, spec, data_path)
    ds = read_dataset(data_path)
    structure = cfg.make_structure(spec)
    ctx = cfg.make_context(spec, ds.n_episodes, sup_seed=derive_seed(seed, 3))
    conf = cfg.make_confidence()
    opt = cfg.make_optimizer(master_seed=seed)
    try:
        if algo == "srm":
            k_hat, cand, reports = srm_select(structure, ds, conf, ctx, opt)
        else:
            cand = mr_select(structure, ds, ctx, opt)
            k_hat = len(structure)
            pol = Policy(structure.largest, cand.params)
            reports = [
                lower_bound_return(pol, structure.largest, ds, conf, ctx,
                                   rng_seed=derive_seed(seed, 2, k_hat), class_index=k_hat)
            ]
    except CapacityError as exc:
        raise CapacityError(
            f"{exc}; collect more episodes or lower n_tilde_fraction so that "
            f"n_tilde * T fits the dataset"
        ) from exc
    out.mkdir(parents=True, exist_ok=True)
    policy_path = out / "policy.txt"
    save_policy(policy_path, Policy(structure[k_hat - 1], cand.params), k_hat)
    rows = [dict(rep.as_row(), selected=(rep.class_index == k_hat)) for rep in reports]
    _write_csv(out / "bounds.csv", BOUNDS_COLUMNS, rows)
    selected = next(r for r in reports if r.class_index == k_hat)
    print(
        f"{algo}: selected class k={k_hat} of {len(structure)}, "
        f"lower_bound={_fmt(selected.lower_bound)}, v_mfmc={_fmt(selected.v_mfmc)} -> {policy_path}"
    )
    return 0


def cmd_evaluate(cfg: ExperimentConfig, policy_path: Path, seed: int, out: Path) -> int:
    spec = cfg.make_spec()
    structure = cfg.make_structure(spec)
    pol, k = load_policy(policy_path, structure)
    mean, stderr = true_return_mc(spec, pol, cfg.mc_rollouts, seed)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "evaluate.csv", EVALUATE_COLUMNS, [{
        "class_index": k, "mc_rollouts": cfg.mc_rollouts,
        "true_return_mean": mean, "true_return_stderr": stderr,
    }])
    print(f"true return of {policy_path}: {_fmt(mean)} +/- {_fmt(stderr)} (stderr, {cfg.mc_rollouts} rollouts)")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _run_cell(args: tuple) -> list[dict]:
    """One (n_episodes, seed) cell: collect once, run every algorithm on it."""
    cfg, n_episodes, cell_seed, master = args
    spec = cfg.make_spec()
    structure = cfg.make_structure(spec)
    conf = cfg.make_confidence()
    rows = []
    dataset_seed = derive_seed(master, n_episodes, cell_seed, 0)
    episodes = collect_random_dataset(spec, n_episodes, dataset_seed)
    ds = reindex_dataset(episodes, return_range=spec.return_range)
    for a_idx, algo in enumerate(cfg.sweep_algorithms):
        row = {c: "" for c in SWEEP_COLUMNS}
        row.update(algorithm=algo, n_episodes=n_episodes, seed=cell_seed, error="")
        t0 = time.perf_counter()
        try:
            opt = cfg.make_optimizer(master_seed=derive_seed(master, n_episodes, cell_seed, 1 + a_idx))
            ctx = cfg.make_context(spec, ds.n_episodes,
                                   sup_seed=derive_seed(master, n_episodes, cell_seed, 11 + a_idx))
            if algo == "srm":
                k_hat, cand, reports = srm_select(structure, ds, conf, ctx, opt)
                report = reports[k_hat - 1]
            else:
                cand = mr_select(structure, ds, ctx, opt)
                k_hat = len(structure)
                pol = Policy(structure.largest, cand.params)
                report = lower_bound_return(
                    pol, structure.largest, ds, conf, ctx,
                    rng_seed=derive_seed(master, n_episodes, cell_seed, 21 + a_idx),
                    class_index=k_hat,
                )
            policy = Policy(structure[k_hat - 1], cand.params)
            mc_seed = derive_seed(master, n_episodes, cell_seed, 31 + a_idx)
            mean, stderr = true_return_mc(spec, policy, cfg.mc_rollouts, mc_seed)
            wall = time.perf_counter() - t0 if cfg.record_wall_time else 0.0
            row.update(
                selected_k=k_hat, true_return_mean=mean, true_return_stderr=stderr,
                lower_bound=report.lower_bound, v_mfmc=report.v_mfmc,
                discrepancy_d=report.discrepancy_d, omega=report.omega,
                wall_time_s=wall,
            )
        except Exception as exc:  # the sweep keeps going, the row records why
            row.update(error=f"{type(exc).__name__}: {exc}",
                       wall_time_s=time.perf_counter() - t0 if cfg.record_wall_time else 0.0)
        rows.append(row)
    return rows


def _summarize(rows: list[dict]) -> list[dict]:
    out = []
    algos = sorted({r["algorithm"] for r in rows})
    sizes = sorted({r["n_episodes"] for r in rows})
    for algo in algos:
        for n in sizes:
            cell = [r for r in rows if r["algorithm"] == algo and r["n_episodes"] == n and r["error"] == ""]
            if not cell:
                continue

            def mean_ci(key):
                vals = np.array([float(r[key]) for r in cell])
                m = float(vals.mean())
                if vals.size < 2:
                    return m, 0.0
                hw = float(stats.t.ppf(0.975, vals.size - 1) * vals.std(ddof=1) / np.sqrt(vals.size))
                return m, hw

            tr_m, tr_hw = mean_ci("true_return_mean")
            k_m, k_hw = mean_ci("selected_k")
            lb_m, _ = mean_ci("lower_bound")
            v_m, _ = mean_ci("v_mfmc")
            out.append({
                "algorithm": algo, "n_episodes": n, "cells": len(cell),
                "true_return_mean": tr_m, "true_return_ci95": tr_hw,
                "selected_k_mean": k_m, "selected_k_ci95": k_hw,
                "selected_k_median": float(np.median([float(r["selected_k"]) for r in cell])),
                "lower_bound_mean": lb_m, "v_mfmc_mean": v_m,
            })
    return out


def run_sweep(cfg: ExperimentConfig, seed: int, out: Path, workers: int = 1) -> Path:
    """Collect -> learn -> evaluate over the config grid; returns the rows path."""
    if not cfg.sweep_n_episodes or cfg.sweep_seeds < 1:
        raise ConfigError("sweep grid is empty")
    cells = [(cfg, int(n), s, seed) for n in cfg.sweep_n_episodes for s in range(cfg.sweep_seeds)]
    if workers <= 1:
        results = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells, chunksize=1))
    # rows in grid order regardless of completion order
    rows = [row for cell_rows in results for row in cell_rows]
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "sweep_rows.csv"
    _write_csv(rows_path, SWEEP_COLUMNS, rows)
    _write_csv(out / "sweep_summary.csv", SUMMARY_COLUMNS, _summarize(rows))
    return rows_path


def cmd_sweep(cfg: ExperimentConfig, seed: int, out: Path, workers: int) -> int:
    rows_path = run_sweep(cfg, seed, out, workers)
    print(f"sweep rows -> {rows_path}")
    print(f"summary    -> {rows_path.with_name('sweep_summary.csv')}")
    return 0


# ---------------------------------------------------------------------------
# rademacher-check
# ---------------------------------------------------------------------------

def run_rademacher_check(cfg: ExperimentConfig, seed: int, out: Path) -> Path:
    """Exact-enumeration vs Monte Carlo capacity estimates for the largest class."""
    spec = cfg.make_spec()
    structure = cfg.make_structure(spec)
    episodes = collect_random_dataset(spec, cfg.n_episodes, derive_seed(seed, 0))
    ds = reindex_dataset(episodes, return_range=spec.return_range)
    n_tilde = cfg.n_tilde(ds.n_episodes)
    if n_tilde > 12:
        raise CapacityError(
            f"exact enumeration needs n_tilde <= 12, got {n_tilde}; lower n_episodes or n_tilde_fraction"
        )
    ctx = cfg.make_context(spec, ds.n_episodes, sup_seed=derive_seed(seed, 1))
    cls = structure.largest
    exact = rademacher_estimate_rl(
        cls, ds, ctx, ConfidenceParams(cfg.delta, exact_enumeration=True),
        ctx.sup_optimizer, rng_seed=derive_seed(seed, 2),
    )
    rows = []
    for draws in _RC_DRAWS:
        mc = rademacher_estimate_rl(
            cls, ds, ctx, ConfidenceParams(cfg.delta, sigma_draws=draws, exact_enumeration=False),
            ctx.sup_optimizer, rng_seed=derive_seed(seed, 3),
        )
        rows.append({
            "n_tilde": n_tilde, "sigma_draws": draws, "exact": exact,
            "monte_carlo": mc, "gap": abs(mc - exact),
        })
    out.mkdir(parents=True, exist_ok=True)
    path = out / "rademacher_check.csv"
    _write_csv(path, RADEMACHER_COLUMNS, rows)
    return path


def cmd_rademacher_check(cfg: ExperimentConfig, seed: int, out: Path) -> int:
    path = run_rademacher_check(cfg, seed, out)
    print(f"rademacher check -> {path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srmrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, algo=False, policy=False, workers=False):
        p.add_argument("--config", type=Path, default=None, help="flat YAML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config master_seed)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config out_dir)")
        if data:
            p.add_argument("--data", type=Path, required=True, help="dataset file")
        if algo:
            p.add_argument("--algo", choices=["srm", "mr"], required=True)
        if policy:
            p.add_argument("--policy", type=Path, required=True, help="policy file")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")

    common(sub.add_parser("collect", help="simulate a random-policy dataset"))
    common(sub.add_parser("learn", help="select a policy from a dataset"), data=True, algo=True)
    common(sub.add_parser("evaluate", help="Monte Carlo ground truth of a saved policy"), policy=True)
    common(sub.add_parser("sweep", help="learning-curve grid over episode counts and seeds"), workers=True)
    common(sub.add_parser("rademacher-check", help="exact vs sampled capacity estimates"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config is not None else ExperimentConfig()
        seed = args.seed if args.seed is not None else cfg.master_seed
        if seed < 0:
            raise ConfigError("--seed must be nonnegative")
        out = args.out if args.out is not None else Path(cfg.out_dir)
        if args.command == "collect":
            return cmd_collect(cfg, seed, out)
        if args.command == "learn":
            return cmd_learn(cfg, args.data, args.algo, seed, out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.policy, seed, out)
        if args.command == "sweep":
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            return cmd_sweep(cfg, seed, out, args.workers)
        if args.command == "rademacher-check":
            return cmd_rademacher_check(cfg, seed, out)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
