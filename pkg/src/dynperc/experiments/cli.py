"""Command-line front end: one subcommand per experiment family.

Flag precedence is defaults < --config file < explicit flags, so a config
file can pin a campaign while the command line tweaks one knob.  Every run
directory gets a manifest (config, seed, versions) next to its CSV/JSONL
outputs; reruns with the same config and seeds reproduce the data files
byte for byte.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from dynperc.environment import EnvConfig, sample_trajectory
from dynperc.experiments.census import census
from dynperc.experiments.config import DeskProfile, ExperimentConfig, parse_config_text
from dynperc.experiments.percstats import isoperimetry_experiment, percolation_stats_row
from dynperc.experiments.records import (
    RunRecord,
    persist_record,
    write_csv,
    write_decay_csv,
    write_jsonl,
    write_manifest,
)
from dynperc.experiments.stopping import run_stopping_trials, stopping_rows
from dynperc.experiments.sweeps import mixing_scaling_sweep
from dynperc.kernel import WindowKernel, unit_kernel
from dynperc.torus import TorusConfig
from dynperc.walker import exit_time, simulate_walk


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynperc",
        description="simulation lab for random walk on dynamical percolation",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in (
        "percolation-stats", "isoperimetry", "mixing-sweep", "census",
        "stopping-rule", "exit-time", "oracle-suite",
    ):
        p = sub.add_parser(mode)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--d", type=int)
        p.add_argument("--n", type=str, help="comma list of side lengths")
        p.add_argument("--p", type=str, help="comma list of edge densities")
        p.add_argument("--mu", type=str, help="comma list of refresh rates")
        p.add_argument("--eps", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--seeds", type=str, help="comma list of run seeds")
        p.add_argument("--samples", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--probes", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--t-cap", dest="t_cap", type=float)
        p.add_argument("--r", type=int)
        p.add_argument("--good-threshold", dest="good_threshold", type=float)
        p.add_argument("--budget-multiplier", dest="budget_multiplier", type=float)
        p.add_argument("--stop-scale", dest="stop_scale", type=float)
        p.add_argument("--keep-curves", dest="keep_curves", action="store_true", default=None)
        p.add_argument("--out", type=str, help="output directory")
    return parser


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        config = parse_config_text(Path(args.config).read_text())
        config = config.override(mode=args.mode)
    else:
        config = ExperimentConfig(mode=args.mode)
    updates: dict = {}
    if args.d is not None:
        updates["d"] = args.d
    if args.n is not None:
        updates["ns"] = _ints(args.n)
    if args.p is not None:
        updates["ps"] = _floats(args.p)
    if args.mu is not None:
        updates["mus"] = _floats(args.mu)
    if args.eps is not None:
        updates["eps"] = args.eps
    if args.delta is not None:
        updates["delta"] = args.delta
    if args.seeds is not None:
        updates["seeds"] = _ints(args.seeds)
    for name in ("samples", "runs", "probes", "horizon", "t_cap", "r", "stop_scale", "keep_curves"):
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    if args.out is not None:
        updates["out_dir"] = args.out
    desk_updates = {}
    if args.good_threshold is not None:
        desk_updates["good_threshold"] = args.good_threshold
    if args.budget_multiplier is not None:
        desk_updates["budget_multiplier"] = args.budget_multiplier
    if desk_updates:
        base = config.desk
        updates["desk"] = DeskProfile(
            good_threshold=desk_updates.get("good_threshold", base.good_threshold),
            budget_multiplier=desk_updates.get("budget_multiplier", base.budget_multiplier),
            warmup_multiplier=base.warmup_multiplier,
        )
    return config.override(**updates) if updates else config


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir) if config.out_dir else Path("runs") / config.mode
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record(config: ExperimentConfig, outputs: dict, started: float) -> RunRecord:
    return RunRecord(
        mode=config.mode,
        config=config.to_mapping(),
        seed=config.seeds[0],
        outputs=outputs,
        wall_clock=time.time() - started,
    )


def run_percolation_stats(config: ExperimentConfig, out: Path) -> dict:
    rng = np.random.default_rng([config.seeds[0], 11])
    rows = []
    for n in config.ns:
        for p in config.ps:
            rows.append(
                percolation_stats_row(config.d, n, p, config.delta, config.samples, rng)
            )
    header = list(rows[0].keys())
    write_csv(out / "percstats.csv", header, [[r[h] for h in header] for r in rows])
    write_jsonl(out / "percstats.jsonl", rows)
    for r in rows:
        print(
            f"n={r['n']} p={r['p']}: theta={r['theta_hat']:.4f}(se {r['theta_se']:.4f}) "
            f"coverage_fail={r['coverage_failure_rate']:.4f} (k={r['coverage_k']}) "
            f"diam_tail={r['diameter_tail_rate']:.4f} at r={r['diameter_r']:.2f}"
        )
    return {"rows": rows}


def run_isoperimetry(config: ExperimentConfig, out: Path) -> dict:
    rng = np.random.default_rng([config.seeds[0], 12])
    n, p, _ = config.grid()[0]
    rows, summary = isoperimetry_experiment(
        config.d, n, p, giants=config.runs, probes=config.probes, rng=rng,
        size_floor=config.size_floor, cap_fraction=config.cap_fraction,
    )
    write_csv(
        out / "isoperimetry.csv",
        ["giant_index", "giant_size", "min_ratio", "argmin_size", "probes"],
        [[r.giant_index, r.giant_size, r.min_ratio, r.argmin_size, r.probes] for r in rows],
    )
    print(
        f"{summary['giants_scanned']} giants at n={n}, p={p}: "
        f"pooled min ratio {summary['pooled_min_ratio']:.4f}, "
        f"1st pct of per-giant minima {summary['pct1_of_minima']:.4f}"
    )
    return summary


def run_mixing_sweep(config: ExperimentConfig, out: Path) -> dict:
    def progress(cell):
        state = f"t_mix={cell.mixing_time:.0f}" if cell.reached else "UNREACHED"
        print(f"n={cell.n} p={cell.p} mu={cell.mu} seed={cell.seed}: {state}", flush=True)

    result = mixing_scaling_sweep(config, progress=progress)
    header, rows = result.cell_rows()
    write_csv(out / "sweep_cells.csv", header, rows)
    header, rows = result.median_rows()
    write_csv(out / "sweep_medians.csv", header, rows)
    (out / "fits.json").write_text(json.dumps(result.fits, indent=2, sort_keys=True) + "\n")
    if config.keep_curves:
        for cell in result.cells:
            name = f"decay_n{cell.n}_p{cell.p}_mu{cell.mu}_seed{cell.seed}.csv"
            write_decay_csv(out / name, cell.tv_max_curve, cell.tv_curves)
    for label, fit in result.fits.items():
        print(f"{label}: slopes vs 1/mu by n: {fit['per_n_slope_vs_invmu']}")
    unreached = sum(not c.reached for c in result.cells)
    if unreached:
        print(f"warning: {unreached} cells never crossed eps within their horizon cap")
    return {"fits": result.fits, "medians": result.medians, "unreached_cells": unreached}


def run_census(config: ExperimentConfig, out: Path) -> dict:
    result = census(config)
    header, rows = result.run_rows()
    write_csv(out / "census_runs.csv", header, rows)
    summary = {
        "p_hat_excellent_given_good": result.p_hat,
        "se": result.se,
        "n_good_total": result.n_good_total,
        "n_excellent_total": result.n_excellent_total,
        "good_threshold": result.good_threshold,
        "t_window": result.t_window,
        "runs": len(result.runs),
    }
    write_jsonl(out / "census_summary.jsonl", [summary])
    print(
        f"P(excellent | good) = {result.p_hat:.4f} +- {result.se:.4f} "
        f"({result.n_excellent_total}/{result.n_good_total} over {len(result.runs)} runs)"
    )
    return summary


def run_stopping(config: ExperimentConfig, out: Path) -> dict:
    records, summary = run_stopping_trials(config)
    header, rows = stopping_rows(records)
    write_csv(out / "stopping_runs.csv", header, rows)
    write_jsonl(out / "stopping_summary.jsonl", [summary])
    print(
        f"k={summary['k']} c={summary['c']}: "
        f"TV<=eps in {summary['frac_tv_within_eps']:.0%} of runs, "
        f"mean T={summary['mean_T']:.1f} (budget {summary['total_budget']:.0f})"
    )
    return summary


def run_exit_time(config: ExperimentConfig, out: Path) -> dict:
    n, p, mu = config.grid()[0]
    cfg = EnvConfig(torus=TorusConfig(d=config.d, n=n), p=p, mu=mu)
    rng = np.random.default_rng([config.seeds[0], 13])
    rows = []
    for rep in range(config.runs):
        rec = exit_time(cfg, config.r, rng, horizon=config.horizon)
        rows.append([rep, rec.tau, int(rec.exited), rec.n_jumps, rec.final_displacement])
    write_csv(out / "exit_times.csv",
              ["run", "tau", "exited", "n_jumps", "final_displacement"], rows)
    taus = np.array([row[1] for row in rows])
    inv = 1.0 / mu if mu > 0 else 0.0
    bound = (config.r ** 2 + inv) * max(1.0, math.log(config.r)) ** 4
    summary = {
        "r": config.r, "n": n, "p": p, "mu": mu, "runs": config.runs,
        "median_tau": float(np.median(taus)),
        "exited_fraction": float(np.mean([row[2] for row in rows])),
        "diffusive_bound": bound,
    }
    write_jsonl(out / "exit_summary.jsonl", [summary])
    print(
        f"r={config.r}: median tau {summary['median_tau']:.1f} vs bound {bound:.1f}, "
        f"exited {summary['exited_fraction']:.0%}"
    )
    return summary


def run_oracle_suite(config: ExperimentConfig, out: Path) -> dict:
    """Fast invariant battery; the full gate lives in the pytest suite."""
    from scipy.linalg import expm

    from dynperc.evolving import (
        check_morris_peres,
        q_column,
        step_distribution,
        z_drift_sides,
    )

    results = []

    def check(name: str, value: float, tol: float, ok: bool | None = None) -> None:
        ok = (value <= tol) if ok is None else ok
        results.append({"check": name, "value": value, "tol": tol, "ok": bool(ok)})
        print(f"[oracle] {name}: {value:.3e} (tol {tol:.1e}) {'PASS' if ok else 'FAIL'}")

    torus = TorusConfig(d=2, n=3)
    env = EnvConfig(torus=torus, p=0.6, mu=1.0)
    nv = torus.n_vertices
    masks = [
        np.array([(s >> v) & 1 for v in range(nv)], dtype=bool)
        for s in range(1, 2 ** nv - 1)
    ]

    worst_sum = worst_diag = 0.0
    worst_marginal = 0.0
    mp_ok = True
    drift_worst = -math.inf
    for seed in range(3):
        traj = sample_trajectory(env, 1.0, np.random.default_rng([config.seeds[0], 21, seed]))
        P = unit_kernel(traj, 0.0)
        mat = P.matrix()
        worst_sum = max(
            worst_sum,
            float(np.abs(mat.sum(axis=0) - 1).max()),
            float(np.abs(mat.sum(axis=1) - 1).max()),
        )
        worst_diag = max(worst_diag, float(math.exp(-1) - mat.diagonal().min()))
        for S in masks:
            h = q_column(S, P)
            law = step_distribution(S, P)
            marg = np.zeros(nv)
            for mass, outcome in law:
                marg += mass * outcome
            worst_marginal = max(worst_marginal, float(np.abs(marg - h).max()))
            mp_ok &= check_morris_peres(S, P, math.exp(-1))
            lhs, rhs = z_drift_sides(S, P)
            drift_worst = max(drift_worst, lhs - rhs)
    check("unit kernels doubly stochastic", worst_sum, 1e-9)
    check("kernel diagonal >= 1/e", worst_diag, 1e-12)
    check("evolving-set marginal identity", worst_marginal, 1e-12)
    check("root-gauge inequality all subsets", 0.0 if mp_ok else 1.0, 0.5, ok=mp_ok)
    check("Z-drift inequality all subsets", drift_worst, 1e-12)

    # frozen-environment uniformization vs expm
    expm_err = 0.0
    for seed in range(3):
        frozen = EnvConfig(torus=torus, p=0.55, mu=0.0)
        traj = sample_trajectory(frozen, 1.0, np.random.default_rng([config.seeds[0], 22, seed]))
        state = traj.env_at(0.0)
        gen = np.zeros((nv, nv))
        u_ep, w_ep = torus.edge_endpoints
        for e in np.nonzero(state)[0]:
            u, w = int(u_ep[e]), int(w_ep[e])
            gen[u, w] += 1 / (2 * torus.d)
            gen[w, u] += 1 / (2 * torus.d)
        np.fill_diagonal(gen, -gen.sum(axis=1))
        mat = WindowKernel.from_trajectory(traj, 0.0, 1.0).matrix()
        expm_err = max(expm_err, float(np.abs(mat - expm(gen)).max()))
    check("uniformization matches expm", expm_err, 1e-9)

    # walker-vs-kernel smoke test, loose Monte Carlo tolerance
    chain = EnvConfig(torus=TorusConfig(d=1, n=4), p=0.6, mu=0.0)
    traj = sample_trajectory(chain, 2.0, np.random.default_rng([config.seeds[0], 23]))
    expect = WindowKernel.from_trajectory(traj, 0.0, 2.0).matrix()[0]
    rng = np.random.default_rng([config.seeds[0], 24])
    counts = np.zeros(4)
    trials = 20_000
    for _ in range(trials):
        counts[simulate_walk(traj, 0, 2.0, rng).position_at(2.0)] += 1
    check("walker matches kernel (MC)", float(0.5 * np.abs(counts / trials - expect).sum()), 0.02)

    write_jsonl(out / "oracle_suite.jsonl", results)
    ok = all(r["ok"] for r in results)
    print("oracle suite:", "PASS" if ok else "FAIL")
    return {"ok": ok, "results": results}


RUNNERS = {
    "percolation-stats": run_percolation_stats,
    "isoperimetry": run_isoperimetry,
    "mixing-sweep": run_mixing_sweep,
    "census": run_census,
    "stopping-rule": run_stopping,
    "exit-time": run_exit_time,
    "oracle-suite": run_oracle_suite,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    out = _out_dir(config)
    started = time.time()
    write_manifest(out, config.to_mapping(), extra={"mode": config.mode})
    outputs = RUNNERS[config.mode](config, out)
    record = _record(config, outputs, started)
    persist_record(record, out / "run_record.json")
    if config.mode == "oracle-suite" and not outputs["ok"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
