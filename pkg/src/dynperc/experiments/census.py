"""Good/excellent time census over coupled evolving-set runs.

A census run walks the coupled evolving set across a fixed integer window
(no coverage stopping) and tallies good times and excellent-given-good
times.  The pooled conditional frequency P(excellent | good) comes with a
run-clustered standard error: good times inside one run share an
environment, so per-run totals are the independent units, not the times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dynperc.connectivity import components, giant
from dynperc.environment import EnvConfig, sample_trajectory
from dynperc.evolving import (
    CoverageRecord,
    EvolvingSetState,
    classify_excellent,
    classify_good,
    doob_coupled_step,
    phi_exact,
    psi_exact,
    z_value,
)
from dynperc.experiments.config import ExperimentConfig
from dynperc.kernel import unit_kernel
from dynperc.torus import TorusConfig


@dataclass
class CensusRun:
    seed: int
    x0: int
    n_steps: int
    n_good: int
    n_excellent_given_good: int
    records: list[CoverageRecord]


@dataclass
class CensusResult:
    runs: list[CensusRun]
    good_threshold: float
    t_window: int
    n_good_total: int
    n_excellent_total: int
    p_hat: float
    se: float

    def run_rows(self) -> tuple[list[str], list[list]]:
        header = ["seed", "x0", "n_steps", "n_good", "n_excellent_given_good"]
        rows = [[r.seed, r.x0, r.n_steps, r.n_good, r.n_excellent_given_good]
                for r in self.runs]
        return header, rows


def census_run(
    traj, x0: int, t_window: int, rng: np.random.Generator, good_threshold: float
) -> CensusRun:
    """Coupled evolving-set run over [0, t_window], recording every integer time."""
    if traj.horizon < t_window + 1.0:
        raise ValueError("horizon must reach t_window + 1 for the excellence integrals")
    cfg = traj.cfg
    n = cfg.torus.n_vertices
    S = np.zeros(n, dtype=bool)
    S[x0] = True
    state = EvolvingSetState(S=S, t=0, coupled_x=x0)
    records: list[CoverageRecord] = []
    for t in range(t_window + 1):
        giant_mask = giant(components(traj.env_at(float(t)), cfg.torus))
        P = unit_kernel(traj, float(t))
        good = classify_good(state.S, giant_mask, good_threshold)
        records.append(
            CoverageRecord(
                t=t,
                set_size=int(state.S.sum()),
                giant_size=int(giant_mask.sum()),
                overlap=int((state.S & giant_mask).sum()),
                z=z_value(state.S),
                phi=phi_exact(state.S, P),
                psi=psi_exact(state.S, P),
                good=good,
                excellent=classify_excellent(state.S, traj, float(t)),
            )
        )
        if t < t_window:
            state = doob_coupled_step(state, P, rng)
    n_good = sum(r.good for r in records)
    n_eg = sum(r.good and r.excellent for r in records)
    return CensusRun(
        seed=-1, x0=x0, n_steps=t_window + 1, n_good=n_good,
        n_excellent_given_good=n_eg, records=records,
    )


def census(config: ExperimentConfig, t_window: int | None = None) -> CensusResult:
    """Run config.runs independent censuses on the first grid cell."""
    n, p, mu = config.grid()[0]
    cfg = EnvConfig(torus=TorusConfig(d=config.d, n=n), p=p, mu=mu)
    threshold = config.desk.good_threshold
    if t_window is None:
        t_window = int(config.t_cap) if config.t_cap is not None else 40
    runs: list[CensusRun] = []
    base_seed = config.seeds[0]
    for rep in range(config.runs):
        rng = np.random.default_rng([base_seed, rep, n, 1])
        traj = sample_trajectory(cfg, t_window + 1.0, rng)
        x0 = int(rng.integers(cfg.torus.n_vertices))
        run = census_run(traj, x0, t_window, rng, threshold)
        run.seed = rep
        runs.append(run)
    return summarize_census(runs, threshold, t_window)


def summarize_census(
    runs: list[CensusRun], good_threshold: float, t_window: int
) -> CensusResult:
    goods = np.array([r.n_good for r in runs], dtype=float)
    excels = np.array([r.n_excellent_given_good for r in runs], dtype=float)
    total_good = float(goods.sum())
    total_eg = float(excels.sum())
    if total_good > 0:
        p_hat = total_eg / total_good
        # cluster-robust: runs are the independent units
        se = math.sqrt(float(((excels - p_hat * goods) ** 2).sum())) / total_good
    else:
        p_hat, se = float("nan"), float("nan")
    return CensusResult(
        runs=runs,
        good_threshold=good_threshold,
        t_window=t_window,
        n_good_total=int(total_good),
        n_excellent_total=int(total_eg),
        p_hat=p_hat,
        se=se,
    )
