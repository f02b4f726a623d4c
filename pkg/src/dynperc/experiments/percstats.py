"""Percolation statics experiments and the delta-good environment audit.

The audit checks the two defining conditions of a delta-good trajectory on a
finite window: (1) the giant stays within a delta band around its expected
density at every refresh event, and (2) subsets of the giant sampled by the
randomized scan never dip below a c / log n isoperimetric ratio.  Both checks
are reported, never raised: an audit of a bad environment is still a result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dynperc.connectivity import (
    components,
    giant,
    giant_density_estimate,
    isoperimetry_scan,
    secondary_diameter_tail,
    union_coverage_failure_rate,
)
from dynperc.environment import EnvConfig, EnvTrajectory, flip_mask, sample_stationary
from dynperc.torus import TorusConfig


def percolation_stats_row(
    d: int,
    n: int,
    p: float,
    delta: float,
    samples: int,
    rng: np.random.Generator,
    diameter_scale: float = 4.0,
) -> dict:
    """One grid point of the statics table.

    Columns: giant density with standard error, union-coverage failure rate
    for the k(delta, theta) recipe, and the secondary-cluster diameter tail
    at r = diameter_scale * log n.
    """
    cfg = EnvConfig(torus=TorusConfig(d=d, n=n), p=p, mu=1.0)
    theta, theta_se = giant_density_estimate(cfg, samples, rng)
    failure, k, theta_used = union_coverage_failure_rate(
        cfg, delta, samples, rng, theta=theta
    )
    r = diameter_scale * math.log(n)
    tail = secondary_diameter_tail(cfg, r, samples, rng)
    return {
        "d": d,
        "n": n,
        "p": p,
        "samples": samples,
        "theta_hat": theta,
        "theta_se": theta_se,
        "coverage_delta": delta,
        "coverage_k": k,
        "coverage_failure_rate": failure,
        "diameter_r": r,
        "diameter_tail_rate": tail,
        "theta_used": theta_used,
    }


@dataclass
class AuditReport:
    """Outcome of a delta-good check on one trajectory window."""

    window: tuple[float, float]
    delta: float
    theta_hat: float
    density_checks: int
    density_violations: int
    density_violation_times: list[float] = field(default_factory=list)
    iso_probe_times: int = 0
    iso_violations: int = 0
    min_iso_ratio: float = float("inf")
    iso_threshold: float = 0.0

    @property
    def density_ok(self) -> bool:
        return self.density_violations == 0

    @property
    def iso_ok(self) -> bool:
        return self.iso_violations == 0

    @property
    def is_delta_good(self) -> bool:
        return self.density_ok and self.iso_ok


def delta_good_audit(
    traj: EnvTrajectory,
    delta: float,
    window: tuple[float, float],
    probes: int,
    rng: np.random.Generator,
    theta_hat: float | None = None,
    iso_constant: float = 1.0,
    iso_times: int = 5,
    size_floor: int = 9,
    cap_fraction: float = 0.9,
    max_violation_times: int = 32,
) -> AuditReport:
    """Audit conditions (1) and (2) over [a, b] within the trajectory horizon.

    Condition (1) compares |giant| against ((1-delta) theta n^d,
    (1+delta) theta n^d) at the window start and at every refresh event in
    the window; giant size only moves at flips, so sizes are tracked per
    flip segment and read off per event.  Condition (2) runs the randomized
    isoperimetry scan at iso_times evenly spread times, `probes` probes in
    total, against the threshold iso_constant / log n.  theta_hat defaults
    to a fresh stationary estimate for the trajectory's own (p, mu).
    """
    a, b = window
    if not 0.0 <= a < b <= traj.horizon:
        raise ValueError(f"window {window} outside trajectory horizon {traj.horizon}")
    torus = traj.cfg.torus
    nv = torus.n_vertices
    if theta_hat is None:
        theta_hat, _ = giant_density_estimate(traj.cfg, 100, rng)
    lo, hi = (1 - delta) * theta_hat * nv, (1 + delta) * theta_hat * nv

    flips = flip_mask(traj)
    in_window = (traj.times > a) & (traj.times <= b)
    event_times = traj.times[in_window]
    event_flips = flips[in_window]

    report = AuditReport(
        window=(float(a), float(b)),
        delta=delta,
        theta_hat=float(theta_hat),
        density_checks=0,
        density_violations=0,
    )

    def check_density(t: float, gsize: int) -> None:
        report.density_checks += 1
        if not lo < gsize < hi:
            report.density_violations += 1
            if len(report.density_violation_times) < max_violation_times:
                report.density_violation_times.append(float(t))

    gsize = int(components(traj.env_at(a), torus).sizes.max())
    check_density(a, gsize)
    for t, flipped in zip(event_times, event_flips):
        if flipped:
            gsize = int(components(traj.env_at(float(t)), torus).sizes.max())
        check_density(float(t), gsize)

    # condition (2): scan at evenly spread probe times
    report.iso_threshold = iso_constant / math.log(torus.n)
    per_time = max(1, probes // max(1, iso_times))
    for t in np.linspace(a, b, iso_times):
        state = traj.env_at(float(t))
        gmask = giant(components(state, torus))
        gcount = int(gmask.sum())
        cap = int(cap_fraction * gcount)
        if cap < size_floor:  # giant too small to probe; that is itself a violation
            report.iso_probe_times += 1
            report.iso_violations += 1
            continue
        scan = isoperimetry_scan(
            state, gmask, torus, size_floor, cap, rng, probes=per_time
        )
        report.iso_probe_times += 1
        report.min_iso_ratio = min(report.min_iso_ratio, scan.min_ratio)
        if scan.min_ratio < report.iso_threshold:
            report.iso_violations += 1
    return report


@dataclass
class IsoperimetryRow:
    giant_index: int
    giant_size: int
    min_ratio: float
    argmin_size: int
    probes: int


def isoperimetry_experiment(
    d: int,
    n: int,
    p: float,
    giants: int,
    probes: int,
    rng: np.random.Generator,
    size_floor: int = 9,
    cap_fraction: float = 0.9,
) -> tuple[list[IsoperimetryRow], dict]:
    """Scan `giants` iid stationary giants; report per-giant minima.

    The summary includes the pooled minimum and the 1st percentile of the
    per-giant minima, the calibration statistic the acceptance threshold was
    frozen from.
    """
    cfg = EnvConfig(torus=TorusConfig(d=d, n=n), p=p, mu=1.0)
    rows: list[IsoperimetryRow] = []
    for i in range(giants):
        state = sample_stationary(cfg, rng)
        gmask = giant(components(state, cfg.torus))
        gcount = int(gmask.sum())
        cap = int(cap_fraction * gcount)
        if cap < size_floor:
            continue  # subcritical fluke; not a usable giant
        scan = isoperimetry_scan(
            state, gmask, cfg.torus, size_floor, cap, rng, probes=probes
        )
        rows.append(
            IsoperimetryRow(
                giant_index=i,
                giant_size=gcount,
                min_ratio=scan.min_ratio,
                argmin_size=len(scan.argmin_vertices),
                probes=probes,
            )
        )
    minima = np.array([row.min_ratio for row in rows])
    summary = {
        "d": d,
        "n": n,
        "p": p,
        "giants_scanned": len(rows),
        "probes_per_giant": probes,
        "pooled_min_ratio": float(minima.min()) if len(minima) else float("nan"),
        "pct1_of_minima": float(np.percentile(minima, 1)) if len(minima) else float("nan"),
    }
    return rows, summary
