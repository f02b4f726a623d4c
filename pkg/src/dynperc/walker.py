"""Event-driven simulation of the walk inside an environment trajectory.

The walk carries a rate-1 Poisson clock.  At each ring it picks one of the 2d
incident edges uniformly and crosses iff that edge is open at the ring
instant.  The two driving streams are kept apart: the environment trajectory
is sampled (or given) separately from the walk generator, so quenched
ensembles rerun many walks in one fixed environment.

Per ring the generator is consumed in a fixed order (waiting time, then
direction); this ordering is part of the reproducibility contract.

Giant-membership statistics never monitor time continuously: membership can
change only at an edge flip or a walker jump, so evaluating at those events
(clusters rebuilt only at flips) is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connectivity import components, giant
from .environment import EnvConfig, EnvTrajectory, flip_mask, sample_trajectory
from .torus import TorusConfig


@dataclass
class WalkPath:
    start: int
    horizon: float
    times: np.ndarray  # successful jump times, strictly increasing
    positions: np.ndarray  # vertex occupied from the matching jump time on
    attempt_times: np.ndarray | None = None  # every ring, when recorded
    attempt_edges: np.ndarray | None = None
    attempt_moved: np.ndarray | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def position_at(self, t: float) -> int:
        """Vertex occupied at time t (cadlag: a jump at t counts)."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.start if i == 0 else int(self.positions[i - 1])


def simulate_walk(
    traj: EnvTrajectory,
    x0: int,
    T: float,
    rng: np.random.Generator,
    record_attempts: bool = False,
) -> WalkPath:
    """Exact walk over [0, T]; blocked rings leave the position unchanged."""
    if T > traj.horizon:
        raise ValueError(f"T={T} exceeds trajectory horizon {traj.horizon}")
    torus = traj.cfg.torus
    nbr_e = torus.neighbor_edges
    nbr_v = torus.neighbor_vertices
    two_d = 2 * torus.d
    cursor = traj.cursor()
    x = int(x0)
    t = 0.0
    jump_times: list[float] = []
    jump_pos: list[int] = []
    att_t: list[float] = []
    att_e: list[int] = []
    att_m: list[bool] = []
    while True:
        t += rng.exponential()
        if t > T:
            break
        direction = int(rng.integers(two_d))
        edge = int(nbr_e[x, direction])
        state = cursor.state_at(t)
        moved = bool(state[edge])
        if moved:
            x = int(nbr_v[x, direction])
            jump_times.append(t)
            jump_pos.append(x)
        if record_attempts:
            att_t.append(t)
            att_e.append(edge)
            att_m.append(moved)
    return WalkPath(
        start=int(x0),
        horizon=float(T),
        times=np.array(jump_times),
        positions=np.array(jump_pos, dtype=np.int64),
        attempt_times=np.array(att_t) if record_attempts else None,
        attempt_edges=np.array(att_e, dtype=np.int64) if record_attempts else None,
        attempt_moved=np.array(att_m, dtype=bool) if record_attempts else None,
    )


# ---- giant membership along a walk ----

class _GiantTracker:
    """Giant mask of the evolving environment, rebuilt only at edge flips."""

    def __init__(self, traj: EnvTrajectory):
        self.traj = traj
        self.torus = traj.cfg.torus
        self.cursor = traj.cursor()
        self.flip_times = traj.times[flip_mask(traj)]
        self._mask: np.ndarray | None = None
        self._seen_flips = 0

    def mask_at(self, t: float) -> np.ndarray:
        """Valid for forward queries; reuses the last labeling when no flip intervened."""
        upto = int(np.searchsorted(self.flip_times, t, side="right"))
        if self._mask is None or upto > self._seen_flips:
            self._mask = giant(components(self.cursor.state_at(t), self.torus))
            self._seen_flips = upto
        return self._mask


@dataclass
class HittingRecord:
    warmup: float
    tau: float  # first time >= warmup in the giant; inf when not hit by horizon
    hit: bool
    horizon: float
    checkpoint_times: np.ndarray
    in_giant_at_checkpoints: np.ndarray

    def __post_init__(self) -> None:
        if self.hit and self.tau < self.warmup:
            raise ValueError("hit before warmup")


def hitting_time_of_giant(
    traj: EnvTrajectory,
    x0: int,
    warmup: float,
    rng: np.random.Generator,
    horizon: float | None = None,
    checkpoints: tuple[float, ...] = (),
) -> HittingRecord:
    """First time >= warmup the walker sits in the current giant.

    Membership is checked at the warmup instant and then at every edge flip
    and walker jump up to the horizon, which is exact because membership is
    constant between consecutive such events.  Not hitting is reported (tau
    infinite), not raised.
    """
    horizon = traj.horizon if horizon is None else float(horizon)
    if horizon > traj.horizon:
        raise ValueError("horizon exceeds the trajectory")
    if warmup > horizon:
        raise ValueError("warmup beyond horizon")
    path = simulate_walk(traj, x0, horizon, rng)
    tracker = _GiantTracker(traj)
    flips = tracker.flip_times
    events = np.concatenate(
        [
            [warmup],
            flips[(flips > warmup) & (flips <= horizon)],
            path.times[path.times > warmup],
        ]
    )
    events = np.unique(events)
    tau = math.inf
    for t in events:
        if tracker.mask_at(float(t))[path.position_at(float(t))]:
            tau = float(t)
            break
    check_ts = np.asarray(checkpoints, dtype=float)
    in_giant = np.array(
        [
            giant(components(traj.env_at(float(s)), traj.cfg.torus))[
                path.position_at(float(s))
            ]
            for s in check_ts
        ],
        dtype=bool,
    )
    return HittingRecord(
        warmup=float(warmup),
        tau=tau,
        hit=math.isfinite(tau),
        horizon=horizon,
        checkpoint_times=check_ts,
        in_giant_at_checkpoints=in_giant,
    )


def giant_occupation(
    traj: EnvTrajectory,
    x0: int,
    window: tuple[float, float],
    rng: np.random.Generator,
) -> float:
    """Fraction of the window the walker spends inside the current giant.

    Exact: the indicator is piecewise constant between flips and jumps, so the
    occupation time is a finite sum of segment lengths.
    """
    a, b = float(window[0]), float(window[1])
    if not 0.0 <= a < b <= traj.horizon:
        raise ValueError(f"bad window ({a}, {b}) for horizon {traj.horizon}")
    path = simulate_walk(traj, x0, b, rng)
    tracker = _GiantTracker(traj)
    flips = tracker.flip_times
    cuts = np.concatenate(
        [
            [a],
            flips[(flips > a) & (flips < b)],
            path.times[(path.times > a) & (path.times < b)],
            [b],
        ]
    )
    cuts = np.unique(cuts)
    occupied = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        if tracker.mask_at(float(left))[path.position_at(float(left))]:
            occupied += right - left
    return occupied / (b - a)


# ---- exit times ----

@dataclass
class ExitRecord:
    r: int
    tau: float  # inf when the ball is not left by the horizon
    exited: bool
    horizon: float
    n_jumps: int
    final_displacement: int


def default_exit_horizon(r: int, mu: float) -> float:
    """Budget (r^2 + 1/mu) (log r)^6, floored so small radii keep a usable window."""
    if mu <= 0:
        raise ValueError("horizon formula needs mu > 0; pass one explicitly")
    return (r**2 + 1.0 / mu) * max(1.0, math.log(r) ** 6)


def exit_time(
    cfg: EnvConfig,
    r: int,
    rng: np.random.Generator,
    horizon: float | None = None,
    chunk: float | None = None,
) -> ExitRecord:
    """First time the walk's sup-norm displacement from its start reaches r.

    Runs from the torus origin with a freshly sampled co-evolving environment;
    the torus must satisfy n >= 10r so wrap-around cannot fake an exit.  The
    trajectory grows lazily in chunks, so the (deliberately generous) horizon
    costs nothing when the exit happens early.
    """
    torus = cfg.torus
    if r < 1:
        raise ValueError("radius must be at least 1")
    if torus.n < 10 * r:
        raise ValueError(f"need n >= 10r, got n={torus.n}, r={r}")
    if horizon is None:
        horizon = default_exit_horizon(r, cfg.mu)
    if chunk is None:
        chunk = float(r**2 + (1.0 / cfg.mu if cfg.mu > 0 else 1.0))
    env_rng, walk_rng = rng.spawn(2)
    traj = sample_trajectory(cfg, min(chunk, horizon), env_rng)
    cursor = traj.cursor()
    nbr_e = torus.neighbor_edges
    nbr_v = torus.neighbor_vertices
    two_d = 2 * torus.d
    x0 = 0
    x = x0
    t = 0.0
    n_jumps = 0
    disp = 0
    tau = math.inf
    while True:
        t += walk_rng.exponential()
        if t > horizon:
            break
        while t > traj.horizon:
            traj.extend(min(traj.horizon + chunk, horizon), env_rng)
        direction = int(walk_rng.integers(two_d))
        edge = int(nbr_e[x, direction])
        if cursor.state_at(t)[edge]:
            x = int(nbr_v[x, direction])
            n_jumps += 1
            disp = torus.linf_displacement(x0, x)
            if disp >= r:
                tau = t
                break
    return ExitRecord(
        r=r,
        tau=tau,
        exited=math.isfinite(tau),
        horizon=float(horizon),
        n_jumps=n_jumps,
        final_displacement=disp,
    )
