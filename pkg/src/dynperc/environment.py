"""Dynamical percolation environment on the torus.

Each edge carries an independent Poisson clock of rate mu; at a ring the edge
is rewritten to open with probability p, closed otherwise, independently of
everything else.  Trajectories are sampled by superposition: the total event
count on (0, T] is Poisson(mu * n_edges * T), event times are iid uniform,
event edges iid uniform, event bits iid Bernoulli(p).

The environment path is cadlag: the state at time t includes every event with
time <= t.  Events are stored sorted by time, ties kept in generation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .torus import TorusConfig

STATE_DTYPE = np.bool_


@dataclass(frozen=True)
class EnvConfig:
    torus: TorusConfig
    p: float
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"edge density p={self.p} outside [0, 1]")
        if self.mu < 0.0:
            # mu = 0 gives a frozen environment, used for static checks
            raise ValueError(f"refresh rate mu={self.mu} must be >= 0")


class RefreshEvent(NamedTuple):
    time: float
    edge: int
    bit: bool


def sample_stationary(cfg: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    """One draw of the product-Bernoulli(p) edge configuration."""
    return rng.random(cfg.torus.n_edges) < cfg.p


@dataclass
class EnvTrajectory:
    """An initial configuration plus a time-sorted refresh event list on (0, horizon]."""

    cfg: EnvConfig
    initial: np.ndarray
    times: np.ndarray
    edges: np.ndarray
    bits: np.ndarray
    horizon: float
    seed: int | None = None
    checkpoint_every: int | None = None
    _checkpoints: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.initial.shape != (self.cfg.torus.n_edges,):
            raise ValueError("initial state has wrong shape")
        if not (len(self.times) == len(self.edges) == len(self.bits)):
            raise ValueError("event arrays must have equal length")
        if len(self.times) and np.any(np.diff(self.times) < 0):
            raise ValueError("event times must be sorted")
        if self.checkpoint_every is None:
            self.checkpoint_every = max(1, self.cfg.torus.n_edges)

    @property
    def n_events(self) -> int:
        return len(self.times)

    def event(self, i: int) -> RefreshEvent:
        return RefreshEvent(float(self.times[i]), int(self.edges[i]), bool(self.bits[i]))

    def iter_events(self) -> Iterator[RefreshEvent]:
        for i in range(self.n_events):
            yield self.event(i)

    # ---- state queries ----

    def _nearest_checkpoint(self, j: int) -> tuple[int, np.ndarray]:
        step = self.checkpoint_every
        k = (j // step) * step
        while k > 0 and k not in self._checkpoints:
            k -= step
        if k == 0:
            return 0, self.initial
        return k, self._checkpoints[k]

    def _state_after(self, j: int) -> np.ndarray:
        """State after applying the first j events (cadlag replay)."""
        k, base = self._nearest_checkpoint(j)
        state = base.copy()
        step = self.checkpoint_every
        # materialize intermediate checkpoints on the way, so later queries are cheap
        nxt = k + step
        while nxt <= j:
            state[self.edges[k:nxt]] = self.bits[k:nxt]
            self._checkpoints[nxt] = state.copy()
            k = nxt
            nxt += step
        state[self.edges[k:j]] = self.bits[k:j]
        return state

    def env_at(self, t: float) -> np.ndarray:
        """Edge configuration at time t; events at exactly t are included."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        j = int(np.searchsorted(self.times, t, side="right"))
        return self._state_after(j)

    def segments(self, a: float, b: float) -> list[tuple[float, np.ndarray]]:
        """Maximal constant pieces of the environment on [a, b].

        Returns (duration, state) pairs, earliest first, durations summing to
        b - a.  Refresh events that rewrite an edge to its current value do not
        end a piece.  Events at exactly a are part of the state at a; an event
        at exactly b changes nothing on [a, b) and is dropped.
        """
        if not 0.0 <= a <= b <= self.horizon:
            raise ValueError(f"window [{a}, {b}] outside [0, {self.horizon}]")
        state = self.env_at(a)
        if a == b:
            return [(0.0, state)]
        lo = int(np.searchsorted(self.times, a, side="right"))
        hi = int(np.searchsorted(self.times, b, side="left"))
        pieces: list[tuple[float, np.ndarray]] = []
        start = a
        for i in range(lo, hi):
            e = int(self.edges[i])
            bit = bool(self.bits[i])
            if state[e] != bit:
                t = float(self.times[i])
                if t > start:
                    pieces.append((t - start, state.copy()))
                    start = t
                state[e] = bit
        pieces.append((b - start, state))
        return pieces

    def cursor(self) -> "TrajectoryCursor":
        return TrajectoryCursor(self)

    # ---- lazy extension ----

    def extend(self, new_horizon: float, rng: np.random.Generator) -> None:
        """Append fresh events on (horizon, new_horizon]; existing events are untouched."""
        if new_horizon < self.horizon:
            raise ValueError("new horizon must not shrink the trajectory")
        if new_horizon == self.horizon:
            return
        t0, t1 = self.horizon, new_horizon
        times, edges, bits = _sample_events(self.cfg, t0, t1, rng)
        self.times = np.concatenate([self.times, times])
        self.edges = np.concatenate([self.edges, edges])
        self.bits = np.concatenate([self.bits, bits])
        self.horizon = float(new_horizon)


class TrajectoryCursor:
    """Forward-only cadlag state reader; cheap for monotone time queries."""

    def __init__(self, traj: EnvTrajectory):
        self.traj = traj
        self.state = traj.initial.copy()
        self._i = 0
        self._t = 0.0

    def state_at(self, t: float) -> np.ndarray:
        if t < self._t:
            raise ValueError("cursor cannot move backwards")
        if t > self.traj.horizon:
            raise ValueError(f"time {t} beyond horizon {self.traj.horizon}")
        times = self.traj.times
        j = int(np.searchsorted(times, t, side="right"))
        if j > self._i:
            self.state[self.traj.edges[self._i:j]] = self.traj.bits[self._i:j]
            self._i = j
        self._t = t
        return self.state


def _sample_events(
    cfg: EnvConfig, t0: float, t1: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Superposition sample of refresh events on (t0, t1].

    RNG call order is fixed (count, times, edges, bits) and is part of the
    reproducibility contract.
    """
    n_edges = cfg.torus.n_edges
    count = int(rng.poisson(cfg.mu * n_edges * (t1 - t0)))
    # 1 - U puts times in (t0, t1]
    times = t0 + (t1 - t0) * (1.0 - rng.random(count))
    edges = rng.integers(0, n_edges, count)
    bits = rng.random(count) < cfg.p
    order = np.argsort(times, kind="stable")  # ties keep generation order
    return times[order], edges[order], bits[order]


def sample_trajectory(
    cfg: EnvConfig,
    horizon: float,
    rng: np.random.Generator,
    initial: np.ndarray | None = None,
) -> EnvTrajectory:
    """Sample a trajectory; the initial configuration defaults to a stationary draw."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if initial is None:
        initial = sample_stationary(cfg, rng)
    else:
        initial = np.asarray(initial, dtype=STATE_DTYPE).copy()
    times, edges, bits = _sample_events(cfg, 0.0, horizon, rng)
    return EnvTrajectory(
        cfg=cfg, initial=initial, times=times, edges=edges, bits=bits, horizon=float(horizon)
    )


def sample_run(cfg: EnvConfig, horizon: float, seed: int) -> EnvTrajectory:
    """Canonical seeded draw: one generator feeds the initial state, then the events."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    traj = sample_trajectory(cfg, horizon, rng)
    traj.seed = seed
    return traj


def flip_mask(traj: EnvTrajectory) -> np.ndarray:
    """Boolean per event: does it change the edge's bit?

    Non-flipping refreshes cannot alter connectivity, so cluster-tracking code
    only rebuilds at events flagged here.  Vectorized by grouping events per
    edge (stable lexsort keeps each edge's events in time order) and comparing
    each bit to its predecessor on that edge.
    """
    m = traj.n_events
    if m == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort((np.arange(m), traj.edges))
    e_sorted = traj.edges[order]
    b_sorted = traj.bits[order]
    first = np.empty(m, dtype=bool)
    first[0] = True
    first[1:] = e_sorted[1:] != e_sorted[:-1]
    prev = np.empty(m, dtype=bool)
    prev[first] = traj.initial[e_sorted[first]]
    prev[~first] = b_sorted[:-1][~first[1:]]
    flips_sorted = b_sorted != prev
    out = np.empty(m, dtype=bool)
    out[order] = flips_sorted
    return out


# ---- text dump / load ----

_FORMAT_TAG = "dynperc-trajectory"
_FORMAT_VERSION = 1


def dump_trajectory(traj: EnvTrajectory, path: str) -> None:
    """Line-based text dump: tag, header (d n p mu T seed), initial state, events.

    Floats are written with repr so float64 values round-trip bit-exactly.
    """
    cfg = traj.cfg
    with open(path, "w") as fh:
        fh.write(f"{_FORMAT_TAG} {_FORMAT_VERSION}\n")
        seed_txt = "-" if traj.seed is None else str(traj.seed)
        fh.write(
            f"d={cfg.torus.d} n={cfg.torus.n} p={float(cfg.p)!r} mu={float(cfg.mu)!r} "
            f"T={float(traj.horizon)!r} seed={seed_txt}\n"
        )
        fh.write("initial=" + np.packbits(traj.initial).tobytes().hex() + "\n")
        for i in range(traj.n_events):
            fh.write(f"{float(traj.times[i])!r} {int(traj.edges[i])} {1 if traj.bits[i] else 0}\n")


def load_trajectory(path: str) -> EnvTrajectory:
    with open(path) as fh:
        tag = fh.readline().split()
        if len(tag) != 2 or tag[0] != _FORMAT_TAG:
            raise ValueError(f"not a trajectory dump: {path}")
        if int(tag[1]) > _FORMAT_VERSION:
            raise ValueError(f"dump version {tag[1]} is newer than supported {_FORMAT_VERSION}")
        header = dict(kv.split("=", 1) for kv in fh.readline().split())
        torus = TorusConfig(d=int(header["d"]), n=int(header["n"]))
        cfg = EnvConfig(torus=torus, p=float(header["p"]), mu=float(header["mu"]))
        init_line = fh.readline().strip()
        if not init_line.startswith("initial="):
            raise ValueError("missing initial state line")
        raw = bytes.fromhex(init_line[len("initial="):])
        initial = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: torus.n_edges].astype(
            STATE_DTYPE
        )
        times, edges, bits = [], [], []
        for line in fh:
            if not line.strip():
                continue
            t_txt, e_txt, b_txt = line.split()
            times.append(float(t_txt))
            edges.append(int(e_txt))
            bits.append(b_txt == "1")
        seed = None if header["seed"] == "-" else int(header["seed"])
        return EnvTrajectory(
            cfg=cfg,
            initial=initial,
            times=np.asarray(times, dtype=np.float64),
            edges=np.asarray(edges, dtype=np.int64),
            bits=np.asarray(bits, dtype=np.bool_),
            horizon=float(header["T"]),
            seed=seed,
        )
