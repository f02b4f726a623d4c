"""Quenched heat kernels of the walk given an environment trajectory.

A walk rings at rate 1; at a ring it picks one of the 2d incident edges
uniformly and crosses iff that edge is currently open.  Over a window where
the environment is constant the transition kernel is exp(duration * L) with
L the open-edge Laplacian scaled by 1/(2d).  We never materialize exp(.)
for large systems: each constant piece is kept as a sparse adjacency plus
Poisson uniformization weights, and kernels act on distributions stored as
columns.  All segment kernels are symmetric, so for a window with pieces
S_1..S_m (earliest first, row convention P = S_1 ... S_m) the transpose
P^T x is computed by applying S_1 first.  Distributions-as-columns therefore
evolve in plain time order with no reversal.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .environment import EnvTrajectory
from .torus import TorusConfig

DEFAULT_TAIL = 1e-12
DENSE_LIMIT = 4096  # refuse to materialize kernels above this many vertices


def poisson_weights(delta: float, tail: float = DEFAULT_TAIL) -> np.ndarray:
    """Poisson(delta) pmf truncated where the remaining tail drops below `tail`.

    Computed in log space so large delta cannot underflow the running product.
    """
    if delta < 0:
        raise ValueError("negative duration")
    if delta == 0.0:
        return np.ones(1)
    logs = [-delta]
    total = math.exp(-delta)
    k = 0
    while 1.0 - total > tail:
        k += 1
        logs.append(-delta + k * math.log(delta) - math.lgamma(k + 1))
        total += math.exp(logs[-1])
    return np.exp(np.array(logs))


@dataclass
class SegmentKernel:
    """exp(duration * L) for one constant environment piece, applied lazily."""

    duration: float
    n_vertices: int
    two_d: int
    deg: np.ndarray | None  # open degree per vertex; None when no open edges
    adj: sparse.csr_matrix | None  # open adjacency; None when no open edges
    weights: np.ndarray

    @classmethod
    def from_state(
        cls,
        state: np.ndarray,
        torus: TorusConfig,
        duration: float,
        tail: float = DEFAULT_TAIL,
    ) -> "SegmentKernel":
        u_ep, w_ep = torus.edge_endpoints
        idx = np.nonzero(state)[0]
        nv = torus.n_vertices
        if len(idx) == 0 or duration == 0.0:
            return cls(duration, nv, 2 * torus.d, None, None, np.ones(1))
        u = u_ep[idx]
        w = w_ep[idx]
        rows = np.concatenate([u, w])
        cols = np.concatenate([w, u])
        adj = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(nv, nv)
        )
        deg = np.bincount(rows, minlength=nv).astype(float)
        return cls(duration, nv, 2 * torus.d, deg, adj, poisson_weights(duration, tail))

    @property
    def truncation_tail(self) -> float:
        return max(0.0, 1.0 - float(self.weights.sum()))

    def _lazy_step(self, cols: np.ndarray) -> np.ndarray:
        # M = I + L with L = (A - diag(deg)) / (2d); M is substochastic-free:
        # every entry nonnegative, rows sum to 1
        assert self.adj is not None and self.deg is not None
        deg = self.deg if cols.ndim == 1 else self.deg[:, None]
        return cols + (self.adj @ cols - deg * cols) / self.two_d

    def propagate(self, cols: np.ndarray) -> np.ndarray:
        """Apply the (symmetric) kernel to one or more distribution columns."""
        if self.adj is None:
            return cols.copy()
        acc = self.weights[0] * cols
        term = cols
        for wk in self.weights[1:]:
            term = self._lazy_step(term)
            acc += wk * term
        return acc

    def matrix(self) -> np.ndarray:
        if self.n_vertices > DENSE_LIMIT:
            raise ValueError(f"refusing dense kernel on {self.n_vertices} vertices")
        return np.ascontiguousarray(self.propagate(np.eye(self.n_vertices)).T)


@dataclass
class WindowKernel:
    """Product kernel over a time window, one SegmentKernel per constant piece."""

    segments: list[SegmentKernel]
    start: float
    end: float

    @classmethod
    def from_trajectory(
        cls, traj: EnvTrajectory, a: float, b: float, tail: float = DEFAULT_TAIL
    ) -> "WindowKernel":
        torus = traj.cfg.torus
        segs = [
            SegmentKernel.from_state(state, torus, dur, tail)
            for dur, state in traj.segments(a, b)
            if dur > 0.0
        ]
        return cls(segments=segs, start=a, end=b)

    @property
    def error_bound(self) -> float:
        """L1 operator-norm bound on the truncation defect of the product."""
        return float(sum(s.truncation_tail for s in self.segments))

    def propagate(self, cols: np.ndarray) -> np.ndarray:
        """cols <- P^T cols: distributions stored as columns, earliest piece first."""
        for seg in self.segments:
            cols = seg.propagate(cols)
        return cols

    def matrix(self) -> np.ndarray:
        if not self.segments:
            raise ValueError("window kernel with no pieces has unknown size")
        nv = self.segments[0].n_vertices
        if nv > DENSE_LIMIT:
            raise ValueError(f"refusing dense kernel on {nv} vertices")
        return np.ascontiguousarray(self.propagate(np.eye(nv)).T)


def unit_kernel(
    traj: EnvTrajectory, t: float, tail: float = DEFAULT_TAIL
) -> WindowKernel:
    """Kernel of the walk over [t, t+1] in the given environment trajectory."""
    return WindowKernel.from_trajectory(traj, t, t + 1.0, tail)


def trajectory_digest(traj: EnvTrajectory) -> str:
    """Content hash identifying an environment trajectory (for disk caching)."""
    h = hashlib.sha256()
    cfg = traj.cfg
    h.update(f"{cfg.torus.d}|{cfg.torus.n}|{cfg.p!r}|{cfg.mu!r}|".encode())
    h.update(np.packbits(traj.initial).tobytes())
    h.update(traj.times.tobytes())
    h.update(traj.edges.tobytes())
    h.update(np.packbits(traj.bits.astype(np.uint8)).tobytes())
    return h.hexdigest()


class DiskKernelCache:
    """Dense unit kernels memoized on disk, keyed by trajectory digest and time.

    Only worthwhile for small systems that are revisited across runs (the dense
    limit applies); misses fall through to the lazy computation.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str, t: float) -> Path:
        return self.root / f"{digest[:24]}_t{t:.6f}.npy"

    def unit_matrix(self, traj: EnvTrajectory, t: float) -> np.ndarray:
        path = self._path(trajectory_digest(traj), t)
        if path.exists():
            return np.load(path)
        mat = unit_kernel(traj, t).matrix()
        tmp = path.with_suffix(".tmp.npy")
        np.save(tmp, mat)
        tmp.replace(path)
        return mat


# ---- distribution evolution and mixing ----

def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def tv_from_uniform_columns(cols: np.ndarray) -> np.ndarray:
    """Total variation from uniform for each distribution column."""
    nv = cols.shape[0]
    return 0.5 * np.abs(cols - 1.0 / nv).sum(axis=0)


def evolve_unit_steps(
    traj: EnvTrajectory,
    dist: np.ndarray,
    t0: float,
    n_steps: int,
    renormalize: bool = True,
    tail: float = DEFAULT_TAIL,
) -> np.ndarray:
    """Push a distribution through n_steps consecutive unit kernels from time t0.

    renormalize=True rescales to total mass 1 after each step, absorbing the
    (bounded, ~1e-12 per piece) Poisson truncation defect; downstream code can
    then treat the result as an exact probability vector.
    """
    out = np.asarray(dist, dtype=float).copy()
    for k in range(n_steps):
        out = unit_kernel(traj, t0 + k, tail).propagate(out)
        if renormalize:
            out /= out.sum()
    return out


@dataclass
class MixingResult:
    mixing_time: float  # first integer time with worst-start tv <= eps (inf if never)
    eps: float
    per_start: np.ndarray  # (n_vertices,) first crossing time per start, inf if none
    tv_max_curve: np.ndarray  # (t_max,) worst-start tv after each unit step
    tv_curves: np.ndarray | None = None  # (t_max, n_vertices) when requested


def quenched_mixing_time(
    traj: EnvTrajectory,
    eps: float,
    t_max: int,
    rng: np.random.Generator | None = None,
    keep_curves: bool = False,
    tail: float = DEFAULT_TAIL,
) -> MixingResult:
    """Exact worst-start mixing time of the walk in one environment trajectory.

    Evolves all n^d point masses jointly (columns of an identity matrix) one
    unit kernel at a time; tv to uniform is non-increasing under every doubly
    stochastic step, so the first crossing per start is the mixing time from
    that start.  Stops early once every start has crossed; the trajectory is
    extended in place (requires rng) in chunks, so a generous t_max cap costs
    nothing when mixing happens long before it.
    """
    nv = traj.cfg.torus.n_vertices
    if nv > DENSE_LIMIT:
        raise ValueError(f"refusing all-starts evolution on {nv} vertices")
    if traj.horizon < t_max and rng is None:
        raise ValueError("trajectory horizon too short and no rng to extend it")
    mu = traj.cfg.mu
    chunk = max(16.0, traj.cfg.torus.n ** 2 + (1.0 / mu if mu > 0 else 0.0))
    cols = np.eye(nv)
    per_start = np.full(nv, np.inf)
    if 1.0 - 1.0 / nv <= eps:  # point masses already qualify; t_mix(eps) = 0
        per_start[:] = 0.0
    tv_max: list[float] = []
    curves: list[np.ndarray] = [] if keep_curves else None
    for t in range(1, t_max + 1):
        if not np.isinf(per_start).any():
            break
        if t > traj.horizon:
            traj.extend(min(float(t_max), traj.horizon + chunk), rng)
        cols = unit_kernel(traj, float(t - 1), tail).propagate(cols)
        cols /= cols.sum(axis=0, keepdims=True)
        tv = tv_from_uniform_columns(cols)
        tv_max.append(float(tv.max()))
        if curves is not None:
            curves.append(tv)
        newly = (tv <= eps) & np.isinf(per_start)
        per_start[newly] = t
        if not np.isinf(per_start).any():
            break
    mixing = float(per_start.max())
    return MixingResult(
        mixing_time=mixing,
        eps=eps,
        per_start=per_start,
        tv_max_curve=np.asarray(tv_max),
        tv_curves=np.asarray(curves) if curves is not None else None,
    )
