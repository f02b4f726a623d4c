"""Evolving sets driven by the unit-time quenched kernels.

For a set S and a doubly stochastic unit kernel P, the membership profile
h(z) = sum_{w in S} P(w, z) lies in [0, 1] and the evolving set step is
S' = {z : h(z) >= U} with U uniform.  Because h takes finitely many values,
every expectation over U is a finite sum: sort the distinct positive values
v_1 < ... < v_m, then U in (v_{j-1}, v_j] yields S' = {h >= v_j} and
U > v_m yields the empty set.  All diagnostics below (psi, the Doob
transition law, conditional Z-expectations) are computed through that exact
integration, never by Monte Carlo.

The Diaconis-Fill coupled step realizes the walker/set coupling
constructively: move the walker y ~ P(x, .), then draw U uniform on
[0, h(y)).  The walker stays inside the set, the set marginal is the Doob
transform, and conditionally on the set trajectory the walker is uniform on
the current set; tests enforce all three.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .connectivity import components, edge_boundary, giant
from .environment import EnvTrajectory
from .kernel import WindowKernel, unit_kernel

GAMMA_UNIT = math.exp(-1)  # rate-1 ring: unit kernels hold at least this much mass in place


@dataclass
class EvolvingSetState:
    S: np.ndarray  # boolean membership mask
    t: int
    coupled_x: int | None = None

    def __post_init__(self) -> None:
        if self.coupled_x is not None and not self.S[self.coupled_x]:
            raise ValueError("coupled walker must sit inside the set")


def q_column(S_mask: np.ndarray, P: WindowKernel) -> np.ndarray:
    """h(z) = sum_{w in S} P(w, z), clipped into [0,1].

    The clip absorbs the kernel's Poisson truncation defect so the exact
    U-integration identities hold mechanically.
    """
    h = P.propagate(S_mask.astype(float))
    if h.shape != S_mask.shape:
        raise ValueError("kernel size does not match the mask")
    return np.clip(h, 0.0, 1.0)


def evolving_step(S_mask: np.ndarray, P: WindowKernel, U: float) -> np.ndarray:
    """One evolving set transition: S' = {h >= U}, with empty and full absorbing."""
    if not 0.0 <= U <= 1.0:
        raise ValueError("threshold outside [0,1]")
    if not S_mask.any() or S_mask.all():
        return S_mask.copy()
    return q_column(S_mask, P) >= U


def sample_evolving_step(
    S_mask: np.ndarray, P: WindowKernel, rng: np.random.Generator
) -> np.ndarray:
    return evolving_step(S_mask, P, float(rng.random()))


def _threshold_decomposition(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted distinct positive h-values, interval masses, resulting set sizes.

    vals[j] carries mass vals[j] - vals[j-1] (vals[-1] treated as 0) and maps to
    the set {h >= vals[j]}; the leftover 1 - vals[-1] maps to the empty set.
    """
    vals = np.unique(h[h > 0.0])
    masses = np.diff(vals, prepend=0.0)
    hs = np.sort(h)
    sizes = len(h) - np.searchsorted(hs, vals, side="left")
    return vals, masses, sizes


def step_distribution(
    S_mask: np.ndarray, P: WindowKernel
) -> list[tuple[float, np.ndarray]]:
    """Exact law of the next evolving set, as (probability, mask) pairs."""
    n = len(S_mask)
    if not S_mask.any() or S_mask.all():
        return [(1.0, S_mask.copy())]
    h = q_column(S_mask, P)
    vals, masses, _ = _threshold_decomposition(h)
    out = [(float(m), h >= v) for v, m in zip(vals, masses)]
    empty_mass = 1.0 - float(vals[-1])
    if empty_mass > 0.0:
        out.append((empty_mass, np.zeros(n, dtype=bool)))
    return out


def doob_distribution(
    S_mask: np.ndarray, P: WindowKernel
) -> list[tuple[float, np.ndarray]]:
    """Exact law of the next set under the Doob transform (size-biased, no empty set)."""
    size = int(S_mask.sum())
    if size == 0:
        raise ValueError("Doob chain undefined from the empty set")
    return [
        (prob * int(mask.sum()) / size, mask)
        for prob, mask in step_distribution(S_mask, P)
        if mask.any()
    ]


def doob_coupled_step(
    state: EvolvingSetState, P: WindowKernel, rng: np.random.Generator
) -> EvolvingSetState:
    """Walker-and-set coupled transition; see the module docstring for the contract."""
    x = state.coupled_x
    if x is None:
        raise ValueError("coupled step needs a walker position")
    S = state.S
    if not S[x]:
        raise ValueError("walker left the set")
    n = len(S)
    batch = np.stack([S.astype(float), np.eye(n)[:, x]], axis=1)
    out = P.propagate(batch)
    h = np.clip(out[:, 0], 0.0, 1.0)
    row = out[:, 1]
    row = row / row.sum()
    y = int(rng.choice(n, p=row))
    if S.all():
        S_new = S.copy()  # full set stays absorbing regardless of float wobble
    else:
        U = float(rng.random()) * h[y]
        S_new = h >= U
    return EvolvingSetState(S=S_new, t=state.t + 1, coupled_x=y)


# ---- diagnostics ----

def phi_exact(S_mask: np.ndarray, P: WindowKernel) -> float:
    """Boundary flow ratio Q(S, S^c)/pi(S); uniform pi cancels to a count ratio."""
    size = int(S_mask.sum())
    if size == 0:
        raise ValueError("phi undefined on the empty set")
    h = q_column(S_mask, P)
    return float(h[~S_mask].sum()) / size


def psi_exact(S_mask: np.ndarray, P: WindowKernel) -> float:
    """Root-growth gauge 1 - E sqrt(|S'|/|S|), by exact U-integration."""
    size = int(S_mask.sum())
    if size == 0:
        raise ValueError("psi undefined on the empty set")
    if S_mask.all():
        return 0.0
    h = q_column(S_mask, P)
    _, masses, sizes = _threshold_decomposition(h)
    return 1.0 - float((masses * np.sqrt(sizes / size)).sum())


def gauge_constant(gamma: float) -> float:
    return gamma**2 / (2.0 * (1.0 - gamma) ** 2)


def _check_laziness(P: WindowKernel, gamma: float) -> None:
    if not 0.0 < gamma <= 0.5:
        raise ValueError("gamma must lie in (0, 1/2]")
    if float(np.diag(P.matrix()).min()) < gamma - 1e-12:
        raise ValueError("kernel is not gamma-lazy")


def check_morris_peres(S_mask: np.ndarray, P: WindowKernel, gamma: float) -> bool:
    """psi >= gamma^2/(2(1-gamma)^2) * phi^2 for gamma-lazy kernels."""
    _check_laziness(P, gamma)
    return psi_exact(S_mask, P) >= gauge_constant(gamma) * phi_exact(S_mask, P) ** 2 - 1e-12


def z_value(S_mask: np.ndarray) -> float:
    """Z(S) = sqrt(pi(S#))/pi(S), S# the smaller of S and its complement."""
    n = len(S_mask)
    size = int(S_mask.sum())
    if size == 0:
        raise ValueError("Z undefined on the empty set")
    pi = size / n
    sharp = min(pi, 1.0 - pi)
    return math.sqrt(sharp) / pi


@dataclass
class ConductanceProfile:
    """phi(r) = min conductance over nonempty sets with pi <= min(r, 1/2).

    best_by_size[s] is the minimum of phi over sets of exactly s vertices;
    evaluation takes the running minimum up to the admissible size.
    """

    n_vertices: int
    best_by_size: np.ndarray  # index s in 1..n_vertices; [0] unused

    def __call__(self, r: float) -> float:
        cap = int(math.floor(min(r, 0.5) * self.n_vertices))
        if cap < 1:
            return math.inf
        return float(self.best_by_size[1 : cap + 1].min())


def exhaustive_conductance_profile(P: WindowKernel, limit: int = 16) -> ConductanceProfile:
    """Exact profile by dynamic programming over all subsets.

    h-additivity drives the sweep: h for mask m equals h for m minus its lowest
    bit plus that vertex's kernel row, so each of the 2^n masks costs O(n).
    """
    mat = P.matrix()
    n = mat.shape[0]
    if n > limit:
        raise ValueError(f"state space of {n} vertices too large for exhaustive profile")
    H = np.zeros((1 << n, n))
    best = np.full(n + 1, math.inf)
    member = np.zeros(n, dtype=bool)
    for m in range(1, 1 << n):
        low = m & -m
        v = low.bit_length() - 1
        H[m] = H[m ^ low] + mat[v]
        size = m.bit_count()
        member[:] = False
        for b in range(n):
            if m >> b & 1:
                member[b] = True
        phi = float(H[m][~member].sum()) / size
        if phi < best[size]:
            best[size] = phi
    return ConductanceProfile(n_vertices=n, best_by_size=best)


def z_drift_sides(
    S_mask: np.ndarray,
    P: WindowKernel,
    gamma: float = GAMMA_UNIT,
    profile: ConductanceProfile | None = None,
) -> tuple[float, float]:
    """(E[Z' | S] under Doob, drift bound Z(1 - c_gamma phi(1/Z^2)^2)).

    profile=None uses the pointwise variant phi(S) in place of the profile
    value, the substitution the supermartingale argument actually makes.
    """
    if S_mask.all():
        return 0.0, 0.0  # full set is absorbing and Z(full) = 0
    lhs = float(
        sum(prob * z_value(mask) for prob, mask in doob_distribution(S_mask, P))
    )
    z = z_value(S_mask)
    phi_r = phi_exact(S_mask, P) if profile is None else profile(1.0 / z**2)
    rhs = z * (1.0 - gauge_constant(gamma) * phi_r**2)
    return lhs, rhs


def z_drift_check(
    S_mask: np.ndarray,
    P: WindowKernel,
    gamma: float = GAMMA_UNIT,
    profile: ConductanceProfile | None = None,
) -> bool:
    _check_laziness(P, gamma)
    lhs, rhs = z_drift_sides(S_mask, P, gamma, profile)
    return lhs <= rhs + 1e-12


@dataclass
class AnalyticProfile:
    """Reference drift profile c (log n)^(-beta) n^(-1) r^(-1/d), capped at r = 1/2."""

    c: float
    n: int
    d: int
    alpha_exp: float = field(init=False)
    beta_exp: float = field(init=False)

    def __post_init__(self) -> None:
        d = self.d
        self.alpha_exp = 4 * d + 12 + (d / (d - 1) if d > 1 else math.inf)
        self.beta_exp = 4 * d + 9 - 12 / d

    def __call__(self, r: float) -> float:
        if r <= 0:
            raise ValueError("profile needs r > 0")
        r_eff = min(r, 0.5)
        return self.c * math.log(self.n) ** (-self.beta_exp) / (self.n * r_eff ** (1.0 / self.d))


# ---- good and excellent times ----

def literal_good_threshold(n: int, d: int) -> float:
    return math.log(n) ** (-(4 * d + 12))


def classify_good(S_mask: np.ndarray, giant_mask: np.ndarray, threshold: float) -> bool:
    """|S and giant| >= threshold |S|; the empty set is never good."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    size = int(S_mask.sum())
    if size == 0:
        return False
    return int((S_mask & giant_mask).sum()) >= threshold * size


def boundary_integral(
    S_mask: np.ndarray, traj: EnvTrajectory, a: float, b: float
) -> float:
    """integral over [a,b] of the open-edge boundary count of S (piecewise exact)."""
    torus = traj.cfg.torus
    return sum(
        dur * edge_boundary(S_mask, torus, open_mask=state)
        for dur, state in traj.segments(a, b)
    )


def classify_excellent(S_mask: np.ndarray, traj: EnvTrajectory, t: float) -> bool:
    """Boundary mass over [t, t+1] at least half the boundary count at t.

    An empty boundary at t is excellent (0 >= 0 holds literally).
    """
    if t + 1.0 > traj.horizon:
        raise ValueError("window [t, t+1] exceeds the trajectory horizon")
    at_t = edge_boundary(S_mask, traj.cfg.torus, open_mask=traj.env_at(t))
    return boundary_integral(S_mask, traj, t, t + 1.0) >= at_t / 2.0


# ---- coverage runs ----

@dataclass
class CoverageRecord:
    t: int
    set_size: int
    giant_size: int
    overlap: int
    z: float
    phi: float
    psi: float
    good: bool
    excellent: bool


@dataclass
class CoverageRun:
    tau: float  # first integer time reaching (1-delta) giant coverage; inf if capped
    reached: bool
    delta: float
    t_cap: int
    records: list[CoverageRecord]


def tau_delta_run(
    traj: EnvTrajectory,
    x0: int,
    delta: float,
    t_cap: int,
    rng: np.random.Generator,
    good_threshold: float | None = None,
) -> CoverageRun:
    """Coupled evolving set from {x0} until it covers (1-delta) of the giant.

    Records per integer time the set and giant sizes, their overlap, Z, the
    conductance diagnostics against the upcoming unit kernel, and the good and
    excellent flags.  The giant is recomputed from the environment at each
    integer time with the deterministic tie break, so reruns with the same
    trajectory see the same coverage targets.  Stops at the first time the
    coverage threshold holds, or records t_cap as unreached.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta outside (0,1)")
    cfg = traj.cfg
    if traj.horizon < t_cap + 1.0:
        raise ValueError("horizon must reach t_cap + 1 for the excellence integrals")
    n = cfg.torus.n_vertices
    threshold = (
        good_threshold
        if good_threshold is not None
        else literal_good_threshold(cfg.torus.n, cfg.torus.d)
    )
    S = np.zeros(n, dtype=bool)
    S[x0] = True
    state = EvolvingSetState(S=S, t=0, coupled_x=x0)
    records: list[CoverageRecord] = []
    for t in range(t_cap + 1):
        env_now = traj.env_at(float(t))
        giant_mask = giant(components(env_now, cfg.torus))
        gsize = int(giant_mask.sum())
        overlap = int((state.S & giant_mask).sum())
        P = unit_kernel(traj, float(t))
        records.append(
            CoverageRecord(
                t=t,
                set_size=int(state.S.sum()),
                giant_size=gsize,
                overlap=overlap,
                z=z_value(state.S),
                phi=phi_exact(state.S, P),
                psi=psi_exact(state.S, P),
                good=classify_good(state.S, giant_mask, threshold),
                excellent=classify_excellent(state.S, traj, float(t)),
            )
        )
        if overlap >= (1.0 - delta) * gsize:
            return CoverageRun(
                tau=float(t), reached=True, delta=delta, t_cap=t_cap, records=records
            )
        if t == t_cap:
            break
        state = doob_coupled_step(state, P, rng)
    return CoverageRun(
        tau=math.inf, reached=False, delta=delta, t_cap=t_cap, records=records
    )
