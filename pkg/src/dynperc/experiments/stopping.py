"""Randomized stopping rule: stop the walk at a provably near-uniform time.

Construction, per round, starting the walk at x with the environment known:
run the coupled evolving-set pilot until the set covers a (1 - delta/k)
fraction of the giant (capped by a per-round budget), giving the round time
sigma.  The exact law nu of the walk at sigma is evolved alongside; the
good-point set is A = {x : nu(x) >= 1/(2 k n^d)}, and the walk stops at its
realized position y in A with probability beta/nu(y), beta <= min_A nu.
Conditional on stopping, the law is exactly uniform on A for any such beta,
which is the whole point: near-uniformity is engineered, not estimated.
After c*k failed rounds the walk stops where it is (forced), with the
conditioned non-stop law as its certificate.

Desk adaptations, all recorded in the outputs: each round re-derives nu from
the realized start of that round (the strong Markov restart); only the round
actually selected is simulated rather than k parallel pilots; the round
count c solves 10 d' + exp(-c (1 - 3 d') / 2) <= eps, the /2 accounting for
the per-round success probability; beta admits a stop_scale knob that leaves
uniformity on A exact while trading round count against stop mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dynperc.connectivity import components, coverage_union_count, giant, giant_density_estimate
from dynperc.environment import EnvConfig, EnvTrajectory, sample_trajectory
from dynperc.evolving import EvolvingSetState, doob_coupled_step
from dynperc.experiments.config import ExperimentConfig
from dynperc.kernel import tv_distance, unit_kernel
from dynperc.torus import TorusConfig


def solve_round_count(eps: float, delta_prime: float) -> int:
    """Smallest integer c with 10 d' + exp(-c (1 - 3 d') / 2) <= eps."""
    if not 0 < delta_prime < 1 / 3:
        raise ValueError("delta' must lie in (0, 1/3)")
    gap = eps - 10.0 * delta_prime
    if gap <= 0:
        raise ValueError(
            f"10*delta'={10 * delta_prime} >= eps={eps}: no round count can help; "
            "shrink delta or relax eps"
        )
    c = math.ceil(2.0 * math.log(1.0 / gap) / (1.0 - 3.0 * delta_prime))
    return max(1, c)


@dataclass
class RoundInfo:
    index: int
    start: int
    sigma: int
    reached_threshold: bool
    a_size: int
    beta: float
    stop_mass: float  # beta * |A|, the round's probability of stopping
    stopped: bool


@dataclass
class StoppingRecord:
    T: float
    x_T: int
    stopped_round: int | None  # None means the forced stop fired
    forced: bool
    k: int
    c: int
    delta: float
    delta_tilde: float
    eps: float
    theta_hat: float
    round_budget: float
    total_budget: float
    achieved_tv: float
    any_round_capped: bool
    rounds: list[RoundInfo] = field(default_factory=list)
    conditional_law: np.ndarray | None = None


def _ensure_horizon(traj: EnvTrajectory, t_needed: float, env_rng, chunk: float) -> None:
    while traj.horizon < t_needed:
        if env_rng is None:
            raise ValueError("trajectory horizon too short and no env rng to extend it")
        traj.extend(max(t_needed, traj.horizon + chunk), env_rng)


def stopping_rule(
    traj: EnvTrajectory,
    x0: int,
    eps: float,
    delta: float,
    theta_hat: float,
    rng: np.random.Generator,
    round_budget: float | None = None,
    stop_scale: float = 1.0,
    env_rng: np.random.Generator | None = None,
    max_total_rounds: int = 5000,
) -> StoppingRecord:
    cfg = traj.cfg
    torus = cfg.torus
    nv = torus.n_vertices
    if not 0.0 < theta_hat <= 1.0:
        raise ValueError("theta_hat outside (0, 1]")
    k = coverage_union_count(delta, theta_hat)
    delta_tilde = delta / k
    c = solve_round_count(eps, delta)
    cap_rounds = c * k
    if cap_rounds > max_total_rounds:
        raise ValueError(
            f"c*k = {c}*{k} = {cap_rounds} rounds exceeds {max_total_rounds}: "
            "desk-infeasible; override delta upward (the record keeps the override)"
        )
    if round_budget is None:
        round_budget = 20.0 * (torus.n ** 2 + (1.0 / cfg.mu if cfg.mu > 0 else 0.0))
    budget_steps = int(math.ceil(round_budget))
    if not 0 < stop_scale < 2 * k:
        raise ValueError("stop_scale must sit in (0, 2k) to keep stop masses below 1")
    chunk = max(16.0, torus.n ** 2 + (1.0 / cfg.mu if cfg.mu > 0 else 0.0))
    floor = 1.0 / (2.0 * k * nv)

    x = int(x0)
    s = 0
    rounds: list[RoundInfo] = []
    any_capped = False
    nu = None
    beta = stop_mass = 0.0
    A = None
    for i in range(1, cap_rounds + 1):
        S = np.zeros(nv, dtype=bool)
        S[x] = True
        state = EvolvingSetState(S=S, t=s, coupled_x=x)
        nu = np.zeros(nv)
        nu[x] = 1.0
        sigma = s
        reached = False
        for step in range(budget_steps + 1):
            t = s + step
            _ensure_horizon(traj, t + 1.0, env_rng, chunk)
            gmask = giant(components(traj.env_at(float(t)), torus))
            gsize = int(gmask.sum())
            if int((state.S & gmask).sum()) >= (1.0 - delta_tilde) * gsize:
                sigma, reached = t, True
                break
            if step == budget_steps:
                sigma, reached = t, False
                break
            P = unit_kernel(traj, float(t))
            state = doob_coupled_step(state, P, rng)
            nu = np.clip(P.propagate(nu[:, None])[:, 0], 0.0, None)
            nu /= nu.sum()
        any_capped |= not reached
        y = int(state.coupled_x)
        A = nu >= floor
        beta = min(stop_scale * floor, float(nu[A].min()))
        stop_mass = beta * int(A.sum())
        stopped = bool(A[y]) and rng.random() < beta / nu[y]
        rounds.append(
            RoundInfo(
                index=i, start=s, sigma=sigma, reached_threshold=reached,
                a_size=int(A.sum()), beta=beta, stop_mass=stop_mass, stopped=stopped,
            )
        )
        if stopped:
            law = np.where(A, 1.0 / A.sum(), 0.0)
            return _finish(
                rounds, T=float(sigma), x_T=y, stopped_round=i, forced=False,
                law=law, k=k, c=c, delta=delta, delta_tilde=delta_tilde, eps=eps,
                theta_hat=theta_hat, round_budget=round_budget,
                any_capped=any_capped, nv=nv,
            )
        x, s = y, sigma
    # forced stop: the walk halts where the last round left it; its certificate
    # is the last nu conditioned on the stop coin having come up tails
    law = (nu - beta * A) / (1.0 - stop_mass)
    return _finish(
        rounds, T=float(s), x_T=x, stopped_round=None, forced=True,
        law=law, k=k, c=c, delta=delta, delta_tilde=delta_tilde, eps=eps,
        theta_hat=theta_hat, round_budget=round_budget,
        any_capped=any_capped, nv=nv,
    )


def _finish(
    rounds, T, x_T, stopped_round, forced, law, k, c, delta, delta_tilde, eps,
    theta_hat, round_budget, any_capped, nv,
) -> StoppingRecord:
    uniform = np.full(nv, 1.0 / nv)
    return StoppingRecord(
        T=T, x_T=x_T, stopped_round=stopped_round, forced=forced,
        k=k, c=c, delta=delta, delta_tilde=delta_tilde, eps=eps,
        theta_hat=theta_hat, round_budget=round_budget,
        total_budget=c * k * round_budget,
        achieved_tv=tv_distance(law, uniform),
        any_round_capped=any_capped,
        rounds=rounds,
        conditional_law=law,
    )


def run_stopping_trials(
    config: ExperimentConfig, theta_samples: int = 100
) -> tuple[list[StoppingRecord], dict]:
    """config.runs independent realizations on the first grid cell."""
    n, p, mu = config.grid()[0]
    cfg = EnvConfig(torus=TorusConfig(d=config.d, n=n), p=p, mu=mu)
    base = config.seeds[0]
    theta_hat, theta_se = giant_density_estimate(
        cfg, theta_samples, np.random.default_rng([base, 71])
    )
    round_budget = config.desk.round_budget(n, mu) if mu > 0 else None
    records: list[StoppingRecord] = []
    for rep in range(config.runs):
        env_rng = np.random.default_rng([base, rep, 72])
        rule_rng = np.random.default_rng([base, rep, 73])
        traj = sample_trajectory(cfg, 2.0, env_rng)
        x0 = int(rule_rng.integers(cfg.torus.n_vertices))
        records.append(
            stopping_rule(
                traj, x0, config.eps, config.delta, theta_hat, rule_rng,
                round_budget=round_budget, stop_scale=config.stop_scale,
                env_rng=env_rng,
            )
        )
    tvs = np.array([r.achieved_tv for r in records])
    Ts = np.array([r.T for r in records])
    summary = {
        "runs": len(records),
        "theta_hat": theta_hat,
        "theta_se": theta_se,
        "k": records[0].k,
        "c": records[0].c,
        "delta": config.delta,
        "delta_tilde": records[0].delta_tilde,
        "eps": config.eps,
        "round_budget": records[0].round_budget,
        "total_budget": records[0].total_budget,
        "mean_T": float(Ts.mean()),
        "median_T": float(np.median(Ts)),
        "frac_tv_within_eps": float((tvs <= config.eps).mean()),
        "max_achieved_tv": float(tvs.max()),
        "forced_fraction": float(np.mean([r.forced for r in records])),
        "capped_round_fraction": float(np.mean([r.any_round_capped for r in records])),
    }
    return records, summary


def stopping_rows(records: list[StoppingRecord]) -> tuple[list[str], list[list]]:
    header = [
        "run", "T", "x_T", "stopped_round", "forced", "achieved_tv",
        "k", "c", "rounds_run", "any_round_capped",
    ]
    rows = [
        [
            i, r.T, r.x_T, -1 if r.stopped_round is None else r.stopped_round,
            int(r.forced), r.achieved_tv, r.k, r.c, len(r.rounds),
            int(r.any_round_capped),
        ]
        for i, r in enumerate(records)
    ]
    return header, rows
