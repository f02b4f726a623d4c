"""Environment tests.

Oracle for state queries: naive full replay of every event with time <= t,
with no checkpointing or cursor logic.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynperc.environment import (
    EnvConfig,
    EnvTrajectory,
    dump_trajectory,
    load_trajectory,
    sample_run,
    sample_stationary,
    sample_trajectory,
)
from dynperc.torus import TorusConfig


def small_cfg(d=2, n=4, p=0.6, mu=0.4) -> EnvConfig:
    return EnvConfig(torus=TorusConfig(d=d, n=n), p=p, mu=mu)


def replay_oracle(traj: EnvTrajectory, t: float) -> np.ndarray:
    state = traj.initial.copy()
    for i in range(traj.n_events):
        if traj.times[i] <= t:
            state[traj.edges[i]] = traj.bits[i]
    return state


# ---- sampling statistics (fixed seeds, 3-sigma bands) ----

def test_stationary_open_fraction():
    cfg = small_cfg(p=0.6)
    rng = np.random.default_rng(11)
    draws = np.array([sample_stationary(cfg, rng).mean() for _ in range(400)])
    n_total = 400 * cfg.torus.n_edges
    se = math.sqrt(0.6 * 0.4 / n_total)
    assert abs(draws.mean() - 0.6) < 3 * se


def test_event_count_poisson_moments():
    cfg = small_cfg(mu=0.4)
    T = 7.0
    lam = cfg.mu * cfg.torus.n_edges * T
    rng = np.random.default_rng(5)
    counts = np.array([sample_trajectory(cfg, T, rng).n_events for _ in range(300)])
    assert abs(counts.mean() - lam) < 3 * math.sqrt(lam / 300)
    # Poisson variance equals the mean; SE of the sample variance ~ sqrt((mu4 - var^2)/R)
    mu4 = lam * (1 + 3 * lam)  # 4th central moment of Poisson(lam)
    se_var = math.sqrt((mu4 - lam ** 2) / 300)
    assert abs(counts.var(ddof=1) - lam) < 3 * se_var


def test_per_edge_event_rate():
    cfg = small_cfg(mu=0.3)
    T = 50.0
    rng = np.random.default_rng(17)
    traj = sample_trajectory(cfg, T, rng)
    per_edge = np.bincount(traj.edges, minlength=cfg.torus.n_edges)
    lam = cfg.mu * T
    # each edge's count is Poisson(mu T); check the worst edge stays in a wide band
    assert abs(per_edge.mean() - lam) < 3 * math.sqrt(lam / cfg.torus.n_edges)
    assert np.all(per_edge < lam + 6 * math.sqrt(lam))


def test_stationarity_preserved_at_interior_time():
    cfg = small_cfg(p=0.35, mu=0.5)
    rng = np.random.default_rng(23)
    hits = 0
    reps, edges = 150, cfg.torus.n_edges
    for _ in range(reps):
        traj = sample_trajectory(cfg, 6.0, rng)
        hits += int(traj.env_at(3.0).sum())
    n_total = reps * edges
    se = math.sqrt(0.35 * 0.65 / n_total)
    assert abs(hits / n_total - 0.35) < 3 * se


def test_events_sorted_and_in_window():
    cfg = small_cfg()
    rng = np.random.default_rng(3)
    traj = sample_trajectory(cfg, 9.0, rng)
    assert np.all(np.diff(traj.times) >= 0)
    assert traj.n_events == 0 or (traj.times[0] > 0 and traj.times[-1] <= 9.0)


# ---- state queries vs the replay oracle ----

def test_env_at_matches_replay_oracle():
    cfg = small_cfg()
    rng = np.random.default_rng(41)
    traj = sample_trajectory(cfg, 12.0, rng)
    traj.checkpoint_every = 7  # force several checkpoints
    for t in [0.0, 0.01, 3.7, 6.0, 11.999, 12.0]:
        assert np.array_equal(traj.env_at(t), replay_oracle(traj, t))
    # repeat queries hit the checkpoint cache and must agree
    assert np.array_equal(traj.env_at(11.0), replay_oracle(traj, 11.0))


def test_env_at_is_cadlag_at_event_times():
    cfg = small_cfg(mu=0.9)
    traj = sample_trajectory(cfg, 5.0, np.random.default_rng(2))
    # find an event that actually flips its edge
    for i in range(traj.n_events):
        t, e, b = traj.event(i)
        before = replay_oracle(traj, np.nextafter(t, 0.0))
        if before[e] != b:
            assert traj.env_at(t)[e] == b
            break
    else:
        pytest.fail("no flipping event found")


def test_cursor_matches_env_at():
    cfg = small_cfg()
    traj = sample_trajectory(cfg, 10.0, np.random.default_rng(8))
    cur = traj.cursor()
    for t in [0.0, 1.5, 1.5, 4.2, 9.99, 10.0]:
        assert np.array_equal(cur.state_at(t), traj.env_at(t))
    with pytest.raises(ValueError):
        cur.state_at(3.0)


def test_equal_time_ties_apply_in_generation_order():
    cfg = small_cfg(d=1, n=4, p=0.5, mu=0.1)
    initial = np.zeros(4, dtype=bool)
    times = np.array([1.0, 1.0, 2.0])
    edges = np.array([2, 2, 0])
    bits = np.array([True, False, True])
    traj = EnvTrajectory(cfg=cfg, initial=initial, times=times, edges=edges, bits=bits, horizon=3.0)
    assert traj.env_at(1.0)[2] == False  # second write wins
    assert traj.env_at(2.5)[0] == True


# ---- segments ----

def test_segments_no_events_single_piece():
    cfg = small_cfg(mu=0.0)
    traj = sample_trajectory(cfg, 4.0, np.random.default_rng(1))
    segs = traj.segments(0.5, 3.5)
    assert len(segs) == 1
    assert segs[0][0] == 3.0
    assert np.array_equal(segs[0][1], traj.initial)


def test_segments_durations_and_states():
    cfg = small_cfg(mu=0.8)
    traj = sample_trajectory(cfg, 8.0, np.random.default_rng(14))
    a, b = 1.3, 6.9
    segs = traj.segments(a, b)
    assert math.isclose(sum(d for d, _ in segs), b - a, rel_tol=0, abs_tol=1e-12)
    # each piece equals env_at sampled strictly inside the piece
    t = a
    for dur, state in segs:
        assert dur > 0
        mid = t + dur / 2
        assert np.array_equal(state, traj.env_at(mid))
        t += dur
    # consecutive pieces differ (maximality)
    for (_, s1), (_, s2) in zip(segs, segs[1:]):
        assert not np.array_equal(s1, s2)


def test_segments_merge_non_flipping_events():
    cfg = small_cfg(d=1, n=4, p=0.5, mu=0.1)
    initial = np.array([True, False, False, False])
    # first event rewrites edge 0 to its current value: no new piece
    times = np.array([1.0, 2.0])
    edges = np.array([0, 1])
    bits = np.array([True, True])
    traj = EnvTrajectory(cfg=cfg, initial=initial, times=times, edges=edges, bits=bits, horizon=3.0)
    segs = traj.segments(0.0, 3.0)
    assert len(segs) == 2
    assert segs[0][0] == 2.0 and segs[1][0] == 1.0


def test_segments_degenerate_window():
    cfg = small_cfg()
    traj = sample_trajectory(cfg, 5.0, np.random.default_rng(4))
    segs = traj.segments(2.0, 2.0)
    assert len(segs) == 1 and segs[0][0] == 0.0
    assert np.array_equal(segs[0][1], traj.env_at(2.0))


@given(st.floats(0.0, 6.0), st.floats(0.0, 6.0), st.floats(0.0, 6.0))
@settings(deadline=None, max_examples=40)
def test_segments_additive_over_split(x, y, z):
    a, m, b = sorted((x, y, z))
    cfg = small_cfg(mu=0.7)
    traj = sample_trajectory(cfg, 6.0, np.random.default_rng(99))
    whole = sum(d for d, _ in traj.segments(a, b))
    split = sum(d for d, _ in traj.segments(a, m)) + sum(d for d, _ in traj.segments(m, b))
    assert math.isclose(whole, split, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(whole, b - a, rel_tol=0, abs_tol=1e-9)


# ---- refresh coverage ----

def test_all_edges_refresh_by_warmup_bound():
    # P(some edge silent over (11 d log n)/mu) <= d n^{-10d}; observed rate must be tiny
    cfg = small_cfg(d=1, n=3, p=0.5, mu=0.3)
    warmup = 11 * 1 * math.log(3) / 0.3
    rng = np.random.default_rng(31)
    misses = 0
    reps = 400
    for _ in range(reps):
        traj = sample_trajectory(cfg, warmup, rng)
        touched = np.zeros(cfg.torus.n_edges, dtype=bool)
        touched[traj.edges] = True
        misses += int(not touched.all())
    assert misses <= 2  # bound predicts ~0.0007 expected misses over 400 reps


# ---- extension ----

def test_extend_preserves_prefix_and_grows_window():
    cfg = small_cfg(mu=0.6)
    rng = np.random.default_rng(55)
    traj = sample_trajectory(cfg, 3.0, rng)
    before = (traj.times.copy(), traj.edges.copy(), traj.bits.copy())
    state3 = traj.env_at(3.0).copy()
    traj.extend(7.0, rng)
    k = len(before[0])
    assert np.array_equal(traj.times[:k], before[0])
    assert np.array_equal(traj.edges[:k], before[1])
    assert np.array_equal(traj.bits[:k], before[2])
    assert np.all(traj.times[k:] > 3.0) and np.all(traj.times[k:] <= 7.0)
    assert np.array_equal(traj.env_at(3.0), state3)
    with pytest.raises(ValueError):
        traj.extend(5.0, rng)


# ---- dump / load ----

def test_dump_load_roundtrip_bit_exact(tmp_path):
    cfg = small_cfg(p=0.8, mu=0.25)
    traj = sample_run(cfg, 9.5, seed=1234)
    path = tmp_path / "traj.txt"
    dump_trajectory(traj, str(path))
    back = load_trajectory(str(path))
    assert back.cfg == traj.cfg
    assert back.seed == 1234
    assert back.horizon == traj.horizon
    assert np.array_equal(back.initial, traj.initial)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.edges, traj.edges)
    assert np.array_equal(back.bits, traj.bits)


def test_seed_replay_regenerates_dump(tmp_path):
    cfg = small_cfg(p=0.4, mu=0.15)
    traj = sample_run(cfg, 6.0, seed=777)
    path = tmp_path / "t.txt"
    dump_trajectory(traj, str(path))
    back = load_trajectory(str(path))
    regen = sample_run(back.cfg, back.horizon, back.seed)
    assert np.array_equal(regen.initial, back.initial)
    assert np.array_equal(regen.times, back.times)
    assert np.array_equal(regen.edges, back.edges)
    assert np.array_equal(regen.bits, back.bits)


def test_load_rejects_future_version(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dynperc-trajectory 99\n")
    with pytest.raises(ValueError, match="newer"):
        load_trajectory(str(path))


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(torus=TorusConfig(d=2, n=4), p=1.5, mu=0.1)
    with pytest.raises(ValueError):
        EnvConfig(torus=TorusConfig(d=2, n=4), p=0.5, mu=-0.1)


def test_flip_mask_matches_replay_oracle():
    from dynperc.environment import flip_mask

    cfg = EnvConfig(torus=TorusConfig(d=2, n=3), p=0.4, mu=3.0)
    traj = sample_trajectory(cfg, 4.0, np.random.default_rng(17))
    assert traj.n_events > 20
    got = flip_mask(traj)
    state = traj.initial.copy()
    expect = []
    for i in range(traj.n_events):
        e, b = int(traj.edges[i]), bool(traj.bits[i])
        expect.append(state[e] != b)
        state[e] = b
    assert got.tolist() == expect
    empty = sample_trajectory(cfg, 0.0, np.random.default_rng(0))
    assert flip_mask(empty).shape == (0,)
