"""Experiment layer: config parsing, records, audits, sweeps, census, stopping."""
from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dynperc.connectivity import components, giant
from dynperc.environment import EnvConfig, sample_trajectory
from dynperc.experiments.census import census, census_run
from dynperc.experiments.config import (
    DeskProfile,
    ExperimentConfig,
    literal_round_budget,
    literal_run_length,
    literal_warmup,
    parse_config_text,
)
from dynperc.experiments.percstats import (
    delta_good_audit,
    isoperimetry_experiment,
    percolation_stats_row,
)
from dynperc.experiments.records import (
    RecordVersionError,
    RunRecord,
    load_record,
    persist_record,
    write_csv,
    write_decay_csv,
    write_manifest,
)
from dynperc.experiments.stopping import (
    run_stopping_trials,
    solve_round_count,
    stopping_rule,
)
from dynperc.experiments.sweeps import mixing_scaling_sweep, run_cell, summarize_cells
from dynperc.torus import TorusConfig


# ---- config ----

def test_parse_config_text_round_trip():
    text = """
    # campaign file
    mode = census
    d = 2
    ns = 8, 12
    ps = 0.8
    mus = 0.1, 0.3
    eps = 0.25
    seeds = 0, 1, 2
    runs = 7
    desk.good_threshold = 0.3
    desk.budget_multiplier = 10
    """
    cfg = parse_config_text(text)
    assert cfg.mode == "census"
    assert cfg.ns == (8, 12) and cfg.mus == (0.1, 0.3)
    assert cfg.seeds == (0, 1, 2) and cfg.runs == 7
    assert cfg.desk.good_threshold == 0.3
    assert cfg.desk.budget_multiplier == 10
    again = ExperimentConfig.from_mapping(cfg.to_mapping())
    assert again == cfg


def test_parse_config_rejects_garbage():
    with pytest.raises(ValueError):
        parse_config_text("not a key value line")
    with pytest.raises(ValueError):
        parse_config_text("unknown_knob = 3")
    with pytest.raises(ValueError):
        parse_config_text("desk.unknown = 3")
    with pytest.raises(ValueError):
        parse_config_text("mode = not-a-mode")


def test_exact_kernel_mode_guard():
    with pytest.raises(ValueError):
        ExperimentConfig(mode="mixing-sweep", d=2, ns=(70,))
    # statics modes never build dense kernels, so big grids are fine
    ExperimentConfig(mode="percolation-stats", d=2, ns=(70,))


def test_literal_schedule_formulas():
    n, d, mu = 8, 2, 0.5
    assert literal_round_budget(n, d, mu) == pytest.approx(
        math.log(n) ** 79 * (n * n + 2.0)
    )
    assert literal_run_length(n, d) == pytest.approx(math.log(n) ** 36 * n * n)
    assert literal_warmup(n, d, mu) == pytest.approx(11 * 2 * math.log(n) / 0.5)
    with pytest.raises(ValueError):
        literal_round_budget(n, d, 0.0)


def test_desk_profile_budgets():
    desk = DeskProfile()
    assert desk.round_budget(8, 0.1) == pytest.approx(20.0 * (64 + 10))
    with pytest.raises(ValueError):
        desk.round_budget(8, 0.0)


def test_grid_order_deterministic():
    cfg = ExperimentConfig(ns=(4, 8), ps=(0.3, 0.8), mus=(1.0,))
    assert cfg.grid() == [(4, 0.3, 1.0), (4, 0.8, 1.0), (8, 0.3, 1.0), (8, 0.8, 1.0)]


# ---- records ----

def test_record_round_trip(tmp_path):
    rec = RunRecord(
        mode="exit-time",
        config={"d": 2, "ns": [8]},
        seed=3,
        outputs={"median_tau": 12.5, "curve": [1.0, 0.5, 0.25]},
        wall_clock=1.25,
    )
    path = persist_record(rec, tmp_path / "rec.json")
    back = load_record(path)
    assert back == rec


def test_record_version_and_corrupt_errors(tmp_path):
    rec = RunRecord(mode="census", config={}, seed=0, outputs={})
    path = persist_record(rec, tmp_path / "rec.json")
    payload = json.loads(path.read_text())
    payload["schema_version"] = 99
    path.write_text(json.dumps(payload))
    with pytest.raises(RecordVersionError):
        load_record(path)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        load_record(bad)
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    with pytest.raises(ValueError):
        load_record(empty)


def test_csv_floats_survive_readback(tmp_path):
    values = [1 / 3, 2.0 ** -40, 123456.789012345]
    path = write_csv(tmp_path / "t.csv", ["x"], [[v] for v in values])
    lines = path.read_text().strip().splitlines()[1:]
    assert [float(s) for s in lines] == values


def test_decay_csv_columns(tmp_path):
    tv_max = np.array([0.9, 0.5, 0.2])
    curves = np.array([[0.9, 0.8], [0.5, 0.4], [0.2, 0.1]])
    path = write_decay_csv(tmp_path / "d.csv", tv_max, curves)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,tv_max,tv_start_0,tv_start_1"
    assert len(lines) == 4
    bare = write_decay_csv(tmp_path / "b.csv", tv_max)
    assert bare.read_text().splitlines()[0] == "t,tv_max"


def test_manifest_contents(tmp_path):
    path = write_manifest(tmp_path, {"mode": "census"}, extra={"note": "x"})
    manifest = json.loads(path.read_text())
    assert manifest["config"] == {"mode": "census"}
    assert "dynperc" in manifest["versions"] and "numpy" in manifest["versions"]
    assert manifest["note"] == "x"


# ---- percolation statics ----

def test_percolation_stats_full_lattice():
    row = percolation_stats_row(2, 6, 1.0, delta=0.2, samples=10,
                                rng=np.random.default_rng(0))
    assert row["theta_hat"] == 1.0 and row["theta_se"] == 0.0
    assert row["coverage_failure_rate"] == 0.0
    assert row["diameter_tail_rate"] == 0.0


def test_audit_full_lattice_density_holds():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=6), p=1.0, mu=1.0)
    traj = sample_trajectory(cfg, 4.0, np.random.default_rng(1))
    rep = delta_good_audit(traj, 0.05, (0.0, 3.0), probes=20,
                           rng=np.random.default_rng(2), theta_hat=1.0)
    assert rep.density_violations == 0 and rep.density_checks > 10


def test_audit_all_closed_fails_everywhere():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=6), p=0.0, mu=1.0)
    traj = sample_trajectory(cfg, 4.0, np.random.default_rng(3))
    rep = delta_good_audit(traj, 0.25, (0.0, 3.0), probes=10,
                           rng=np.random.default_rng(4), theta_hat=0.6)
    assert rep.density_violations == rep.density_checks
    assert rep.iso_violations == rep.iso_probe_times  # giant too small to probe
    assert not rep.is_delta_good


def test_audit_window_guard():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=6), p=0.8, mu=1.0)
    traj = sample_trajectory(cfg, 2.0, np.random.default_rng(5))
    for window in ((1.0, 0.5), (-0.5, 1.0), (0.0, 3.0)):
        with pytest.raises(ValueError):
            delta_good_audit(traj, 0.25, window, probes=5, rng=np.random.default_rng(0))


def test_audit_supercritical_is_good():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=12), p=0.8, mu=0.2)
    traj = sample_trajectory(cfg, 4.0, np.random.default_rng(6))
    rep = delta_good_audit(traj, 0.25, (0.0, 3.0), probes=60,
                           rng=np.random.default_rng(7))
    assert rep.density_violations == 0
    assert rep.min_iso_ratio >= rep.iso_threshold
    assert rep.is_delta_good


def test_isoperimetry_experiment_summary():
    rows, summary = isoperimetry_experiment(
        2, 10, 0.85, giants=3, probes=40, rng=np.random.default_rng(8)
    )
    assert summary["giants_scanned"] == 3
    assert summary["pooled_min_ratio"] == pytest.approx(min(r.min_ratio for r in rows))
    assert all(r.min_ratio > 0 for r in rows)


# ---- sweeps ----

def test_sweep_full_lattice_mu_independent():
    config = ExperimentConfig(
        mode="mixing-sweep", d=1, ns=(6, 8), ps=(1.0,), mus=(1.0, 0.25),
        seeds=(0, 1), eps=0.25,
    )
    result = mixing_scaling_sweep(config, bootstrap_draws=20)
    fits = result.fits["p=1.0"]
    # environment irrelevant at p=1: the 1/mu coefficient vanishes next to n^2
    n2_range = abs(fits["additive_b_n2"]) * (64 - 36)
    assert abs(fits["additive_c_invmu"]) <= 0.1 * n2_range + 1e-9
    by_cell = {(c.n, c.mu): c.mixing_time for c in result.cells if c.seed == 0}
    assert by_cell[(6, 1.0)] == by_cell[(6, 0.25)]


def test_sweep_eps_one_all_zero():
    cell = run_cell(1, 5, 1.0, 0.5, seed=0, eps=1.0)
    assert cell.mixing_time == 0.0 and cell.reached


def test_run_cell_deterministic():
    a = run_cell(1, 6, 0.7, 0.5, seed=4, eps=0.25, keep_curves=True)
    b = run_cell(1, 6, 0.7, 0.5, seed=4, eps=0.25, keep_curves=True)
    assert a.mixing_time == b.mixing_time
    assert np.array_equal(a.tv_max_curve, b.tv_max_curve)


def test_sweep_unreached_flagged():
    cell = run_cell(1, 8, 0.5, 0.1, seed=0, eps=0.01, horizon_cap=3.0)
    assert not cell.reached and math.isinf(cell.mixing_time)
    medians = summarize_cells([cell])
    assert medians[0]["n_unreached"] == 1


# ---- census ----

def test_census_frozen_environment_ratio_one():
    # frozen env: the boundary integral equals the boundary, every time excellent
    cfg = EnvConfig(torus=TorusConfig(d=2, n=6), p=0.8, mu=0.0)
    traj = sample_trajectory(cfg, 13.0, np.random.default_rng(9))
    gmask = giant(components(traj.env_at(0.0), cfg.torus))
    x0 = int(np.nonzero(gmask)[0][0])
    run = census_run(traj, x0, 12, np.random.default_rng(10), good_threshold=0.2)
    assert run.n_good == 13  # set stays inside the giant cluster it started in
    assert run.n_excellent_given_good == run.n_good


def test_census_all_closed_counts_zero():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=4), p=0.0, mu=1.0)
    traj = sample_trajectory(cfg, 9.0, np.random.default_rng(11))
    run = census_run(traj, 5, 8, np.random.default_rng(12), good_threshold=0.2)
    assert run.n_good == 0 and run.n_excellent_given_good == 0


def test_census_run_horizon_guard():
    cfg = EnvConfig(torus=TorusConfig(d=2, n=4), p=0.5, mu=1.0)
    traj = sample_trajectory(cfg, 5.0, np.random.default_rng(13))
    with pytest.raises(ValueError):
        census_run(traj, 0, 5, np.random.default_rng(0), good_threshold=0.2)


def test_census_end_to_end_summary():
    config = ExperimentConfig(
        mode="census", d=2, ns=(6,), ps=(0.8,), mus=(0.3,), runs=3, t_cap=10,
        seeds=(0,),
    )
    result = census(config)
    assert len(result.runs) == 3
    assert result.n_good_total >= result.n_excellent_total
    if result.n_good_total:
        assert 0.0 <= result.p_hat <= 1.0 and result.se >= 0.0
    total = sum(r.n_good for r in result.runs)
    assert total == result.n_good_total


# ---- stopping rule ----

def test_solve_round_count_values():
    assert solve_round_count(0.25, 0.02) == 7
    assert solve_round_count(0.99, 0.02) == 1
    with pytest.raises(ValueError):
        solve_round_count(0.2, 0.02001 * 2)  # 10 delta' >= eps
    with pytest.raises(ValueError):
        solve_round_count(0.5, 0.5)


def test_stopping_infeasible_k_reported():
    cfg = EnvConfig(torus=TorusConfig(d=1, n=6), p=1.0, mu=0.5)
    traj = sample_trajectory(cfg, 2.0, np.random.default_rng(14))
    with pytest.raises(ValueError, match="override delta"):
        stopping_rule(
            traj, 0, eps=0.2, delta=0.002, theta_hat=0.6,
            rng=np.random.default_rng(15), env_rng=np.random.default_rng(16),
        )


def test_stopping_full_lattice_run():
    cfg = EnvConfig(torus=TorusConfig(d=1, n=6), p=1.0, mu=0.5)
    traj = sample_trajectory(cfg, 2.0, np.random.default_rng(17))
    rec = stopping_rule(
        traj, 2, eps=0.2, delta=0.01, theta_hat=1.0,
        rng=np.random.default_rng(18), env_rng=np.random.default_rng(19),
        stop_scale=25.0,
    )
    assert rec.achieved_tv <= 0.2
    assert math.isfinite(rec.T) and rec.T >= 0
    assert rec.k == 199 and not rec.any_round_capped
    if not rec.forced:
        # stopped runs certify exact uniformity on the good-point set
        law = rec.conditional_law
        support = law[law > 0]
        assert np.allclose(support, support[0])


def test_stopping_trials_summary():
    config = ExperimentConfig(
        mode="stopping-rule", d=1, ns=(5,), ps=(0.9,), mus=(0.5,),
        eps=0.3, delta=0.02, runs=2, seeds=(1,), stop_scale=20.0,
    )
    records, summary = run_stopping_trials(config, theta_samples=30)
    assert summary["runs"] == 2
    assert summary["mean_T"] <= summary["total_budget"]
    assert 0.0 <= summary["frac_tv_within_eps"] <= 1.0
    assert all(len(r.rounds) >= 1 for r in records)


# ---- CLI ----

def _run_cli(args: list[str]) -> None:
    from dynperc.experiments.cli import main

    assert main(args) == 0


def test_cli_exit_time_outputs(tmp_path):
    out = tmp_path / "run1"
    _run_cli([
        "exit-time", "--d", "2", "--n", "30", "--p", "0.8", "--mu", "0.5",
        "--r", "3", "--runs", "4", "--seeds", "5", "--out", str(out),
    ])
    assert (out / "manifest.json").exists()
    assert (out / "exit_times.csv").exists()
    rec = load_record(out / "run_record.json")
    assert rec.mode == "exit-time" and rec.seed == 5
    assert rec.outputs["runs"] == 4


def test_cli_rerun_is_bit_identical(tmp_path):
    args = [
        "exit-time", "--d", "2", "--n", "30", "--p", "0.8", "--mu", "0.5",
        "--r", "3", "--runs", "4", "--seeds", "5",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    _run_cli(args + ["--out", str(out_a)])
    _run_cli(args + ["--out", str(out_b)])
    assert (out_a / "exit_times.csv").read_bytes() == (out_b / "exit_times.csv").read_bytes()


def test_cli_config_file_with_flag_override(tmp_path):
    config_file = tmp_path / "campaign.cfg"
    config_file.write_text("d = 1\nns = 12\nps = 1.0\nmus = 0.5\nruns = 3\nseeds = 2\nr = 1\n")
    out = tmp_path / "run"
    _run_cli([
        "exit-time", "--config", str(config_file), "--runs", "2", "--out", str(out),
    ])
    rec = load_record(out / "run_record.json")
    assert rec.config["runs"] == 2  # flag wins
    assert rec.config["ns"] == [12]  # file survives where no flag given


def test_cli_determinism_across_processes(tmp_path):
    # same config and seed in two fresh interpreters must emit identical bytes
    outs = []
    for name in ("p1", "p2"):
        out = tmp_path / name
        cmd = [
            sys.executable, "-m", "dynperc.experiments.cli", "percolation-stats",
            "--d", "2", "--n", "8", "--p", "0.7", "--samples", "20",
            "--seeds", "3", "--out", str(out),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True, cwd=Path.cwd())
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "percstats.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_census_smoke(tmp_path):
    out = tmp_path / "census"
    _run_cli([
        "census", "--d", "2", "--n", "5", "--p", "0.8", "--mu", "0.3",
        "--runs", "2", "--t-cap", "6", "--seeds", "0", "--out", str(out),
    ])
    assert (out / "census_runs.csv").exists()
    summary = json.loads((out / "census_summary.jsonl").read_text().splitlines()[0])
    assert summary["runs"] == 2
