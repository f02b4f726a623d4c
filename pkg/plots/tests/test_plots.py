"""Figure construction, readback fidelity, and loud failures on bad inputs."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from dynplots.cli import main
from dynplots.figures import render
from dynplots.readers import EmptyInputError, PlotInputError, SchemaError
from dynplots.spec import FigureSpec


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def decay_csv(tmp_path):
    rows = [[float(t), 0.9**t, 0.95**t, 0.85**t] for t in range(1, 13)]
    return _write_csv(
        tmp_path / "decay.csv", ["t", "tv_max", "tv_start_0", "tv_start_3"], rows
    )


@pytest.fixture
def sweep_fixtures(tmp_path):
    header = ["d", "n", "p", "mu", "median_mixing_time",
              "annealed_mean_mixing_time", "n_seeds"]
    rows = [
        [2, n, 0.8, mu, 1.7 * n * n + 0.86 / mu, 1.7 * n * n + 0.9 / mu, 5]
        for n in (8, 12) for mu in (1.0, 0.5, 0.25)
    ]
    medians = _write_csv(tmp_path / "sweep_medians.csv", header, rows)
    fits = tmp_path / "fits.json"
    fits.write_text(json.dumps({
        "p=0.8": {
            "additive_a": 0.125,
            "additive_b_n2": 1.7,
            "additive_c_invmu": 0.86,
            "ratio_bprime": 2.5,
            "per_n_slope_vs_invmu": {"8": 0.8603515625, "12": 0.86181640625},
        }
    }))
    return medians, fits


@pytest.fixture
def census_fixtures(tmp_path):
    header = ["seed", "x0", "n_steps", "n_good", "n_excellent_given_good"]
    rows = [[s, 3 * s, 41, 41 - s, 40 - s] for s in range(6)]
    runs = _write_csv(tmp_path / "census_runs.csv", header, rows)
    summary = tmp_path / "census_summary.jsonl"
    summary.write_text(json.dumps({"p_hat": 0.953125, "se": 0.015625}) + "\n")
    return runs, summary


# ---- decay ----

def test_decay_single_run_one_curve(tmp_path):
    path = _write_csv(tmp_path / "d.csv", ["t", "tv_max"],
                      [[1.0, 0.5], [2.0, 0.25], [3.0, 0.125]])
    out = tmp_path / "fig.png"
    result = render(FigureSpec(kind="decay", inputs=(str(path),), out_path=str(out)))
    assert out.is_file()
    assert len(result.series) == 1 and result.series[0].label == "tv_max"


def test_decay_eps_reference(decay_csv, tmp_path):
    out = tmp_path / "fig.png"
    result = render(
        FigureSpec(kind="decay", inputs=(str(decay_csv),), out_path=str(out), eps=0.25)
    )
    assert result.annotations["eps"] == 0.25
    assert np.all(result.guides[0].y == 0.25)
    labels = [s.label for s in result.series]
    assert labels == ["tv_max", "tv_start_0", "tv_start_3"]


def test_decay_empty_and_missing_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "fig.png"
    with pytest.raises(EmptyInputError):
        render(FigureSpec(kind="decay", inputs=(str(empty),), out_path=str(out)))
    header_only = tmp_path / "h.csv"
    header_only.write_text("t,tv_max\n")
    with pytest.raises(EmptyInputError):
        render(FigureSpec(kind="decay", inputs=(str(header_only),), out_path=str(out)))
    with pytest.raises(PlotInputError):
        render(FigureSpec(kind="decay", inputs=(str(tmp_path / "nope.csv"),),
                          out_path=str(out)))
    assert not out.exists()  # nothing may be written on failure


def test_decay_malformed_errors(tmp_path):
    out = tmp_path / "fig.png"
    wrong_cols = _write_csv(tmp_path / "w.csv", ["time", "tv"], [[1.0, 0.5]])
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="decay", inputs=(str(wrong_cols),), out_path=str(out)))
    garbage = tmp_path / "g.csv"
    garbage.write_text("t,tv_max\n1.0,not-a-number\n")
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="decay", inputs=(str(garbage),), out_path=str(out)))
    ragged = tmp_path / "r.csv"
    ragged.write_text("t,tv_max\n1.0,0.5\n2.0\n")
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="decay", inputs=(str(ragged),), out_path=str(out)))
    assert not out.exists()


# ---- scaling ----

def test_scaling_series_and_annotations(sweep_fixtures, tmp_path):
    medians, fits = sweep_fixtures
    out = tmp_path / "fig.png"
    result = render(
        FigureSpec(kind="scaling", inputs=(str(medians), str(fits)), out_path=str(out))
    )
    assert out.is_file()
    assert [s.label for s in result.series] == ["p=0.8 n=8", "p=0.8 n=12"]
    # annotated slopes are the stored coefficients, bit for bit
    stored = json.loads(fits.read_text())["p=0.8"]["per_n_slope_vs_invmu"]
    assert result.annotations["p=0.8 n=8 slope"] == stored["8"]
    assert result.annotations["p=0.8 n=12 slope"] == stored["12"]
    # guide lines come from the stored additive surface
    guide = result.guides[0]
    assert guide.label == "p=0.8 n=8 fit"
    assert np.allclose(guide.y, 0.125 + 1.7 * 64 + 0.86 * guide.x, rtol=0, atol=0)


def test_scaling_single_cell_single_point(tmp_path):
    header = ["d", "n", "p", "mu", "median_mixing_time",
              "annealed_mean_mixing_time", "n_seeds"]
    path = _write_csv(tmp_path / "one.csv", header, [[2, 8, 1.0, 0.5, 110.0, 110.0, 5]])
    result = render(
        FigureSpec(kind="scaling", inputs=(str(path),), out_path=str(tmp_path / "f.png"))
    )
    assert len(result.series) == 1
    assert result.series[0].style == "points" and len(result.series[0].x) == 1


def test_scaling_full_lattice_is_flat(tmp_path):
    # mu cannot matter when every edge is always open
    header = ["d", "n", "p", "mu", "median_mixing_time",
              "annealed_mean_mixing_time", "n_seeds"]
    rows = [[1, 6, 1.0, mu, 9.0, 9.0, 3] for mu in (1.0, 0.5, 0.25, 0.125)]
    path = _write_csv(tmp_path / "flat.csv", header, rows)
    result = render(
        FigureSpec(kind="scaling", inputs=(str(path),), out_path=str(tmp_path / "f.png"))
    )
    (series,) = result.series
    assert np.all(series.y == series.y[0])


def test_scaling_rejects_bad_fits(sweep_fixtures, tmp_path):
    medians, _ = sweep_fixtures
    out = tmp_path / "fig.png"
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"p=0.3": {}}))
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="scaling", inputs=(str(medians), str(wrong)),
                          out_path=str(out)))
    hollow = tmp_path / "hollow.json"
    hollow.write_text(json.dumps({"p=0.8": {"per_n_slope_vs_invmu": {"8": 1.0}}}))
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="scaling", inputs=(str(medians), str(hollow)),
                          out_path=str(out)))
    assert not out.exists()


# ---- histogram and census ----

def test_histogram_plots_raw_sample(tmp_path):
    rows = [[i, float(v)] for i, v in enumerate((3.5, 2.25, 8.125, 2.25, 5.0))]
    path = _write_csv(tmp_path / "exit_times.csv", ["run", "tau"], rows)
    result = render(
        FigureSpec(kind="histogram", inputs=(str(path),), out_path=str(tmp_path / "h.png"),
                   column="tau", bins=4)
    )
    assert result.series[0].y.tolist() == [3.5, 2.25, 8.125, 2.25, 5.0]
    assert result.annotations["samples"] == 5.0


def test_histogram_needs_column(tmp_path):
    with pytest.raises(ValueError):
        FigureSpec(kind="histogram", inputs=("x.csv",), out_path="h.png")


def test_census_scatter_and_pooled_line(census_fixtures, tmp_path):
    runs, summary = census_fixtures
    out = tmp_path / "c.png"
    result = render(
        FigureSpec(kind="census", inputs=(str(runs), str(summary)), out_path=str(out))
    )
    assert result.annotations["p_hat"] == 0.953125
    assert result.annotations["se"] == 0.015625
    (series,) = result.series
    assert series.style == "points"
    line = result.guides[0]
    assert line.y[1] == 0.953125 * series.x.max()


def test_census_summary_schema_checked(census_fixtures, tmp_path):
    runs, _ = census_fixtures
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"pooled": 1.0}) + "\n")
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="census", inputs=(str(runs), str(bad)),
                          out_path=str(tmp_path / "c.png")))


# ---- the acceptance readback criterion ----

def test_criterion_14_plot_readback(decay_csv, sweep_fixtures, census_fixtures, tmp_path):
    rng = np.random.default_rng(14)
    checked = 0

    def sample_against(series, path, column, row_filter=None):
        nonlocal checked
        raw = np.loadtxt(path, delimiter=",", skiprows=1, usecols=col_index(path, column))
        if row_filter is not None:
            raw = raw[row_filter]
        for i in rng.integers(len(series.y), size=5):
            assert series.y[int(i)] == raw[int(i)]
            checked += 1

    def col_index(path, column):
        return Path(path).read_text().splitlines()[0].split(",").index(column)

    out = tmp_path / "out"
    decay = render(FigureSpec(kind="decay", inputs=(str(decay_csv),),
                              out_path=str(out / "decay.png"), eps=0.25))
    sample_against(decay.series[0], decay_csv, "tv_max")
    sample_against(decay.series[2], decay_csv, "tv_start_3")

    medians, fits = sweep_fixtures
    scaling = render(FigureSpec(kind="scaling", inputs=(str(medians), str(fits)),
                                out_path=str(out / "scaling.png")))
    n_col = np.loadtxt(medians, delimiter=",", skiprows=1,
                       usecols=col_index(medians, "n"))
    mu_col = np.loadtxt(medians, delimiter=",", skiprows=1,
                        usecols=col_index(medians, "mu"))
    for s in scaling.series:
        n = float(s.label.rsplit("=", 1)[1])
        sel = n_col == n
        order = np.argsort(1.0 / mu_col[sel])
        raw = np.loadtxt(medians, delimiter=",", skiprows=1,
                         usecols=col_index(medians, "median_mixing_time"))[sel][order]
        for i in rng.integers(len(s.y), size=5):
            assert s.y[int(i)] == raw[int(i)]
            checked += 1

    runs, summary = census_fixtures
    censusfig = render(FigureSpec(kind="census", inputs=(str(runs), str(summary)),
                                  out_path=str(out / "census.png")))
    sample_against(censusfig.series[0], runs, "n_excellent_given_good")

    hist = render(FigureSpec(kind="histogram", inputs=(str(runs),),
                             out_path=str(out / "hist.png"), column="n_good"))
    sample_against(hist.series[0], runs, "n_good")

    # empty and malformed inputs must error without leaving an image
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    bad_out = out / "never.png"
    with pytest.raises(EmptyInputError):
        render(FigureSpec(kind="decay", inputs=(str(empty),), out_path=str(bad_out)))
    malformed = tmp_path / "malformed.csv"
    malformed.write_text("t,tv_max\n1.0,oops\n")
    with pytest.raises(SchemaError):
        render(FigureSpec(kind="decay", inputs=(str(malformed),), out_path=str(bad_out)))
    # 5 points from each of 6 plotted series: two decay curves, two
    # scaling series, the census scatter, and the histogram sample.
    ok = checked == 30 and not bad_out.exists()
    print(f"[criterion 14] plot readback: {'PASS' if ok else 'FAIL'} "
          f"({checked} sampled values matched their source files; "
          f"empty and malformed inputs raised without writing)")
    assert ok


# ---- CLI ----

def test_cli_renders_figure(decay_csv, tmp_path, capsys):
    out = tmp_path / "cli.png"
    code = main(["--kind", "decay", "--input", str(decay_csv),
                 "--out", str(out), "--eps", "0.25"])
    assert code == 0 and out.is_file()
    assert str(out) in capsys.readouterr().out


def test_cli_reports_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "cli.png"
    code = main(["--kind", "decay", "--input", str(empty), "--out", str(out)])
    assert code == 1 and not out.exists()
    assert "empty" in capsys.readouterr().err


def test_spec_validation():
    with pytest.raises(ValueError):
        FigureSpec(kind="pie", inputs=("x.csv",), out_path="f.png")
    with pytest.raises(ValueError):
        FigureSpec(kind="decay", inputs=(), out_path="f.png")
    with pytest.raises(ValueError):
        FigureSpec(kind="decay", inputs=("x.csv",), out_path="f.png", eps=1.5)
