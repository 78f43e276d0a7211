"""Tests for the scaling experiments and their command line.

Tests cover:
- Log-log slope fitting
- Spec file parsing, validation and the built-in presets
- Small end-to-end runs: CSV layout, reproducibility, horizon handling
- Exit codes of the command line
- Full preset reproductions (marked slow)
"""

import os

import numpy as np
import pytest

from exceptions import DomainError, ExperimentError, SpecError
from experiments import (EXIT_DIVERGED, EXIT_OK, EXIT_SPEC_ERROR, ExperimentKind, PRESET_TEXT,
                         check_spec, load_spec, loglog_slope, main, parse_spec_text, preset_spec,
                         run_dn_scaling, run_dt_scaling, run_eps_scaling, run_experiment,
                         run_reduction_scaling, spec_to_lines)
from integrators import (ReducedOrder, SchemeConfig, integrate_reduced, integrate_reference,
                         on_manifold_state)
from slowfast import toy_system

SPEC_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "specs")

SMALL_DT_SPEC = """
name=small_dt
kind=dt_macro_scaling
a=1
b=0.1
eps=1e-3
dt_micro_scales=0.5
num_micro=10
sweep=3e-3,5e-3,8e-3,1.2e-2
y0=1
T_final=0.05
ledger_preset=fig2
"""

DIVERGING_SPEC = """
name=blowup
kind=dt_macro_scaling
a=1
b=0.1
eps=1e-3
dt_micro=5e-4
num_micro=2
sweep=10,20,30,40
y0=1
T_final=1000
ledger_preset=fig2
"""


def _write(tmp_path, text, name="spec.conf"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ──────────────────────────────────────────────
# Log-log fit
# ──────────────────────────────────────────────

def test_loglog_slope_identity():
    slope, intercept, residual = loglog_slope([1.0, 10.0], [1.0, 10.0])
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(0.0, abs=1e-12)
    assert residual < 1e-12


def test_loglog_slope_constant_data():
    slope, _, _ = loglog_slope([1.0, 10.0], [2.0, 2.0])
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_loglog_slope_power_law():
    xs = np.geomspace(1e-4, 1e-1, 7)
    slope, intercept, residual = loglog_slope(xs, 3.0 * xs ** 1.5)
    assert slope == pytest.approx(1.5, abs=1e-12)
    assert intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert residual < 1e-10


@pytest.mark.parametrize("xs,ys", [
    ([1.0], [1.0]),
    ([1.0, 0.0], [1.0, 2.0]),
    ([1.0, 2.0], [-1.0, 2.0]),
    ([1.0, 2.0], [np.nan, 2.0]),
    ([1.0, 2.0, 3.0], [1.0, 2.0]),
])
def test_loglog_slope_rejects_bad_data(xs, ys):
    with pytest.raises(DomainError):
        loglog_slope(xs, ys)


# ──────────────────────────────────────────────
# Spec parsing
# ──────────────────────────────────────────────

def test_parse_small_spec():
    spec = parse_spec_text(SMALL_DT_SPEC)
    assert spec.kind == ExperimentKind.DT_MACRO_SCALING
    assert spec.sweep == (3e-3, 5e-3, 8e-3, 1.2e-2)
    assert spec.series_labels() == ["dt=0.5eps"]
    assert spec.dt_for(0, 1e-3) == pytest.approx(5e-4)


@pytest.mark.parametrize("name", sorted(PRESET_TEXT))
def test_spec_files_match_presets(name):
    assert load_spec(os.path.join(SPEC_DIR, f"{name}.conf")) == preset_spec(name)


def test_fig2_sweep_spans_step_counts_48_to_918():
    spec = preset_spec("fig2")
    M, dt = 90, 0.1 * 1e-5
    assert len(spec.sweep) == 10
    assert spec.sweep[0] == pytest.approx(1.0 / 918 - M * dt, rel=1e-12)
    assert spec.sweep[-1] == pytest.approx(1.0 / 48 - M * dt, rel=1e-12)
    assert spec.series_labels() == ["dt=0.1eps", "dt=1.6eps"]
    assert spec.sweep_for(0) == spec.sweep


def test_fig2_series_keep_macrostep_above_microburst():
    spec = preset_spec("fig2")
    for series in range(2):
        points = spec.sweep_for(series)
        burst = spec.num_micro * spec.dt_for(series, spec.eps)
        assert len(points) >= 4
        assert min(points) >= 2.5 * burst
        assert points[-1] == spec.sweep[-1]
    coarse = spec.sweep_for(1)
    assert len(coarse) == 6
    assert 3.6e-3 < coarse[0] < 4e-3
    assert coarse == spec.sweep[4:]


def test_min_macro_ratio_is_limited_to_macrostep_sweeps():
    text = PRESET_TEXT["fig3"] + "min_macro_ratio=2\n"
    with pytest.raises(SpecError, match="only applies to dt_macro_scaling"):
        parse_spec_text(text)


def test_fig3_and_fig4_sweeps():
    fig3 = preset_spec("fig3")
    assert fig3.sweep[0] == pytest.approx(1e-4) and fig3.sweep[-1] == pytest.approx(1.4e-3)
    assert len(fig3.sweep) == 8
    horizon = fig3.n_steps * (fig3.dt_macro + fig3.num_micro * fig3.dt_micro)
    assert max(fig3.sweep) <= horizon / 5
    fig4 = preset_spec("fig4")
    assert fig4.x0_offsets == fig4.sweep
    assert len(fig4.sweep) == 10


def test_spec_lines_round_trip_through_parser():
    spec = preset_spec("fig4")
    text = "\n".join(spec_to_lines(spec)).replace("sweep=", "x0_offsets=")
    assert parse_spec_text(text) == spec
    fig2 = preset_spec("fig2")
    assert parse_spec_text("\n".join(spec_to_lines(fig2))) == fig2


@pytest.mark.parametrize("edit,message", [
    (lambda t: t.replace("sweep=3e-3,5e-3,8e-3,1.2e-2", "sweep=3e-3,5e-3,8e-3"), "at least"),
    (lambda t: t.replace("sweep=3e-3,5e-3,8e-3,1.2e-2", "sweep=3e-3,8e-3,5e-3,1.2e-2"), "increasing"),
    (lambda t: t.replace("sweep=3e-3", "sweep=-3e-3"), "positive"),
    (lambda t: t.replace("ledger_preset=fig2", "ledger_preset=fig9"), "ledger_preset"),
    (lambda t: t + "dt_macro=1e-3\n", "swept dimension"),
    (lambda t: t + "dt_micro=1e-4\n", "exactly one of dt_micro"),
    (lambda t: t.replace("eps=1e-3\n", ""), "needs eps"),
    (lambda t: t + "colour=blue\n", "unknown key"),
    (lambda t: t + "a=2\n", "duplicate key"),
    (lambda t: t + "not a pair\n", "key=value"),
    (lambda t: t.replace("num_micro=10", "num_micro=ten"), "bad value"),
    (lambda t: t + "sweep_range=1e-3,1e-2,5\n", "exactly one of sweep"),
    (lambda t: t.replace("kind=dt_macro_scaling", "kind=speed_scaling"), "speed_scaling"),
    (lambda t: t.replace("b=0.1", "b=nan"), "finite"),
    (lambda t: t + "min_macro_ratio=1.2\n", "leaves 2 points"),
    (lambda t: t + "min_macro_ratio=0\n", "min_macro_ratio must be positive"),
])
def test_malformed_specs_raise(edit, message):
    with pytest.raises(SpecError, match=message):
        parse_spec_text(edit(SMALL_DT_SPEC))


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(SpecError):
        preset_spec("fig7")
    with pytest.raises(SpecError):
        load_spec(str(tmp_path / "absent.conf"))


def test_check_spec_reports_violated_resolution():
    lines = check_spec(preset_spec("fig3"))
    assert len(lines) == 8
    assert all("a6_ok=false" in line for line in lines)


def test_check_spec_fig2_is_clean_on_small_branch():
    lines = check_spec(preset_spec("fig2"))
    small = [line for line in lines if "series=dt=0.1eps" in line]
    assert small and all("a7_ok=true" in line and "branch=small_dt" in line for line in small)
    assert len(small) == 10 and len(lines) == 16


def test_runner_rejects_wrong_kind():
    spec = parse_spec_text(SMALL_DT_SPEC)
    for runner in (run_eps_scaling, run_dn_scaling, run_reduction_scaling):
        with pytest.raises(SpecError):
            runner(spec)


# ──────────────────────────────────────────────
# Small end-to-end runs
# ──────────────────────────────────────────────

def test_small_dt_run_fits_positive_slope():
    spec = parse_spec_text(SMALL_DT_SPEC)
    result = run_dt_scaling(spec)
    assert len(result.points) == 4
    assert np.all(result.errors > 0)
    assert np.all(np.isfinite(result.errors))
    assert result.slope > 0
    assert result.excluded == []


def test_fixed_horizon_steps_stay_inside_horizon():
    spec = parse_spec_text(SMALL_DT_SPEC)
    (result,) = run_experiment(spec)
    for p in result.points:
        t_delta = p.cfg.t_delta
        assert p.n == int(0.05 / t_delta + 1e-9)
        assert 0.05 - t_delta <= p.n * t_delta <= 0.05 + 1e-15
        assert p.t_final == pytest.approx(p.n * t_delta, rel=1e-12)


def test_small_run_errors_stay_below_discretization_bound():
    (result,) = run_experiment(parse_spec_text(SMALL_DT_SPEC))
    for p in result.points:
        assert p.report.all_ok
        assert p.error <= p.bound


def test_diverging_run_raises_experiment_error():
    spec = parse_spec_text(DIVERGING_SPEC)
    with pytest.raises(ExperimentError) as info:
        run_experiment(spec)
    assert info.value.diverged


# ──────────────────────────────────────────────
# Command line
# ──────────────────────────────────────────────

def test_cli_presets_lists_three(capsys):
    assert main(["presets"]) == EXIT_OK
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 3
    assert [line.split("\t")[0] for line in out] == ["fig2", "fig3", "fig4"]


def test_cli_check_fig3(capsys):
    assert main(["check", "--preset", "fig3"]) == EXIT_OK
    assert "a6_ok=false" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["run"],
    ["check", "--preset", "fig9"],
    [],
])
def test_cli_usage_errors(argv):
    assert main(argv) == EXIT_SPEC_ERROR


def test_cli_malformed_spec_file(tmp_path):
    path = _write(tmp_path, "name=x\nkind=eps_scaling\nthis is not a pair\n")
    assert main(["run", path, "--output", str(tmp_path / "out.csv")]) == EXIT_SPEC_ERROR
    assert not (tmp_path / "out.csv").exists()


def test_cli_diverging_run_exit_code(tmp_path):
    path = _write(tmp_path, DIVERGING_SPEC)
    assert main(["run", path, "--output", str(tmp_path / "out.csv")]) == EXIT_DIVERGED


def test_cli_run_writes_csv(tmp_path, capsys):
    path = _write(tmp_path, SMALL_DT_SPEC)
    out = tmp_path / "small.csv"
    assert main(["run", path, "--output", str(out)]) == EXIT_OK
    assert "slope=" in capsys.readouterr().out

    lines = out.read_text().splitlines()
    comments = [line for line in lines if line.startswith("#")]
    table = [line for line in lines if not line.startswith("#")]
    header = table[0].split(",")
    for column in ("dt_macro", "t_delta", "n", "E_d", "bound_E_d"):
        assert column in header
    assert len(table) == 5
    assert any(line.startswith("# spec kind=dt_macro_scaling") for line in comments)
    assert any(line.startswith("# assumptions ") and "a6_ok=true" in line for line in comments)
    fits = [line for line in comments if line.startswith("# fit ")]
    assert len(fits) == 1 and "slope=" in fits[0]


def test_cli_run_is_reproducible(tmp_path):
    path = _write(tmp_path, SMALL_DT_SPEC)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", path, "--output", str(first)]) == EXIT_OK
    assert main(["run", path, "--output", str(second), "--workers", "2"]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_cli_bounds_adds_columns(tmp_path):
    path = _write(tmp_path, SMALL_DT_SPEC)
    out = tmp_path / "bounds.csv"
    assert main(["bounds", path, "--output", str(out)]) == EXIT_OK
    header = [line for line in out.read_text().splitlines() if not line.startswith("#")][0]
    for column in ("lemma1_bound", "lemma5_bound", "theorem2_bound", "theorem4_bound",
                   "theorem1_bound", "gtilde_gap_bound"):
        assert column in header.split(",")


def test_cli_default_output_dir_and_metrics(tmp_path, monkeypatch):
    monkeypatch.setenv("PI_OUTPUT_DIR", str(tmp_path))
    metrics = tmp_path / "run.prom"
    path = _write(tmp_path, SMALL_DT_SPEC)
    assert main(["--metrics-file", str(metrics), "run", path]) == EXIT_OK
    assert (tmp_path / "small_dt.csv").exists()
    text = metrics.read_text()
    assert "pi_experiment_slope" in text
    assert 'experiment="small_dt"' in text


# ──────────────────────────────────────────────
# Reference solvers on the preset systems
# ──────────────────────────────────────────────

@pytest.mark.parametrize("name,eps,offset,horizon", [
    # fig2 runs to T = 1, i.e. 2e6 full-system steps at eps/20; the first 2e-3
    # covers the initial layer and the halving check at the same step
    ("fig2", 1e-5, 0.0, 2e-3),
    ("fig3", 1e-4, 0.0, 0.01),
    # None: five macrosteps of the dt = 1.99 eps series from the largest offset
    ("fig4", 1e-4, 0.5, None),
])
def test_reference_solvers_validate_on_presets(name, eps, offset, horizon):
    spec = preset_spec(name)
    sys_ = toy_system(spec.toy, eps)
    s0 = on_manifold_state(sys_, [spec.y0], offset)
    if horizon is None:
        cfg = SchemeConfig(spec.dt_for(1, eps), spec.dt_macro, spec.num_micro)
        horizon = spec.n_steps * cfg.t_delta

    full = integrate_reference(sys_, s0, eps / 20, horizon, validate=True)
    reduced = integrate_reduced(sys_, [spec.y0], eps / 20, horizon, order=ReducedOrder.REF4,
                                validate=True)

    assert full.times[-1] == pytest.approx(horizon, rel=1e-12)
    assert reduced.times[-1] == pytest.approx(horizon, rel=1e-12)
    assert np.all(np.isfinite(full.y)) and np.all(np.isfinite(full.x))
    assert abs(full.y[-1, 0] - reduced.y[-1, 0]) < 50 * eps


# ──────────────────────────────────────────────
# Preset reproductions
# ──────────────────────────────────────────────

@pytest.mark.slow
@pytest.mark.parametrize("series,lo,hi", [(0, 0.90, 1.15), (1, 0.95, 1.20)])
def test_fig2_macrostep_slope(series, lo, hi):
    result = run_dt_scaling(preset_spec("fig2"), series=series, workers=os.cpu_count() or 1)
    assert lo <= result.slope <= hi


@pytest.mark.slow
def test_fig3_eps_slope():
    result = run_eps_scaling(preset_spec("fig3"), workers=os.cpu_count() or 1)
    assert 0.85 <= result.slope <= 1.05


@pytest.mark.slow
@pytest.mark.parametrize("series,lo,hi", [(0, 0.90, 1.10), (1, 0.93, 1.13)])
def test_fig4_drift_slope(series, lo, hi):
    result = run_dn_scaling(preset_spec("fig4"), series=series, workers=os.cpu_count() or 1)
    assert lo <= result.slope <= hi
    assert np.all(np.diff(result.regressor) > 0)


@pytest.mark.slow
def test_reduction_slope():
    result = run_reduction_scaling(load_spec(os.path.join(SPEC_DIR, "reduction.conf")))
    assert 0.9 <= result.slope <= 1.1
