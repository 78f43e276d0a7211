#!/usr/bin/env python3
"""
Scaling experiments for Projective Integration

Runs PI on the toy slow-fast system over a parameter sweep, measures the
discretization error |E_d^n| against a reduced-system oracle and fits a
log-log slope:

- dt_macro_scaling: |E_d| versus the macrostep Delta T at fixed horizon T
- eps_scaling: |E_d| versus the scale separation eps at fixed n
- dn_scaling: |E_d| versus the measured fast-variable drift |d^n|
- reduction_scaling: |y_eps(T) - Y(T)| versus eps (both oracles)

Experiments are described by flat key=value spec files; the built-in
presets fig2, fig3 and fig4 cover the reference sweeps. Results go to CSV.

Usage:
    python experiments.py run --preset fig2
    python experiments.py bounds specs/fig4.conf --output fig4_bounds.csv
    python experiments.py check --preset fig3
    python experiments.py presets
"""

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from error_bounds import (AssumptionReport, LEDGER_PRESETS, check_assumptions,
                          gtilde_gap_bound, ledger_for_run, lemma1_bound, lemma5_dn_bound,
                          macro_manifold_distances, running_max_distance,
                          theorem1_total_bound, theorem2_reduction_bound,
                          theorem4_discretization_bound)
from exceptions import (ContractViolation, DivergenceError, DomainError, ExperimentError,
                        MultiscaleError, SpecError)
from experiment_metrics import ExperimentMetrics
from integrators import (ReducedOrder, Scheme, SchemeConfig, integrate_multiscale,
                         integrate_reduced, integrate_reference, on_manifold_state,
                         REFERENCE_STEPS_PER_EPS)
from slowfast import ToySystemParams, manifold_distance, toy_system

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SPEC_ERROR = 1
EXIT_DIVERGED = 2

MIN_SWEEP_POINTS = 4
# reduced-oracle step: min(dt_macro, eps) / ORACLE_STEP_DIVISOR
ORACLE_STEP_DIVISOR = 20
CSV_FLOAT = "{:.17g}"


class ExperimentKind(str, Enum):
    DT_MACRO_SCALING = "dt_macro_scaling"
    EPS_SCALING = "eps_scaling"
    DN_SCALING = "dn_scaling"
    REDUCTION_SCALING = "reduction_scaling"


@dataclass(frozen=True)
class ExperimentSpec:
    """
    One scaling experiment.

    The sweep holds Delta T values (dt_macro_scaling), eps values
    (eps_scaling, reduction_scaling) or initial x-offsets (dn_scaling).
    The microstep is either absolute (dt_micro) or a list of multiples of
    eps (dt_micro_scales), one result series per entry.
    min_macro_ratio drops, per series, the Delta T points below
    min_macro_ratio * num_micro * dt, so every series stays in Delta T >> M dt.
    """
    name: str
    kind: ExperimentKind
    toy: ToySystemParams
    sweep: Tuple[float, ...]
    y0: float
    ledger_preset: str
    num_micro: int = 0
    eps: Optional[float] = None
    dt_micro: Optional[float] = None
    dt_micro_scales: Tuple[float, ...] = ()
    dt_macro: Optional[float] = None
    T_final: Optional[float] = None
    n_steps: Optional[int] = None
    min_macro_ratio: Optional[float] = None
    oracle_max_steps: int = 100_000

    def __post_init__(self):
        sweep = tuple(float(v) for v in self.sweep)
        object.__setattr__(self, "sweep", sweep)
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        if len(sweep) < MIN_SWEEP_POINTS:
            raise SpecError(f"{self.name}: sweep needs at least {MIN_SWEEP_POINTS} points, got {len(sweep)}")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise SpecError(f"{self.name}: sweep must be strictly increasing")
        lowest_allowed = 0.0 if self.kind == ExperimentKind.DN_SCALING else None
        if lowest_allowed is None and sweep[0] <= 0:
            raise SpecError(f"{self.name}: sweep values must be positive")
        if lowest_allowed is not None and sweep[0] < 0:
            raise SpecError(f"{self.name}: x0 offsets must be nonnegative")
        if self.ledger_preset not in LEDGER_PRESETS:
            raise SpecError(f"{self.name}: unknown ledger_preset {self.ledger_preset!r}")
        if self.oracle_max_steps < 1:
            raise SpecError(f"{self.name}: oracle_max_steps must be positive")
        self._check_swept_dimension()
        self._check_series_sweeps()

    def _check_swept_dimension(self):
        kind = self.kind
        need: Dict[str, bool] = {}
        if kind == ExperimentKind.DT_MACRO_SCALING:
            need = {"eps": True, "dt_macro": False, "T_final": True, "n_steps": False}
        elif kind == ExperimentKind.EPS_SCALING:
            need = {"eps": False, "dt_macro": True, "n_steps": True}
        elif kind == ExperimentKind.DN_SCALING:
            need = {"eps": True, "dt_macro": True, "n_steps": True}
        elif kind == ExperimentKind.REDUCTION_SCALING:
            need = {"eps": False, "T_final": True}
        for key, required in need.items():
            present = getattr(self, key) is not None
            if required and not present:
                raise SpecError(f"{self.name}: {kind.value} needs {key}")
            if not required and present:
                raise SpecError(f"{self.name}: {key} is the swept dimension of {kind.value}; "
                                f"do not fix it")
        if kind != ExperimentKind.REDUCTION_SCALING:
            if (self.dt_micro is None) == (not self.dt_micro_scales):
                raise SpecError(f"{self.name}: give exactly one of dt_micro, dt_micro_scales")
            if self.num_micro < 0:
                raise SpecError(f"{self.name}: num_micro must be nonnegative")

    def _check_series_sweeps(self):
        if self.min_macro_ratio is None:
            return
        if self.kind != ExperimentKind.DT_MACRO_SCALING:
            raise SpecError(f"{self.name}: min_macro_ratio only applies to dt_macro_scaling")
        if not self.min_macro_ratio > 0:
            raise SpecError(f"{self.name}: min_macro_ratio must be positive")
        for series, label in enumerate(self.series_labels()):
            kept = len(self.sweep_for(series))
            if kept < MIN_SWEEP_POINTS:
                raise SpecError(f"{self.name} {label}: min_macro_ratio leaves {kept} points, "
                                f"need at least {MIN_SWEEP_POINTS}")

    @property
    def x0_offsets(self) -> Tuple[float, ...]:
        return self.sweep if self.kind == ExperimentKind.DN_SCALING else ()

    def series_labels(self) -> List[str]:
        if self.kind == ExperimentKind.REDUCTION_SCALING:
            return ["reference"]
        if self.dt_micro_scales:
            return [f"dt={scale:g}eps" for scale in self.dt_micro_scales]
        return [f"dt={self.dt_micro:g}"]

    def dt_for(self, series: int, eps: float) -> float:
        if self.dt_micro_scales:
            return self.dt_micro_scales[series] * eps
        return self.dt_micro

    def sweep_for(self, series: int) -> Tuple[float, ...]:
        """Sweep points of one series; min_macro_ratio drops Delta T below ratio * M dt."""
        if self.min_macro_ratio is None:
            return self.sweep
        floor = self.min_macro_ratio * self.num_micro * self.dt_for(series, self.eps)
        return tuple(v for v in self.sweep if v >= floor)


# --- spec files --------------------------------------------------------------

_FLOAT_KEYS = {"a", "b", "eps", "dt_micro", "dt_macro", "y0", "T_final", "min_macro_ratio"}
_INT_KEYS = {"num_micro", "n_steps", "oracle_max_steps"}
_LIST_KEYS = {"sweep", "dt_micro_scales", "x0_offsets", "sweep_range", "sweep_from_steps"}
_TEXT_KEYS = {"name", "kind", "ledger_preset"}
SPEC_KEYS = _FLOAT_KEYS | _INT_KEYS | _LIST_KEYS | _TEXT_KEYS


def _log_spaced(lo: float, hi: float, count: int) -> Tuple[float, ...]:
    if not (0 < lo < hi) or count < 2:
        raise SpecError(f"log-spaced range needs 0 < lo < hi and count >= 2, got {lo}, {hi}, {count}")
    return tuple(float(v) for v in np.geomspace(lo, hi, int(count)))


def _sweep_from_steps(values: Dict[str, object], n_coarse: float, n_fine: float,
                      count: float) -> Tuple[float, ...]:
    """Delta T endpoints from n (Delta T + M dt) = T at the coarse and fine step counts."""
    try:
        T = float(values["T_final"])
        M = int(values["num_micro"])
        eps = float(values["eps"])
    except KeyError as e:
        raise SpecError(f"sweep_from_steps needs T_final, num_micro and eps ({e} missing)")
    scales = values.get("dt_micro_scales")
    dt = min(scales) * eps if scales else float(values.get("dt_micro", 0.0))
    hi = T / n_coarse - M * dt
    lo = T / n_fine - M * dt
    if lo <= 0:
        raise SpecError(f"sweep_from_steps: n={n_fine:g} leaves no room for a macrostep "
                        f"(T/n - M dt = {lo:.3e})")
    return _log_spaced(lo, hi, int(count))


def parse_spec_text(text: str, source: str = "<spec>") -> ExperimentSpec:
    """Parse flat key=value text ('#' comments, lists comma-separated)."""
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SPEC_KEYS:
            raise SpecError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise SpecError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _LIST_KEYS:
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                values[key] = value
        except ValueError:
            raise SpecError(f"{source}:{lineno}: bad value for {key}: {value!r}")

    sweep_sources = [k for k in ("sweep", "sweep_range", "sweep_from_steps", "x0_offsets") if k in values]
    if len(sweep_sources) != 1:
        raise SpecError(f"{source}: give exactly one of sweep, sweep_range, sweep_from_steps, "
                        f"x0_offsets (got {sweep_sources or 'none'})")
    source_key = sweep_sources[0]
    raw_sweep = values.pop(source_key)
    if source_key == "sweep_range":
        if len(raw_sweep) != 3:
            raise SpecError(f"{source}: sweep_range is lo,hi,count")
        sweep = _log_spaced(raw_sweep[0], raw_sweep[1], int(raw_sweep[2]))
    elif source_key == "sweep_from_steps":
        if len(raw_sweep) != 3:
            raise SpecError(f"{source}: sweep_from_steps is n_coarse,n_fine,count")
        sweep = _sweep_from_steps(values, *raw_sweep)
    else:
        sweep = raw_sweep

    missing = [k for k in ("name", "kind", "a", "b", "y0", "ledger_preset") if k not in values]
    if missing:
        raise SpecError(f"{source}: missing required keys {missing}")
    try:
        kind = ExperimentKind(values.pop("kind"))
    except ValueError as e:
        raise SpecError(f"{source}: {e}")
    try:
        toy = ToySystemParams(values.pop("a"), values.pop("b"))
        return ExperimentSpec(kind=kind, toy=toy, sweep=sweep, **values)
    except ContractViolation as e:
        raise SpecError(f"{source}: {e}")


def load_spec(path: str) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise SpecError(f"cannot read spec file {path}: {e}")
    return parse_spec_text(text, source=path)


def spec_to_lines(spec: ExperimentSpec) -> List[str]:
    """key=value lines echoing a resolved spec (sweep written out)."""
    lines = []
    for f in fields(spec):
        value = getattr(spec, f.name)
        if value is None or value == ():
            continue
        if f.name == "toy":
            lines += [f"a={CSV_FLOAT.format(value.a)}", f"b={CSV_FLOAT.format(value.b)}"]
        elif isinstance(value, Enum):
            lines.append(f"{f.name}={value.value}")
        elif isinstance(value, tuple):
            lines.append(f"{f.name}=" + ",".join(CSV_FLOAT.format(v) for v in value))
        elif isinstance(value, float):
            lines.append(f"{f.name}={CSV_FLOAT.format(value)}")
        else:
            lines.append(f"{f.name}={value}")
    return lines


PRESET_TEXT: Dict[str, str] = {
    "fig2": """
name=fig2
kind=dt_macro_scaling
a=1
b=0.1
eps=1e-5
dt_micro_scales=0.1,1.6
num_micro=90
# Delta T endpoints from n (Delta T + M dt) = T at n = 48 and n = 918
sweep_from_steps=48,918,10
# each series keeps Delta T >= 2.5 M dt, so dt = 1.6 eps starts near 3.8e-3
min_macro_ratio=2.5
y0=1
T_final=1
ledger_preset=fig2
""",
    "fig3": """
name=fig3
kind=eps_scaling
a=0.1
b=1
dt_micro=1e-6
dt_macro=1e-4
num_micro=100
n_steps=50
# eps from Delta T (A6 deliberately violated) up to T/7, well inside the horizon T = 0.01
sweep_range=1e-4,1.4e-3,8
y0=5
ledger_preset=fig3
""",
    "fig4": """
name=fig4
kind=dn_scaling
a=1
b=1
eps=1e-4
dt_micro_scales=0.01,1.99
dt_macro=1e-3
num_micro=100
n_steps=5
# A8 violated on purpose: |d^n| grows over the macrosteps
sweep_range=0.01,0.5,10
y0=1
ledger_preset=fig4
""",
}


def preset_spec(name: str) -> ExperimentSpec:
    if name not in PRESET_TEXT:
        raise SpecError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESET_TEXT))}")
    return parse_spec_text(PRESET_TEXT[name], source=f"preset:{name}")


# --- running -----------------------------------------------------------------

@dataclass
class PointOutcome:
    """One sweep point of one series."""
    series: int
    value: float
    eps: float
    cfg: Optional[SchemeConfig]
    n: int
    t_final: float
    y_final: np.ndarray
    d00: float = 0.0
    dn: float = 0.0
    error: float = float("nan")
    bound: float = float("nan")
    report: Optional[AssumptionReport] = None
    failure: Optional[str] = None


@dataclass
class ExperimentResult:
    """Sweep values, measured errors and the fitted log-log line for one series."""
    sweep_values: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    series: str = ""
    regressor: Optional[np.ndarray] = None
    points: List[PointOutcome] = field(default_factory=list)
    excluded: List[float] = field(default_factory=list)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """
    Least-squares line through (ln x, ln y).

    Returns (slope, intercept, max absolute log residual).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError(f"need matching 1-d data, got shapes {xs.shape} and {ys.shape}")
    if xs.size < 2:
        raise DomainError(f"need at least 2 points, got {xs.size}")
    if np.any(~np.isfinite(xs)) or np.any(~np.isfinite(ys)) or np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("log-log fit needs finite, strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return float(slope), float(intercept), residual


def _point_setup(spec: ExperimentSpec, series: int, value: float):
    """System, config, initial state and horizon of one sweep point."""
    kind = spec.kind
    eps = value if kind in (ExperimentKind.EPS_SCALING, ExperimentKind.REDUCTION_SCALING) else spec.eps
    sys_ = toy_system(spec.toy, eps)
    offset = value if kind == ExperimentKind.DN_SCALING else 0.0
    s0 = on_manifold_state(sys_, [spec.y0], offset)
    if kind == ExperimentKind.REDUCTION_SCALING:
        return sys_, None, s0, spec.T_final
    dt = spec.dt_for(series, eps)
    dt_macro = value if kind == ExperimentKind.DT_MACRO_SCALING else spec.dt_macro
    cfg = SchemeConfig(dt, dt_macro, spec.num_micro)
    T = spec.T_final if spec.T_final is not None else spec.n_steps * cfg.t_delta
    return sys_, cfg, s0, T


def _run_point(task: Tuple[ExperimentSpec, int, float]) -> PointOutcome:
    """Integrate one sweep point. Top-level so process pools can pickle it."""
    spec, series, value = task
    sys_, cfg, s0, T = _point_setup(spec, series, value)
    d00 = manifold_distance(sys_, s0.x, s0.y)

    if cfg is None:
        try:
            ref = integrate_reference(sys_, s0, sys_.epsilon / REFERENCE_STEPS_PER_EPS, T,
                                      sample_times=[T])
        except DivergenceError as e:
            return PointOutcome(series, value, sys_.epsilon, None, 0, T, s0.y, d00, failure=str(e))
        return PointOutcome(series, value, sys_.epsilon, None, 0, ref.final_time, ref.y[-1], d00)

    report = check_assumptions(ledger_for_run(spec.ledger_preset, sys_, s0), cfg, sys_.epsilon)
    traj = integrate_multiscale(sys_, s0, cfg, Scheme.PI, T=T, on_divergence="return")
    n = len(traj) - 1
    outcome = PointOutcome(series, value, sys_.epsilon, cfg, n, traj.final_time, traj.y[-1],
                           d00, report=report, failure=traj.failure)
    if traj.failure is None and n >= 1:
        outcome.dn = float(running_max_distance(macro_manifold_distances(sys_, traj))[-1])
    return outcome


def _map_points(tasks: List[Tuple[ExperimentSpec, int, float]], workers: int) -> List[PointOutcome]:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_point, tasks))
    else:
        outcomes = [_run_point(task) for task in tasks]
    return sorted(outcomes, key=lambda p: (p.series, p.value))


def _oracle_step(spec: ExperimentSpec, points: List[PointOutcome], horizon: float) -> float:
    """min(Delta T, eps)/20, coarsened so the oracle takes at most oracle_max_steps steps."""
    scales = [p.eps for p in points]
    scales += [p.cfg.dt_macro for p in points if p.cfg is not None]
    h = min(scales) / ORACLE_STEP_DIVISOR
    floor = horizon / spec.oracle_max_steps
    if h < floor:
        logger.info(f"reduced oracle step {h:.3e} coarsened to {floor:.3e} "
                    f"({spec.oracle_max_steps} steps over T={horizon:.6g})")
        h = floor
    return h


def _reduced_oracle_values(spec: ExperimentSpec, points: List[PointOutcome]) -> Dict[float, np.ndarray]:
    """Y(t) at every point's final time, from one validated RK4 run."""
    times = sorted({p.t_final for p in points})
    horizon = times[-1]
    sys_ = toy_system(spec.toy, points[0].eps)
    h = _oracle_step(spec, points, horizon)
    oracle = integrate_reduced(sys_, [spec.y0], h, horizon, order=ReducedOrder.REF4,
                               sample_times=times)
    logger.info(f"✅ reduced oracle validated on [0, {horizon:.6g}] with h={h:.3e}")
    tol = 1e-3 * h
    return {t: oracle.y_at(t, tol) for t in times}


def _point_bound(spec: ExperimentSpec, p: PointOutcome) -> float:
    sys_, cfg, s0, T = _point_setup(spec, p.series, p.value)
    ledger = ledger_for_run(spec.ledger_preset, sys_, s0)
    try:
        if cfg is None:
            return theorem2_reduction_bound(ledger, p.eps, p.t_final)
        if p.n < 1:
            return float("nan")
        return theorem4_discretization_bound(ledger, cfg, p.eps, p.n, p.dn)
    except MultiscaleError as e:
        logger.debug(f"bound unavailable at {p.value:.6g}: {e}")
        return float("nan")


def _fit_series(spec: ExperimentSpec, series: int, points: List[PointOutcome]) -> ExperimentResult:
    label = spec.series_labels()[series]
    values = np.array([p.value for p in points])
    errors = np.array([p.error for p in points])
    if spec.kind == ExperimentKind.DN_SCALING:
        regressor = np.array([p.dn for p in points])
    else:
        regressor = values

    keep, excluded = [], []
    for i, p in enumerate(points):
        degenerate = spec.kind == ExperimentKind.DN_SCALING and p.value == 0.0
        if degenerate or not (regressor[i] > 0 and errors[i] > 0):
            excluded.append(p.value)
            logger.warning(f"⚠️  {spec.name} {label}: point {p.value:.6g} excluded from the fit "
                           f"(regressor={regressor[i]:.3e}, error={errors[i]:.3e})")
        else:
            keep.append(i)
    if len(keep) < 2:
        raise ExperimentError(f"{spec.name} {label}: fewer than 2 usable points for the fit")
    slope, intercept, residual = loglog_slope(regressor[keep], errors[keep])
    logger.info(f"🎯 {spec.name} {label}: slope={slope:.4f} intercept={intercept:.4f} "
                f"residual={residual:.3e}")
    return ExperimentResult(values, errors, slope, intercept, residual, label,
                            regressor, points, excluded)


def run_experiment(spec: ExperimentSpec, workers: int = 1,
                   metrics: Optional[ExperimentMetrics] = None) -> List[ExperimentResult]:
    """Run every series of the spec; one ExperimentResult per series."""
    started = time.time()
    labels = spec.series_labels()
    tasks = [(spec, s, v) for s in range(len(labels)) for v in spec.sweep_for(s)]
    logger.info(f"Starting {spec.name} ({spec.kind.value}): {len(labels)} series, "
                f"{len(tasks)} runs")
    outcomes = _map_points(tasks, workers)

    for p in outcomes:
        if p.failure is not None:
            if metrics is not None:
                metrics.record_divergence(spec.name, labels[p.series])
            cause = DivergenceError(p.failure)
            raise ExperimentError(f"{spec.name} {labels[p.series]}: run at {p.value:.6g} "
                                  f"diverged: {p.failure}", sweep_value=p.value, cause=cause)

    results = []
    for series in range(len(labels)):
        points = [p for p in outcomes if p.series == series]
        Y = _reduced_oracle_values(spec, points)
        for p in points:
            p.error = float(np.max(np.abs(p.y_final - Y[p.t_final])))
            p.bound = _point_bound(spec, p)
        result = _fit_series(spec, series, points)
        results.append(result)
        if metrics is not None:
            for i, p in enumerate(points):
                metrics.record_point(spec.name, result.series, i, p.error,
                                     None if math.isnan(p.bound) else p.bound)
            metrics.record_fit(spec.name, result.series, result.slope, result.residual)
            if points[0].report is not None:
                flags = {k: str(getattr(points[0].report, k)).lower()
                         for k in ("a6_ok", "a7_ok", "a8_ok")}
                flags["branch"] = points[0].report.branch.value
                metrics.record_assumptions(spec.name, result.series, flags)

    elapsed = time.time() - started
    if metrics is not None:
        metrics.record_duration(spec.name, elapsed)
    logger.info(f"{spec.name} completed in {elapsed:.2f}s")
    return results


def _require_kind(spec: ExperimentSpec, kind: ExperimentKind):
    if spec.kind != kind:
        raise SpecError(f"{spec.name} is a {spec.kind.value} experiment, not {kind.value}")


def run_dt_scaling(spec: ExperimentSpec, series: int = 0, workers: int = 1) -> ExperimentResult:
    """|E_d| at fixed T versus Delta T."""
    _require_kind(spec, ExperimentKind.DT_MACRO_SCALING)
    return run_experiment(spec, workers)[series]


def run_eps_scaling(spec: ExperimentSpec, series: int = 0, workers: int = 1) -> ExperimentResult:
    """|E_d| after n macrosteps versus eps."""
    _require_kind(spec, ExperimentKind.EPS_SCALING)
    return run_experiment(spec, workers)[series]


def run_dn_scaling(spec: ExperimentSpec, series: int = 0, workers: int = 1) -> ExperimentResult:
    """|E_d| after n macrosteps versus the measured running max |d^n|."""
    _require_kind(spec, ExperimentKind.DN_SCALING)
    return run_experiment(spec, workers)[series]


def run_reduction_scaling(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """|y_eps(T) - Y(T)| versus eps, from the full and reduced oracles."""
    _require_kind(spec, ExperimentKind.REDUCTION_SCALING)
    return run_experiment(spec, workers)[0]


# --- output ------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return CSV_FLOAT.format(float(value))


def _run_row(spec: ExperimentSpec, result: ExperimentResult, p: PointOutcome) -> Dict[str, str]:
    kind = spec.kind
    if kind == ExperimentKind.REDUCTION_SCALING:
        return {"eps": _fmt(p.eps), "h_ref": _fmt(p.eps / REFERENCE_STEPS_PER_EPS),
                "T": _fmt(p.t_final), "E_c": _fmt(p.error), "bound_E_c": _fmt(p.bound)}
    row = {"series": result.series, "dt_micro": _fmt(p.cfg.dt_micro)}
    if kind == ExperimentKind.EPS_SCALING:
        row["eps"] = _fmt(p.eps)
    if kind == ExperimentKind.DN_SCALING:
        row["x0_offset"] = _fmt(p.value)
    row.update({"dt_macro": _fmt(p.cfg.dt_macro), "t_delta": _fmt(p.cfg.t_delta), "n": _fmt(p.n),
                "E_d": _fmt(p.error), "bound_E_d": _fmt(p.bound), "d_n": _fmt(p.dn)})
    return row


def _bounds_row(spec: ExperimentSpec, result: ExperimentResult, p: PointOutcome) -> Dict[str, str]:
    row = _run_row(spec, result, p)
    if p.cfg is None:
        return row
    sys_, cfg, s0, T = _point_setup(spec, p.series, p.value)
    ledger = ledger_for_run(spec.ledger_preset, sys_, s0)

    def guarded(fn, *args):
        try:
            return _fmt(fn(*args))
        except MultiscaleError as e:
            return type(e).__name__

    row["lemma1_bound"] = guarded(lemma1_bound, ledger, p.eps, cfg.dt_micro, cfg.num_micro, p.d00)
    row["lemma5_bound"] = guarded(lemma5_dn_bound, ledger, cfg, p.eps, p.d00)
    row["lemma5_bound_n"] = guarded(lemma5_dn_bound, ledger, cfg, p.eps, p.d00, max(p.n, 1))
    row["gtilde_gap_bound"] = guarded(gtilde_gap_bound, ledger, cfg, p.eps, p.dn)
    row["theorem2_bound"] = guarded(theorem2_reduction_bound, ledger, p.eps, p.t_final)
    row["theorem4_bound"] = guarded(theorem4_discretization_bound, ledger, cfg, p.eps, max(p.n, 1), p.dn)
    row["theorem1_bound"] = guarded(theorem1_total_bound, ledger, cfg, p.eps, max(p.n, 1), p.dn)
    return row


def write_results_csv(path: str, spec: ExperimentSpec, results: List[ExperimentResult],
                      with_bounds: bool = False):
    """Comma-separated rows with '#' comment lines for the spec, assumptions and fits."""
    make_row = _bounds_row if with_bounds else _run_row
    rows = [make_row(spec, r, p) for r in results for p in r.points]
    header = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as handle:
        for line in spec_to_lines(spec):
            handle.write(f"# spec {line}\n")
        for r in results:
            for p in r.points:
                if p.report is not None:
                    flags = " ".join(_report_flags(p.report))
                    handle.write(f"# assumptions series={r.series} value={_fmt(p.value)} {flags}\n")
        writer = csv.DictWriter(handle, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        for r in results:
            excluded = ",".join(_fmt(v) for v in r.excluded) or "none"
            handle.write(f"# fit series={r.series} slope={_fmt(r.slope)} "
                         f"intercept={_fmt(r.intercept)} residual={_fmt(r.residual)} "
                         f"excluded={excluded}\n")
    logger.info(f"📁 Wrote {len(rows)} rows to {path}")


def _report_flags(report: AssumptionReport) -> List[str]:
    """The key=value flags of an AssumptionReport, without the detail lines."""
    return [line for line in report.summary_lines() if ": " not in line]


def check_spec(spec: ExperimentSpec) -> List[str]:
    """One assumption-report line per series and sweep point."""
    if spec.kind == ExperimentKind.REDUCTION_SCALING:
        return [f"{spec.name}: reduction_scaling runs no multiscale scheme; nothing to check"]
    lines = []
    for series, label in enumerate(spec.series_labels()):
        for value in spec.sweep_for(series):
            sys_, cfg, s0, T = _point_setup(spec, series, value)
            report = check_assumptions(ledger_for_run(spec.ledger_preset, sys_, s0), cfg, sys_.epsilon)
            lines.append(f"{spec.name} series={label} value={_fmt(value)} "
                         + " ".join(_report_flags(report)))
    return lines


# --- command line ------------------------------------------------------------

class UsageError(SpecError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="experiments.py",
                     description="Projective Integration scaling experiments")
    parser.add_argument("--log-level", default=None, help="logging level (env PI_LOG_LEVEL)")
    parser.add_argument("--metrics-file", default=None,
                        help="write Prometheus text metrics here (env PI_METRICS_FILE)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    for name, help_text in (("run", "run an experiment and write CSV"),
                            ("bounds", "run and write bound values alongside measurements"),
                            ("check", "print the assumption report")):
        cmd = sub.add_parser(name, help=help_text)
        target = cmd.add_mutually_exclusive_group(required=True)
        target.add_argument("spec_file", nargs="?", help="key=value spec file")
        target.add_argument("--preset", choices=sorted(PRESET_TEXT), help="built-in preset")
        if name != "check":
            cmd.add_argument("--output", default=None, help="CSV path")
            cmd.add_argument("--workers", type=int, default=None, help="process pool size (env PI_WORKERS)")
    sub.add_parser("presets", help="list built-in presets")
    return parser


def _resolve_spec(args) -> ExperimentSpec:
    return preset_spec(args.preset) if args.preset else load_spec(args.spec_file)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_SPEC_ERROR

    log_level = (args.log_level or os.getenv("PI_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    metrics_file = args.metrics_file or os.getenv("PI_METRICS_FILE", "")
    metrics = ExperimentMetrics() if metrics_file else None

    if args.command is None:
        sys.stderr.write(build_parser().format_usage())
        return EXIT_SPEC_ERROR

    try:
        if args.command == "presets":
            for name in sorted(PRESET_TEXT):
                spec = preset_spec(name)
                print(f"{name}\t{spec.kind.value}\t{len(spec.sweep)} points\t"
                      f"series: {', '.join(spec.series_labels())}")
            return EXIT_OK

        spec = _resolve_spec(args)
        if args.command == "check":
            for line in check_spec(spec):
                print(line)
            return EXIT_OK

        workers = args.workers if args.workers is not None else int(os.getenv("PI_WORKERS", "1"))
        output_dir = os.getenv("PI_OUTPUT_DIR", ".")
        suffix = "_bounds" if args.command == "bounds" else ""
        output = args.output or os.path.join(output_dir, f"{spec.name}{suffix}.csv")

        results = run_experiment(spec, workers=workers, metrics=metrics)
        write_results_csv(output, spec, results, with_bounds=args.command == "bounds")
        for r in results:
            print(f"{spec.name} {r.series}: slope={r.slope:.4f} residual={r.residual:.3e} -> {output}")
        return EXIT_OK

    except ExperimentError as e:
        logger.error(f"❌ {e}")
        return EXIT_DIVERGED if e.diverged else EXIT_SPEC_ERROR
    except DivergenceError as e:
        logger.error(f"❌ {e}")
        return EXIT_DIVERGED
    except (SpecError, ContractViolation) as e:
        logger.error(f"❌ {e}")
        return EXIT_SPEC_ERROR
    finally:
        if metrics is not None:
            try:
                metrics.write(metrics_file)
            except OSError as e:
                logger.warning(f"⚠️  Could not write metrics to {metrics_file}: {e}")


if __name__ == '__main__':
    sys.exit(main())
