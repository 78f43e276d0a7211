"""
Prometheus metrics for experiment runs.

Metrics live in a private registry and are written in the text exposition
format (node-exporter textfile style) when PI_METRICS_FILE or
--metrics-file is set.
"""

import logging
from typing import Dict, Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, Info, write_to_textfile

logger = logging.getLogger(__name__)


class ExperimentMetrics:
    """Gauges and counters describing scaling-experiment runs."""

    def __init__(self, registry: Optional[CollectorRegistry] = None):
        self.registry = registry if registry is not None else CollectorRegistry()
        self.setup_metrics()

    def setup_metrics(self):
        """Initialize metrics with experiment/series labels."""
        r = self.registry
        self.points_run = Counter('pi_experiment_points_total', 'Sweep points integrated',
                                  ['experiment', 'series'], registry=r)
        self.points_diverged = Counter('pi_experiment_points_diverged_total',
                                       'Sweep points that produced non-finite states',
                                       ['experiment', 'series'], registry=r)
        self.point_error = Gauge('pi_experiment_point_error', 'Measured |E_d| at the final time',
                                 ['experiment', 'series', 'point'], registry=r)
        self.point_bound = Gauge('pi_experiment_point_bound', 'Discretization bound at the final time',
                                 ['experiment', 'series', 'point'], registry=r)
        self.slope = Gauge('pi_experiment_slope', 'Fitted log-log slope', ['experiment', 'series'],
                           registry=r)
        self.residual = Gauge('pi_experiment_fit_residual', 'Max absolute log residual of the fit',
                              ['experiment', 'series'], registry=r)
        self.duration = Gauge('pi_experiment_duration_seconds', 'Wall time of the experiment',
                              ['experiment'], registry=r)
        self.assumptions = Info('pi_experiment_assumptions', 'Assumption report of the run',
                                ['experiment', 'series'], registry=r)

    def record_point(self, experiment: str, series: str, point: int, error: float,
                     bound: Optional[float] = None):
        self.points_run.labels(experiment=experiment, series=series).inc()
        self.point_error.labels(experiment=experiment, series=series, point=str(point)).set(error)
        if bound is not None:
            self.point_bound.labels(experiment=experiment, series=series, point=str(point)).set(bound)

    def record_divergence(self, experiment: str, series: str):
        self.points_diverged.labels(experiment=experiment, series=series).inc()

    def record_fit(self, experiment: str, series: str, slope: float, residual: float):
        self.slope.labels(experiment=experiment, series=series).set(slope)
        self.residual.labels(experiment=experiment, series=series).set(residual)

    def record_assumptions(self, experiment: str, series: str, flags: Dict[str, str]):
        self.assumptions.labels(experiment=experiment, series=series).info(flags)

    def record_duration(self, experiment: str, seconds: float):
        self.duration.labels(experiment=experiment).set(seconds)

    def write(self, path: str):
        write_to_textfile(path, self.registry)
        logger.info(f"📊 Metrics written to {path}")
