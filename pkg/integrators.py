"""
Multiscale integrators

Forward-Euler micro/macro schemes for slow-fast systems:

- Projective Integration (PI), in its extrapolation form and in the weighted
  form that mirrors seamless HMM
- seamless HMM with arbitrary normalized weights
- HMM with the slow variables frozen during the microsolver

plus the two oracles the error analysis needs: a classical RK4 integrator of
the full stiff system and Euler/RK4 integrators of the reduced system.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import AccuracyError, ContractViolation, DivergenceError
from slowfast import MultiscaleSystem, State, as_vector, approx_manifold

logger = logging.getLogger(__name__)

# |sum(w) - 1| allowed for a WeightVector
WEIGHT_NORMALIZATION_TOL = 1e-15
# step-halving agreement required of the oracles
REFERENCE_RTOL = 1e-9
REDUCED_RTOL = 1e-10
# h_ref <= eps / REFERENCE_STEPS_PER_EPS
REFERENCE_STEPS_PER_EPS = 20
# slack when counting how many steps fit in a horizon
_STEP_COUNT_SLACK = 1e-9


class Scheme(str, Enum):
    REFERENCE = "reference"
    REDUCED = "reduced"
    PI = "PI"
    SEAMLESS_HMM = "seamlessHMM"
    HMM = "HMM"


class ReducedOrder(str, Enum):
    EULER1 = "euler1"
    REF4 = "ref4"


@dataclass(frozen=True)
class SchemeConfig:
    """
    Discretization parameters of a micro/macro scheme.

    Args:
        dt_micro: microstep size (delta t)
        dt_macro: macrostep size (Delta T)
        num_micro: number of microsteps M per macrostep
    """
    dt_micro: float
    dt_macro: float
    num_micro: int

    def __post_init__(self):
        if not (self.dt_micro > 0 and math.isfinite(self.dt_micro)):
            raise ContractViolation(f"dt_micro must be positive, got {self.dt_micro}")
        if not (self.dt_macro > 0 and math.isfinite(self.dt_macro)):
            raise ContractViolation(f"dt_macro must be positive, got {self.dt_macro}")
        if int(self.num_micro) != self.num_micro or self.num_micro < 0:
            raise ContractViolation(f"num_micro must be a nonnegative integer, got {self.num_micro}")

    @property
    def t_delta(self) -> float:
        """Time between two PI macrosteps, Delta T + M delta t."""
        return self.dt_macro + self.num_micro * self.dt_micro

    @property
    def micro_span(self) -> float:
        return self.num_micro * self.dt_micro

    def dt_star(self, eps: float, lam: float) -> float:
        """Mirrored microstep 2 eps - lambda delta t."""
        return 2.0 * eps - lam * self.dt_micro


@dataclass(frozen=True)
class WeightVector:
    """Weights W_0..W_M combining microstep samples; they sum to one."""
    w: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.w, dtype=np.float64))
        if arr.ndim != 1 or arr.size == 0:
            raise ContractViolation(f"weights must be a nonempty vector, got shape {arr.shape}")
        total = self.total(arr)
        if abs(total - 1.0) > WEIGHT_NORMALIZATION_TOL:
            raise ContractViolation(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "w", arr)

    @staticmethod
    def total(arr) -> float:
        return math.fsum(float(v) for v in arr)

    @property
    def num_micro(self) -> int:
        return self.w.size - 1

    def __len__(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class MicroBurst:
    """The M+1 states x^{n,0..M}, y^{n,0..M} of one microsolver run."""
    states: Tuple[State, ...]

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.states])

    @property
    def ys(self) -> np.ndarray:
        return np.array([s.y for s in self.states])

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class Trajectory:
    """
    Time-stamped states produced by an integrator.

    `x` is None for reduced-system runs. `bursts` holds one MicroBurst per
    macrostep when micro retention was requested. `failure` is set when the
    run stopped on a non-finite state and the caller asked for the partial
    trajectory instead of an exception.
    """
    times: np.ndarray
    y: np.ndarray
    x: Optional[np.ndarray]
    scheme_tag: Scheme
    config: object = None
    bursts: List[MicroBurst] = field(default_factory=list)
    failure: Optional[str] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(len(self.times), -1)
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=np.float64).reshape(len(self.times), -1)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ContractViolation("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def states(self) -> List[State]:
        if self.x is None:
            raise ContractViolation("reduced trajectories carry no fast variables")
        return [State(self.x[i], self.y[i], float(self.times[i])) for i in range(len(self))]

    def index_at(self, t: float, tol: float) -> int:
        """Index of the sample nearest to t; ContractViolation if farther than tol."""
        i = int(np.searchsorted(self.times, t))
        candidates = [j for j in (i - 1, i) if 0 <= j < len(self.times)]
        best = min(candidates, key=lambda j: abs(self.times[j] - t))
        if abs(self.times[best] - t) > tol:
            raise ContractViolation(
                f"no {self.scheme_tag.value} sample within {tol:.3e} of t={t:.17g} "
                f"(nearest {self.times[best]:.17g})")
        return best

    def y_at(self, t: float, tol: float) -> np.ndarray:
        return self.y[self.index_at(t, tol)]


class _TrajectoryRecorder:
    """Accumulates samples and builds a Trajectory at the end."""

    def __init__(self, scheme: Scheme, config, with_x: bool = True):
        self.scheme = scheme
        self.config = config
        self.with_x = with_x
        self.times: List[float] = []
        self.ys: List[np.ndarray] = []
        self.xs: List[np.ndarray] = []
        self.bursts: List[MicroBurst] = []

    def add(self, t: float, y, x=None):
        self.times.append(float(t))
        self.ys.append(np.array(y, dtype=np.float64))
        if self.with_x:
            self.xs.append(np.array(x, dtype=np.float64))

    def build(self, failure: Optional[str] = None) -> Trajectory:
        return Trajectory(times=np.array(self.times), y=np.array(self.ys),
                          x=np.array(self.xs) if self.with_x else None,
                          scheme_tag=self.scheme, config=self.config,
                          bursts=self.bursts, failure=failure)


def _require_finite(s: State, step_index: int) -> State:
    if not np.all(np.isfinite(s.x)):
        raise DivergenceError(f"fast variables non-finite at step {step_index}",
                              component="x", step_index=step_index)
    if not np.all(np.isfinite(s.y)):
        raise DivergenceError(f"slow variables non-finite at step {step_index}",
                              component="y", step_index=step_index)
    return s


def micro_step(sys: MultiscaleSystem, s: State, dt_micro: float) -> State:
    """
    One forward-Euler step of the full system.

    Both updates read the incoming state (Jacobi, not Gauss-Seidel).
    """
    if not dt_micro > 0:
        raise ContractViolation(f"dt_micro must be positive, got {dt_micro}")
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = s.x - (dt_micro / sys.epsilon) * (sys.lambda_diag * s.x - sys.f(s.y))
        y_new = s.y + dt_micro * sys.g(s.x, s.y)
    new = State(x_new, y_new, s.t + dt_micro)
    if not new.is_finite():
        _require_finite(new, 0)
    return new


def micro_burst(sys: MultiscaleSystem, s: State, cfg: SchemeConfig) -> MicroBurst:
    """Iterate micro_step M times from s; returns all M+1 states."""
    states = [s]
    current = s
    for m in range(cfg.num_micro):
        try:
            current = micro_step(sys, current, cfg.dt_micro)
        except DivergenceError as e:
            raise DivergenceError(f"microstep {m + 1} of {cfg.num_micro}: {e}",
                                  component=e.component, step_index=m + 1,
                                  last_state=states[-1]) from e
        states.append(current)
    return MicroBurst(tuple(states))


def _euler_from(sys: MultiscaleSystem, s: State, h: float, t_new: float) -> State:
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = s.x - (h / sys.epsilon) * (sys.lambda_diag * s.x - sys.f(s.y))
        y_new = s.y + h * sys.g(s.x, s.y)
    return State(x_new, y_new, t_new)


def _checked(new: State, last: State) -> State:
    if not new.is_finite():
        try:
            _require_finite(new, 0)
        except DivergenceError as e:
            e.last_state = last
            raise
    return new


def pi_macro_step(sys: MultiscaleSystem, s: State, cfg: SchemeConfig,
                  burst: Optional[MicroBurst] = None) -> State:
    """
    One PI iteration: M microsteps, then an Euler step of size Delta T from
    the last microstep. Advances t by t_delta.
    """
    burst = burst if burst is not None else micro_burst(sys, s, cfg)
    last = burst.states[-1]
    return _checked(_euler_from(sys, last, cfg.dt_macro, s.t + cfg.t_delta), s)


def pi_macro_step_fd(sys: MultiscaleSystem, s: State, cfg: SchemeConfig) -> State:
    """
    PI macrostep written as the finite-difference extrapolation
    z' = z^{n,M} + Delta T (z^{n,M} - z^{n,M-1}) / delta t. Needs M >= 1.
    """
    if cfg.num_micro < 1:
        raise ContractViolation("finite-difference PI needs at least one microstep")
    burst = micro_burst(sys, s, cfg)
    last, prev = burst.states[-1], burst.states[-2]
    ratio = cfg.dt_macro / cfg.dt_micro
    with np.errstate(over="ignore", invalid="ignore"):
        new = State(last.x + ratio * (last.x - prev.x),
                    last.y + ratio * (last.y - prev.y),
                    s.t + cfg.t_delta)
    return _checked(new, s)


def pi_weights(cfg: SchemeConfig) -> WeightVector:
    """W_m = dt/t_delta for m < M, W_M = Delta T/t_delta."""
    t_delta = cfg.t_delta
    w = np.full(cfg.num_micro + 1, cfg.dt_micro / t_delta)
    w[-1] = cfg.dt_macro / t_delta
    return WeightVector(w)


def hmm_endpoint_weights(M: int) -> WeightVector:
    """All weight on the last microstep."""
    if int(M) != M or M < 0:
        raise ContractViolation(f"M must be a nonnegative integer, got {M}")
    w = np.zeros(int(M) + 1)
    w[-1] = 1.0
    return WeightVector(w)


def _check_weights(w: WeightVector, cfg: SchemeConfig):
    if len(w) != cfg.num_micro + 1:
        raise ContractViolation(
            f"weight vector has {len(w)} entries, expected M+1 = {cfg.num_micro + 1}")


def slow_field_estimate(sys: MultiscaleSystem, burst: MicroBurst, w: WeightVector) -> np.ndarray:
    """g~(x^n, y^n) = sum_m W_m g(x^{n,m}, y^{n,m})."""
    if len(w) != len(burst):
        raise ContractViolation(f"{len(w)} weights for a burst of {len(burst)} states")
    total = np.zeros(sys.slow_dim)
    for wm, st in zip(w.w, burst.states):
        if wm != 0.0:
            total = total + wm * sys.g(st.x, st.y)
    return total


def fast_residual_estimate(sys: MultiscaleSystem, burst: MicroBurst, w: WeightVector) -> np.ndarray:
    """sum_m W_m (Lambda x^{n,m} - f(y^{n,m}))."""
    if len(w) != len(burst):
        raise ContractViolation(f"{len(w)} weights for a burst of {len(burst)} states")
    total = np.zeros(sys.fast_dim)
    for wm, st in zip(w.w, burst.states):
        if wm != 0.0:
            total = total + wm * (sys.lambda_diag * st.x - sys.f(st.y))
    return total


def _weighted_macro(sys: MultiscaleSystem, s: State, burst: MicroBurst,
                    w: WeightVector, step: float) -> State:
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = s.x - (step / sys.epsilon) * fast_residual_estimate(sys, burst, w)
        y_new = s.y + step * slow_field_estimate(sys, burst, w)
    return _checked(State(x_new, y_new, s.t + step), s)


def pi_macro_step_weighted(sys: MultiscaleSystem, s: State, cfg: SchemeConfig,
                           burst: Optional[MicroBurst] = None) -> State:
    """PI in the seamless-HMM form: macrostep t_delta from (x^n, y^n) with PI weights."""
    burst = burst if burst is not None else micro_burst(sys, s, cfg)
    return _weighted_macro(sys, s, burst, pi_weights(cfg), cfg.t_delta)


def shmm_macro_step(sys: MultiscaleSystem, s: State, cfg: SchemeConfig, w: WeightVector,
                    burst: Optional[MicroBurst] = None) -> State:
    """
    Seamless HMM: the burst only estimates g~; the macrostep of size
    Delta T starts from (x^n, y^n) and physical time advances by Delta T.
    """
    _check_weights(w, cfg)
    burst = burst if burst is not None else micro_burst(sys, s, cfg)
    return _weighted_macro(sys, s, burst, w, cfg.dt_macro)


def frozen_micro_burst(sys: MultiscaleSystem, s: State, cfg: SchemeConfig) -> MicroBurst:
    """HMM microsolver: relax x with y held at y^n."""
    f_frozen = sys.f(s.y)
    ratio = cfg.dt_micro / sys.epsilon
    states = [s]
    x = s.x
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(cfg.num_micro):
            x = x - ratio * (sys.lambda_diag * x - f_frozen)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"frozen microstep {m + 1} produced non-finite x",
                                      component="x", step_index=m + 1, last_state=states[-1])
            states.append(State(x, s.y, s.t + (m + 1) * cfg.dt_micro))
    return MicroBurst(tuple(states))


def frozen_field_estimate(sys: MultiscaleSystem, burst: MicroBurst, w: WeightVector) -> np.ndarray:
    """g^(x^n, y^n) = sum_m W_m g(x^{n,m}, y^n)."""
    return slow_field_estimate(sys, burst, w)


def hmm_macro_step(sys: MultiscaleSystem, s: State, cfg: SchemeConfig, w: WeightVector,
                   burst: Optional[MicroBurst] = None) -> State:
    """HMM: frozen-slow microsolver, y' = y^n + Delta T g^, x' = x^{n,M}."""
    _check_weights(w, cfg)
    burst = burst if burst is not None else frozen_micro_burst(sys, s, cfg)
    with np.errstate(over="ignore", invalid="ignore"):
        y_new = s.y + cfg.dt_macro * frozen_field_estimate(sys, burst, w)
    return _checked(State(burst.states[-1].x, y_new, s.t + cfg.dt_macro), s)


def macro_period(cfg: SchemeConfig, scheme: Scheme) -> float:
    """Physical time advanced by one iteration of the scheme."""
    return cfg.t_delta if scheme == Scheme.PI else cfg.dt_macro


def steps_within(horizon: float, step: float) -> int:
    """Largest n with n * step <= horizon, up to rounding slack."""
    return max(0, int(math.floor(horizon / step + _STEP_COUNT_SLACK)))


def integrate_multiscale(sys: MultiscaleSystem, s0: State, cfg: SchemeConfig,
                         scheme: Scheme, w: Optional[WeightVector] = None,
                         T: float = 1.0, keep_micro: bool = False,
                         on_divergence: str = "raise") -> Trajectory:
    """
    Loop the chosen macrostep from s0 until the next step would pass T.

    Timestamps are t0 + n * period, computed directly rather than accumulated.
    On a non-finite state the run stops: with on_divergence='raise' a
    DivergenceError carrying the partial trajectory is raised, with 'return'
    the partial trajectory is returned with `failure` set.
    """
    scheme = Scheme(scheme)
    if scheme not in (Scheme.PI, Scheme.SEAMLESS_HMM, Scheme.HMM):
        raise ContractViolation(f"integrate_multiscale does not run {scheme.value}")
    if scheme != Scheme.PI and w is None:
        raise ContractViolation(f"{scheme.value} needs a weight vector")
    if w is not None:
        _check_weights(w, cfg)
    if not T > 0:
        raise ContractViolation(f"T must be positive, got {T}")
    if on_divergence not in ("raise", "return"):
        raise ContractViolation(f"on_divergence must be 'raise' or 'return', got {on_divergence!r}")

    s = State.for_system(sys, s0.x, s0.y, s0.t)
    period = macro_period(cfg, scheme)
    n_steps = steps_within(T - s.t, period)
    recorder = _TrajectoryRecorder(scheme, cfg)
    recorder.add(s.t, s.y, s.x)
    logger.debug(f"{scheme.value} on {sys.name}: {n_steps} macrosteps of {period:.6g}")

    for n in range(n_steps):
        try:
            if scheme == Scheme.HMM:
                burst = frozen_micro_burst(sys, s, cfg)
                new = hmm_macro_step(sys, s, cfg, w, burst=burst)
            else:
                burst = micro_burst(sys, s, cfg)
                if scheme == Scheme.PI:
                    new = pi_macro_step(sys, s, cfg, burst=burst)
                else:
                    new = shmm_macro_step(sys, s, cfg, w, burst=burst)
        except DivergenceError as e:
            message = f"{scheme.value} diverged in macrostep {n + 1}: {e}"
            logger.warning(message)
            partial = recorder.build(failure=message)
            if on_divergence == "return":
                return partial
            raise DivergenceError(message, component=e.component, step_index=n + 1,
                                  last_state=s, trajectory=partial) from e
        if keep_micro:
            recorder.bursts.append(burst)
        s = replace(new, t=s0.t + (n + 1) * period)
        recorder.add(s.t, s.y, s.x)

    return recorder.build()


# --- oracles -----------------------------------------------------------------

Rhs = Callable[[np.ndarray], np.ndarray]


def _rk4_run(rhs: Rhs, z0: np.ndarray, t0: float, T: float, h: float,
             sample_times: Optional[Sequence[float]] = None) -> Tuple[List[float], List[np.ndarray]]:
    """
    Classical RK4 from t0 to T with steps no larger than h.

    Each interval between consecutive breakpoints (sample times and T) is cut
    into equal substeps so the run lands on every breakpoint exactly. Without
    sample times every step is recorded; with them only t0, the sample times
    and T are.
    """
    if sample_times is None:
        breakpoints = [T]
        record_all = True
    else:
        inside = sorted({float(t) for t in sample_times if t0 < t < T})
        breakpoints = inside + [T]
        record_all = False

    times = [t0]
    states = [z0.copy()]
    z = z0.copy()
    a = t0
    with np.errstate(over="ignore", invalid="ignore"):
        for b in breakpoints:
            span = b - a
            k = max(1, int(math.ceil(span / h * (1.0 - 1e-12))))
            hs = span / k
            for i in range(k):
                k1 = rhs(z)
                k2 = rhs(z + 0.5 * hs * k1)
                k3 = rhs(z + 0.5 * hs * k2)
                k4 = rhs(z + hs * k3)
                z = z + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if record_all and i < k - 1:
                    times.append(a + (i + 1) * hs)
                    states.append(z)
            if not np.all(np.isfinite(z)):
                raise DivergenceError(f"reference solution non-finite before t={b:.6g}",
                                      component="state", step_index=len(times))
            times.append(b)
            states.append(z)
            a = b
    return times, states


def relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    """max|a-b| / max|b|, 0 when identical."""
    diff = float(np.max(np.abs(a - b)))
    if diff == 0.0:
        return 0.0
    scale = float(np.max(np.abs(b)))
    return diff / scale if scale > 0 else math.inf


def _halving_check(rhs: Rhs, z0: np.ndarray, t0: float, T: float, h: float,
                   z_final: np.ndarray, sl: slice, rtol: float, label: str):
    _, half = _rk4_run(rhs, z0, t0, T, h / 2.0)
    gap = relative_gap(z_final[sl], half[-1][sl])
    if gap > rtol:
        raise AccuracyError(
            f"{label}: step halving changed the result by {gap:.3e} relative "
            f"(> {rtol:.0e}); use a step smaller than {h:.3e}", discrepancy=gap, step=h)
    logger.debug(f"{label}: step-halving gap {gap:.3e} at h={h:.3e}")
    return gap


def full_rhs(sys: MultiscaleSystem) -> Rhs:
    """Right-hand side of the full system on the stacked vector z = (x, y)."""
    m = sys.fast_dim
    lam = sys.lambda_diag
    eps = sys.epsilon

    def rhs(z: np.ndarray) -> np.ndarray:
        x, y = z[:m], z[m:]
        return np.concatenate(((sys.f(y) - lam * x) / eps, sys.g(x, y)))

    return rhs


def reduced_rhs(sys: MultiscaleSystem) -> Rhs:
    """Right-hand side G(Y) of the reduced system, without shape checks."""
    lam = sys.lambda_diag

    def rhs(Y: np.ndarray) -> np.ndarray:
        return sys.g(sys.f(Y) / lam, Y)

    return rhs


def integrate_reference(sys: MultiscaleSystem, s0: State, h_ref: float, T: float,
                        sample_times: Optional[Sequence[float]] = None,
                        validate: bool = True) -> Trajectory:
    """
    RK4 reference solution of the full system at fixed step h_ref <= eps/20.

    With validate=True the run is repeated at h_ref/2 and the slow variables
    at T must agree to 1e-9 relative, else AccuracyError.
    """
    limit = sys.epsilon / REFERENCE_STEPS_PER_EPS
    if not 0 < h_ref <= limit * (1 + 1e-12):
        raise ContractViolation(f"h_ref={h_ref:.3e} must lie in (0, eps/20 = {limit:.3e}]")
    if not T > s0.t:
        raise ContractViolation(f"T={T} must exceed the initial time {s0.t}")
    s0 = State.for_system(sys, s0.x, s0.y, s0.t)
    rhs = full_rhs(sys)
    z0 = np.concatenate((s0.x, s0.y))
    times, states = _rk4_run(rhs, z0, s0.t, T, h_ref, sample_times)
    if validate:
        _halving_check(rhs, z0, s0.t, T, h_ref, states[-1], slice(sys.fast_dim, None),
                       REFERENCE_RTOL, f"reference solution of {sys.name}")
    zs = np.array(states)
    return Trajectory(times=np.array(times), y=zs[:, sys.fast_dim:], x=zs[:, :sys.fast_dim],
                      scheme_tag=Scheme.REFERENCE, config=h_ref)


def euler_reduced_path(sys: MultiscaleSystem, eta, dt: float, M: int) -> np.ndarray:
    """phi_eta^0..phi_eta^M: M forward-Euler steps of size dt on the reduced field."""
    eta = as_vector(eta, sys.slow_dim, "eta")
    G = reduced_rhs(sys)
    path = [eta]
    phi = eta
    for _ in range(M):
        phi = phi + dt * G(phi)
        path.append(phi)
    return np.array(path)


def reduced_weighted_field(sys: MultiscaleSystem, eta, cfg: SchemeConfig,
                           w: Optional[WeightVector] = None) -> np.ndarray:
    """G~(eta) = sum_m W_m G(phi_eta^m), PI weights unless w is given."""
    w = w if w is not None else pi_weights(cfg)
    _check_weights(w, cfg)
    G = reduced_rhs(sys)
    path = euler_reduced_path(sys, eta, cfg.dt_micro, cfg.num_micro)
    return sum(wm * G(phi) for wm, phi in zip(w.w, path))


def integrate_reduced(sys: MultiscaleSystem, Y0, h: float, T: float,
                      order: ReducedOrder = ReducedOrder.EULER1,
                      sample_times: Optional[Sequence[float]] = None,
                      validate: bool = True, t0: float = 0.0) -> Trajectory:
    """
    Integrate dY/dt = G(Y).

    euler1 is the plain Euler recursion phi^m = phi^{m-1} + h G(phi^{m-1})
    sampled at t0 + m h. ref4 is RK4 landing exactly on T (and on any
    sample_times), validated by step halving to 1e-10 relative.
    """
    order = ReducedOrder(order)
    if not h > 0:
        raise ContractViolation(f"h must be positive, got {h}")
    if not T > t0:
        raise ContractViolation(f"T={T} must exceed t0={t0}")
    Y0 = as_vector(Y0, sys.slow_dim, "Y0")

    if order == ReducedOrder.EULER1:
        steps = steps_within(T - t0, h)
        path = euler_reduced_path(sys, Y0, h, steps)
        if not np.all(np.isfinite(path)):
            raise DivergenceError("reduced Euler path non-finite", component="y")
        times = t0 + h * np.arange(steps + 1)
        return Trajectory(times=times, y=path, x=None, scheme_tag=Scheme.REDUCED, config=h)

    rhs = reduced_rhs(sys)
    times, states = _rk4_run(rhs, Y0, t0, T, h, sample_times)
    if validate:
        _halving_check(rhs, Y0, t0, T, h, states[-1], slice(None), REDUCED_RTOL,
                       f"reduced solution of {sys.name}")
    return Trajectory(times=np.array(times), y=np.array(states), x=None,
                      scheme_tag=Scheme.REDUCED, config=h)


def on_manifold_state(sys: MultiscaleSystem, y0, offset=0.0, t: float = 0.0) -> State:
    """State with x = f_bar(y0) + offset."""
    y0 = as_vector(y0, sys.slow_dim, "y0")
    return State.for_system(sys, approx_manifold(sys, y0) + offset, y0, t)
