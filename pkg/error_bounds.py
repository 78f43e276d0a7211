"""
Error bounds for Projective Integration

Evaluates the rigorous a-priori bounds for PI on slow-fast systems
(microstep manifold distance, drift of |d^n| over macrosteps, the reduction
error, the discretization error with explicit constants, and their sum) and
measures the realized errors of a run against reference oracles, so the two
can be compared. All comparisons use the infinity norm.
"""

import logging
import math
import numbers
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from exceptions import BoundInapplicableError, ContractViolation, DomainError
from integrators import SchemeConfig, Trajectory, reduced_rhs
from slowfast import MultiscaleSystem, State, manifold_distance

logger = logging.getLogger(__name__)

LEDGER_SLACK = 1e-12


class Branch(str, Enum):
    SMALL_DT = "small_dt"   # dt <= 2 eps / (lambda + 1)
    LARGE_DT = "large_dt"   # 2 eps / (lambda + 1) < dt < 2 eps / lambda


class ErrorKind(str, Enum):
    E_TOTAL = "E_total"
    E_C = "E_c"
    E_D = "E_d"
    D_NM = "d_nm"
    D_N0 = "d_n0"
    D_N = "d_n"


@dataclass(frozen=True)
class ConstantsLedger:
    """
    Lipschitz and bound constants feeding the bound evaluators.

    L_G defaults to L_g (1 + L_f) and C_G to C_g. c0x is |d_eps(0)|, c0y is
    |y_eps(0) - Y(0)| / eps.
    """
    L_f: float
    L_g: float
    C_f: float
    C_g: float
    C_star: float
    lambda_max: float = 1.0
    L_G: Optional[float] = None
    C_G: Optional[float] = None
    c0x: float = 0.0
    c0y: float = 0.0

    def __post_init__(self):
        for name in ("L_f", "L_g", "C_f", "C_g", "C_star", "c0x", "c0y"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ContractViolation(f"{name} must be finite and nonnegative, got {value}")
        if not self.lambda_max >= 1:
            raise ContractViolation(f"lambda_max must be >= 1, got {self.lambda_max}")
        if self.L_G is None:
            object.__setattr__(self, "L_G", self.L_g * (1 + self.L_f))
        if self.C_G is None:
            object.__setattr__(self, "C_G", self.C_g)
        if self.L_G < 0 or self.L_G > self.L_g * (1 + self.L_f) + LEDGER_SLACK:
            raise ContractViolation(f"L_G={self.L_G} exceeds L_g(1+L_f)={self.L_g * (1 + self.L_f)}")
        if self.C_G < 0 or self.C_G > self.C_g + LEDGER_SLACK:
            raise ContractViolation(f"C_G={self.C_G} exceeds C_g={self.C_g}")

    def with_offsets(self, c0x: float, c0y: float) -> "ConstantsLedger":
        return ConstantsLedger(self.L_f, self.L_g, self.C_f, self.C_g, self.C_star,
                               self.lambda_max, self.L_G, self.C_G, c0x, c0y)


# Constants of the three toy-system experiments
LEDGER_PRESETS: Dict[str, ConstantsLedger] = {
    "fig2": ConstantsLedger(L_f=0.2, L_g=2.0, C_f=1.0, C_g=1.0, C_star=2.0),
    "fig3": ConstantsLedger(L_f=1.0, L_g=2.0, C_f=1.0, C_g=7.0, C_star=6.0),
    "fig4": ConstantsLedger(L_f=1.0, L_g=1.0, C_f=1.0, C_g=290.0, C_star=6.0),
}


def ledger_for_run(preset: str, sys: MultiscaleSystem, s0: State, Y0=None) -> ConstantsLedger:
    """Preset constants with c0x, c0y taken from the run's initial state."""
    if preset not in LEDGER_PRESETS:
        raise ContractViolation(f"unknown ledger preset {preset!r}; known: {sorted(LEDGER_PRESETS)}")
    base = LEDGER_PRESETS[preset]
    Y0 = s0.y if Y0 is None else np.atleast_1d(np.asarray(Y0, dtype=np.float64))
    c0x = manifold_distance(sys, s0.x, s0.y)
    c0y = float(np.max(np.abs(s0.y - Y0))) / sys.epsilon
    ledger = ConstantsLedger(base.L_f, base.L_g, base.C_f, base.C_g, base.C_star,
                             sys.lambda_max, None, None, c0x, c0y)
    return ledger


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the A6-A8 checks for one (ledger, config, eps)."""
    a6_ok: bool
    a7_ok: bool
    a8_ok: bool
    branch: Branch
    dt_star: float
    dt_star_valid: bool
    details: Dict[str, str] = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.a6_ok and self.a7_ok and self.a8_ok and self.dt_star_valid

    def summary_lines(self) -> List[str]:
        lines = [f"a6_ok={str(self.a6_ok).lower()}", f"a7_ok={str(self.a7_ok).lower()}",
                 f"a8_ok={str(self.a8_ok).lower()}",
                 f"branch={self.branch.value}", f"dt_star={self.dt_star:.17g}",
                 f"dt_star_valid={str(self.dt_star_valid).lower()}"]
        lines.extend(f"{key}: {text}" for key, text in sorted(self.details.items()))
        return lines


def branch_threshold(eps: float, lam: float) -> float:
    return 2.0 * eps / (lam + 1.0)


def classify_branch(dt_micro: float, eps: float, lam: float) -> Branch:
    """Small branch up to and including 2 eps/(lambda+1)."""
    return Branch.SMALL_DT if dt_micro <= branch_threshold(eps, lam) else Branch.LARGE_DT


def _require_bound_domain(dt_micro: float, eps: float, lam: float) -> Branch:
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if not (0 < dt_micro < 2.0 * eps / lam):
        raise DomainError(
            f"dt_micro={dt_micro:.6g} outside (0, 2 eps/lambda = {2.0 * eps / lam:.6g})")
    return classify_branch(dt_micro, eps, lam)


def _decay_step(dt_micro: float, eps: float, lam: float, branch: Branch) -> float:
    """The microstep entering the contraction factor: dt or dt*."""
    return dt_micro if branch == Branch.SMALL_DT else 2.0 * eps - lam * dt_micro


def _branch_prefactor(dt_micro: float, eps: float, lam: float, branch: Branch) -> float:
    """1 on the small branch, dt/dt* on the large one."""
    if branch == Branch.SMALL_DT:
        return 1.0
    return dt_micro / (2.0 * eps - lam * dt_micro)


def check_assumptions(c: ConstantsLedger, cfg: SchemeConfig, eps: float) -> AssumptionReport:
    """
    Evaluate A6 (resolution), A7 (short micro span) and A8 (macro stability)
    literally. Violations are reported, never raised.
    """
    if not eps > 0:
        raise ContractViolation(f"eps must be positive, got {eps}")
    lam = c.lambda_max
    dt, DT, M = cfg.dt_micro, cfg.dt_macro, cfg.num_micro
    details: Dict[str, str] = {}

    resolve = 2.0 * eps / lam
    a6 = 0 < dt <= resolve < DT
    details["A6"] = f"0 < dt={dt:.6g} <= 2eps/lambda={resolve:.6g} < DT={DT:.6g}: {a6}"

    span = c.L_g * (1 + c.L_f) * M * dt
    a7 = span <= 1.0
    details["A7"] = f"L_g(1+L_f) M dt = {span:.6g} <= 1: {a7}"

    branch = classify_branch(dt, eps, lam)
    dt_star = cfg.dt_star(eps, lam)
    if branch == Branch.SMALL_DT:
        dt_star_valid = True
        decay = dt
    else:
        dt_star_valid = 0 < dt_star < branch_threshold(eps, lam)
        decay = dt_star
    if dt_star_valid:
        lhs = DT * math.exp(-M * decay / eps)
        a8 = lhs < eps / lam
        details["A8"] = (f"DT exp(-M {'dt' if branch == Branch.SMALL_DT else 'dt*'}/eps) = "
                         f"{lhs:.6g} < eps/lambda = {eps / lam:.6g}: {a8}")
    else:
        a8 = False
        details["A8"] = f"dt*={dt_star:.6g} outside (0, 2eps/(lambda+1)); dt >= 2eps/lambda"

    report = AssumptionReport(a6, a7, a8, branch, dt_star, dt_star_valid, details)
    for key in ("A6", "A7", "A8"):
        if not getattr(report, f"{key.lower()}_ok"):
            logger.debug(f"assumption violated: {details[key]}")
    return report


def lemma1_bound(c: ConstantsLedger, eps: float, dt_micro: float, m: int, d0: float,
                 refined: bool = False) -> float:
    """
    Bound on |d^{n,m}| during the microsolver.

    refined=True keeps the factor 1 - (1 - dt/eps)^m on the drift term, which
    stays finite as dt* -> 0.
    """
    if m < 0 or d0 < 0:
        raise ContractViolation(f"need m >= 0 and d0 >= 0, got m={m}, d0={d0}")
    lam = c.lambda_max
    branch = _require_bound_domain(dt_micro, eps, lam)
    rate = 1.0 - _decay_step(dt_micro, eps, lam, branch) / eps
    contraction = rate ** m
    drift = eps * c.L_f * c.C_g
    if refined:
        if branch == Branch.LARGE_DT:
            # dt/dt* * eps * (1 - rate^m) = dt * (1 - rate^m) / (1 - rate)
            drift = c.L_f * c.C_g * dt_micro * _geometric_sum(rate, m)
        else:
            drift *= 1.0 - contraction
        return contraction * d0 + drift
    return contraction * d0 + _branch_prefactor(dt_micro, eps, lam, branch) * drift


def _geometric_sum(q: float, n: int) -> float:
    """sum_{k=0}^{n-1} q^k."""
    if n <= 0:
        return 0.0
    if q == 1.0:
        return float(n)
    return (1.0 - q ** n) / (1.0 - q)


def lemma5_dn_bound(c: ConstantsLedger, cfg: SchemeConfig, eps: float, d00: float,
                    n: Optional[int] = None) -> float:
    """
    Uniform bound on |d^n| = max_i |d^{i,0}|.

    The uniform form needs A8 (positive denominator). With n given the
    finite-horizon geometric-sum form is returned instead; it is finite even
    when A8 fails.
    """
    if d00 < 0:
        raise ContractViolation(f"d00 must be nonnegative, got {d00}")
    lam = c.lambda_max
    branch = _require_bound_domain(cfg.dt_micro, eps, lam)
    decay = _decay_step(cfg.dt_micro, eps, lam, branch)
    pref = _branch_prefactor(cfg.dt_micro, eps, lam, branch)
    DT, M = cfg.dt_macro, cfg.num_micro
    damped = DT * lam * math.exp(-M * decay / eps)
    kick = c.L_f * c.C_g * (1.0 + lam * pref) * DT

    if n is not None:
        if n < 1:
            raise ContractViolation(f"n must be >= 1, got {n}")
        q = damped / eps
        return max(1.0, q ** (n - 1)) * d00 + kick * _geometric_sum(q, n)

    denominator = eps - damped
    if denominator <= 0:
        raise BoundInapplicableError(
            f"A8 violated: eps - DT lambda exp(-M dt/eps) = {denominator:.3e} <= 0")
    return d00 + eps * kick / denominator


def theorem2_reduction_bound(c: ConstantsLedger, eps: float, t: float) -> float:
    """C_1 eps with C_1 = max(c0y eps, L_f L_g C_g t, L_g c0x) exp(L_g (1+L_f) t)."""
    if t < 0:
        raise ContractViolation(f"t must be nonnegative, got {t}")
    if not eps > 0:
        raise ContractViolation(f"eps must be positive, got {eps}")
    c1 = max(c.c0y * eps, c.L_f * c.L_g * c.C_g * t, c.L_g * c.c0x)
    return c1 * math.exp(c.L_g * (1 + c.L_f) * t) * eps


def _growth(L_G: float, horizon: float) -> float:
    """exp(horizon L_G) / L_G, with its L_G -> 0 limit of the underlying sum."""
    if L_G == 0:
        return horizon
    return math.exp(horizon * L_G) / L_G


def theorem4_discretization_bound(c: ConstantsLedger, cfg: SchemeConfig, eps: float,
                                  n: int, dn: float) -> float:
    """
    Explicit-constant bound on |E_d^n| = |y^n - Y(t^n)|:

        3 exp(n t_D L_G)/L_G * pref * { C* t_D
            + L_g (eps/t_D + L_g(1+L_f) eps + exp(-M dt~/eps)) |d^n|
            + L_g L_f C_g eps }

    with dt~ = dt, pref = 1 on the small branch and dt~ = dt*, pref = dt/dt*
    on the large one.
    """
    if n < 1 or dn < 0:
        raise ContractViolation(f"need n >= 1 and dn >= 0, got n={n}, dn={dn}")
    lam = c.lambda_max
    branch = _require_bound_domain(cfg.dt_micro, eps, lam)
    t_delta = cfg.t_delta
    horizon = n * t_delta
    if not math.isfinite(horizon):
        raise DomainError(f"n t_delta = {horizon} is not finite")
    decay = _decay_step(cfg.dt_micro, eps, lam, branch)
    pref = _branch_prefactor(cfg.dt_micro, eps, lam, branch)
    memory = eps / t_delta + c.L_g * (1 + c.L_f) * eps + math.exp(-cfg.num_micro * decay / eps)
    inner = c.C_star * t_delta + c.L_g * memory * dn + c.L_g * c.L_f * c.C_g * eps
    return 3.0 * _growth(c.L_G, horizon) * pref * inner


def total_bound_parts(c: ConstantsLedger, cfg: SchemeConfig, eps: float,
                      n: int, dn: float) -> Tuple[float, float]:
    """(reduction bound at t = n t_delta, discretization bound)."""
    return (theorem2_reduction_bound(c, eps, n * cfg.t_delta),
            theorem4_discretization_bound(c, cfg, eps, n, dn))


def theorem1_total_bound(c: ConstantsLedger, cfg: SchemeConfig, eps: float,
                         n: int, dn: float) -> float:
    """Bound on E^n = |y_eps(t^n) - y^n|: reduction plus discretization."""
    reduction, discretization = total_bound_parts(c, cfg, eps, n, dn)
    return reduction + discretization


def gtilde_gap_bound(c: ConstantsLedger, cfg: SchemeConfig, eps: float, d_n0: float) -> float:
    """Bound on |g~(x^n, y^n) - G~(y^n)| for one macrostep (diagnostic only)."""
    lam = c.lambda_max
    branch = _require_bound_domain(cfg.dt_micro, eps, lam)
    decay = _decay_step(cfg.dt_micro, eps, lam, branch)
    pref = _branch_prefactor(cfg.dt_micro, eps, lam, branch)
    memory = pref * (eps / cfg.t_delta + 3.0 * c.L_g * (1 + c.L_f) * eps)
    return (c.L_g * (memory + math.exp(-cfg.num_micro * decay / eps)) * d_n0
            + 3.0 * pref * c.L_g * c.L_f * c.C_g * eps)


# --- measured errors ---------------------------------------------------------

@dataclass(frozen=True)
class ErrorSeries:
    """Measured error values at increasing times."""
    times: np.ndarray
    values: np.ndarray
    kind: ErrorKind

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape:
            raise ContractViolation(f"{self.kind.value}: {times.size} times vs {values.size} values")
        if not np.all(np.isfinite(values)):
            raise ContractViolation(f"{self.kind.value}: non-finite error values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def final(self) -> float:
        return float(self.values[-1])

    @property
    def max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def __len__(self) -> int:
        return self.values.size


def _match_tolerance(oracle: Trajectory) -> float:
    step = float(oracle.config) if isinstance(oracle.config, numbers.Real) else None
    if step is None:
        return 1e-12 * max(1.0, abs(oracle.final_time))
    return 1e-3 * step


def _slow_gap(traj: Trajectory, oracle: Trajectory, times: np.ndarray) -> np.ndarray:
    tol = _match_tolerance(oracle)
    ys = oracle.y
    return np.array([float(np.max(np.abs(ys[oracle.index_at(t, tol)] - traj.y[i])))
                     for i, t in enumerate(times)])


def _oracle_gap(a: Trajectory, b: Trajectory, times: np.ndarray) -> np.ndarray:
    tol_a, tol_b = _match_tolerance(a), _match_tolerance(b)
    return np.array([float(np.max(np.abs(a.y_at(t, tol_a) - b.y_at(t, tol_b)))) for t in times])


def macro_manifold_distances(sys: MultiscaleSystem, traj: Trajectory) -> np.ndarray:
    """d^{n,0} = |x^n - f_bar(y^n)| at every macro state."""
    if traj.x is None:
        raise ContractViolation("trajectory carries no fast variables")
    return np.array([manifold_distance(sys, traj.x[i], traj.y[i]) for i in range(len(traj))])


def running_max_distance(d_n0: np.ndarray) -> np.ndarray:
    """|d^n| = max_{0<=i<=n-1} d^{i,0} for n = 1..N."""
    return np.maximum.accumulate(d_n0)[:-1] if d_n0.size > 1 else np.array([])


def measure_errors(sys: MultiscaleSystem, traj: Trajectory,
                   oracle_full: Optional[Trajectory] = None,
                   oracle_reduced: Optional[Trajectory] = None) -> Dict[ErrorKind, ErrorSeries]:
    """
    Measure E^n, E_c^n, E_d^n against the oracles at the trajectory's macro
    times, plus d^{n,0}, its running max |d^n| and (with retained bursts)
    every d^{n,m}. Oracles must carry samples at those times.
    """
    times = traj.times
    out: Dict[ErrorKind, ErrorSeries] = {}
    if oracle_full is not None:
        out[ErrorKind.E_TOTAL] = ErrorSeries(times, _slow_gap(traj, oracle_full, times),
                                             ErrorKind.E_TOTAL)
    if oracle_reduced is not None:
        out[ErrorKind.E_D] = ErrorSeries(times, _slow_gap(traj, oracle_reduced, times),
                                         ErrorKind.E_D)
    if oracle_full is not None and oracle_reduced is not None:
        out[ErrorKind.E_C] = ErrorSeries(times, _oracle_gap(oracle_full, oracle_reduced, times),
                                         ErrorKind.E_C)

    if traj.x is not None:
        d_n0 = macro_manifold_distances(sys, traj)
        out[ErrorKind.D_N0] = ErrorSeries(times, d_n0, ErrorKind.D_N0)
        out[ErrorKind.D_N] = ErrorSeries(times[1:], running_max_distance(d_n0), ErrorKind.D_N)

    if traj.bursts:
        burst_times, burst_values = [], []
        for burst in traj.bursts:
            for st in burst.states:
                burst_times.append(st.t)
                burst_values.append(manifold_distance(sys, st.x, st.y))
        out[ErrorKind.D_NM] = ErrorSeries(np.array(burst_times), np.array(burst_values),
                                          ErrorKind.D_NM)
    return out


# --- constant estimation -----------------------------------------------------

def _jacobian(fun, point: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for j in range(point.size):
        step = np.zeros_like(point)
        step[j] = h
        cols.append((np.atleast_1d(fun(point + step)) - np.atleast_1d(fun(point - step))) / (2 * h))
    return np.column_stack(cols)


def _inf_operator_norm(J: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(J), axis=1)))


def estimate_constants(sys: MultiscaleSystem, x_box: Tuple[np.ndarray, np.ndarray],
                       y_box: Tuple[np.ndarray, np.ndarray], samples: int = 2000,
                       seed: int = 0, h: float = 1e-6) -> ConstantsLedger:
    """
    Sample f, g and G on a box and estimate the ledger constants by central
    differences. An estimate, not a certificate; it never replaces a preset.
    """
    rng = np.random.default_rng(seed)
    x_lo, x_hi = (np.broadcast_to(np.asarray(v, dtype=np.float64), (sys.fast_dim,)) for v in x_box)
    y_lo, y_hi = (np.broadcast_to(np.asarray(v, dtype=np.float64), (sys.slow_dim,)) for v in y_box)
    G = reduced_rhs(sys)

    L_f = L_g = C_f = C_g = L_G = C_G = C_star = 0.0
    for _ in range(samples):
        x = rng.uniform(x_lo, x_hi)
        y = rng.uniform(y_lo, y_hi)
        fy = sys.f(y)
        C_f = max(C_f, float(np.max(np.abs(fy))))
        C_g = max(C_g, float(np.max(np.abs(sys.g(x, y)))))
        L_f = max(L_f, _inf_operator_norm(_jacobian(sys.f, y, h)))
        L_g = max(L_g,
                  _inf_operator_norm(_jacobian(lambda xx: sys.g(xx, y), x, h)),
                  _inf_operator_norm(_jacobian(lambda yy: sys.g(x, yy), y, h)))
        DG = _jacobian(G, y, h)
        Gy = G(y)
        L_G = max(L_G, _inf_operator_norm(DG))
        C_G = max(C_G, float(np.max(np.abs(Gy))))
        C_star = max(C_star, float(np.max(np.abs(DG @ Gy))))

    L_G = min(L_G, L_g * (1 + L_f))
    C_G = min(C_G, C_g)
    logger.info(f"estimated constants on {sys.name}: L_f={L_f:.4g} L_g={L_g:.4g} "
                f"C_f={C_f:.4g} C_g={C_g:.4g} C*={C_star:.4g}")
    return ConstantsLedger(L_f=L_f, L_g=L_g, C_f=C_f, C_g=C_g, C_star=C_star,
                           lambda_max=sys.lambda_max, L_G=L_G, C_G=C_G)
