"""
Slow-fast model class

Systems of the form

    dy/dt = g(x, y)
    dx/dt = (-Lambda x + f(y)) / eps

with diagonal Lambda, together with the approximate centre manifold
x = Lambda^-1 f(y), the reduced slow vector field G(Y) = g(Lambda^-1 f(Y), Y)
and the toy system used by the scaling experiments:

    dy/dt = -x y - a y^2
    dx/dt = (-x + sin^2(b y)) / eps
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from exceptions import ContractViolation

logger = logging.getLogger(__name__)

Vector = np.ndarray
FastForcing = Callable[[Vector], Vector]
SlowField = Callable[[Vector, Vector], Vector]

# min(lambda_ii) must equal 1 up to this slack (time normalization)
LAMBDA_MIN_TOL = 1e-12


def as_vector(value, dim: int, name: str) -> Vector:
    """Coerce to a float64 vector of length `dim` or raise ContractViolation."""
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise ContractViolation(f"{name} has shape {arr.shape}, expected ({dim},)")
    return arr


@dataclass(frozen=True)
class MultiscaleSystem:
    """
    A slow-fast system with linear fast contraction.

    Args:
        slow_dim: n, dimension of the slow variables y
        fast_dim: m, dimension of the fast variables x
        epsilon: time-scale separation (> 0)
        lambda_diag: diagonal of Lambda, all entries > 0 with minimum 1
        f: fast forcing, R^n -> R^m
        g: slow vector field, (R^m, R^n) -> R^n
        name: label used in logs and CSV headers
    """
    slow_dim: int
    fast_dim: int
    epsilon: float
    lambda_diag: Vector
    f: FastForcing
    g: SlowField
    name: str = field(default="custom")

    def __post_init__(self):
        if self.slow_dim < 1 or self.fast_dim < 1:
            raise ContractViolation(
                f"dimensions must be positive, got n={self.slow_dim}, m={self.fast_dim}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ContractViolation(f"epsilon must be positive and finite, got {self.epsilon}")
        lam = as_vector(self.lambda_diag, self.fast_dim, "lambda_diag")
        if np.any(lam <= 0):
            raise ContractViolation(f"lambda_diag entries must be positive, got {lam}")
        if abs(lam.min() - 1.0) > LAMBDA_MIN_TOL:
            raise ContractViolation(
                f"min(lambda_diag) must be 1 after time normalization, got {lam.min()}")
        # frozen dataclass: bypass to store the normalized array
        object.__setattr__(self, "lambda_diag", lam)

    @property
    def lambda_max(self) -> float:
        """lambda = max(lambda_ii) >= 1."""
        return float(self.lambda_diag.max())

    def with_epsilon(self, epsilon: float) -> "MultiscaleSystem":
        """Same vector fields, different scale separation."""
        return MultiscaleSystem(self.slow_dim, self.fast_dim, epsilon,
                                self.lambda_diag, self.f, self.g, self.name)


@dataclass(frozen=True)
class State:
    """Fast variables x, slow variables y at simulation time t."""
    x: Vector
    y: Vector
    t: float = 0.0

    @classmethod
    def for_system(cls, sys: MultiscaleSystem, x, y, t: float = 0.0) -> "State":
        if t < 0:
            raise ContractViolation(f"state time must be nonnegative, got {t}")
        return cls(as_vector(x, sys.fast_dim, "x"), as_vector(y, sys.slow_dim, "y"), float(t))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)))


@dataclass(frozen=True)
class ToySystemParams:
    """Parameters a, b of the toy system."""
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ContractViolation(f"toy parameters must be finite, got a={self.a}, b={self.b}")


def toy_system(params: ToySystemParams, epsilon: float) -> MultiscaleSystem:
    """Build the scalar toy system dy = -xy - ay^2, eps dx = -x + sin^2(by)."""
    a, b = params.a, params.b

    def f(y: Vector) -> Vector:
        return np.sin(b * y) ** 2

    def g(x: Vector, y: Vector) -> Vector:
        return -x * y - a * y * y

    return MultiscaleSystem(slow_dim=1, fast_dim=1, epsilon=epsilon,
                            lambda_diag=np.ones(1), f=f, g=g,
                            name=f"toy(a={a:g},b={b:g})")


def toy_reduced_closed_form(params: ToySystemParams, Y) -> Vector:
    """-Y sin^2(bY) - aY^2, the reduced toy field written out."""
    Y = np.atleast_1d(np.asarray(Y, dtype=np.float64))
    return -Y * np.sin(params.b * Y) ** 2 - params.a * Y * Y


def eval_slow_rhs(sys: MultiscaleSystem, x, y) -> Vector:
    """g(x, y)."""
    x = as_vector(x, sys.fast_dim, "x")
    y = as_vector(y, sys.slow_dim, "y")
    return as_vector(sys.g(x, y), sys.slow_dim, "g(x, y)")


def eval_fast_rhs(sys: MultiscaleSystem, x, y) -> Vector:
    """(1/eps)(-Lambda x + f(y)), componentwise."""
    x = as_vector(x, sys.fast_dim, "x")
    y = as_vector(y, sys.slow_dim, "y")
    fy = as_vector(sys.f(y), sys.fast_dim, "f(y)")
    return (fy - sys.lambda_diag * x) / sys.epsilon


def approx_manifold(sys: MultiscaleSystem, y) -> Vector:
    """f_bar(y) = Lambda^-1 f(y)."""
    y = as_vector(y, sys.slow_dim, "y")
    return as_vector(sys.f(y), sys.fast_dim, "f(y)") / sys.lambda_diag


def manifold_distance(sys: MultiscaleSystem, x, y, norm: str = "inf") -> float:
    """
    |x - f_bar(y)|.

    Bound checks always use the infinity norm; norm='2' is for reporting only.
    """
    gap = as_vector(x, sys.fast_dim, "x") - approx_manifold(sys, y)
    if norm == "inf":
        return float(np.max(np.abs(gap)))
    if norm == "2":
        return float(np.linalg.norm(gap))
    raise ContractViolation(f"unknown norm {norm!r}, expected 'inf' or '2'")


def eval_reduced_rhs(sys: MultiscaleSystem, Y) -> Vector:
    """G(Y) = g(f_bar(Y), Y), the lowest-order reduced slow field."""
    Y = as_vector(Y, sys.slow_dim, "Y")
    return eval_slow_rhs(sys, approx_manifold(sys, Y), Y)
