"""Problem data for -eps*Lap(u) + b.grad(u) + c*u = g on the unit square with
Dirichlet data u_b, and the catalog of the five benchmark examples.

All fields are vectorised callables ``f(x, y)`` accepting numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class ProblemData:
    epsilon: float
    convection: tuple[float, float]
    reaction: Field
    source: Field
    dirichlet: Field
    sigma0: float
    exact: Field | None = None
    exact_grad: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    name: str = ""
    reaction_is_zero: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")

    @property
    def has_exact(self) -> bool:
        return self.exact is not None and self.exact_grad is not None

    def convection_at(self, x, y):
        bx, by = self.convection
        x = np.asarray(x, dtype=float)
        return np.full_like(x, bx), np.full_like(x, by)


def _const(value: float) -> Field:
    def f(x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(value))
    return f


def eval_layer_boundary(x, epsilon: float):
    """x - (exp(x/eps) - 1)/(exp(1/eps) - 1), written with nonpositive exponents."""
    x = np.asarray(x, dtype=float)
    num = np.exp((x - 1.0) / epsilon) * -np.expm1(-x / epsilon)
    return x - num / -np.expm1(-1.0 / epsilon)


# Example 1: u = 100 X(x) Y(y) with X = x^2 (1-x)^2, Y = y (1-y) (1-2y)
def _ex1_parts(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X = x * x * (1 - x) ** 2
    dX = 2 * x * (1 - x) * (1 - 2 * x)
    d2X = 2 - 12 * x + 12 * x * x
    Y = y * (1 - y) * (1 - 2 * y)
    dY = 1 - 6 * y + 6 * y * y
    d2Y = -6 + 12 * y
    return X, dX, d2X, Y, dY, d2Y


def _ex1_u(x, y):
    X, _, _, Y, _, _ = _ex1_parts(x, y)
    return 100 * X * Y


def _ex1_grad(x, y):
    X, dX, _, Y, dY, _ = _ex1_parts(x, y)
    return 100 * dX * Y, 100 * X * dY


def _example1(eps: float) -> ProblemData:
    bx, by = 3.0, 2.0

    def source(x, y):
        X, dX, d2X, Y, dY, d2Y = _ex1_parts(x, y)
        lap = 100 * (d2X * Y + X * d2Y)
        return -eps * lap + bx * 100 * dX * Y + by * 100 * X * dY + 100 * X * Y

    return ProblemData(eps, (bx, by), _const(1.0), source, _const(0.0), 1.0,
                       _ex1_u, _ex1_grad, name="example1")


def _linear_u(x, y):
    return np.asarray(x, dtype=float) + 0 * np.asarray(y, dtype=float)


def _linear_grad(x, y):
    x = np.asarray(x, dtype=float)
    return np.ones_like(x + 0 * y), np.zeros_like(x + 0 * y)


def _example2(eps):
    return ProblemData(eps, (1.0, 0.0), _const(0.0), _const(1.0), _linear_u, 0.0,
                       _linear_u, _linear_grad, name="example2", reaction_is_zero=True)


def _example3(eps):
    def u(x, y):
        return eval_layer_boundary(x, eps) + 0 * np.asarray(y, dtype=float)

    def grad(x, y):
        x = np.asarray(x, dtype=float)
        # d/dx of x - e^{(x-1)/eps} (1 - e^{-x/eps}) / (1 - e^{-1/eps})
        dx = 1.0 - np.exp((x - 1.0) / eps) / eps / -np.expm1(-1.0 / eps)
        return dx + 0 * y, np.zeros_like(x + 0 * y)

    return ProblemData(eps, (1.0, 0.0), _const(0.0), _const(1.0), u, 0.0,
                       u, grad, name="example3", reaction_is_zero=True)


def _example4(eps):
    return ProblemData(eps, (1.0, 0.0), _const(0.0), _const(1.0), _const(0.0), 0.0,
                       name="example4", reaction_is_zero=True)


def _ex5_c(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (3 * x + 2 * y + 7) / ((x + 1) * (y + 2))


def _ex5_u(x, y):
    return (np.asarray(x, dtype=float) + 1) * (np.asarray(y, dtype=float) + 2)


def _ex5_grad(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return y + 2 + 0 * x, x + 1 + 0 * y


@lru_cache(maxsize=None)
def _ex5_sigma0() -> float:
    # lower bound of c sampled on a 1e-3 lattice of the closed square
    s = np.linspace(0.0, 1.0, 1001)
    X, Y = np.meshgrid(s, s)
    return float(_ex5_c(X, Y).min())


def _example5(eps):
    return ProblemData(eps, (-2.0, -3.0), _ex5_c, _const(0.0), _ex5_u, _ex5_sigma0(),
                       _ex5_u, _ex5_grad, name="example5")


_CATALOG = {1: _example1, 2: _example2, 3: _example3, 4: _example4, 5: _example5}


def catalog(example_id: int, epsilon: float | None = None) -> ProblemData:
    """Benchmark example 1..5; ``epsilon`` defaults to 1e-8."""
    try:
        factory = _CATALOG[int(example_id)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown example id {example_id!r}; expected 1..5") from None
    return factory(DEFAULT_EPS if epsilon is None else float(epsilon))
