"""Weighted proximal mapping of the data term over the magnitude ball.

Solves ``min_{z in C} G(z) = 1/2 (||z - w||_B^2 + alpha ||A z - y||^2)`` with a
projected accelerated gradient method using fixed momentum. The step is
``1/L`` with ``L = tau^{-1} + alpha L_A`` and the momentum is set from
``kappa = L / mu_B``; both are cheap bounds, so no line search is needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import ConstraintSet, DimensionError, as_complex, inner, norm, project_constraint, sqnorm
from .forward import ForwardModel
from .hessian import MetricPair


@dataclass(frozen=True)
class WpmProblem:
    model: ForwardModel
    B: MetricPair
    w: np.ndarray
    alpha: float
    y: np.ndarray
    C: ConstraintSet = ConstraintSet()

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if np.asarray(self.w).size != self.model.n_pixels:
            raise DimensionError("w does not match the model image size")
        if np.asarray(self.y).size != self.model.output_size:
            raise DimensionError("y does not match the model output size")

    @cached_property
    def Ahy(self) -> np.ndarray:
        return self.model.adjoint(self.y)

    @property
    def L_inner(self) -> float:
        return 1.0 / self.B.tau + self.alpha * self.model.lipschitz

    @property
    def mu_inner(self) -> float:
        return self.B.mu_B

    @property
    def momentum(self) -> float:
        sk = np.sqrt(self.L_inner / self.mu_inner)
        return (sk - 1.0) / (sk + 1.0)


@dataclass(frozen=True)
class WpmSettings:
    eps: float = 1e-9
    max_inner: int = 2000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_inner < 1:
            raise ValueError("max_inner must be >= 1")


@dataclass
class WpmResult:
    x: np.ndarray
    inner_iters: int
    truncated: bool


def G_value(p: WpmProblem, z) -> float:
    z = as_complex(z).reshape(p.model.image_shape)
    d = z - p.w
    return 0.5 * (inner(d, p.B.B.apply(d)).real + p.alpha * sqnorm(p.model.apply(z) - p.y))


def grad_G(p: WpmProblem, z) -> np.ndarray:
    z = as_complex(z).reshape(p.model.image_shape)
    return p.B.B.apply(z - p.w) + p.alpha * (p.model.normal(z) - p.Ahy)


def solve_wpm(p: WpmProblem, s: WpmSettings = WpmSettings(), x0=None) -> WpmResult:
    """Accelerated projected gradient, warm-started at ``x0`` (default ``w``).

    Stops when ``||x_{i+1} - x_i||_2 <= eps``; hitting ``max_inner`` marks the
    result as truncated.
    """
    x = project_constraint(p.w if x0 is None else x0, p.C).reshape(p.model.image_shape)
    z = x
    step = 1.0 / p.L_inner
    beta = p.momentum
    for i in range(1, s.max_inner + 1):
        x_new = project_constraint(z - step * grad_G(p, z), p.C)
        dx = x_new - x
        if norm(dx) <= s.eps:
            return WpmResult(x_new, i, False)
        z = x_new + beta * dx
        x = x_new
    return WpmResult(x, s.max_inner, True)


def oracle_wpm(p: WpmProblem, max_iter: int = 200_000, tol: float = 1e-12) -> np.ndarray:
    """Dense reference solution for small problems (N <= 1024).

    Tries the unconstrained normal-equation solve first; if it leaves ``C``
    falls back to plain projected gradient with step ``1/L``.
    """
    n = p.model.n_pixels
    if n > 1024:
        raise DimensionError(f"oracle_wpm is limited to N <= 1024 (got {n})")
    eye = np.eye(n, dtype=np.complex128)
    A_dense = np.column_stack([p.model.apply(e.reshape(p.model.image_shape)) for e in eye])
    Q = p.B.B.dense() + p.alpha * (A_dense.conj().T @ A_dense)
    rhs = p.B.B.apply(p.w).ravel() + p.alpha * (A_dense.conj().T @ np.ravel(p.y))
    x = np.linalg.solve(Q, rhs)
    if np.max(np.abs(x)) <= p.C.radius - 1e-9:
        return x.reshape(p.model.image_shape)

    step = 1.0 / p.L_inner
    x = project_constraint(np.ravel(p.w), p.C)
    for _ in range(max_iter):
        x_new = project_constraint(x - step * (Q @ x - rhs), p.C)
        done = norm(x_new - x) <= tol
        x = x_new
        if done:
            break
    return x.reshape(p.model.image_shape)
