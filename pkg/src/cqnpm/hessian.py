"""Memory-efficient self-scaling Hermitian rank-1 metric estimation.

Given a secant pair ``s = x_k - x_{k-1}``, ``m = grad f(x_k) - grad f(x_{k-1})``,
:func:`estimate` returns ``H = tau I + u u^H / rho`` and its inverse
``B = tau^{-1} I - u u^H / rho_B``. Only real parts of cross inner products
enter the scalars, which makes ``B`` the Hermitian part of the plain
(non-Hermitian) secant update and keeps it positive definite even when ``f``
is nonconvex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Rank1HermitianOp, inner, norm, sqnorm


class DegenerateStepError(ValueError):
    """The secant step ``s`` is zero, so no curvature information exists."""


@dataclass(frozen=True)
class EstimatorParams:
    delta: float = 1e-8
    theta1: float = 2e-6
    theta2: float = 200.0
    m_fallback_tol: float = 1e-10

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.theta1 < 1:
            raise ValueError("theta1 must lie in (0, 1)")
        if not self.theta2 > 1:
            raise ValueError("theta2 must exceed 1")
        if not self.m_fallback_tol > 0:
            raise ValueError("m_fallback_tol must be positive")

    @property
    def eta_lower(self) -> float:
        """Smallest eigenvalue any estimated ``B`` can have."""
        return self.delta * self.theta1 / (1.0 + self.delta)

    @property
    def eta_upper(self) -> float:
        """Largest eigenvalue any estimated ``B`` can have."""
        return 2.0 * self.theta2


@dataclass(frozen=True)
class MetricPair:
    tau: float
    u: np.ndarray
    rho: float
    rho_B: float

    @classmethod
    def identity(cls, like) -> "MetricPair":
        return cls(tau=1.0, u=np.zeros_like(like, dtype=np.complex128), rho=1.0, rho_B=1.0)

    @property
    def is_rank1(self) -> bool:
        return bool(np.any(self.u != 0))

    @cached_property
    def H(self) -> Rank1HermitianOp:
        return Rank1HermitianOp(self.tau, self.u, self.rho, +1)

    @cached_property
    def B(self) -> Rank1HermitianOp:
        return Rank1HermitianOp(1.0 / self.tau, self.u, self.rho_B, -1)

    @cached_property
    def mu_B(self) -> float:
        """Smallest eigenvalue of ``B``."""
        if not self.is_rank1:
            return 1.0 / self.tau
        # tau^{-1} - |u|^2/rho_B rewritten without cancellation
        return self.rho / (self.tau * self.rho + sqnorm(self.u))


def _ratios(a, r, q, beta):
    """Return (Re<s,v>/<s,s>, <v,v>/Re<s,v>) for v = beta s + (1-beta) m."""
    sv = beta * a + (1.0 - beta) * r
    vv = beta**2 * a + 2.0 * beta * (1.0 - beta) * r + (1.0 - beta) ** 2 * q
    c1 = sv / a
    c2 = vv / sv if sv > 0 else math.inf
    return c1, c2


def _feasible(a, r, q, beta, p: EstimatorParams, slack: float = 0.0) -> bool:
    c1, c2 = _ratios(a, r, q, beta)
    return c1 >= p.theta1 - slack and c2 <= p.theta2 + slack * p.theta2


def select_beta(s, m, p: EstimatorParams) -> tuple[float, np.ndarray]:
    """Smallest ``beta`` in [0, 1] such that ``v = beta s + (1-beta) m`` is admissible.

    Admissible means ``theta1 <= Re<s,v>/<s,s>`` and ``<v,v>/Re<s,v> <= theta2``.
    The first condition is linear in ``beta`` and the second a convex quadratic,
    so the feasible set is an interval ending at ``beta = 1``; its left end is
    computed in closed form and refined by bisection if rounding makes the
    closed form slightly infeasible.
    """
    a = sqnorm(s)
    if a == 0:
        raise DegenerateStepError("secant step s is zero")
    r = inner(s, m).real
    q = sqnorm(m)

    lower = 0.0
    # Re<s,v> - theta1 a = beta (a - r) + r - theta1 a >= 0
    if a - r > 0:
        lower = max(lower, (p.theta1 * a - r) / (a - r))
    # <v,v> - theta2 Re<s,v> <= 0, i.e. c2 beta^2 + c1 beta + c0 <= 0
    c2 = a - 2.0 * r + q  # = |s - m|^2 >= 0
    c1 = 2.0 * (r - q) - p.theta2 * (a - r)
    c0 = q - p.theta2 * r
    if c0 > 0:
        # beta = 0 violates the bound; the smaller root is the left end. It is
        # written as 2 c0 / (-c1 + sqrt(disc)), stable also when c2 -> 0.
        if c1 < 0:
            disc = max(c1 * c1 - 4.0 * c2 * c0, 0.0)
            lower = max(lower, 2.0 * c0 / (-c1 + math.sqrt(disc)))
        else:
            lower = 1.0
    beta = min(max(lower, 0.0), 1.0)

    if not _feasible(a, r, q, beta, p):
        lo, hi = beta, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _feasible(a, r, q, mid, p):
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-16:
                break
        beta = hi
    v = beta * np.asarray(s) + (1.0 - beta) * np.asarray(m)
    return beta, v


def compute_tau(a: float, b: float, c: float) -> float:
    """Self-scaling factor ``a/b - sqrt((a/b)^2 - a/c)``.

    Evaluated in the equivalent rationalized form
    ``(a/c) / (a/b + sqrt((a/b)^2 - a/c))``, which avoids cancellation.
    The result satisfies ``b/(2c) <= tau <= b/c``.
    """
    if not (a > 0 and b > 0 and c > 0):
        raise ValueError(f"compute_tau needs positive a, b, c (got {a}, {b}, {c})")
    ab = a / b
    rad = ab * ab - a / c
    if rad < 0:
        if rad < -1e-12 * ab * ab:
            raise ArithmeticError(f"negative radicand {rad} in tau computation")
        rad = 0.0
    return (a / c) / (ab + math.sqrt(rad))


def estimate(s, m, p: EstimatorParams | None = None) -> MetricPair:
    """Build the metric pair from one secant pair."""
    p = p or EstimatorParams()
    s = np.asarray(s, dtype=np.complex128)
    m = np.asarray(m, dtype=np.complex128)
    s_norm = norm(s)
    if s_norm == 0:
        raise DegenerateStepError("secant step s is zero")
    if norm(m) <= p.m_fallback_tol * s_norm:
        return MetricPair.identity(s)

    _, v = select_beta(s, m, p)
    a = s_norm**2
    b = inner(s, v).real
    c = sqnorm(v)
    tau = compute_tau(a, b, c)
    resid = s - tau * v
    rho = inner(resid, v).real
    if rho <= p.delta * norm(resid) * math.sqrt(c):
        u = np.zeros_like(s)
    else:
        u = resid
    rho_B = tau * tau * rho + tau * sqnorm(u)
    return MetricPair(tau=tau, u=u, rho=rho, rho_B=rho_B)


def metric_eig_bounds(mp: MetricPair) -> tuple[float, float]:
    """Extreme eigenvalues ``(min, max)`` of ``B``."""
    return mp.mu_B, 1.0 / mp.tau
