"""Outer solvers for ``min_{x in C} 1/2 ||Ax - y||^2 + f(x)``.

``cqnpm`` is the complex quasi-Newton proximal method: each iteration builds a
rank-1 metric from the last secant pair, takes a metric-scaled gradient step
on ``f`` and then solves a weighted proximal mapping of the data term.
``pg``, ``apg`` and ``gd`` are the baselines it is compared with.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .core import ConstraintSet, as_complex, inner, norm, project_constraint, sqnorm
from .forward import ForwardModel
from .hessian import DegenerateStepError, EstimatorParams, MetricPair, estimate
from .regularizers import Regularizer
from .wpm import WpmProblem, WpmSettings, solve_wpm

logger = logging.getLogger(__name__)

COST_TOL = 1e-12
MAX_HALVINGS = 30


@dataclass(frozen=True)
class Problem:
    model: ForwardModel
    y: np.ndarray
    reg: Regularizer
    C: ConstraintSet = ConstraintSet()

    def data_fit(self, x) -> float:
        return 0.5 * sqnorm(self.model.apply(x) - self.y)

    def grad_data(self, x) -> np.ndarray:
        return self.model.adjoint(self.model.apply(x) - self.y)

    def initial_guess(self) -> np.ndarray:
        return project_constraint(self.model.adjoint(self.y), self.C)


def cost(prob: Problem, x) -> float:
    """``F(x) = 1/2 ||Ax - y||^2 + f(x)``."""
    return prob.data_fit(x) + prob.reg.value(x)


def psnr(x, x_ref, peak: float = 1.0) -> float:
    """PSNR of the complex error, ``10 log10(peak^2 N / ||x - x_ref||^2)``."""
    err = sqnorm(np.asarray(x) - np.asarray(x_ref))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 * np.size(x_ref) / err)


@dataclass(frozen=True)
class StepsizePolicy:
    """``fixed``: constant ``alpha``. ``theory``: ``alpha_k = mu_B(B_k) / L``."""

    mode: str = "fixed"
    alpha: float = 1.0

    def __post_init__(self):
        if self.mode not in ("fixed", "theory"):
            raise ValueError(f"unknown stepsize mode {self.mode!r}")
        if self.mode == "fixed" and not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def fixed(cls, alpha: float = 1.0) -> "StepsizePolicy":
        return cls("fixed", alpha)

    @classmethod
    def theory_safe(cls) -> "StepsizePolicy":
        return cls("theory", math.nan)

    def step(self, metric: MetricPair, L: float) -> float:
        if self.mode == "theory":
            return metric.mu_B / L
        return self.alpha


@dataclass
class IterRecord:
    k: int
    wall_time_s: float
    cost: float
    psnr_db: float = math.nan
    step_norm: float = math.nan
    alpha: float = math.nan
    mu_B: float = math.nan
    inner_iters: int = 0
    truncated: bool = False


TRACE_COLUMNS = [f.name for f in fields(IterRecord)]


@dataclass
class SolverTrace:
    """Per-iteration history.

    Record ``k`` holds ``F(x_k)`` and the step taken from ``x_k`` to
    ``x_{k+1}``; the final record carries ``F(x_{K+1})`` with NaN step fields.
    """

    solver: str
    records: list[IterRecord] = field(default_factory=list)
    x: np.ndarray | None = None
    policy: str = ""

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def costs(self) -> np.ndarray:
        return self.column("cost")

    @property
    def steps(self) -> list[IterRecord]:
        """Records that describe an actual step (all but the last)."""
        return self.records[:-1]

    @property
    def n_truncated(self) -> int:
        return sum(r.truncated for r in self.steps)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])

    @classmethod
    def from_csv(cls, path, solver: str = "") -> "SolverTrace":
        trace = cls(solver)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
            for row in reader:
                trace.records.append(IterRecord(
                    k=int(row["k"]),
                    wall_time_s=float(row["wall_time_s"]),
                    cost=float(row["cost"]),
                    psnr_db=float(row["psnr_db"]),
                    step_norm=float(row["step_norm"]),
                    alpha=float(row["alpha"]),
                    mu_B=float(row["mu_B"]),
                    inner_iters=int(row["inner_iters"]),
                    truncated=row["truncated"] == "1",
                ))
        return trace


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _Recorder:
    def __init__(self, prob: Problem, solver: str, x_ref, policy: str = ""):
        self.prob = prob
        self.x_ref = x_ref
        self.trace = SolverTrace(solver, policy=policy)
        self.t0 = time.perf_counter()

    def psnr(self, x) -> float:
        return math.nan if self.x_ref is None else psnr(x, self.x_ref)

    def step(self, k, x, F, x_new, **kw):
        self.trace.records.append(IterRecord(
            k=k, wall_time_s=time.perf_counter() - self.t0, cost=F,
            psnr_db=self.psnr(x), step_norm=norm(x_new - x), **kw,
        ))

    def finish(self, k, x, F) -> SolverTrace:
        self.trace.records.append(IterRecord(
            k=k, wall_time_s=time.perf_counter() - self.t0, cost=F, psnr_db=self.psnr(x),
        ))
        self.trace.x = x
        return self.trace


def _prox_step(prob, metric, x, g, alpha, ws):
    w = x - alpha * metric.H.apply(g)
    wp = WpmProblem(prob.model, metric, w, alpha, prob.y, prob.C)
    return solve_wpm(wp, ws, x0=x)


def cqnpm(prob: Problem, x1=None, policy: StepsizePolicy = StepsizePolicy(), K: int = 100,
          est: EstimatorParams = EstimatorParams(), ws: WpmSettings = WpmSettings(),
          safeguard: bool = True, x_ref=None, identity_metric: bool = False,
          name: str = "cqnpm") -> SolverTrace:
    """Complex quasi-Newton proximal method.

    Args:
        prob: reconstruction problem.
        x1: starting point (projected onto ``C``); defaults to ``P_C(A^H y)``.
        policy: stepsize rule for ``alpha_k``.
        K: number of iterations.
        est: metric estimator parameters.
        ws: inner WPM solver settings.
        safeguard: in fixed-step mode, halve ``alpha_k`` (up to 30 times) while
            the new cost exceeds the old one.
        x_ref: optional reference image for PSNR.
        identity_metric: force ``H = B = I`` (proximal gradient).

    Returns:
        The :class:`SolverTrace`; ``trace.x`` is the last iterate.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    L = prob.reg.lipschitz()
    x = prob.initial_guess() if x1 is None else project_constraint(x1, prob.C)
    x = x.reshape(prob.model.image_shape)
    g = prob.reg.grad(x)
    F = cost(prob, x)
    x_prev = g_prev = None
    guard = safeguard and policy.mode == "fixed"
    rec = _Recorder(prob, name, x_ref, policy.mode)

    for k in range(1, K + 1):
        metric = MetricPair.identity(x)
        if not identity_metric and x_prev is not None:
            try:
                metric = estimate(x - x_prev, g - g_prev, est)
            except DegenerateStepError:
                logger.info("iteration %d: zero secant step, using identity metric", k)
        alpha = policy.step(metric, L)
        res = _prox_step(prob, metric, x, g, alpha, ws)
        F_new = cost(prob, res.x)
        inner_total = res.inner_iters
        truncated = res.truncated
        halvings = 0
        while guard and F_new > F + COST_TOL and halvings < MAX_HALVINGS:
            alpha *= 0.5
            halvings += 1
            res = _prox_step(prob, metric, x, g, alpha, ws)
            F_new = cost(prob, res.x)
            inner_total += res.inner_iters
            truncated = truncated or res.truncated
        rec.step(k, x, F, res.x, alpha=alpha, mu_B=metric.mu_B,
                 inner_iters=inner_total, truncated=truncated)
        x_prev, g_prev = x, g
        x, F = res.x, F_new
        g = prob.reg.grad(x)
    return rec.finish(K + 1, x, F)


def pg(prob: Problem, x1=None, policy: StepsizePolicy = StepsizePolicy(), K: int = 100,
       ws: WpmSettings = WpmSettings(), safeguard: bool = True, x_ref=None) -> SolverTrace:
    """Proximal gradient: :func:`cqnpm` with ``H = B = I`` at every iteration."""
    return cqnpm(prob, x1, policy, K, ws=ws, safeguard=safeguard, x_ref=x_ref,
                 identity_metric=True, name="pg")


@dataclass(frozen=True)
class ArmijoParams:
    alpha0: float = 1.0
    shrink: float = 0.5
    c: float = 1e-4
    max_halvings: int = 40


def gd(prob: Problem, x1=None, K: int = 100, ls: ArmijoParams = ArmijoParams(),
       x_ref=None) -> SolverTrace:
    """Projected gradient descent on ``F`` with Armijo backtracking.

    Each iteration starts the search at ``ls.alpha0``. If the search runs out
    of halvings the iterate is kept and the record is flagged as truncated.
    """
    x = prob.initial_guess() if x1 is None else project_constraint(x1, prob.C)
    x = x.reshape(prob.model.image_shape)
    F = cost(prob, x)
    rec = _Recorder(prob, "gd", x_ref)
    for k in range(1, K + 1):
        grad = prob.grad_data(x) + prob.reg.grad(x)
        alpha = ls.alpha0
        x_new, F_new, ok = x, F, False
        for _ in range(ls.max_halvings + 1):
            cand = project_constraint(x - alpha * grad, prob.C)
            F_cand = cost(prob, cand)
            if F_cand <= F + ls.c * inner(grad, cand - x).real:
                x_new, F_new, ok = cand, F_cand, True
                break
            alpha *= ls.shrink
        rec.step(k, x, F, x_new, alpha=alpha if ok else 0.0, truncated=not ok)
        x, F = x_new, F_new
    return rec.finish(K + 1, x, F)


def apg(prob: Problem, x1=None, policy: StepsizePolicy = StepsizePolicy(), K: int = 100,
        ws: WpmSettings = WpmSettings(), safeguard: bool = True, x_ref=None) -> SolverTrace:
    """Monotone accelerated proximal gradient (identity metric).

    The extrapolated candidate is kept only if it is no worse than the plain
    proximal-gradient step from ``x_k``.
    """
    L = prob.reg.lipschitz()
    eye = None
    x = prob.initial_guess() if x1 is None else project_constraint(x1, prob.C)
    x = x.reshape(prob.model.image_shape)
    x_prev = x
    F = cost(prob, x)
    t_prev, t = 1.0, 1.0
    guard = safeguard and policy.mode == "fixed"
    rec = _Recorder(prob, "apg", x_ref, policy.mode)

    for k in range(1, K + 1):
        if eye is None:
            eye = MetricPair.identity(x)
        alpha = policy.step(eye, L)
        z = x + ((t_prev - 1.0) / t) * (x - x_prev)

        g = prob.reg.grad(x)
        res_v = _prox_step(prob, eye, x, g, alpha, ws)
        F_v = cost(prob, res_v.x)
        inner_total, truncated = res_v.inner_iters, res_v.truncated
        halvings = 0
        while guard and F_v > F + COST_TOL and halvings < MAX_HALVINGS:
            alpha *= 0.5
            halvings += 1
            res_v = _prox_step(prob, eye, x, g, alpha, ws)
            F_v = cost(prob, res_v.x)
            inner_total += res_v.inner_iters
            truncated = truncated or res_v.truncated

        x_new, F_new = res_v.x, F_v
        if np.any(z != x):
            res_u = _prox_step(prob, eye, z, prob.reg.grad(z), alpha, ws)
            F_u = cost(prob, res_u.x)
            inner_total += res_u.inner_iters
            truncated = truncated or res_u.truncated
            if F_u <= F_v:
                x_new, F_new = res_u.x, F_u

        rec.step(k, x, F, x_new, alpha=alpha, mu_B=1.0,
                 inner_iters=inner_total, truncated=truncated)
        x_prev, x, F = x, x_new, F_new
        t_prev, t = t, 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
    return rec.finish(K + 1, x, F)


def estimate_fstar(prob: Problem, ws: WpmSettings = WpmSettings(), iters: int = 500,
                   eps: float = 0.0, x1=None) -> float:
    """``F(x_500) - eps`` where ``x_500`` comes from APG with ``alpha = 1/L``."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    trace = apg(prob, x1, StepsizePolicy.theory_safe(), iters, ws, safeguard=False)
    return trace.costs[-1] - eps
