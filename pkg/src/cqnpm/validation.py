"""Runtime checks of the convergence guarantees on recorded traces."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .solvers import SolverTrace

DESCENT_TOL = 1e-9
LINEAR_BURN_IN = 5


@dataclass
class ConvergenceReport:
    descent_ok: bool
    descent_margin: float
    descent_worst_k: int
    bound_ok: bool
    bound_margin: float
    bound_worst_K: int
    linear_checked: bool
    linear_ok: bool | None
    linear_rho: float | None
    n_iterations: int
    fstar: float
    L: float
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.descent_ok and self.bound_ok and self.linear_ok is not False

    def to_text(self) -> str:
        """``key=value`` lines followed by a JSON block."""
        data = asdict(self)
        lines = [f"{k}={_plain(v)}" for k, v in data.items() if k != "notes"]
        lines.append(f"ok={_plain(self.ok)}")
        for note in self.notes:
            lines.append(f"note={note}")
        block = json.dumps({**data, "ok": self.ok}, indent=2, default=str)
        return "\n".join(lines) + "\n\n" + block + "\n"


def _plain(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


def gap_floor(fstar: float) -> float:
    """Cost gaps at or below this are treated as fully converged."""
    return 1e-12 * max(1.0, abs(fstar))


def validate_theorem1(trace: SolverTrace, L: float, fstar: float,
                      check_linear: bool = False) -> ConvergenceReport:
    """Check per-step descent, the ``Delta_K`` bound and (optionally) a linear rate.

    (a) ``mu_B/(2 alpha_k) ||x_{k+1}-x_k||^2 <= F(x_k) - F(x_{k+1}) + 1e-9``
        using each record's own ``mu_B`` and ``alpha``.
    (b) ``min_{k<=K} ||x_{k+1}-x_k||^2 <= 2 (F(x_1) - F*) / (L K)`` for every K.
    (c) ``(F_{k+1}-F*)/(F_k-F*) <= rho < 1`` for ``k >= 5``; ``rho`` is the
        largest observed ratio. Gaps below :func:`gap_floor` count as converged.

    Raises:
        ValueError: if any inner solve was truncated, since the guarantees
            assume exact proximal steps.
    """
    if trace.n_truncated:
        raise ValueError(f"trace has {trace.n_truncated} truncated inner solves")
    steps = trace.steps
    if not steps:
        raise ValueError("trace contains no steps")
    costs = trace.costs
    notes = []

    margins = []
    for i, r in enumerate(steps):
        lhs = r.mu_B / (2.0 * r.alpha) * r.step_norm**2
        margins.append(costs[i] - costs[i + 1] + DESCENT_TOL - lhs)
    margins = np.array(margins)
    worst = int(np.argmin(margins))
    descent_ok = bool(np.all(margins >= 0))

    sq = np.array([r.step_norm**2 for r in steps])
    delta = np.minimum.accumulate(sq)
    K = np.arange(1, len(steps) + 1)
    bound = 2.0 * (costs[0] - fstar) / (L * K)
    bmarg = bound - delta
    bworst = int(np.argmin(bmarg))
    bound_ok = bool(np.all(delta <= bound))
    if costs[0] - fstar < 0:
        notes.append("fstar exceeds F(x_1)")

    linear_ok = linear_rho = None
    if check_linear:
        floor = gap_floor(fstar)
        gaps = costs - fstar
        ratios = []
        for k in range(LINEAR_BURN_IN, len(costs)):  # k is 1-based index of F_k
            g_k, g_next = gaps[k - 1], gaps[k]
            if g_k <= floor:
                continue
            ratios.append(0.0 if g_next <= floor else g_next / g_k)
        linear_rho = max(ratios) if ratios else 0.0
        linear_ok = bool(linear_rho < 1.0)
        if not ratios:
            notes.append("cost gap below floor for all k >= 5")

    return ConvergenceReport(
        descent_ok=descent_ok,
        descent_margin=float(margins[worst]),
        descent_worst_k=steps[worst].k,
        bound_ok=bound_ok,
        bound_margin=float(bmarg[bworst]),
        bound_worst_K=int(K[bworst]),
        linear_checked=check_linear,
        linear_ok=linear_ok,
        linear_rho=linear_rho,
        n_iterations=len(steps),
        fstar=float(fstar),
        L=float(L),
        notes=notes,
    )


def monte_carlo_expected_cost(trace: SolverTrace, fstar: float, samples: int = 1000,
                              seed: int = 0) -> list[tuple[int, float]]:
    """Monte Carlo estimate of ``E[F(x_k) - F*]`` for ``k ~ U{1, ..., K-1}``.

    One set of uniforms is drawn and reused for every K (common random
    numbers), so for a non-increasing cost sequence the estimates are
    non-increasing in K.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    gaps = trace.costs - fstar
    u = np.random.default_rng(seed).random(samples)
    out = []
    for K in range(2, len(gaps) + 1):
        idx = np.floor(u * (K - 1)).astype(np.int64)  # 0-based index of x_{k'}
        out.append((K, float(np.mean(gaps[idx]))))
    return out


def sublinear_envelope(mc: list[tuple[int, float]], initial_gap: float) -> float:
    """Smallest ``c`` with ``mean_gap(K) <= initial_gap * c / K`` for all K."""
    if initial_gap <= 0:
        return math.inf
    return max(K * g / initial_gap for K, g in mc) if mc else 0.0


def normalized_steps(trace: SolverTrace) -> np.ndarray:
    """``||x_{k+1} - x_k|| / ||x_2 - x_1||``."""
    s = trace.column("step_norm")[:-1]
    return s / s[0] if s[0] > 0 else np.zeros_like(s)


def is_nonincreasing(mc: list[tuple[int, float]], fstar: float) -> bool:
    """Whether the Monte Carlo means never rise by more than :func:`gap_floor`."""
    vals = np.array([g for _, g in mc])
    return bool(np.all(np.diff(vals) <= gap_floor(fstar)))


def first_below(values, threshold: float) -> int | None:
    """1-based index of the first entry below ``threshold``, or None."""
    hits = np.flatnonzero(np.asarray(values) < threshold)
    return int(hits[0]) + 1 if hits.size else None


def settles_below(values, threshold: float) -> int | None:
    """1-based index from which every remaining entry is below ``threshold``."""
    above = np.flatnonzero(np.asarray(values) >= threshold)
    n = len(values)
    if above.size == 0:
        return 1 if n else None
    k = int(above[-1]) + 2
    return k if k <= n else None
