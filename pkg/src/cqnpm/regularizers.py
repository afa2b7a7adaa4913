"""Smooth regularizers ``f`` with known gradient Lipschitz constants.

Gradients follow the real (R^{2N}) convention: for any complex direction
``p``, ``d/dt f(x + t p) = Re <grad f(x), p>`` at ``t = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_complex, sqnorm


def diff(x: np.ndarray) -> np.ndarray:
    """Periodic forward differences, stacked as (horizontal, vertical)."""
    return np.stack([np.roll(x, -1, axis=1) - x, np.roll(x, -1, axis=0) - x])


def diff_adjoint(d: np.ndarray) -> np.ndarray:
    dh, dv = d
    return (np.roll(dh, 1, axis=1) - dh) + (np.roll(dv, 1, axis=0) - dv)


# ||D||^2 = 8 for periodic differences on grids with even side lengths
# (and an upper bound otherwise).
DIFF_NORM_SQ = 8.0


class Regularizer:
    kind = "base"

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self) -> float:
        raise NotImplementedError

    def denoise(self, x) -> np.ndarray:
        """Gradient-driven denoiser ``x - grad f(x)``."""
        x = as_complex(x)
        return x - self.grad(x)


@dataclass(frozen=True)
class Quadratic(Regularizer):
    """``f(x) = lam/2 ||x - anchor||^2``; ``anchor=None`` means zero."""

    lam: float
    anchor: np.ndarray | None = field(default=None, compare=False)
    kind = "quadratic"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    def _residual(self, x):
        x = as_complex(x)
        return x if self.anchor is None else x - self.anchor

    def value(self, x) -> float:
        return 0.5 * self.lam * sqnorm(self._residual(x))

    def grad(self, x) -> np.ndarray:
        return self.lam * self._residual(x)

    def lipschitz(self) -> float:
        return float(self.lam)


def huber(t: np.ndarray, delta: float) -> np.ndarray:
    return np.where(t <= delta, 0.5 * t**2, delta * (t - 0.5 * delta))


@dataclass(frozen=True)
class HuberTV(Regularizer):
    """Huber-smoothed isotropic-per-difference total variation (convex)."""

    lam: float
    delta_h: float
    kind = "huber_tv"

    def __post_init__(self):
        if not (self.lam > 0 and self.delta_h > 0):
            raise ValueError("lam and delta_h must be positive")

    def value(self, x) -> float:
        d = diff(as_complex(x))
        return float(self.lam * np.sum(huber(np.abs(d), self.delta_h)))

    def grad(self, x) -> np.ndarray:
        d = diff(as_complex(x))
        mag = np.abs(d)
        scale = np.minimum(1.0, self.delta_h / np.maximum(mag, np.finfo(float).tiny))
        return self.lam * diff_adjoint(d * scale)

    def lipschitz(self) -> float:
        return DIFF_NORM_SQ * self.lam


@dataclass(frozen=True)
class LogTV(Regularizer):
    """``lam eps^2/2 sum log(1 + |d|^2/eps^2)`` over finite differences (nonconvex)."""

    lam: float
    eps: float
    kind = "log_tv"

    def __post_init__(self):
        if not (self.lam > 0 and self.eps > 0):
            raise ValueError("lam and eps must be positive")

    def value(self, x) -> float:
        d = diff(as_complex(x))
        return float(0.5 * self.lam * self.eps**2 * np.sum(np.log1p(np.abs(d) ** 2 / self.eps**2)))

    def grad(self, x) -> np.ndarray:
        d = diff(as_complex(x))
        return self.lam * diff_adjoint(d / (1.0 + np.abs(d) ** 2 / self.eps**2))

    def lipschitz(self) -> float:
        # global bound; the influence map d/(1+|d|^2/eps^2) is 1-Lipschitz
        return DIFF_NORM_SQ * self.lam


def make_regularizer(kind: str, lam: float, delta_h: float = 0.05, eps: float = 0.05,
                     anchor=None) -> Regularizer:
    kind = kind.lower()
    if kind == "quadratic":
        return Quadratic(lam, None if anchor is None else as_complex(anchor))
    if kind == "huber_tv":
        return HuberTV(lam, delta_h)
    if kind == "log_tv":
        return LogTV(lam, eps)
    raise ValueError(f"unknown regularizer kind {kind!r}")
