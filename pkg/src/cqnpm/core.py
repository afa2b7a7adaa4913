"""Complex vector conventions shared by every module.

Vectors are plain ``numpy`` complex arrays; images keep their 2-D shape and
k-space data is 1-D. The inner product is conjugate-linear in its first slot,
``inner(x, y) = sum(conj(x) * y)``, which is what :func:`numpy.vdot` computes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Raised when operands have incompatible sizes."""


def as_complex(x) -> np.ndarray:
    return np.asarray(x, dtype=np.complex128)


def _check_same_size(x: np.ndarray, y: np.ndarray) -> None:
    if x.size != y.size:
        raise DimensionError(f"size mismatch: {x.size} != {y.size}")


def inner(x, y) -> complex:
    """Return ``x^H y``."""
    x = as_complex(x)
    y = as_complex(y)
    _check_same_size(x, y)
    return complex(np.vdot(x.ravel(), y.ravel()))


def sqnorm(x) -> float:
    """Squared Euclidean norm, computed as a real number."""
    x = np.asarray(x)
    return float(np.vdot(x.ravel(), x.ravel()).real)


def norm(x) -> float:
    return float(np.sqrt(sqnorm(x)))


@dataclass(frozen=True)
class Rank1HermitianOp:
    """Implicit ``sigma*I + sign * u u^H / rho``.

    The operator is never materialized; :meth:`apply` costs O(N).
    """

    sigma: float
    u: np.ndarray
    rho: float = 1.0
    sign: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.has_rank1 and not self.rho > 0:
            raise ValueError(f"rho must be positive when u != 0, got {self.rho}")

    @property
    def has_rank1(self) -> bool:
        return bool(np.any(self.u != 0))

    def apply(self, x) -> np.ndarray:
        return apply_rank1(self, x)

    def dense(self) -> np.ndarray:
        """Dense N x N matrix (for tests on small problems only)."""
        u = self.u.ravel()
        mat = self.sigma * np.eye(u.size, dtype=np.complex128)
        if self.has_rank1:
            mat = mat + self.sign * np.outer(u, u.conj()) / self.rho
            # SIMD complex products can leave 1-ulp asymmetry; average it away exactly
            mat = 0.5 * (mat + mat.conj().T)
        return mat


def apply_rank1(op: Rank1HermitianOp, x) -> np.ndarray:
    x = as_complex(x)
    _check_same_size(op.u, x)
    out = op.sigma * x
    if op.has_rank1:
        coef = np.vdot(op.u.ravel(), x.ravel()) / op.rho
        out = out + (op.sign * coef) * op.u.reshape(x.shape)
    return out


@dataclass(frozen=True)
class ConstraintSet:
    """``{x : max_i |x_i| <= radius}``."""

    radius: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be finite and positive, got {self.radius}")

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(x)) <= self.radius + tol)


def project_constraint(x, C: ConstraintSet) -> np.ndarray:
    """Clip each entry's modulus to ``C.radius`` keeping its phase."""
    x = as_complex(x)
    mag = np.abs(x)
    scale = np.ones_like(mag)
    over = mag > C.radius
    scale[over] = C.radius / mag[over]
    return x * scale


# Binary layout: little-endian u32 rows, u32 cols, then interleaved float64 (re, im).
_HEADER = struct.Struct("<II")


def save_cvec(path, x) -> None:
    x = as_complex(x)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError("only 1-D or 2-D arrays can be serialized")
    rows, cols = x.shape
    body = np.empty(2 * x.size, dtype="<f8")
    body[0::2] = x.real.ravel()
    body[1::2] = x.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(rows, cols))
        fh.write(body.tobytes())


def load_cvec(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * rows * cols:
        raise DimensionError(
            f"{path}: header says {rows}x{cols} but found {body.size // 2} values"
        )
    return (body[0::2] + 1j * body[1::2]).reshape(rows, cols)
