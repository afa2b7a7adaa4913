"""Multi-coil MRI forward models ``A = [P F S_1; ...; P F S_C]``.

Two kinds are provided: :class:`CartesianModel` (orthonormal centered FFT
followed by a boolean k-space mask) and :class:`NonUniformModel` (exact
non-uniform DFT, evaluated separably so memory stays O(M (rows + cols))).
Both use the same centered pixel grid, so a non-uniform model whose samples
sit on integer k-space locations reproduces the Cartesian values.
"""
from __future__ import annotations

import csv
import logging
import warnings
from functools import cached_property

import numpy as np

from .core import DimensionError, as_complex, inner, norm

logger = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped at its iteration cap."""


def _check_smaps(smaps) -> np.ndarray:
    smaps = as_complex(smaps)
    if smaps.ndim == 2:
        smaps = smaps[None]
    if smaps.ndim != 3:
        raise DimensionError("sensitivity maps must have shape (coils, rows, cols)")
    if not np.all(np.isfinite(smaps)):
        raise ValueError("sensitivity maps contain non-finite values")
    return smaps


def ssos_normalize(smaps, eps: float = 0.0) -> np.ndarray:
    """Scale maps so that ``sum_c |S_c|^2 == 1`` wherever the SSOS is nonzero."""
    smaps = _check_smaps(smaps)
    ssos = np.sqrt(np.sum(np.abs(smaps) ** 2, axis=0))
    ssos = np.where(ssos > eps, ssos, 1.0)
    return smaps / ssos


class ForwardModel:
    """Common behaviour of the measurement operators.

    Subclasses implement ``_forward_coils`` (coil images -> (C, M) samples) and
    ``_adjoint_coils`` ((C, M) samples -> coil images).
    """

    kind = "base"

    def __init__(self, smaps):
        self.smaps = _check_smaps(smaps)
        self.image_shape = self.smaps.shape[1:]

    @property
    def n_coils(self) -> int:
        return self.smaps.shape[0]

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.image_shape))

    @property
    def n_samples(self) -> int:
        """Samples per coil (M)."""
        raise NotImplementedError

    @property
    def output_size(self) -> int:
        return self.n_samples * self.n_coils

    def apply(self, x) -> np.ndarray:
        x = as_complex(x)
        if x.size != self.n_pixels:
            raise DimensionError(f"expected {self.n_pixels} pixels, got {x.size}")
        x = x.reshape(self.image_shape)
        return self._forward_coils(self.smaps * x).ravel()

    def adjoint(self, y) -> np.ndarray:
        y = as_complex(y)
        if y.size != self.output_size:
            raise DimensionError(f"expected {self.output_size} samples, got {y.size}")
        coil_images = self._adjoint_coils(y.reshape(self.n_coils, self.n_samples))
        return np.sum(self.smaps.conj() * coil_images, axis=0)

    def normal(self, x) -> np.ndarray:
        """``A^H A x``."""
        return self.adjoint(self.apply(x))

    @cached_property
    def lipschitz(self) -> float:
        """Largest eigenvalue of ``A^H A`` (cached, fixed seed).

        Computed with Lanczos because plain power iteration stalls on the
        clustered top eigenvalues of undersampled Cartesian masks. Only used
        as a step bound, so non-convergence is logged rather than warned.
        """
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            est = spectral_norm(self, tol=1e-8, max_iter=200, seed=0, method="lanczos")
        if caught:
            logger.debug("L_A estimate %.12g did not fully converge", est)
        return est

    def _forward_coils(self, coil_images):
        raise NotImplementedError

    def _adjoint_coils(self, samples):
        raise NotImplementedError


def centered_fft2(x):
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )


def centered_ifft2(k):
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(k, axes=(-2, -1)), norm="ortho"), axes=(-2, -1)
    )


class CartesianModel(ForwardModel):
    """Masked orthonormal FFT. ``mask`` lives on the centered k-space grid."""

    kind = "cartesian"

    def __init__(self, mask, smaps):
        super().__init__(smaps)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.image_shape:
            raise DimensionError(f"mask shape {mask.shape} != image shape {self.image_shape}")
        if not mask.any():
            raise ValueError("sampling mask selects no k-space locations")
        self.mask = mask

    @property
    def n_samples(self) -> int:
        return int(self.mask.sum())

    def _forward_coils(self, coil_images):
        return centered_fft2(coil_images)[:, self.mask]

    def _adjoint_coils(self, samples):
        kspace = np.zeros((self.n_coils,) + self.image_shape, dtype=np.complex128)
        kspace[:, self.mask] = samples
        return centered_ifft2(kspace)


GRAM_MAX_PIXELS = 1024


class NonUniformModel(ForwardModel):
    """Exact non-uniform DFT.

    ``(F x)_m = N^{-1/2} sum_n x_n exp(-2 pi i k_m . r_n)`` where ``k_m`` is in
    cycles per field of view and ``r_n`` is the centered pixel grid measured in
    units of the field of view.
    """

    kind = "nonuniform"

    def __init__(self, coords, smaps):
        super().__init__(smaps)
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
            raise DimensionError("trajectory must have shape (M, 2) with M >= 1")
        if not np.all(np.isfinite(coords)):
            raise ValueError("trajectory contains non-finite coordinates")
        self.coords = coords
        rows, cols = self.image_shape
        rx = (np.arange(rows) - rows // 2) / rows
        ry = (np.arange(cols) - cols // 2) / cols
        scale = 1.0 / np.sqrt(rows * cols)
        # separable factors: exp(-2 pi i (kx rx + ky ry)) = ex[m, i] * ey[m, j]
        self._ex = scale * np.exp(-2j * np.pi * np.outer(coords[:, 0], rx))
        self._ey = np.exp(-2j * np.pi * np.outer(coords[:, 1], ry))

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]

    def normal(self, x) -> np.ndarray:
        x = as_complex(x)
        if self.gram is None:
            return super().normal(x)
        if x.size != self.n_pixels:
            raise DimensionError(f"expected {self.n_pixels} pixels, got {x.size}")
        return (self.gram @ x.ravel()).reshape(self.image_shape)

    @cached_property
    def gram(self) -> np.ndarray | None:
        """Dense ``A^H A`` for small images, ``None`` above ``GRAM_MAX_PIXELS``.

        ``A^H A = (E^H E) * (S^H S)`` elementwise, where ``E`` is the M x N
        non-uniform DFT matrix and ``S`` stacks the flattened coil maps.
        """
        if self.n_pixels > GRAM_MAX_PIXELS:
            return None
        E = (self._ex[:, :, None] * self._ey[:, None, :]).reshape(self.n_samples, -1)
        S = self.smaps.reshape(self.n_coils, -1)
        return (E.conj().T @ E) * (S.conj().T @ S)

    def _forward_coils(self, coil_images):
        tmp = coil_images @ self._ey.T  # (C, rows, M)
        return np.einsum("mi,cim->cm", self._ex, tmp)

    def _adjoint_coils(self, samples):
        weighted = self._ex.conj().T[None] * samples[:, None, :]  # (C, rows, M)
        return weighted @ self._ey.conj()


def spectral_norm(A: ForwardModel, tol: float = 1e-8, max_iter: int = 500, seed: int = 0,
                  method: str = "power") -> float:
    """Largest eigenvalue of ``A^H A`` from a seeded random start.

    Args:
        A: forward model.
        tol: relative tolerance. For ``"power"`` the iteration stops when the
            Rayleigh quotient changes by at most ``tol`` relative.
        max_iter: iteration cap (restart cycles for ``"lanczos"``).
        seed: seed of the starting vector.
        method: ``"power"`` for plain power iteration, or ``"lanczos"`` for
            implicitly restarted Lanczos, which stays accurate when the top
            eigenvalues are tightly clustered (undersampled Cartesian masks);
            its tolerance applies to the Ritz residual.

    Returns:
        The estimate. If ``max_iter`` is hit, the last estimate is returned and
        a :class:`ConvergenceWarning` is issued.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.image_shape) + 1j * rng.standard_normal(A.image_shape)
    x /= norm(x)
    if method == "lanczos":
        return _lanczos_top(A, x, tol, max_iter)
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    est = 0.0
    for _ in range(max_iter):
        ax = A.normal(x)
        new = inner(x, ax).real
        nrm = norm(ax)
        if nrm == 0:
            return 0.0
        x = ax / nrm
        if est > 0 and abs(new - est) <= tol * abs(new):
            return new
        est = new
    warnings.warn(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        ConvergenceWarning,
        stacklevel=2,
    )
    return est


def _lanczos_top(A: ForwardModel, x0: np.ndarray, tol: float, max_iter: int,
                 basis: int = 128) -> float:
    """Restarted Lanczos with full reorthogonalization.

    Each cycle builds a Krylov basis of size ``basis`` from the current Ritz
    vector. Stops when the Ritz residual, or the change of the Ritz value over
    one cycle, is at most ``tol`` relative.
    """
    m = min(basis, A.n_pixels)
    v = x0.ravel() / norm(x0)
    theta = 0.0
    for _ in range(max_iter):
        V = np.zeros((m + 1, v.size), dtype=np.complex128)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[0] = v
        k = m
        for j in range(m):
            w = A.normal(V[j].reshape(A.image_shape)).ravel()
            alpha[j] = np.vdot(V[j], w).real
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
            beta[j] = norm(w)
            if beta[j] <= 1e-14 * max(abs(alpha[j]), 1.0):
                k = j + 1  # invariant subspace found
                break
            V[j + 1] = w / beta[j]
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        prev, (theta, y) = theta, (evals[-1], evecs[:, -1])
        resid = abs(beta[k - 1] * y[-1]) if k == m else 0.0
        v = y @ V[:k]
        v /= norm(v)
        if resid <= tol * abs(theta) or abs(theta - prev) <= tol * abs(theta):
            return float(theta)
    warnings.warn(f"Lanczos did not reach tol={tol} in {max_iter} cycles",
                  ConvergenceWarning, stacklevel=3)
    return float(theta)


def adjoint_mismatch(A: ForwardModel, seed: int = 0) -> float:
    """Relative dot-product test ``|<Ax,y> - <x,A^H y>| / (|x| |y|)``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.image_shape) + 1j * rng.standard_normal(A.image_shape)
    y = rng.standard_normal(A.output_size) + 1j * rng.standard_normal(A.output_size)
    lhs = inner(A.apply(x), y)
    rhs = inner(x, A.adjoint(y))
    return abs(lhs - rhs) / (norm(x) * norm(y))


# -- file formats -----------------------------------------------------------

def write_trajectory(path, coords) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kx", "ky"])
        for kx, ky in np.asarray(coords, dtype=np.float64):
            writer.writerow([repr(float(kx)), repr(float(ky))])


def read_trajectory(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kx", "ky"]:
            raise ValueError(f"{path}: expected header 'kx,ky', got {reader.fieldnames}")
        coords = [(float(row["kx"]), float(row["ky"])) for row in reader]
    return np.array(coords, dtype=np.float64).reshape(-1, 2)


def write_mask(path, mask) -> None:
    """Plain PBM (P1): 1 marks a sampled location."""
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    lines = ["P1", f"{cols} {rows}"]
    lines += [" ".join("1" if v else "0" for v in row) for row in mask]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask(path) -> np.ndarray:
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError(f"{path}: not a plain PBM (P1) file")
    cols, rows = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    if len(bits) != rows * cols or set(bits) - {"0", "1"}:
        raise ValueError(f"{path}: expected {rows * cols} binary entries")
    return np.array([c == "1" for c in bits], dtype=bool).reshape(rows, cols)
