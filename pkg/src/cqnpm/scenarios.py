"""Synthetic acquisitions: phantoms, coil maps, trajectories, masks, noise."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import CartesianModel, ForwardModel, NonUniformModel, ssos_normalize

# Modified Shepp-Logan: (intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray
    description: str


def _grid(n: int):
    c = (np.arange(n) - n // 2) / (n / 2)
    yy, xx = np.meshgrid(c, c, indexing="ij")
    return xx, -yy


def gen_phantom(n: int = 32, seed: int = 0, phase_scale: float = 1.0) -> Phantom:
    """Shepp-Logan magnitude times a smooth quadratic phase, max modulus 1.

    The phase is ``exp(i (a x^2 + b y^2))`` with ``a, b`` drawn from
    ``U(-1, 1) * phase_scale``; ``phase_scale=0`` gives a real phantom.
    """
    if n < 8:
        raise ValueError("phantom size must be >= 8")
    x, y = _grid(n)
    mag = np.zeros((n, n))
    for val, a, b, x0, y0, ang in _SHEPP_LOGAN:
        t = math.radians(ang)
        xr = (x - x0) * math.cos(t) + (y - y0) * math.sin(t)
        yr = -(x - x0) * math.sin(t) + (y - y0) * math.cos(t)
        mag[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    mag = np.clip(mag, 0.0, None)
    rng = np.random.default_rng(seed)
    a, b = phase_scale * rng.uniform(-1.0, 1.0, size=2)
    img = mag * np.exp(1j * (a * x**2 + b * y**2))
    img = img / np.max(np.abs(img))
    return Phantom(img, f"shepp-logan n={n} phase=({a:.4f}, {b:.4f})")


def gen_smaps(n: int, coils: int) -> np.ndarray:
    """Gaussian coil profiles around the FOV with linear phase, SSOS-normalized."""
    if coils < 1:
        raise ValueError("coils must be >= 1")
    x, y = _grid(n)
    maps = np.empty((coils, n, n), dtype=np.complex128)
    for c in range(coils):
        ang = 2.0 * math.pi * c / coils
        cx, cy = 1.2 * math.cos(ang), 1.2 * math.sin(ang)
        prof = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * 0.8**2))
        phase = np.exp(1j * (math.pi / 4) * (math.cos(ang) * x + math.sin(ang) * y) + 1j * ang)
        maps[c] = prof * phase
    return ssos_normalize(maps)


def gen_spiral(n: int, interleaves: int, readout: int) -> np.ndarray:
    """Archimedean spiral interleaves reaching radius ``n/2`` (exclusive)."""
    if interleaves < 1 or readout < 2:
        raise ValueError("need interleaves >= 1 and readout >= 2")
    t = np.arange(readout) / readout
    turns = n / (2.0 * interleaves)
    arms = []
    for j in range(interleaves):
        k = (n / 2) * t * np.exp(1j * (2 * math.pi * turns * t + 2 * math.pi * j / interleaves))
        arms.append(np.column_stack([k.real, k.imag]))
    return np.concatenate(arms)


# 180 degrees divided by the golden ratio (~111.246 deg), the usual increment
# for radial spokes, which are only defined modulo 180 degrees
GOLDEN_ANGLE = math.pi * (math.sqrt(5.0) - 1.0) / 2.0


def gen_radial(n: int, spokes: int, readout: int, golden: bool = True) -> np.ndarray:
    """Radial spokes through the k-space centre, ``readout`` samples each."""
    if spokes < 1 or readout < 2:
        raise ValueError("need spokes >= 1 and readout >= 2")
    step = GOLDEN_ANGLE if golden else math.pi / spokes
    r = (np.arange(readout) - (readout - 1) / 2) * (n / readout)
    out = []
    for j in range(spokes):
        ang = j * step
        out.append(np.column_stack([r * math.cos(ang), r * math.sin(ang)]))
    return np.concatenate(out)


def gen_cartesian_mask(n: int, accel: float, acs_lines: int, seed: int = 0) -> np.ndarray:
    """Random phase-encode rows with variable density plus a full centre block."""
    if accel < 1:
        raise ValueError("acceleration must be >= 1")
    n_keep = math.ceil(n / accel)
    if acs_lines >= n or acs_lines > n_keep:
        raise ValueError(
            f"acs_lines={acs_lines} incompatible with n={n}, accel={accel} ({n_keep} rows)"
        )
    rows = np.zeros(n, dtype=bool)
    start = n // 2 - acs_lines // 2
    rows[start:start + acs_lines] = True
    rest = np.flatnonzero(~rows)
    need = n_keep - int(rows.sum())
    if need > 0:
        dist = np.abs(rest - n // 2) / (n / 2)
        w = (1.0 - dist) ** 2 + 0.05
        rng = np.random.default_rng(seed)
        rows[rng.choice(rest, size=need, replace=False, p=w / w.sum())] = True
    return np.repeat(rows[:, None], n, axis=1)


def simulate_measurements(model: ForwardModel, image, sigma: float, seed: int = 0) -> np.ndarray:
    """``A x`` plus circular complex Gaussian noise of total variance ``sigma^2``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    y = model.apply(image)
    if sigma == 0:
        return y
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size)
    return y + (sigma / math.sqrt(2.0)) * noise


def build_model(kind: str, n: int, smaps, *, interleaves=4, readout=200, spokes=15,
                golden=True, accel=4.0, acs_lines=4, seed=0) -> ForwardModel:
    if kind == "cartesian":
        return CartesianModel(gen_cartesian_mask(n, accel, acs_lines, seed), smaps)
    if kind == "spiral":
        return NonUniformModel(gen_spiral(n, interleaves, readout), smaps)
    if kind == "radial":
        return NonUniformModel(gen_radial(n, spokes, readout, golden), smaps)
    raise ValueError(f"unknown acquisition kind {kind!r}")
