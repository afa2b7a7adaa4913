import warnings

import numpy as np
import pytest

from cqnpm.core import DimensionError, inner, norm
from cqnpm.forward import (CartesianModel, ConvergenceWarning, NonUniformModel, adjoint_mismatch,
                           centered_fft2, centered_ifft2, read_mask, read_trajectory, spectral_norm,
                           ssos_normalize, write_mask, write_trajectory)
from cqnpm.scenarios import gen_cartesian_mask, gen_smaps

from conftest import crandn


def dense_matrix(model):
    eye = np.eye(model.n_pixels)
    return np.column_stack([model.apply(e.reshape(model.image_shape)) for e in eye])


def brute_nudft(coords, image):
    """Direct double sum, written independently of the separable implementation."""
    rows, cols = image.shape
    out = np.zeros(len(coords), dtype=np.complex128)
    for m, (kx, ky) in enumerate(coords):
        acc = 0j
        for i in range(rows):
            for j in range(cols):
                r = ((i - rows // 2) / rows, (j - cols // 2) / cols)
                acc += image[i, j] * np.exp(-2j * np.pi * (kx * r[0] + ky * r[1]))
        out[m] = acc / np.sqrt(rows * cols)
    return out


def test_centered_fft_is_unitary_and_centered(rng):
    x = crandn(rng, 8, 8)
    k = centered_fft2(x)
    assert norm(k) == pytest.approx(norm(x), rel=1e-13)
    assert np.allclose(centered_ifft2(k), x, atol=1e-14)
    # a centered impulse has a flat spectrum
    imp = np.zeros((8, 8))
    imp[4, 4] = 1.0
    assert np.allclose(centered_fft2(imp), 1 / 8, atol=1e-15)
    # a constant image has all energy at the DC location (n//2, n//2)
    dc = centered_fft2(np.ones((8, 8)))
    assert dc[4, 4] == pytest.approx(8.0)
    dc[4, 4] = 0
    assert np.max(np.abs(dc)) < 1e-13


def test_nudft_matches_direct_sum(rng):
    coords = rng.uniform(-4, 4, size=(12, 2))
    smaps = np.ones((1, 6, 6))
    img = crandn(rng, 6, 6)
    model = NonUniformModel(coords, smaps)
    assert np.allclose(model.apply(img), brute_nudft(coords, img), atol=1e-12)


def test_nudft_on_grid_equals_fft(rng):
    n = 16
    ki = np.arange(n) - n // 2
    coords = np.array([(a, b) for a in ki for b in ki], dtype=float)
    smaps = gen_smaps(n, 2)
    model = NonUniformModel(coords, smaps)
    full = CartesianModel(np.ones((n, n), bool), smaps)
    img = crandn(rng, n, n)
    assert np.max(np.abs(model.apply(img) - full.apply(img))) <= 1e-10 * norm(img)


@pytest.mark.parametrize("name", ["cart16", "spiral16", "radial16"])
def test_adjoint_dot_product(name, request):
    model = request.getfixturevalue(name)
    for seed in range(5):
        assert adjoint_mismatch(model, seed) <= 1e-12


@pytest.mark.parametrize("name", ["spiral16", "radial16"])
def test_cached_gram_matches_operator_composition(name, request, rng):
    model = request.getfixturevalue(name)
    x = crandn(rng, *model.image_shape)
    direct = model.adjoint(model.apply(x))
    assert np.allclose(model.normal(x), direct, rtol=1e-12, atol=1e-12 * norm(direct))


def test_full_sampling_with_ssos_maps_is_isometry(rng):
    model = CartesianModel(np.ones((16, 16), bool), gen_smaps(16, 4))
    x = crandn(rng, 16, 16)
    assert np.allclose(model.normal(x), x, atol=1e-13)
    assert spectral_norm(model, tol=1e-12) == pytest.approx(1.0, abs=1e-8)


def test_spectral_norm_scales_with_squared_amplitude(spiral16):
    base = spectral_norm(spiral16, tol=1e-12, max_iter=5000)
    scaled = NonUniformModel(spiral16.coords, 2.0 * spiral16.smaps)
    assert spectral_norm(scaled, tol=1e-12, max_iter=5000) == pytest.approx(4 * base, rel=1e-9)


def test_power_iteration_matches_dense_eigenvalue(radial16):
    A = dense_matrix(radial16)
    top = np.linalg.eigvalsh(A.conj().T @ A)[-1]
    est = spectral_norm(radial16, tol=1e-12, max_iter=20_000)
    assert est == pytest.approx(top, rel=1e-6)
    assert est <= top * (1 + 1e-12)


@pytest.mark.parametrize("accel,seed", [(4.0, 0), (3.0, 3), (2.0, 1), (1.5, 7)])
def test_lanczos_matches_dense_eigenvalue_on_clustered_cartesian(accel, seed):
    # the top eigenvalues of these models sit within ~1e-5 of each other,
    # where plain power iteration needs ~1e6 steps for 1e-6 accuracy
    model = CartesianModel(gen_cartesian_mask(16, accel, 4, seed=seed), gen_smaps(16, 4))
    A = dense_matrix(model)
    top = np.linalg.eigvalsh(A.conj().T @ A)[-1]
    est = spectral_norm(model, tol=1e-9, max_iter=500, method="lanczos")
    assert est == pytest.approx(top, rel=1e-6)
    assert model.lipschitz == pytest.approx(top, rel=1e-6)


def test_lanczos_on_gapped_spectrum_is_near_exact(radial16):
    A = dense_matrix(radial16)
    top = np.linalg.eigvalsh(A.conj().T @ A)[-1]
    assert spectral_norm(radial16, tol=1e-13, method="lanczos") == pytest.approx(top, rel=1e-11)


def test_unknown_method_rejected(radial16):
    with pytest.raises(ValueError):
        spectral_norm(radial16, method="qr")


def test_undersampled_cartesian_norm_at_most_one(cart16):
    assert cart16.lipschitz <= 1 + 1e-6


def test_spectral_norm_warns_when_capped(radial16):
    with pytest.warns(ConvergenceWarning):
        spectral_norm(radial16, tol=1e-15, max_iter=3)


def test_apply_layout_is_coil_major(cart16, rng):
    x = crandn(rng, 16, 16)
    y = cart16.apply(x).reshape(cart16.n_coils, -1)
    for c in range(cart16.n_coils):
        assert np.allclose(y[c], centered_fft2(cart16.smaps[c] * x)[cart16.mask])


def test_shape_checks(cart16):
    with pytest.raises(DimensionError):
        cart16.apply(np.ones((8, 8)))
    with pytest.raises(DimensionError):
        cart16.adjoint(np.ones(3))
    with pytest.raises(DimensionError):
        CartesianModel(np.ones((8, 8), bool), cart16.smaps)
    with pytest.raises(ValueError):
        CartesianModel(np.zeros((16, 16), bool), cart16.smaps)
    with pytest.raises(ValueError):
        NonUniformModel(np.array([[np.nan, 0.0]]), cart16.smaps)


def test_ssos_normalize():
    maps = ssos_normalize(gen_smaps(12, 5) * 3.0)
    assert np.allclose(np.sum(np.abs(maps) ** 2, axis=0), 1.0, atol=1e-12)


def test_trajectory_and_mask_files_round_trip(tmp_path, spiral16, cart16):
    write_trajectory(tmp_path / "t.csv", spiral16.coords)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "kx,ky"
    assert np.array_equal(read_trajectory(tmp_path / "t.csv"), spiral16.coords)
    write_mask(tmp_path / "m.pbm", cart16.mask)
    assert (tmp_path / "m.pbm").read_text().startswith("P1\n16 16\n")
    assert np.array_equal(read_mask(tmp_path / "m.pbm"), cart16.mask)


def test_bad_files_rejected(tmp_path):
    (tmp_path / "t.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory(tmp_path / "t.csv")
    (tmp_path / "m.pbm").write_text("P1\n2 2\n1 0 1\n")
    with pytest.raises(ValueError):
        read_mask(tmp_path / "m.pbm")
