import numpy as np
import pytest

from cqnpm.core import inner, norm
from cqnpm.regularizers import (DIFF_NORM_SQ, HuberTV, LogTV, Quadratic, diff, diff_adjoint,
                                huber, make_regularizer)

from conftest import crandn

KINDS = ("quadratic", "huber_tv", "log_tv")


def make(kind):
    return make_regularizer(kind, 0.7, delta_h=0.3, eps=0.4)


def test_diff_adjoint_pairing(rng):
    x, d = crandn(rng, 9, 7), crandn(rng, 2, 9, 7)
    assert inner(diff(x), d) == pytest.approx(inner(x, diff_adjoint(d)), rel=1e-13)


def test_diff_operator_norm_is_eight(rng):
    x = crandn(rng, 16, 16)
    for _ in range(3000):
        x = diff_adjoint(diff(x))
        x /= norm(x)
    assert inner(x, diff_adjoint(diff(x))).real == pytest.approx(DIFF_NORM_SQ, rel=1e-6)
    # the checkerboard is the exact maximizer
    cb = (-1.0) ** np.add.outer(np.arange(16), np.arange(16))
    assert np.allclose(diff_adjoint(diff(cb)), 8 * cb)


def test_constant_image_has_zero_tv_and_gradient():
    x = np.full((6, 6), 0.3 + 0.2j)
    for kind in ("huber_tv", "log_tv"):
        reg = make(kind)
        assert reg.value(x) == 0.0
        assert np.all(reg.grad(x) == 0)


def test_quadratic_value_and_gradient(rng):
    x, a = crandn(rng, 5, 5), crandn(rng, 5, 5)
    reg = Quadratic(2.0, a)
    assert reg.value(x) == pytest.approx(np.sum(np.abs(x - a) ** 2), rel=1e-14)
    assert np.allclose(reg.grad(x), 2.0 * (x - a))
    assert np.allclose(reg.denoise(x), x - 2.0 * (x - a))


def test_huber_matches_piecewise_definition():
    delta = 0.25
    for t in np.linspace(0, 2, 41):
        ref = t * t / 2 if t <= delta else delta * t - delta * delta / 2
        assert huber(np.array(t), delta) == pytest.approx(ref, abs=1e-15)


def test_huber_tv_against_explicit_loop(rng):
    x = crandn(rng, 4, 5)
    reg = HuberTV(1.3, 0.4)
    total = 0.0
    for i in range(4):
        for j in range(5):
            for nb in (x[i, (j + 1) % 5], x[(i + 1) % 4, j]):
                t = abs(nb - x[i, j])
                total += t * t / 2 if t <= 0.4 else 0.4 * (t - 0.2)
    assert reg.value(x) == pytest.approx(1.3 * total, rel=1e-13)


def test_log_tv_against_explicit_loop(rng):
    x = crandn(rng, 4, 4)
    reg = LogTV(0.9, 0.5)
    total = 0.0
    for i in range(4):
        for j in range(4):
            for nb in (x[i, (j + 1) % 4], x[(i + 1) % 4, j]):
                total += np.log(1 + abs(nb - x[i, j]) ** 2 / 0.25)
    assert reg.value(x) == pytest.approx(0.9 * 0.25 / 2 * total, rel=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_matches_real_central_differences(kind, rng):
    reg = make(kind)
    x = 0.5 * crandn(rng, 8, 8)
    g = reg.grad(x)
    h = 1e-5
    for _ in range(20):
        p = crandn(rng, 8, 8)
        p /= norm(p)
        fd = (reg.value(x + h * p) - reg.value(x - h * p)) / (2 * h)
        an = inner(g, p).real
        assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3)


@pytest.mark.parametrize("kind", KINDS)
def test_lipschitz_bound_holds_on_random_pairs(kind, rng):
    reg = make(kind)
    L = reg.lipschitz()
    worst = 0.0
    for scale in (0.01, 0.1, 1.0, 10.0):
        for _ in range(50):
            x, y = scale * crandn(rng, 8, 8), scale * crandn(rng, 8, 8)
            worst = max(worst, norm(reg.grad(x) - reg.grad(y)) / norm(x - y))
    assert worst <= L * (1 + 1e-12)


def test_lipschitz_constants():
    assert Quadratic(3.0).lipschitz() == 3.0
    assert HuberTV(1.0, 0.1).lipschitz() == 8.0
    assert LogTV(0.5, 0.1).lipschitz() == 4.0


def test_huber_tv_lipschitz_is_attained_on_checkerboard():
    reg = HuberTV(1.0, 10.0)  # quadratic regime everywhere
    cb = 0.01 * (-1.0) ** np.add.outer(np.arange(8), np.arange(8))
    assert norm(reg.grad(cb)) / norm(cb) == pytest.approx(8.0, rel=1e-12)


@pytest.mark.parametrize("kind", ("huber_tv", "log_tv"))
def test_tv_invariant_to_global_phase_and_shift(kind, rng):
    reg = make(kind)
    x = crandn(rng, 6, 6)
    rot = np.exp(0.7j) * x
    assert reg.value(rot) == pytest.approx(reg.value(x), rel=1e-12)
    assert reg.value(x + (0.4 - 0.1j)) == pytest.approx(reg.value(x), rel=1e-12)
    assert reg.value(np.roll(x, 2, axis=0)) == pytest.approx(reg.value(x), rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_small_gradient_step_decreases_value(kind, rng):
    reg = make(kind)
    x = crandn(rng, 8, 8)
    assert reg.value(x - reg.grad(x) / reg.lipschitz()) < reg.value(x)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        make_regularizer("cnn", 1.0)
    with pytest.raises(ValueError):
        HuberTV(0.0, 0.1)
    with pytest.raises(ValueError):
        LogTV(1.0, -1.0)
    with pytest.raises(ValueError):
        Quadratic(-2.0)
