import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mesh
from feminpaint.femsolve import inpaint
from feminpaint.image import Image
from feminpaint.oracles import OracleSizeError, dense_least_squares, materialise_B
from feminpaint.tonal import (ReconstructionOperator, mask_samples, tonal_optimise,
                              tonal_optimise_l1)


def make(seed, w=32, h=32, m=30, p=30, **kw):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng, w, h, m, p)
    return rng, mesh, ReconstructionOperator(mesh, w, h, **kw)


def smooth_image(rng, w, h, c=1):
    y, x = np.mgrid[0:h, 0:w] / max(w, h)
    base = 128 + 80 * np.sin(5 * x + 2 * y) * np.cos(3 * y)
    data = np.stack([base + rng.normal(0, 10, base.shape) for _ in range(c)], -1)
    return Image(w, h, c, data.ravel())


def test_apply_matches_inpaint():
    rng, mesh, opr = make(0)
    g = rng.uniform(0, 255, 30)
    ref = inpaint(mesh, g, 32, 32).image.data
    assert np.abs(opr.apply(g) - ref).max() <= 1e-4


def test_zero_in_zero_out():
    _, _, opr = make(1)
    assert not opr.apply(np.zeros(30)).any()
    assert not opr.apply_adjoint(np.zeros(32 * 32)).any()


def test_apply_is_linear():
    rng, _, opr = make(2)
    g = rng.uniform(0, 255, 30)
    u = opr.apply(g)
    np.testing.assert_allclose(opr.apply(-3.5 * g), -3.5 * u, rtol=1e-5, atol=1e-5 * np.abs(u).max())


def test_adjoint_identity_ten_probes():
    rng, _, opr = make(3)
    for _ in range(10):
        # nonnegative probes keep the inner products away from cancellation
        x = rng.uniform(0, 1, opr.n_mask)
        y = rng.uniform(0, 1, opr.n_pixels)
        lhs = float(opr.apply(x) @ y)
        rhs = float(x @ opr.apply_adjoint(y))
        assert abs(lhs - rhs) <= 1e-5 * abs(lhs)


def test_adjoint_identity_signed_probes():
    rng, _, opr = make(16)
    for _ in range(10):
        x = rng.standard_normal(opr.n_mask)
        y = rng.standard_normal(opr.n_pixels)
        lhs = float(opr.apply(x) @ y)
        rhs = float(x @ opr.apply_adjoint(y))
        assert abs(lhs - rhs) <= 1e-5 * np.linalg.norm(opr.apply(x)) * np.linalg.norm(y)


def test_materialised_b_checks():
    rng, _, opr = make(4, w=12, h=12, m=8, p=6)
    b = materialise_B(opr)
    assert b.shape == (144, 8)
    np.testing.assert_allclose(b @ np.ones(8), 1.0, atol=1e-5)
    for _ in range(5):
        r = rng.standard_normal(144)
        np.testing.assert_allclose(opr.apply_adjoint(r), b.T @ r, atol=1e-5 * np.abs(r).sum())


def test_materialise_size_guard():
    _, _, opr = make(5, w=20, h=20, m=8, p=6)
    with pytest.raises(OracleSizeError):
        materialise_B(opr)


def test_matches_dense_least_squares():
    for seed in range(5):
        rng, _, opr = make(10 + seed, w=12, h=12, m=8, p=6, inner_tol=1e-12)
        f = Image(12, 12, 1, rng.uniform(0, 255, 144))
        exact = dense_least_squares(materialise_B(opr), f.data)
        res = tonal_optimise(opr, f, outer_tol=1e-12, outer_max=500)
        assert np.abs(res.g_opt[:, 0] - exact).max() <= 1e-4


def test_consistent_system_recovered():
    rng, _, opr = make(6)
    g0 = rng.uniform(0, 255, 30)
    f = Image(32, 32, 1, opr.apply(g0))
    res = tonal_optimise(opr, f)
    assert res.mse_after <= 1e-6
    assert np.abs(opr.apply(res.g_opt[:, 0]) - f.data).max() <= 1e-2


def test_gradient_below_tolerance_and_counts():
    rng, _, opr = make(7)
    f = smooth_image(rng, 32, 32)
    res = tonal_optimise(opr, f, outer_tol=1e-4)
    g = res.g_opt[:, 0]
    grad = opr.apply_adjoint(opr.apply(g) - f.data)
    assert np.linalg.norm(grad) / np.linalg.norm(opr.apply_adjoint(f.data)) <= 1e-4
    assert res.grad_norm <= 1e-4
    assert res.outer_iterations > 0
    assert res.inner_solve_count >= 2 * res.outer_iterations
    assert res.mse_after < res.mse_before
    g_init = mask_samples(f, opr)[:, 0]
    assert res.mse_before == pytest.approx(np.mean((opr.apply(g_init) - f.data) ** 2))
    assert res.mse_after == pytest.approx(np.mean((opr.apply(g) - f.data) ** 2))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_never_hurts(seed, m):
    rng, _, opr = make(seed, w=24, h=20, m=m, p=10)
    f = Image(24, 20, 1, rng.uniform(0, 255, 480))
    res = tonal_optimise(opr, f)
    assert res.mse_after <= res.mse_before + 1e-9


def test_colour_channels_independent():
    rng, mesh, opr = make(8)
    f = smooth_image(rng, 32, 32, 3)
    col = tonal_optimise(opr, f)
    for c in range(3):
        grey = Image(32, 32, 1, f.pixels()[:, c])
        one = tonal_optimise(ReconstructionOperator(mesh, 32, 32), grey)
        np.testing.assert_allclose(col.g_opt[:, c], one.g_opt[:, 0], atol=1e-8)


def test_warm_start_flag_close():
    rng, mesh, opr = make(9)
    f = smooth_image(rng, 32, 32)
    a = tonal_optimise(opr, f)
    b = tonal_optimise(ReconstructionOperator(mesh, 32, 32, warm_start=True), f)
    assert b.mse_after == pytest.approx(a.mse_after, rel=1e-3)


def test_dimension_mismatch():
    _, _, opr = make(11)
    with pytest.raises(ValueError):
        tonal_optimise(opr, Image(16, 16, 1, np.zeros(256)))


def test_l1_large_epsilon_is_l2():
    rng, _, opr = make(12)
    f = smooth_image(rng, 32, 32)
    l2 = tonal_optimise(opr, f)
    l1 = tonal_optimise_l1(opr, f, irls_iters=2, epsilon=1e6)
    np.testing.assert_allclose(l1.g_opt, l2.g_opt, atol=1e-2)


def test_l1_uniform_residuals_first_step_is_l2():
    # a constant image is reproduced exactly, so every residual is zero and all
    # weights equal 1/epsilon
    rng, _, opr = make(13)
    f = Image(32, 32, 1, np.full(1024, 77.0))
    l1 = tonal_optimise_l1(opr, f, irls_iters=1, epsilon=1.0)
    np.testing.assert_allclose(l1.g_opt, 77.0, atol=1e-3)


def test_l1_improves_over_l2():
    rng, _, opr = make(14)
    f = smooth_image(rng, 32, 32)
    data = f.data.copy()
    hit = rng.choice(1024, 50, replace=False)
    data[hit] = rng.choice([0.0, 255.0], 50)
    f = Image(32, 32, 1, data)
    l2 = tonal_optimise(opr, f)
    l1 = tonal_optimise_l1(opr, f, irls_iters=3)
    l1_of = lambda g: np.abs(opr.apply(g[:, 0]) - f.data).sum()
    assert l1_of(l1.g_opt) <= l1_of(l2.g_opt)
    hist = l1.l1_history[0]
    assert len(hist) == 4
    assert hist[0] == pytest.approx(l1_of(l2.g_opt), rel=1e-6)
    assert all(b <= a * (1 + 1e-6) for a, b in zip(hist, hist[1:]))


def test_l1_rejects_bad_epsilon():
    _, _, opr = make(15)
    with pytest.raises(ValueError):
        tonal_optimise_l1(opr, Image(32, 32, 1, np.zeros(1024)), epsilon=0)
