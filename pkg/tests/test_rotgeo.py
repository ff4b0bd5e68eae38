import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm
from scipy.stats import special_ortho_group

from conftest import rotation2
from oracles import angle_rotation_2d
from varexp.rotgeo import (
    TAYLOR_CONSTANT,
    cofactor,
    dist_SO,
    dist_SO_gradient,
    g_derivative,
    g_eval,
    nearest_rotation,
    rotation_is_unique,
    sym_skew_split,
    taylor_defect,
)

matrices2 = arrays(np.float64, (2, 2), elements=st.floats(-5, 5))
matrices3 = arrays(np.float64, (3, 3), elements=st.floats(-5, 5))


def test_dist_examples():
    assert dist_SO(np.eye(2)) == pytest.approx(0.0, abs=1e-15)
    assert dist_SO(np.zeros((2, 2))) == pytest.approx(np.sqrt(2))
    d, _ = angle_rotation_2d(np.diag([3.0, 1.0]), count=62832)
    assert dist_SO(np.diag([3.0, 1.0])) == pytest.approx(2.0, abs=1e-12)
    assert abs(d - 2.0) <= 1e-6


def test_nearest_rotation_examples(rng):
    R0 = rotation2(0.7)
    assert np.allclose(nearest_rotation(2 * R0), R0, atol=1e-14)
    S = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for eps in (1e-1, 1e-2, 1e-3):
        err = np.linalg.norm(nearest_rotation(np.eye(2) + eps * S) - expm(eps * S))
        assert err <= eps**2
    for _ in range(50):
        A = rng.normal(size=(2, 2))
        d, R = angle_rotation_2d(A)
        assert np.abs(nearest_rotation(A) - R).max() <= 1e-2
        assert abs(dist_SO(A) - d) <= 1e-3


def test_nearest_rotation_is_rotation(rng):
    A = rng.normal(size=(200, 3, 3))
    R = nearest_rotation(A)
    assert np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max() <= 1e-10
    assert np.abs(np.linalg.det(R) - 1).max() <= 1e-10
    assert np.abs(np.linalg.norm(A - R, axis=(-2, -1)) - dist_SO(A)).max() <= 1e-9


def test_degenerate_flag():
    eps = 1e-14
    A = np.diag([1.0, eps, -eps])
    assert not rotation_is_unique(A)
    R = nearest_rotation(A)
    assert np.allclose(R, nearest_rotation(A.copy()))
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert rotation_is_unique(np.eye(3))
    assert rotation_is_unique(np.diag([1.0, 1.0, -1.0]))


def test_g_examples():
    qs = np.linspace(1.0, 2.0, 100)
    assert np.all(g_eval(qs, 1.0) == 0.5)
    assert g_eval(2.0, 3.0) == pytest.approx(4.5)
    assert g_eval(1.0, 2.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        g_eval(2.5, 1.0)
    with pytest.raises(ValueError):
        g_eval(1.5, -0.1)


def test_g_derivative_matches_difference():
    q = np.linspace(1.0, 2.0, 11)[:, None]
    t = np.linspace(0.05, 4.0, 80)[None, :]
    t = t[np.abs(t - 1.0) > 1e-3][None, :]
    fd = (g_eval(q, t + 1e-6) - g_eval(q, t - 1e-6)) / 2e-6
    assert np.abs(fd - g_derivative(q, t)).max() <= 1e-6


def test_sym_skew_examples(rng):
    A = rng.normal(size=(3, 3))
    s = A + A.T
    assert np.array_equal(sym_skew_split(s)[0], s) and not sym_skew_split(s)[1].any()
    k = A - A.T
    assert not sym_skew_split(k)[0].any() and np.array_equal(sym_skew_split(k)[1], k)
    a, b = sym_skew_split(A)
    assert np.allclose(a + b, A, rtol=0, atol=1e-15)
    assert np.array_equal(a, a.T) and np.array_equal(b, -b.T)


def test_cofactor_examples(rng):
    R = rotation2(1.1)
    assert np.allclose(cofactor(R), R, atol=1e-15)
    assert np.array_equal(cofactor(np.diag([2.0, 3.0])), np.diag([3.0, 2.0]))
    assert np.array_equal(cofactor(np.eye(3)), np.eye(3))
    for n in (2, 3):
        A = rng.normal(size=(100, n, n))
        lhs = A @ np.swapaxes(cofactor(A), -1, -2)
        rhs = np.linalg.det(A)[:, None, None] * np.eye(n)
        assert np.abs(lhs - rhs).max() <= 1e-9


def test_taylor_defect_examples(rng):
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    S = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for eps in (1e-2, 1e-3, 1e-4):
        assert taylor_defect(np.eye(2) + eps * E) <= 1.0
        assert taylor_defect(np.eye(2) + eps * S) <= 1.0
    B = rng.normal(size=(10_000, 3, 3)) * 0.1
    spd = np.eye(3) + 0.5 * (B + np.swapaxes(B, -1, -2))
    assert np.nanmax(taylor_defect(spd)) <= TAYLOR_CONSTANT
    with pytest.raises(ValueError):
        taylor_defect(np.eye(2))


def test_taylor_constant_sweep(rng):
    # the recorded constant covers random A at every scale, not only near I
    for n in (2, 3):
        for scale in (0.01, 0.1, 1.0, 10.0):
            A = np.eye(n) + scale * rng.normal(size=(20_000, n, n))
            assert np.nanmax(taylor_defect(A)) <= TAYLOR_CONSTANT


def test_dist_gradient_matches_difference(rng):
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        d, diff = dist_SO_gradient(A)
        E = rng.normal(size=(3, 3))
        fd = (dist_SO(A + 1e-6 * E) ** 2 - dist_SO(A - 1e-6 * E) ** 2) / 2e-6 / 2
        assert fd == pytest.approx(np.sum(diff * E), rel=1e-5, abs=1e-8)
        assert d == pytest.approx(dist_SO(A), abs=1e-12)


@given(A=matrices2, theta=st.floats(0, 2 * np.pi))
def test_frame_indifference_2d(A, theta):
    assert dist_SO(rotation2(theta) @ A) == pytest.approx(dist_SO(A), abs=1e-9)


@given(A=matrices3, seed=st.integers(0, 2**16))
def test_frame_indifference_3d(A, seed):
    R = special_ortho_group.rvs(3, random_state=seed)
    assert dist_SO(R @ A) == pytest.approx(dist_SO(A), abs=1e-9)
    assert np.linalg.norm(A - nearest_rotation(A)) == pytest.approx(dist_SO(A), abs=1e-9)


def test_g_grid_properties():
    q = np.linspace(1.0, 2.0, 200)[:, None]
    t = np.linspace(0.0, 5.0, 200)[None, :]
    g = g_eval(q, t)
    assert np.all(g <= np.minimum(t**q, t**2) + 1e-12)
    assert np.all(np.diff(g, axis=1) >= -1e-12)
    assert np.all(np.diff(g, axis=0) >= -1e-12)
    assert np.all(g[:, 2:] - 2 * g[:, 1:-1] + g[:, :-2] >= -1e-9)


def test_g_quasi_triangle(rng):
    q = rng.uniform(1, 2, 100_000)
    s, t = rng.exponential(2.0, (2, 100_000))
    assert np.all(g_eval(q, s + t) <= 2 * (g_eval(q, s) + g_eval(q, t)) + 1e-12)


@pytest.mark.parametrize("M", [1.0, 2.0, 10.0])
def test_g_comparison_constants(M, rng):
    q = rng.uniform(1, 2, 100_000)
    small = rng.uniform(1e-6, M, 100_000)
    large = M * (1 + rng.exponential(5.0, 100_000))
    c1 = np.max(small**2 / g_eval(q, small))
    c2 = np.max(large**q / g_eval(q, large))
    assert np.isfinite(c1) and np.isfinite(c2)
    # closed-form bounds: 2 max(1, M^2) below M, and q above M (q <= 2)
    assert c1 <= 2 * max(1.0, M**2) + 1e-9
    assert c2 <= 2.0 + 1e-9 if M >= 1 else True


@pytest.mark.parametrize("M", [1.0, 3.0, 10.0])
def test_cofactor_distance_constant(M, rng):
    for n in (2, 3):
        A = rng.normal(size=(20_000, n, n))
        A *= (M * rng.uniform(0, 1, 20_000) / np.linalg.norm(A, axis=(-2, -1)))[:, None, None]
        ratio = np.linalg.norm(cofactor(A) - A, axis=(-2, -1)) / np.maximum(dist_SO(A), 1e-12)
        assert np.isfinite(ratio.max())
        assert ratio.max() <= 2 * (M + 1) ** (n - 1)
