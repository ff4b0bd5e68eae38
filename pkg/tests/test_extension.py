import numpy as np
import pytest

from varexp.exponent import build_exponent
from varexp.grid import TensorField, make_domain, sym_gradient
from varexp.rigidity import AffineGraph, ExtensionError, kernel, kernel_moments, nitsche_extend, quadrature


def setup(res, A=None, slope=0.3, fn=None):
    d = make_domain("graph-halfspace", res, slope=slope)
    x = d.coords
    if fn is None:
        A = np.array([[0.4, 0.7], [-0.2, 0.0]]) if A is None else A
        vals = x @ A.T + np.array([0.5, -1.0])
    else:
        vals = fn(x)
    u = TensorField(d, vals)
    eu = sym_gradient(u).values
    side = x[..., 0] > 0.0
    f = TensorField(d, eu * side[..., None, None])
    g = TensorField(d, eu * ~side[..., None, None])
    p = build_exponent("linear-ramp", {"start": 1.4, "stop": 2.0}, d)
    return d, u, f, g, p, p.scaled(1.2)


def test_kernel_moments_closed_form():
    assert kernel_moments() == (1.0, 0.0)
    lam, w = quadrature()
    assert np.dot(w, kernel(lam)) == pytest.approx(1.0, abs=1e-13)
    assert np.dot(w, lam * kernel(lam)) == pytest.approx(0.0, abs=1e-13)
    # the quadratic moment used by the normal-normal term: 28*7/3 - 18*15/4
    assert np.dot(w, lam**2 * kernel(lam)) == pytest.approx(28 * 7 / 3 - 18 * 15 / 4, abs=1e-12)


def test_affine_with_zero_normal_entry():
    A = np.array([[0.4, 0.7], [-0.2, 0.0]])
    d, u, f, g, p, q = setup(65, A)
    ext = nitsche_extend(u, f, g, p, q, R=0.8)
    up = ext.upper_mask
    assert up.any()
    # A_nn = 0 makes the reflection continue u affinely
    eu = sym_gradient(TensorField(make_domain("rectangle", 65, box=(d.lo, d.hi)), ext.u.values)).values
    inner = up & (np.linalg.norm(d.coords - np.array([0.0, 0.0]), axis=-1) < ext.r - 2 * d.h)
    assert np.abs(eu[inner] - 0.5 * (A + A.T)).max() <= 1e-10
    assert np.abs((ext.f.values + ext.g.values)[up] - 0.5 * (A + A.T)).max() <= 10 * d.h
    assert ext.residual <= 1e-10


def test_affine_general():
    A = np.array([[0.4, 0.7], [-0.2, 0.9]])
    d, u, f, g, p, q = setup(65, A)
    ext = nitsche_extend(u, f, g, p, q, R=0.8)
    assert ext.residual <= 1e-10


def test_inside_unchanged():
    d, u, f, g, p, q = setup(65, fn=lambda x: np.stack([np.sin(2 * x[..., 1]), x[..., 0] * x[..., 1]], -1))
    ext = nitsche_extend(u, f, g, p, q, R=0.8)
    below = ext.ball_mask & d.inside_mask
    assert np.array_equal(ext.u.values[below], u.values[below])
    assert np.array_equal(ext.f.values[below], f.values[below])
    assert np.array_equal(ext.p.values[below], p.values[below])


def test_smooth_residual_and_cbar_stable():
    fn = lambda x: 0.2 * np.stack([np.sin(2 * x[..., 1] + x[..., 0]), np.cos(x[..., 0] - x[..., 1])], -1)
    cbars = []
    for res in (65, 129):
        d, u, f, g, p, q = setup(res, fn=fn)
        ext = nitsche_extend(u, f, g, p, q, R=0.8)
        assert ext.residual <= 10 * d.h
        cbars.append(ext.c_bar)
    assert all(c > 0 for c in cbars) and max(cbars) / min(cbars) <= 2.0


def test_extended_exponent_bounds():
    d, u, f, g, p, q = setup(65, fn=lambda x: np.sin(x))
    ext = nitsche_extend(u, f, g, p, q, R=0.8)
    up = ext.upper_mask
    assert np.all(ext.p.values[up] >= p.p_minus - 1e-12) and np.all(ext.p.values[up] <= p.p_plus + 1e-12)
    assert np.all(ext.q.values[up] >= ext.p.values[up])
    assert ext.r == pytest.approx(0.9 * 0.8 / (4 * 1.3))


def test_rejections():
    d, u, f, g, p, q = setup(33)
    with pytest.raises(ExtensionError):
        nitsche_extend(u, f, g, p, q, R=0.8, phi=lambda x: x**2)
    with pytest.raises(ValueError):
        nitsche_extend(u, f, g, p, q, R=-1.0)
    rect = make_domain("rectangle", 33)
    ur = TensorField(rect, rect.coords.copy())
    with pytest.raises(ValueError):
        nitsche_extend(ur, ur, ur, p, q, R=0.8)
    # a radius this large sends reflected points below the sampled box
    with pytest.raises(ExtensionError):
        nitsche_extend(u, f, g, p, q, R=3.0)


def test_affine_graph_helpers():
    d = make_domain("graph-halfspace", 17, slope=0.3, offset=0.1)
    gr = AffineGraph.from_domain(d)
    assert gr.lipschitz == pytest.approx(0.3)
    assert gr(np.array([[1.0]]))[0] == pytest.approx(0.4)
    assert np.allclose(gr.delta_gradient(), [-0.6, 2.0])
