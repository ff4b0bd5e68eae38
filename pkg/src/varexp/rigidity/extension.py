"""Reflection extension across an affine graph preserving ``e u = f + g``.

The domain lies below the graph x_n = phi(x'). A node x above the graph reads
data at the reflected heights x_n - lam delta(x), lam in [1, 2], with
delta(x) = 2 (x_n - phi(x')) and the kernel psi(lam) = 28 - 18 lam.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..exponent import ExponentField
from ..grid import GridDomain, TensorField, gradient, make_domain, restrict, sym
from ..varnorm import norm

QUAD_NODES = 17
KERNEL = "28 - 18 lambda"


def kernel(lam):
    return 28.0 - 18.0 * np.asarray(lam, dtype=float)


def kernel_moments() -> tuple:
    """Closed forms of the integrals of psi and lam psi over [1, 2]: (28 - 27, 42 - 42)."""
    return 28.0 * 1 - 9.0 * (4 - 1), 14.0 * (4 - 1) - 6.0 * (8 - 1)


def quadrature() -> tuple:
    """Gauss-Legendre nodes and weights on [1, 2]."""
    x, w = np.polynomial.legendre.leggauss(QUAD_NODES)
    return 1.5 + 0.5 * x, 0.5 * w


@dataclass(frozen=True)
class AffineGraph:
    slope: np.ndarray
    offset: float

    @classmethod
    def from_domain(cls, domain: GridDomain) -> "AffineGraph":
        if domain.shape != "graph-halfspace":
            raise ValueError("extension needs a graph-halfspace domain")
        return cls(np.asarray(domain.params["slope"], float), float(domain.params["offset"]))

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.slope))

    def __call__(self, xp):
        return self.offset + xp @ self.slope

    def delta_gradient(self) -> np.ndarray:
        return 2.0 * np.append(-self.slope, 1.0)


class ExtensionError(ValueError):
    pass


@dataclass
class ExtensionResult:
    u: TensorField
    f: TensorField
    g: TensorField
    p: ExponentField
    q: ExponentField
    r: float
    ball_mask: np.ndarray
    upper_mask: np.ndarray
    upper_weights: np.ndarray
    residual: float
    c_bar: float
    kernel: str = KERNEL

    def to_json(self) -> dict:
        return {"r": self.r, "residual": self.residual, "c_bar": self.c_bar, "kernel": self.kernel}


def _column_interpolator(domain: GridDomain):
    """Linear interpolation along x_n through the inside nodes of each lattice column."""
    inside = domain.inside_mask
    m = inside.shape[-1]
    ks = np.arange(m)
    has = inside.any(axis=-1)
    top = np.where(has, np.where(inside, ks, -1).max(axis=-1), -1)
    bottom = np.where(has, np.where(inside, ks, m).min(axis=-1), m)
    lo_n, h = domain.lo[-1], domain.h

    def interp(values, cols, y):
        # cols: tuple of index arrays over x', y: heights (same shape)
        t, b = top[cols], bottom[cols]
        if np.any(t - b < 1):
            raise ExtensionError("column has fewer than two inside nodes")
        if np.any(y < lo_n + b * h - 1e-9 * h):
            raise ExtensionError("reflected point leaves the sampled region")
        k0 = np.clip(np.floor((y - lo_n) / h).astype(int), b, t - 1)
        s = (y - (lo_n + k0 * h)) / h
        v0 = values[cols + (k0,)]
        v1 = values[cols + (k0 + 1,)]
        s = s.reshape(s.shape + (1,) * (v0.ndim - s.ndim))
        return v0 + s * (v1 - v0)

    return interp


def _region_weights(x, h, test):
    """h^n times the fraction of quarter-offset points satisfying ``test``."""
    n = x.shape[-1]
    frac = np.zeros(x.shape[:-1])
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        frac += test(x + 0.25 * h * np.array(signs))
    return frac / 2**n * h**n


def nitsche_extend(u, f, g, p, q, R: float, phi=None) -> ExtensionResult:
    """Extend (u, f, g, p, q) from the domain to the ball of radius r around the graph point over x' = 0.

    ``phi`` may be an AffineGraph; anything else is rejected. Returns fields on
    the full lattice restricted to the ball; below the graph they equal the input.
    """
    dom = u.domain
    graph = AffineGraph.from_domain(dom) if phi is None else phi
    if not isinstance(graph, AffineGraph):
        raise ExtensionError("only affine graphs are supported")
    if R <= 0:
        raise ValueError("R must be positive")
    n = dom.dim
    L = graph.lipschitz
    c1 = 2.0
    r = 0.9 * R / (2.0 * c1 * (1.0 + L))
    x = dom.coords
    x0 = np.append(np.zeros(n - 1), graph.offset)
    above = lambda y: y[..., -1] - graph(y[..., :-1])
    in_ball = lambda y: np.linalg.norm(y - x0, axis=-1) < r

    ball = in_ball(x)
    below = dom.inside_mask
    upper = ball & ~below & (above(x) >= -1e-12)
    if np.any(ball & ~below & ~upper):
        raise ExtensionError("ball meets nodes that are neither inside nor above the graph")
    # a margin of a few nodes keeps difference stencils complete at the rim of the ball
    wide = (np.linalg.norm(x - x0, axis=-1) < r + 3 * dom.h) & ~below & (above(x) >= -1e-12)

    idx = np.nonzero(wide)
    cols = idx[:-1]
    xs = x[wide]
    delta = 2.0 * np.maximum(above(xs), 0.0)
    lam, wq = quadrature()
    psi = kernel(lam)
    y = xs[:, -1:] - lam[None, :] * delta[:, None]
    if np.any(np.abs(y - x0[-1]) > R) or np.any(np.abs(xs[:, :-1] - x0[:-1]) > R):
        raise ExtensionError("reflected points leave the cube of radius R")
    colsq = tuple(np.repeat(c[:, None], QUAD_NODES, axis=1) for c in cols)
    interp = _column_interpolator(dom)
    grad_delta = graph.delta_gradient()

    u_ref = interp(u.values, colsq, y)
    u_ext = u.values.copy()
    u_ext[wide] = np.einsum("k,jki->ji", wq * psi, u_ref) - np.einsum(
        "k,jk->j", wq * psi * lam, u_ref[..., -1]
    )[:, None] * grad_delta

    def extend_matrix(m):
        m_ref = interp(m.values, colsq, y)
        mnn = m_ref[..., -1, -1]
        dd = np.outer(grad_delta, grad_delta)
        t1 = np.einsum("k,jkab->jab", wq * psi, m_ref) + np.einsum("k,jk->j", wq * psi * lam**2, mnn)[:, None, None] * dd
        me = np.einsum("k,jka->ja", wq * psi * lam, m_ref[..., :, -1])
        t2 = me[:, :, None] * grad_delta[None, None, :] + grad_delta[None, :, None] * me[:, None, :]
        out = m.values.copy()
        out[wide] = t1 - t2
        return out

    f_ext, g_ext = extend_matrix(f), extend_matrix(g)

    def extend_exponent(e):
        vals = e.values.copy()
        ref = interp(e.values, colsq, y)
        vals[wide] = np.clip(ref.min(axis=1), e.p_minus, e.p_plus)
        return vals

    rect = make_domain("rectangle", max(dom.grid_shape), dim=n, box=(dom.lo, dom.hi))
    rect = _match_lattice(rect, dom)
    ball_dom = restrict(rect, ball)
    p_ext = ExponentField(ball_dom, extend_exponent(p))
    q_ext = ExponentField(ball_dom, extend_exponent(q))
    u_t = TensorField(ball_dom, u_ext)

    # e u~ jumps across the graph, so differentiate above it with one-sided stencils
    upper_dom = restrict(rect, wide)
    eu_up = sym(gradient(TensorField(upper_dom, u_ext)).values)
    gap = np.abs(eu_up - f_ext - g_ext)[upper]
    resid = float(gap.max()) if gap.size else 0.0

    w_up = _region_weights(x, dom.h, lambda z: in_ball(z) & (above(z) > 0))
    w_up = np.where(upper, w_up, 0.0)
    fnorm = norm(TensorField(dom, f.values), p, mask=np.linalg.norm(x - x0, axis=-1) < R)
    if fnorm > 0:
        a = np.linalg.norm(f_ext[upper] / fnorm, axis=(-2, -1))
        c_bar = float(np.dot(w_up[upper], a ** p_ext.values[upper]))
    else:
        c_bar = 0.0
    return ExtensionResult(
        u=u_t,
        f=TensorField(ball_dom, f_ext),
        g=TensorField(ball_dom, g_ext),
        p=p_ext,
        q=q_ext,
        r=r,
        ball_mask=ball,
        upper_mask=upper,
        upper_weights=w_up,
        residual=resid,
        c_bar=c_bar,
    )


def _match_lattice(rect: GridDomain, dom: GridDomain) -> GridDomain:
    if rect.grid_shape != dom.grid_shape or not np.isclose(rect.h, dom.h) or not np.allclose(rect.lo, dom.lo):
        raise ExtensionError("could not rebuild the lattice of the input domain")
    return rect
