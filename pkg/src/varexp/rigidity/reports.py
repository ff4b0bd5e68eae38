"""Rigidity, Korn and weighted Poincare estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exponent import ExponentField
from ..grid import GridDomain, TensorField, distance_weight, gradient, mean_gradient, scalar_gradient, skew, sym
from ..rotgeo import dist_SO, nearest_rotation
from ..varnorm import g_modular, luxemburg_arrays, norm

ZERO_TOL = 1e-12


@dataclass
class RigidityReport:
    rotation_or_skew: np.ndarray
    lhs_norm: float
    rhs_norm: float
    ratio: float
    exact_zero: bool
    grid_h: float
    exponent_summary: tuple

    def to_json(self) -> dict:
        return {
            "rotation_or_skew": np.asarray(self.rotation_or_skew).tolist(),
            "lhs_norm": self.lhs_norm,
            "rhs_norm": self.rhs_norm,
            "ratio": self.ratio,
            "exact_zero": self.exact_zero,
            "grid_h": self.grid_h,
            "exponent_summary": list(self.exponent_summary),
        }


def make_report(matrix, lhs, rhs, p: ExponentField) -> RigidityReport:
    zero = lhs <= ZERO_TOL and rhs <= ZERO_TOL
    if zero:
        ratio = float("nan")
    elif rhs <= ZERO_TOL:
        ratio = float("inf")
    else:
        ratio = lhs / rhs
    return RigidityReport(np.asarray(matrix), float(lhs), float(rhs), ratio, zero, p.domain.h, p.summary())


def _field(domain, values):
    return TensorField(domain, values)


def _require_p_above_one(p):
    if p.p_minus <= 1.0:
        raise ValueError("estimators need p_minus > 1")


def rigidity_report(u: TensorField, p: ExponentField, domain: GridDomain | None = None) -> RigidityReport:
    """R = nearest rotation to the mean gradient; ||grad u - R||_p against ||dist(grad u, SO(n))||_p."""
    _require_p_above_one(p)
    du = gradient(u).values
    rot = nearest_rotation(mean_gradient(u))
    lhs = norm(_field(u.domain, du - rot), p)
    rhs = norm(_field(u.domain, dist_SO(du)), p)
    return make_report(rot, lhs, rhs, p)


def korn_report(u: TensorField, p: ExponentField, domain: GridDomain | None = None) -> RigidityReport:
    """S = skew part of the mean gradient; ||grad u - S||_p against ||e u||_p."""
    _require_p_above_one(p)
    du = gradient(u).values
    s = skew(mean_gradient(u))
    lhs = norm(_field(u.domain, du - s), p)
    rhs = norm(_field(u.domain, sym(du)), p)
    return make_report(s, lhs, rhs, p)


def g_rigidity_report(u: TensorField, p: ExponentField, domain: GridDomain | None = None) -> RigidityReport:
    """Same rotation as rigidity_report, compared through g-modulars."""
    if not (1.0 < p.p_minus and p.p_plus <= 2.0):
        raise ValueError("g-rigidity needs 1 < p <= 2")
    du = gradient(u).values
    rot = nearest_rotation(mean_gradient(u))
    lhs = g_modular(_field(u.domain, du - rot), p)
    rhs = g_modular(_field(u.domain, dist_SO(du)), p)
    return make_report(rot, lhs, rhs, p)


def _golden_min(fun, a, b, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def weighted_poincare_report(f: TensorField, p: ExponentField, domain: GridDomain | None = None) -> RigidityReport:
    """min_a ||f - a||_p (golden section per component) against ||d(., boundary) grad f||_p."""
    _require_p_above_one(p)
    dom = f.domain
    sel = dom.weights > 0
    vals = f.values[sel].reshape(int(sel.sum()), -1)
    pv, w = p.values[sel], dom.weights[sel]
    a = np.empty(vals.shape[1])
    for k in range(vals.shape[1]):
        col = vals[:, k]
        lo, hi = col.min(), col.max()
        if hi - lo <= 0:
            a[k] = lo
            continue
        a[k] = _golden_min(
            lambda c: luxemburg_arrays(np.abs(col - c), pv, w).value, lo, hi, 1e-10 * (hi - lo)
        )
    a_full = a.reshape(f.values.shape[len(dom.grid_shape):])
    lhs = norm(_field(dom, f.values - a_full), p)
    if f.rank == 0:
        df = scalar_gradient(f).values
    elif f.rank == 1:
        df = gradient(f).values
    else:
        raise ValueError("weighted Poincare expects a scalar or vector field")
    dw = distance_weight(dom).values
    weighted = df * dw.reshape(dw.shape + (1,) * (df.ndim - dw.ndim))
    rhs = norm(_field(dom, weighted), p)
    return make_report(np.atleast_1d(a_full), lhs, rhs, p)
