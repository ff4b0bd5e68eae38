"""Modulars, Luxemburg norms and related quantities on sampled fields."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from .exponent import ExponentField
from .grid import GridDomain, TensorField
from .rotgeo import g_eval

NORM_RTOL = 1e-12


@dataclass
class NormResult:
    value: float
    modular_at_value: float
    iterations: int
    bracket: tuple

    def to_json(self) -> dict:
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        return d


def _check(f: TensorField, p: ExponentField):
    if not f.domain.same_grid(p.domain):
        raise ValueError("field and exponent live on different domains")


def _samples(f: TensorField, p: ExponentField, mask=None):
    """(|f|, p, w) on the nodes carrying positive quadrature weight."""
    _check(f, p)
    w = f.domain.weights
    sel = w > 0
    if mask is not None:
        sel = sel & mask
    a = f.pointwise_norm()[sel]
    if not np.all(np.isfinite(a)):
        raise ValueError("field has non-finite samples")
    return a, p.values[sel], w[sel]


def modular_arrays(a, p, w) -> float:
    nz = a > 0
    return float(np.dot(w[nz], a[nz] ** p[nz]))


def luxemburg_arrays(a, p, w) -> NormResult:
    """Bisection in log(lambda) on lambda -> modular(a / lambda) = 1."""
    nz = (a > 0) & (w > 0)
    a, p, w = a[nz], p[nz], w[nz]
    if a.size == 0:
        return NormResult(0.0, 0.0, 0, (0.0, 0.0))
    fmax = a.max()
    measure = w.sum()
    pm = p.min()

    def rho(lam):
        return float(np.dot(w, (a / lam) ** p))

    lo = fmax * min(measure, 1.0) ** (1.0 / pm) / 2.0
    hi = fmax * max(measure, 1.0) ** (1.0 / pm) * 2.0
    while rho(lo) < 1.0:
        lo /= 2.0
    while rho(hi) > 1.0:
        hi *= 2.0
    bracket = (lo, hi)
    it = 0
    mid = math.sqrt(lo * hi)
    val = rho(mid)
    while abs(val - 1.0) > NORM_RTOL and hi / lo - 1.0 > 4e-16 and it < 200:
        if val > 1.0:
            lo = mid
        else:
            hi = mid
        mid = math.sqrt(lo * hi)
        val = rho(mid)
        it += 1
    return NormResult(float(mid), val, it, bracket)


def modular(f: TensorField, p: ExponentField, mask=None) -> float:
    """Quadrature of |f|^p (Frobenius norm for matrices)."""
    return modular_arrays(*_samples(f, p, mask))


def luxemburg_norm(f: TensorField, p: ExponentField, mask=None) -> NormResult:
    return luxemburg_arrays(*_samples(f, p, mask))


def norm(f: TensorField, p: ExponentField, mask=None) -> float:
    return luxemburg_norm(f, p, mask).value


def g_modular(f: TensorField, p: ExponentField, mask=None) -> float:
    a, pv, w = _samples(f, p, mask)
    return float(np.dot(w, g_eval(pv, a)))


def _product(f: TensorField, g: TensorField) -> TensorField:
    if f.rank == 0 or g.rank == 0:
        fv = f.values.reshape(f.values.shape + (1,) * (g.rank - f.rank)) if f.rank == 0 else f.values
        gv = g.values.reshape(g.values.shape + (1,) * (f.rank - g.rank)) if g.rank == 0 else g.values
        return TensorField(f.domain, fv * gv)
    if f.rank != g.rank:
        raise ValueError("product needs equal ranks or a scalar factor")
    axes = tuple(range(f.values.ndim - f.rank, f.values.ndim))
    return TensorField(f.domain, (f.values * g.values).sum(axis=axes))


def holder_product_check(f, g, p, q, s) -> tuple:
    """(||f g||_s, 2 ||f||_p ||g||_q) with 1/s = 1/p + 1/q."""
    act = f.domain.active_mask
    gap = np.abs(1.0 / s.values - 1.0 / p.values - 1.0 / q.values)[act]
    if gap.max() > 1e-9:
        raise ValueError(f"1/s = 1/p + 1/q violated (max defect {gap.max():.3g})")
    lhs = norm(_product(f, g), s)
    rhs = 2.0 * norm(f, p) * norm(g, q)
    return lhs, rhs


def _ball_offsets(radius_nodes: float, dim: int) -> np.ndarray:
    r = int(math.floor(radius_nodes + 1e-9))
    ax = np.arange(-r, r + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    dist2 = sum(g.astype(float) ** 2 for g in grids)
    return (dist2 <= radius_nodes**2 + 1e-9).astype(float)


def maximal_radii(domain: GridDomain) -> list:
    radii = []
    rho = domain.h
    while True:
        radii.append(rho)
        if rho >= domain.diameter:
            break
        rho *= 2.0
    return radii


def maximal_function(f: TensorField, domain: GridDomain | None = None, mode: str = "local") -> TensorField:
    """Sup of ball averages of |f| over dyadic radii h, 2h, ... (closed lattice balls).

    global: zero extension, divide by the lattice volume of the ball.
    local:  divide by the quadrature measure of the ball inside the domain.
    """
    domain = f.domain if domain is None else domain
    if mode not in ("global", "local"):
        raise ValueError("mode must be 'global' or 'local'")
    if f.rank != 0:
        f = TensorField(f.domain, f.pointwise_norm())
    w = domain.weights
    num_src = w * np.abs(f.values)
    out = np.zeros(domain.grid_shape)
    act = w > 0
    for rho in maximal_radii(domain):
        ker = _ball_offsets(rho / domain.h, domain.dim)
        num = np.clip(fftconvolve(num_src, ker, mode="same"), 0.0, None)
        if mode == "global":
            den = ker.sum() * domain.h**domain.dim
        else:
            den = np.clip(fftconvolve(w, ker, mode="same"), 0.0, None)
            den = np.where(act, den, 1.0)
        avg = np.where(act, num / den, 0.0)
        out = np.maximum(out, avg)
    return TensorField(domain, out)


class Localization(NamedTuple):
    left: float
    middle: float
    right: float
    ratio_up: float
    ratio_down: float


def assign_cubes(domain: GridDomain, cubes) -> np.ndarray:
    """Index of the (half-open) cube holding each node, -1 where none does."""
    x = domain.coords
    idx = np.full(domain.grid_shape, -1, dtype=int)
    for k, q in enumerate(cubes):
        sel = q.contains_halfopen(x) & (idx < 0)
        idx[sel] = k
    return idx


def localization_check(f: TensorField, p: ExponentField, cubes) -> Localization:
    """Compare ||sum chi_Q f|| with ||sum chi_Q ||chi_Q f|| / ||chi_Q|| || (constant C = 1)."""
    a, pv, w = _samples(f, p)
    sel = f.domain.weights > 0
    cid = assign_cubes(f.domain, cubes)[sel]
    covered = cid >= 0
    base = luxemburg_arrays(np.where(covered, a, 0.0), pv, w).value
    avg = np.zeros_like(a)
    for k in np.unique(cid[covered]):
        m = cid == k
        num = luxemburg_arrays(a[m], pv[m], w[m]).value
        den = luxemburg_arrays(np.ones(m.sum()), pv[m], w[m]).value
        avg[m] = num / den
    middle = luxemburg_arrays(avg, pv, w).value
    up = middle / base if base > 0 else float("nan")
    down = base / middle if middle > 0 else float("nan")
    return Localization(base, middle, base, up, down)


def equi_integrability_profile(f: TensorField, p: ExponentField, thresholds) -> list:
    """[(M, modular of f on {|f| > M})] for increasing thresholds M."""
    th = list(thresholds)
    if any(b < a for a, b in zip(th, th[1:])):
        raise ValueError("thresholds must be increasing")
    a, pv, w = _samples(f, p)
    return [(m, modular_arrays(np.where(a > m, a, 0.0), pv, w)) for m in th]
