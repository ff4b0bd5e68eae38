"""Variable exponent fields sampled on grid nodes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt

from .grid import GridDomain

KINDS = ("constant", "linear-ramp", "smooth-bump", "checkerboard")


def clamp_extend(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy every value outside ``mask`` from its nearest node inside ``mask``."""
    if mask.all():
        return values.copy()
    _, idx = distance_transform_edt(~mask, return_indices=True)
    return values[tuple(idx)]


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Exponent samples on every node; inside-node extremes are cached."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.grid_shape:
            raise ValueError("exponent values do not fit the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("exponent values must be finite")
        if v[self.domain.active_mask].min() < 1.0:
            raise ValueError(f"exponent below 1 (min {v[self.domain.active_mask].min():.6g})")
        object.__setattr__(self, "values", v)

    @cached_property
    def p_minus(self) -> float:
        return float(self.values[self.domain.inside_mask].min())

    @cached_property
    def p_plus(self) -> float:
        return float(self.values[self.domain.inside_mask].max())

    @cached_property
    def c_log(self) -> float:
        return log_holder_constant(self)

    def summary(self) -> tuple:
        return (self.p_minus, self.p_plus, self.c_log)

    def with_values(self, values) -> "ExponentField":
        return ExponentField(self.domain, values)

    def scaled(self, factor: float) -> "ExponentField":
        return ExponentField(self.domain, factor * self.values)

    def to_json(self) -> dict:
        return {
            "shape": list(self.domain.grid_shape),
            "spacing": self.domain.h,
            "values": self.values.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, record: dict, domain: GridDomain) -> "ExponentField":
        if tuple(record["shape"]) != domain.grid_shape or not np.isclose(record["spacing"], domain.h):
            raise ValueError("record does not match the domain grid")
        return cls(domain, np.asarray(record["values"], float).reshape(domain.grid_shape))


def build_exponent(kind: str, params: dict | None, domain: GridDomain) -> ExponentField:
    """Construct an exponent field.

    constant:     value
    linear-ramp:  start, stop, axis (ramp across the bounding box)
    smooth-bump:  base, amplitude, width, center (Gaussian bump)
    checkerboard: low, high, tiles (not log-Hoelder; for negative tests)
    """
    params = dict(params or {})
    x = domain.coords
    lo, hi = domain.lo, domain.hi
    if kind == "constant":
        vals = np.full(domain.grid_shape, float(params.get("value", 2.0)))
    elif kind == "linear-ramp":
        axis = int(params.get("axis", 0))
        a, b = float(params.get("start", 1.4)), float(params.get("stop", 2.0))
        t = (x[..., axis] - lo[axis]) / (hi[axis] - lo[axis])
        vals = a + (b - a) * t
    elif kind == "smooth-bump":
        c = np.asarray(params.get("center", 0.5 * (lo + hi)), float)
        w = float(params.get("width", 0.25))
        base, amp = float(params.get("base", 1.5)), float(params.get("amplitude", 0.4))
        vals = base + amp * np.exp(-np.sum((x - c) ** 2, axis=-1) / w**2)
    elif kind == "checkerboard":
        tiles = int(params.get("tiles", 4))
        a, b = float(params.get("low", 1.2)), float(params.get("high", 1.8))
        cell = np.floor((x - lo) / (hi - lo) * tiles).clip(0, tiles - 1).astype(int)
        vals = np.where(cell.sum(axis=-1) % 2 == 0, a, b)
    else:
        raise ValueError(f"unknown exponent kind {kind!r}; expected one of {KINDS}")
    if vals[domain.active_mask].min() < 1.0:
        raise ValueError(f"{kind} parameters {params} give exponent values below 1")
    vals = clamp_extend(vals, domain.active_mask)
    return ExponentField(domain, vals)


def log_holder_constant(p: ExponentField) -> float:
    """sup over inside node pairs of |p(x)-p(y)| log(e + 1/|x-y|).

    Pairs are grouped by lattice offset, so each offset is one vectorised pass.
    """
    mask = p.domain.inside_mask
    if mask.sum() < 2:
        raise ValueError("need at least two inside nodes")
    v = np.where(mask, p.values, np.nan)
    # crop to the bounding box of the inside nodes
    nz = np.nonzero(mask)
    crop = tuple(slice(i.min(), i.max() + 1) for i in nz)
    v = v[crop]
    shape = v.shape
    h = p.domain.h
    best = 0.0
    # half of the offsets suffices by symmetry
    ranges = [range(-(m - 1), m) for m in shape]
    for off in np.ndindex(*[len(r) for r in ranges]):
        o = tuple(r[i] for r, i in zip(ranges, off))
        if o <= tuple([0] * len(o)):
            continue
        a = tuple(slice(max(0, -k), m - max(0, k)) for k, m in zip(o, shape))
        b = tuple(slice(max(0, k), m - max(0, -k)) for k, m in zip(o, shape))
        diff = np.abs(v[a] - v[b])
        if diff.size == 0:
            continue
        m = np.fmax.reduce(diff, axis=None)
        if not m > 0.0:
            continue
        dist = h * np.sqrt(sum(k * k for k in o))
        best = max(best, m * np.log(np.e + 1.0 / dist))
    return float(best)


def dual_exponent(p: ExponentField) -> ExponentField:
    if p.values[p.domain.active_mask].min() <= 1.0:
        raise ValueError("dual exponent needs p > 1 everywhere")
    return ExponentField(p.domain, p.values / (p.values - 1.0))


def interpolate_exponent(p: ExponentField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of the (clamp-extended) samples of p."""
    d = p.domain
    axes = [d.lo[k] + d.h * np.arange(m) for k, m in enumerate(d.grid_shape)]
    interp = RegularGridInterpolator(axes, p.values, method="linear", bounds_error=False, fill_value=None)
    pts = np.asarray(points, float)
    return interp(pts.reshape(-1, d.dim)).reshape(pts.shape[:-1])


def rescale_exponent(p: ExponentField, x0, lam: float, target: GridDomain) -> ExponentField:
    """q(x) = p(x0 + lam x) on the target grid."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    x0 = np.asarray(x0, float)
    img = x0 + lam * target.coords[target.active_mask]
    tol = 1e-9 * p.domain.h
    if np.any(img < p.domain.lo - tol) or np.any(img > p.domain.hi + tol):
        raise ValueError("image of the target lies outside the sampled region of p")
    vals = np.zeros(target.grid_shape)
    vals[target.active_mask] = interpolate_exponent(p, img)
    vals = clamp_extend(vals, target.active_mask)
    return ExponentField(target, vals)


def cube_oscillation_check(p: ExponentField, cubes) -> float:
    """max over cubes of |Q|^(min_Q p - max_Q p), extremes over the nodes in the closed cube."""
    x = p.domain.coords
    n = p.domain.dim
    best = 0.0
    for q in cubes:
        sel = q.contains(x)
        if not sel.any():
            continue
        vals = p.values[sel]
        best = max(best, q.volume(n) ** (vals.min() - vals.max()))
    return float(best)
