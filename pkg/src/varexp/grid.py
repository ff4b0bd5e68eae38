"""Regular grids on simple Lipschitz domains and finite-difference calculus."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

SHAPES = ("rectangle", "lshape", "disk", "graph-halfspace")

LSHAPE_VERTICES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]
)


def _polygon_segments(vertices):
    return np.stack([vertices, np.roll(vertices, -1, axis=0)], axis=1)


def point_segment_distance(points, segments):
    """Distance from each point (..., 2) to the closest of the segments (m, 2, 2)."""
    pts = np.asarray(points, dtype=float)[..., None, :]
    a = segments[:, 0]
    b = segments[:, 1]
    ab = b - a
    t = np.einsum("...mk,mk->...m", pts - a, ab) / np.einsum("mk,mk->m", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    foot = a + t[..., None] * ab
    return np.linalg.norm(pts - foot, axis=-1).min(axis=-1)


def _segment_hits_box(a, b, lo, hi):
    # Liang-Barsky clipping of the segment a->b against the closed box
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(2):
        if d[k] == 0.0:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
            continue
        s0 = (lo[k] - a[k]) / d[k]
        s1 = (hi[k] - a[k]) / d[k]
        if s0 > s1:
            s0, s1 = s1, s0
        t0, t1 = max(t0, s0), min(t1, s1)
        if t0 > t1:
            return False
    return True


def segment_box_distance(segments, lo, hi):
    """Exact distance between a closed 2D box and a set of segments."""
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    best = point_segment_distance(corners, segments).min()
    ends = segments.reshape(-1, 2)
    gap = np.maximum(np.maximum(lo - ends, ends - hi), 0.0)
    best = min(best, np.linalg.norm(gap, axis=1).min())
    if best > 0.0:
        for a, b in segments:
            if _segment_hits_box(a, b, lo, hi):
                return 0.0
    return float(best)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Axis-aligned node lattice carrying the masks of a domain.

    ``inside_mask`` holds nodes in the open domain, ``boundary_mask`` the
    remaining nodes that touch an inside node (including diagonals). Their
    union is the active set on which fields live.
    """

    shape: str
    lo: np.ndarray
    hi: np.ndarray
    h: float
    inside_mask: np.ndarray
    boundary_mask: np.ndarray
    dirichlet_mask: np.ndarray
    boundary_distance: np.ndarray
    weights: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def grid_shape(self) -> tuple:
        return self.inside_mask.shape

    @property
    def active_mask(self) -> np.ndarray:
        return self.inside_mask | self.boundary_mask

    @cached_property
    def coords(self) -> np.ndarray:
        axes = [self.lo[k] + self.h * np.arange(m) for k, m in enumerate(self.grid_shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def signed_distance(self, points) -> np.ndarray:
        """Positive inside; equals the boundary distance for inside points."""
        return _signed_distance(self.shape, self.params, np.asarray(points, dtype=float))

    def cube_distance(self, lo, hi) -> float:
        """Distance from the closed box [lo, hi] to the boundary, or -1 if the box leaves the domain."""
        return _cube_distance(self, np.asarray(lo, float), np.asarray(hi, float))

    def same_grid(self, other: "GridDomain") -> bool:
        return (
            self is other
            or (
                self.grid_shape == other.grid_shape
                and np.allclose(self.lo, other.lo)
                and np.isclose(self.h, other.h)
                and np.array_equal(self.active_mask, other.active_mask)
            )
        )

    @cached_property
    def diff_operators(self) -> list:
        """Sparse first-derivative matrices, one per axis, acting on flattened nodal arrays."""
        return [_axis_operator(self.active_mask, k, self.h) for k in range(self.dim)]

    def to_json(self) -> dict:
        return {
            "shape": self.shape,
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "spacing": self.h,
            "grid": list(self.grid_shape),
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        }


def _signed_distance(shape, params, x):
    if shape in ("rectangle", "graph-halfspace"):
        lo, hi = params["box_lo"], params["box_hi"]
        d = np.minimum(x - lo, hi - x).min(axis=-1)
        if shape == "graph-halfspace":
            slope = params["slope"]
            normal = np.append(-slope, 1.0)
            graph = params["offset"] + x[..., :-1] @ slope
            d = np.minimum(d, (graph - x[..., -1]) / np.linalg.norm(normal))
        return d
    if shape == "disk":
        return params["radius"] - np.linalg.norm(x - params["center"], axis=-1)
    if shape == "lshape":
        dist = point_segment_distance(x, _polygon_segments(LSHAPE_VERTICES))
        inside = (
            (x[..., 0] > 0) & (x[..., 0] < 1) & (x[..., 1] > 0) & (x[..., 1] < 1)
            & ~((x[..., 0] >= 0.5) & (x[..., 1] >= 0.5))
        )
        return np.where(inside, dist, -dist)
    raise ValueError(f"unknown shape {shape!r}")


def _convex_facets(domain):
    # rows (a, b) with a.x <= b on the domain, a unit
    n = domain.dim
    lo, hi = domain.params["box_lo"], domain.params["box_hi"]
    facets = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        facets.append((-e, -lo[k]))
        facets.append((e, hi[k]))
    if domain.shape == "graph-halfspace":
        a = np.append(-domain.params["slope"], 1.0)
        norm = np.linalg.norm(a)
        facets.append((a / norm, domain.params["offset"] / norm))
    return facets


def _cube_distance(domain, lo, hi):
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    if domain.shape in ("rectangle", "graph-halfspace"):
        return float(min((b - corners @ a).min() for a, b in _convex_facets(domain)))
    if domain.shape == "disk":
        c, r = domain.params["center"], domain.params["radius"]
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return float(r - np.linalg.norm(far))
    if domain.shape == "lshape":
        center = 0.5 * (lo + hi)
        if _signed_distance("lshape", {}, center) <= 0:
            return -1.0
        d = segment_box_distance(_polygon_segments(LSHAPE_VERTICES), lo, hi)
        return d if d > 0 else -1.0
    raise ValueError(domain.shape)


def _axis_operator(active, axis, h):
    """Central differences where both neighbours are active, second-order one-sided otherwise."""
    shape = active.shape
    size = active.size
    idx = np.arange(size).reshape(shape)
    m = shape[axis]

    def shifted(s):
        # active flag of the node s steps along axis (False off-grid)
        out = np.zeros(shape, dtype=bool)
        src = [slice(None)] * active.ndim
        dst = [slice(None)] * active.ndim
        if s > 0:
            src[axis], dst[axis] = slice(s, None), slice(None, m - s)
        else:
            src[axis], dst[axis] = slice(None, m + s), slice(-s, None)
        out[tuple(dst)] = active[tuple(src)]
        return out

    p1, p2, m1, m2 = shifted(1), shifted(2), shifted(-1), shifted(-2)
    central = active & p1 & m1
    fwd2 = active & ~central & p1 & p2
    bwd2 = active & ~central & ~fwd2 & m1 & m2
    fwd1 = active & ~central & ~fwd2 & ~bwd2 & p1
    bwd1 = active & ~central & ~fwd2 & ~bwd2 & ~fwd1 & m1
    stride = int(np.prod(shape[axis + 1:]))

    rows, cols, vals = [], [], []

    def add(mask, stencil):
        r = idx[mask]
        for offset, coef in stencil:
            rows.append(r)
            cols.append(r + offset * stride)
            vals.append(np.full(r.size, coef / h))

    add(central, [(1, 0.5), (-1, -0.5)])
    add(fwd2, [(0, -1.5), (1, 2.0), (2, -0.5)])
    add(bwd2, [(0, 1.5), (-1, -2.0), (-2, 0.5)])
    add(fwd1, [(0, -1.0), (1, 1.0)])
    add(bwd1, [(0, 1.0), (-1, -1.0)])
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def make_domain(
    shape: str,
    resolution: int,
    *,
    dim: int = 2,
    box=None,
    center=None,
    radius: float = 0.5,
    slope=0.3,
    offset: float = 0.0,
    dirichlet: Callable | None = None,
) -> GridDomain:
    """Build a GridDomain.

    ``resolution`` is the number of nodes along the longest side of the
    bounding box. ``dirichlet`` optionally selects the Dirichlet part of the
    boundary from node coordinates; by default every boundary node is Dirichlet.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if int(resolution) != resolution or resolution < 8:
        raise ValueError("resolution must be an integer >= 8")
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    params: dict = {}
    if shape == "lshape":
        if dim != 2:
            raise ValueError("lshape is two-dimensional")
        lo, hi = np.zeros(2), np.ones(2)
    elif shape == "disk":
        c = np.full(dim, 0.5) if center is None else np.asarray(center, float)
        if c.size != dim:
            raise ValueError("center has the wrong dimension")
        params = {"center": c, "radius": float(radius)}
        lo, hi = c - radius, c + radius
    else:
        if box is None:
            box = (np.zeros(dim), np.ones(dim)) if shape == "rectangle" else (-np.ones(dim), np.ones(dim))
        lo, hi = (np.asarray(b, float) for b in box)
        if lo.size != dim or np.any(hi <= lo):
            raise ValueError("invalid box")
        params = {"box_lo": lo, "box_hi": hi}
        if shape == "graph-halfspace":
            s = np.atleast_1d(np.asarray(slope, float))
            if s.size == 1 and dim > 2:
                s = np.full(dim - 1, s[0])
            if s.size != dim - 1:
                raise ValueError("slope must have n-1 entries")
            params.update(slope=s, offset=float(offset))

    h = float((hi - lo).max() / (resolution - 1))
    counts = [int(round((hi[k] - lo[k]) / h)) + 1 for k in range(dim)]
    axes = [lo[k] + h * np.arange(m) for k, m in enumerate(counts)]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    sd = _signed_distance(shape, params, x)
    inside = sd > 1e-9 * h

    # boundary = non-inside nodes with an inside node in their 3^n neighbourhood
    near = np.zeros_like(inside)
    padded = np.pad(inside, 1)
    for shift in itertools.product((-1, 0, 1), repeat=dim):
        sl = tuple(slice(1 + s, 1 + s + m) for s, m in zip(shift, counts))
        near |= padded[sl]
    boundary = near & ~inside
    active = inside | boundary

    # dual-cell quadrature: count the 2^n quarter-offset sample points inside
    frac = np.zeros(inside.shape)
    for signs in itertools.product((-1.0, 1.0), repeat=dim):
        frac += _signed_distance(shape, params, x + 0.25 * h * np.array(signs)) > 0
    weights = np.where(active, frac / 2**dim * h**dim, 0.0)

    dmask = boundary.copy()
    if dirichlet is not None:
        dmask &= np.asarray(dirichlet(x), dtype=bool)

    return GridDomain(
        shape=shape,
        lo=lo,
        hi=lo + h * (np.array(counts) - 1),
        h=h,
        inside_mask=inside,
        boundary_mask=boundary,
        dirichlet_mask=dmask,
        boundary_distance=np.where(inside, sd, 0.0),
        weights=weights,
        params=params,
    )


def restrict(domain: GridDomain, mask: np.ndarray) -> GridDomain:
    """Same lattice with quadrature restricted to ``mask`` (used for sub-balls and cubes)."""
    mask = np.asarray(mask, dtype=bool) & domain.active_mask
    return GridDomain(
        shape=domain.shape,
        lo=domain.lo,
        hi=domain.hi,
        h=domain.h,
        inside_mask=domain.inside_mask & mask,
        boundary_mask=domain.boundary_mask & mask,
        dirichlet_mask=domain.dirichlet_mask & mask,
        boundary_distance=np.where(mask, domain.boundary_distance, 0.0),
        weights=np.where(mask, domain.weights, 0.0),
        params=domain.params,
    )


@dataclass(frozen=True, eq=False)
class TensorField:
    """Scalar, vector or matrix samples on every node of a GridDomain."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        gs = self.domain.grid_shape
        if v.shape[: len(gs)] != gs or v.ndim - len(gs) > 2:
            raise ValueError(f"values of shape {v.shape} do not fit grid {gs}")
        n = self.domain.dim
        if any(s != n for s in v.shape[len(gs):]):
            raise ValueError("tensor axes must have length n")
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return self.values.ndim - len(self.domain.grid_shape)

    @classmethod
    def from_function(cls, domain: GridDomain, fn: Callable) -> "TensorField":
        return cls(domain, fn(domain.coords))

    def __add__(self, other):
        return TensorField(self.domain, self.values + _vals(other))

    def __sub__(self, other):
        return TensorField(self.domain, self.values - _vals(other))

    def __mul__(self, c):
        return TensorField(self.domain, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return TensorField(self.domain, -self.values)

    def pointwise_norm(self) -> np.ndarray:
        """|f| per node: absolute value, Euclidean or Frobenius norm."""
        v = self.values
        if self.rank == 0:
            return np.abs(v)
        axes = tuple(range(v.ndim - self.rank, v.ndim))
        return np.sqrt((v * v).sum(axis=axes))

    def to_json(self) -> dict:
        return {
            "shape": list(self.domain.grid_shape),
            "spacing": self.domain.h,
            "rank": self.rank,
            "values": self.values.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, record: dict, domain: GridDomain) -> "TensorField":
        if tuple(record["shape"]) != domain.grid_shape or not np.isclose(record["spacing"], domain.h):
            raise ValueError("record does not match the domain grid")
        tail = (domain.dim,) * int(record["rank"])
        return cls(domain, np.asarray(record["values"], float).reshape(domain.grid_shape + tail))


def _vals(x):
    return x.values if isinstance(x, TensorField) else x


def _derivatives(domain: GridDomain, values: np.ndarray) -> np.ndarray:
    """Stack d/dx_j of every component along a new last axis."""
    gs = domain.grid_shape
    flat = values.reshape(int(np.prod(gs)), -1)
    out = [(D @ flat).reshape(values.shape) for D in domain.diff_operators]
    res = np.stack(out, axis=-1)
    return np.where(domain.active_mask.reshape(gs + (1,) * (res.ndim - len(gs))), res, 0.0)


def gradient(u: TensorField) -> TensorField:
    """(grad u)_ij = d_j u_i, exact for affine fields."""
    if u.rank != 1:
        raise ValueError("gradient expects a vector field")
    return TensorField(u.domain, _derivatives(u.domain, u.values))


def scalar_gradient(f: TensorField) -> TensorField:
    if f.rank != 0:
        raise ValueError("expected a scalar field")
    return TensorField(f.domain, _derivatives(f.domain, f.values))


def divergence(psi: TensorField) -> TensorField:
    """Row divergence of a matrix field: (div psi)_i = sum_j d_j psi_ij."""
    if psi.rank != 2:
        raise ValueError("divergence expects a matrix field")
    d = _derivatives(psi.domain, psi.values)
    return TensorField(psi.domain, np.einsum("...ijj->...i", d))


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def sym_gradient(u: TensorField) -> TensorField:
    return TensorField(u.domain, sym(gradient(u).values))


def field_mean(f: TensorField, mask: np.ndarray | None = None) -> np.ndarray:
    """Quadrature average over the active nodes (optionally restricted to ``mask``)."""
    w = f.domain.weights if mask is None else np.where(mask, f.domain.weights, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("empty integration region")
    return np.tensordot(w, f.values, axes=w.ndim) / total


def mean_gradient(u: TensorField, mask: np.ndarray | None = None) -> np.ndarray:
    return field_mean(gradient(u), mask)


def distance_weight(domain: GridDomain) -> TensorField:
    return TensorField(domain, domain.boundary_distance.copy())
