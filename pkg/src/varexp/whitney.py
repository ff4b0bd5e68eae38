"""Dyadic Whitney covering of a grid domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridDomain

MAX_LEVEL = 40


@dataclass(frozen=True)
class Cube:
    """Open axis-aligned cube ``center + (-halfwidth, halfwidth)^n``."""

    center: tuple
    halfwidth: float
    level: int

    @property
    def side(self) -> float:
        return 2.0 * self.halfwidth

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.halfwidth

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.halfwidth

    def volume(self, dim: int) -> float:
        return self.side**dim

    def contains(self, x: np.ndarray, closed: bool = True, scale: float = 1.0) -> np.ndarray:
        d = np.abs(x - np.asarray(self.center))
        hw = scale * self.halfwidth
        return np.all(d <= hw, axis=-1) if closed else np.all(d < hw, axis=-1)

    def contains_halfopen(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= self.lo) & (x < self.hi), axis=-1)

    def to_json(self) -> dict:
        return {"center": list(self.center), "halfwidth": self.halfwidth, "level": self.level}


def whitney_decomposition(domain: GridDomain, factor: float = 4.0) -> list[Cube]:
    """Keep a dyadic cube Q of side r when sqrt(n) r < d(Q, dOmega) <= factor sqrt(n) r.

    Cubes that fail are split into 2^n children as long as their closure still
    contains an inside node; ties at the lower bound go to subdivision.
    """
    n = domain.dim
    root_side = float((domain.hi - domain.lo).max())
    root = 0.5 * (domain.lo + domain.hi)
    x = domain.coords[domain.inside_mask]
    if x.size == 0:
        raise ValueError("domain has no inside nodes")
    tol = 1e-12 * root_side
    rn = np.sqrt(n)

    kept = []
    stack = [(root, root_side, 0, x)]
    while stack:
        c, side, level, pts = stack.pop()
        half = 0.5 * side
        d = domain.cube_distance(c - half, c + half)
        if rn * side + tol < d <= factor * rn * side:
            kept.append(Cube(tuple(float(v) for v in c), half, level))
            continue
        if level >= MAX_LEVEL or pts.shape[0] == 0:
            continue
        for signs in np.ndindex(*(2,) * n):
            cc = c + (np.array(signs) - 0.5) * half
            inside = np.all(np.abs(pts - cc) <= 0.5 * half + tol, axis=-1)
            if inside.any() or domain.cube_distance(cc - 0.5 * half, cc + 0.5 * half) > 0:
                stack.append((cc, half, level + 1, pts[inside]))
    kept.sort(key=lambda q: (q.level, q.center))
    return kept


def overlap_count(domain: GridDomain, cubes: list[Cube]) -> np.ndarray:
    """Number of open doubled cubes containing each node."""
    x = domain.coords
    count = np.zeros(domain.grid_shape, dtype=int)
    for q in cubes:
        count += q.contains(x, closed=False, scale=2.0)
    return count


def coverage_mask(domain: GridDomain, cubes: list[Cube]) -> np.ndarray:
    x = domain.coords
    cov = np.zeros(domain.grid_shape, dtype=bool)
    for q in cubes:
        cov |= q.contains(x)
    return cov
