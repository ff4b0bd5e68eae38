"""Dirichlet Poisson problems on the inside nodes."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from ..grid import GridDomain, TensorField

RTOL = 1e-10


class PoissonError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"conjugate gradient did not converge (relative residual {residual:.3e})")
        self.residual = residual


def laplacian(domain: GridDomain) -> tuple:
    """(-Delta_h restricted to inside nodes, flat indices of the unknowns)."""
    return _laplacian_cached(id(domain), domain)


_CACHE: dict = {}


def _laplacian_cached(key, domain):
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is domain:
        return hit[1]
    inside = domain.inside_mask
    shape = domain.grid_shape
    flat = np.flatnonzero(inside.ravel())
    pos = -np.ones(inside.size, dtype=int)
    pos[flat] = np.arange(flat.size)
    strides = [int(np.prod(shape[k + 1:])) for k in range(len(shape))]
    h2 = domain.h**2
    rows = [np.arange(flat.size)]
    cols = [np.arange(flat.size)]
    vals = [np.full(flat.size, 2.0 * len(shape) / h2)]
    for s in strides:
        for nb in (flat + s, flat - s):
            j = pos[nb]
            keep = j >= 0
            rows.append(np.flatnonzero(keep))
            cols.append(j[keep])
            vals.append(np.full(keep.sum(), -1.0 / h2))
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(flat.size, flat.size)
    )
    if len(_CACHE) > 16:
        _CACHE.clear()
    _CACHE[key] = (domain, (mat, flat))
    return mat, flat


def solve_poisson_dirichlet(f: TensorField, domain: GridDomain | None = None) -> TensorField:
    """-Delta u = f inside, u = 0 on the remaining nodes; component-wise for tensor data."""
    dom = f.domain if domain is None else domain
    mat, flat = laplacian(dom)
    gs = dom.grid_shape
    rhs_all = f.values.reshape(int(np.prod(gs)), -1)
    out = np.zeros_like(rhs_all)
    for k in range(rhs_all.shape[1]):
        b = rhs_all[flat, k]
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            continue
        x, info = cg(mat, b, rtol=RTOL, atol=0.0, maxiter=20 * flat.size)
        res = np.linalg.norm(b - mat @ x) / bnorm
        if info != 0 or res > 10 * RTOL:
            raise PoissonError(res)
        out[flat, k] = x
    return TensorField(dom, out.reshape(f.values.shape))
