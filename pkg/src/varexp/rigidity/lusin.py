"""Lipschitz truncation through the local maximal function of the gradient."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..grid import GridDomain, TensorField, gradient
from ..varnorm import maximal_function

CHUNK = 2048


@dataclass
class LusinReport:
    lam: float
    lipschitz_constant: float
    changed_count: int
    changed_measure: float
    rhs_iii: float
    good_count: int
    degenerate: bool

    def measure_constant(self) -> float:
        """|{u != v}| divided by the integral of |grad u|/lam over {|grad u| > lam}."""
        if self.rhs_iii > 0:
            return self.changed_measure / self.rhs_iii
        return 0.0 if self.changed_measure == 0 else float("inf")

    def to_json(self) -> dict:
        d = asdict(self)
        d["measure_constant"] = self.measure_constant()
        return d


def mcshane_extension(values: np.ndarray, good_x: np.ndarray, query_x: np.ndarray, lam: float) -> np.ndarray:
    """min over good y of values(y) + lam |x - y|, per component, for every query point x."""
    out = np.empty((query_x.shape[0], values.shape[1]))
    for start in range(0, query_x.shape[0], CHUNK):
        q = query_x[start:start + CHUNK]
        dist = np.linalg.norm(q[:, None, :] - good_x[None, :, :], axis=-1)
        for i in range(values.shape[1]):
            out[start:start + CHUNK, i] = (values[None, :, i] + lam * dist).min(axis=1)
    return out


def lusin_truncate(u: TensorField, lam: float, domain: GridDomain | None = None):
    """Return (v, changed mask, report) with v = u on {M(|grad u|) <= lam}."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    dom = u.domain
    act = dom.active_mask
    du = gradient(u)
    mag = du.pointwise_norm()
    mf = maximal_function(TensorField(dom, mag), dom, mode="local").values
    good = act & (mf <= lam)
    v = u.values.copy()
    degenerate = not good.any()
    if degenerate:
        med = np.median(u.values[act], axis=0)
        v[act] = med
    else:
        bad = act & ~good
        if bad.any():
            x = dom.coords
            v[bad] = mcshane_extension(u.values[good], x[good], x[bad], lam)
    changed = act & np.any(v != u.values, axis=-1)
    vf = TensorField(dom, v)
    lam = float(lam)
    lip = float(gradient(vf).pointwise_norm()[act].max()) / lam
    w = dom.weights
    big = act & (mag > lam)
    report = LusinReport(
        lam=float(lam),
        lipschitz_constant=lip,
        changed_count=int(changed.sum()),
        changed_measure=float(w[changed].sum()),
        rhs_iii=float(np.dot(w[big], mag[big] / lam)),
        good_count=int(good.sum()),
        degenerate=degenerate,
    )
    return vf, changed, report
