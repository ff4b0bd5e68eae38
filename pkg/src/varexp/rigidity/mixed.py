"""Korn and rigidity decompositions under mixed growth, ``grad u - S = F + G``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exponent import ExponentField
from ..grid import GridDomain, TensorField, divergence, gradient, mean_gradient, skew, sym_gradient
from ..rotgeo import TAYLOR_CONSTANT, dist_SO, nearest_rotation
from ..varnorm import maximal_function, norm
from .lusin import lusin_truncate
from .poisson import solve_poisson_dirichlet
from .reports import rigidity_report

PRECONDITION_FACTOR = 10.0
FAILURE_FACTOR = 100.0
MU_MAX = 4.0


@dataclass
class MixedSplit:
    """f_part in L^p, g_part in L^q with q >= p."""

    f_part: TensorField
    g_part: TensorField
    p: ExponentField
    q: ExponentField

    def __post_init__(self):
        act = self.p.domain.active_mask
        if np.any(self.q.values[act] < self.p.values[act] - 1e-12):
            raise ValueError("q must dominate p")
        if self.f_part.values.shape != self.g_part.values.shape:
            raise ValueError("f_part and g_part must have the same shape")


@dataclass
class MixedReport:
    residual: float
    ratio_f: float
    ratio_g: float
    norm_F: float
    norm_G: float
    norm_f: float
    norm_g: float
    grid_h: float
    failed: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "residual": self.residual,
            "ratio_f": self.ratio_f,
            "ratio_g": self.ratio_g,
            "norm_F": self.norm_F,
            "norm_G": self.norm_G,
            "norm_f": self.norm_f,
            "norm_g": self.norm_g,
            "grid_h": self.grid_h,
            "failed": self.failed,
            **self.extra,
        }


def _ratio(num, den, tol=1e-12):
    if den > tol:
        return num / den
    return float("nan") if num <= tol else float("inf")


def _sup(a, mask):
    a = np.abs(np.asarray(a))
    a = a.reshape(a.shape[: mask.ndim] + (-1,)).max(axis=-1)
    return float(a[mask].max()) if mask.any() else 0.0


def _ratios(F, G, f, g, p, q, mask):
    nF, nG = norm(F, p, mask), norm(G, q, mask)
    nf, ng = norm(f, p, mask), norm(g, q, mask)
    return nF, nG, nf, ng, _ratio(nF, nf), _ratio(nG, nf + ng)


def half_ball_mask(domain: GridDomain) -> np.ndarray:
    """Concentric half-radius ball for disk domains, all active nodes otherwise."""
    if domain.shape == "disk":
        c, r = domain.params["center"], domain.params["radius"]
        return domain.active_mask & (np.linalg.norm(domain.coords - c, axis=-1) < 0.5 * r)
    return domain.active_mask.copy()


def mixed_korn_decompose(u: TensorField, split: MixedSplit, ball: GridDomain | None = None, inner=None):
    """Return (S, F, G, report) with grad u - S = F + G.

    Psi_f, Psi_g solve -Delta Psi = (tr f) I - 2 f with zero boundary values;
    F = grad div Psi_f, and the harmonic remainder w = u - div Psi_f - div Psi_g
    supplies S = skew mean of grad w over ``inner`` (default: half ball).
    """
    dom = u.domain if ball is None else ball
    if not dom.same_grid(u.domain):
        raise ValueError("u does not live on the ball grid")
    if split.p.p_minus <= 1.0:
        raise ValueError("mixed Korn needs p_minus > 1")
    act = dom.active_mask
    inner = half_ball_mask(dom) if inner is None else np.asarray(inner, bool) & act
    f, g = split.f_part, split.g_part
    n = dom.dim
    eu = sym_gradient(u).values
    pre = _sup(eu - f.values - g.values, act)
    if pre > PRECONDITION_FACTOR * dom.h:
        raise ValueError(f"sym grad u differs from f + g by {pre:.3g} > {PRECONDITION_FACTOR} h")

    eye = np.eye(n)

    def potential(m):
        tr = np.trace(m.values, axis1=-2, axis2=-1)
        rhs = TensorField(dom, tr[..., None, None] * eye - 2.0 * m.values)
        return divergence(solve_poisson_dirichlet(rhs, dom))

    u_f, u_g = potential(f), potential(g)
    w = u - u_f - u_g
    grad_w = gradient(w).values
    S = skew(mean_gradient(w, inner))
    F = gradient(u_f)
    G = TensorField(dom, grad_w + gradient(u_g).values - S)
    resid = _sup(gradient(u).values - S - F.values - G.values, inner)
    nF, nG, nf, ng, rf, rg = _ratios(F, G, f, g, split.p, split.q, inner)
    report = MixedReport(resid, rf, rg, nF, nG, nf, ng, dom.h, extra={"precondition_gap": pre})
    return S, F, G, report


def _mask_matrix(a, m):
    return np.where(m[..., None, None], a, 0.0)


def _proportional(total, wf, wg):
    """Split a matrix field as total * wf/(wf+wg) and the rest; all to the first where both vanish."""
    den = wf + wg
    frac = np.where(den > 0, wf / np.where(den > 0, den, 1.0), 1.0)
    part = total * frac[..., None, None]
    return part, total - part


def _korn_step(v, O, fhat, ghat, p, q, to_f):
    """grad v - R = F + G through mixed Korn applied to z = O^T v - x."""
    dom = v.domain
    n = dom.dim
    z = TensorField(dom, np.einsum("ji,...j->...i", O, v.values) - dom.coords)
    ez = sym_gradient(z).values
    f1, g1 = _proportional(ez, fhat, ghat)
    split = MixedSplit(TensorField(dom, f1), TensorField(dom, g1), p, q)
    S, Fz, Gz, krep = mixed_korn_decompose(z, split, dom, inner=dom.active_mask)
    P = nearest_rotation(np.eye(n) + S)
    R = O @ P
    F = np.einsum("ij,...jk->...ik", O, Fz.values)
    G = np.einsum("ij,...jk->...ik", O, Gz.values)
    corr = O @ (np.eye(n) + S - P)
    act = dom.active_mask
    if to_f:
        F = F + _mask_matrix(np.broadcast_to(corr, F.shape), act)
    else:
        G = G + _mask_matrix(np.broadcast_to(corr, G.shape), act)
    return R, F, G, krep


def _core(v, f, g, p, q, mu, depth, trace):
    """Bounded-gradient decomposition of grad v - R for 1 < mu <= 4."""
    dom = v.domain
    act = dom.active_mask
    dv = gradient(v).values
    nf = norm(TensorField(dom, f), p)
    ng = norm(TensorField(dom, g), q)
    to_f = nf > ng
    if mu <= 2.0:
        O = rigidity_report(v, q).rotation_or_skew
        if nf ** (1.0 / mu) <= ng:
            # f is negligible in L^q: the whole defect goes to G
            trace.append({"depth": depth, "mu": mu, "branch": "all-to-G"})
            return O, np.zeros_like(dv), _mask_matrix(dv - O, act)
        dev2 = np.sum((dv - O) ** 2, axis=(-2, -1))
        fhat = f + TAYLOR_CONSTANT * dev2
        R, F, G, krep = _korn_step(v, O, fhat, g, p, q, to_f)
        trace.append({"depth": depth, "mu": mu, "branch": "korn", "korn_residual": krep.residual})
        return R, F, G
    # one level through exponent 2p, then a Korn step at (p, q)
    Rh, Fh, Gh = _core(v, f, g, p.scaled(2.0), q, mu / 2.0, depth + 1, trace)
    fhat = f + 2.0 * TAYLOR_CONSTANT * np.sum(Fh**2, axis=(-2, -1))
    ghat = g + 2.0 * TAYLOR_CONSTANT * np.sum(Gh**2, axis=(-2, -1))
    R, F, G, krep = _korn_step(v, Rh, fhat, ghat, p, q, to_f)
    trace.append({"depth": depth, "mu": mu, "branch": "recursion", "korn_residual": krep.residual})
    return R, F, G


def mixed_rigidity_decompose(u: TensorField, split: MixedSplit, domain: GridDomain | None = None, mu: float | None = None):
    """Return (R, F, G, report) with grad u - R = F + G, F in L^p and G in L^q, q = mu p.

    The split carries scalar bounds f, g with dist(grad u, SO(n)) <= f + g.
    Pipeline: Lipschitz truncation at lambda = 2 sqrt(n), clamping of the
    bounds at M + sqrt(n), the bounded-gradient core (at most two levels),
    then the final rotation is the nearest one to the mean of grad u.
    """
    dom = u.domain if domain is None else domain
    act = dom.active_mask
    p, q = split.p, split.q
    f = split.f_part.values
    g = split.g_part.values
    if f.ndim != len(dom.grid_shape):
        raise ValueError("mixed rigidity expects scalar bounds f, g")
    if mu is None:
        mu = float(np.median(q.values[act] / p.values[act]))
    if mu < 1.0 or mu > MU_MAX:
        raise ValueError(f"mu must lie in [1, {MU_MAX}]")
    if np.abs(q.values[act] - mu * p.values[act]).max() > 1e-9:
        raise ValueError("q must equal mu * p")
    n = dom.dim
    du = gradient(u).values
    pre = float(np.max(dist_SO(du)[act] - f[act] - g[act]))
    if pre > PRECONDITION_FACTOR * dom.h:
        raise ValueError(f"dist(grad u, SO(n)) exceeds f + g by {pre:.3g}")
    extra = {"mu": mu, "precondition_gap": max(pre, 0.0)}
    trace: list = []

    if mu == 1.0:
        R = nearest_rotation(mean_gradient(u))
        F = _mask_matrix(du - R, act)
        G = np.zeros_like(F)
        extra["levels"] = 0
    else:
        lam = 2.0 * np.sqrt(n)
        v, changed, lrep = lusin_truncate(u, lam)
        dv = gradient(v).values
        M = float(np.linalg.norm(dv, axis=(-2, -1))[act].max())
        C = M / lam
        moved = act & (np.abs(dv - du).reshape(dv.shape[: act.ndim] + (-1,)).max(axis=-1) > 0)
        cap = M + np.sqrt(n)
        fv = np.where(moved, f + (2 * C + 1) * maximal_function(TensorField(dom, f), dom).values, f)
        gv = np.where(moved, g + (2 * C + 1) * maximal_function(TensorField(dom, g), dom).values, g)
        fv, gv = np.minimum(fv, cap), np.minimum(gv, cap)
        Rv, Fv, Gv = _core(v, fv, gv, p, q, mu, 1, trace)
        R = nearest_rotation(mean_gradient(u))
        nf = norm(TensorField(dom, fv), p)
        ng = norm(TensorField(dom, gv), q)
        shift = _mask_matrix(np.broadcast_to(Rv - R, Fv.shape), act)
        if nf > ng:
            Fv = Fv + shift
        else:
            Gv = Gv + shift
        gap_f, gap_g = _proportional(_mask_matrix(du - dv, act), fv, gv)
        F, G = Fv + gap_f, Gv + gap_g
        extra.update(
            levels=len(trace),
            lusin_changed=lrep.changed_count,
            lipschitz_bound=M,
            trace=trace,
        )

    Ff, Gf = TensorField(dom, F), TensorField(dom, G)
    resid = _sup(du - R - F - G, act)
    nF, nG, nf0, ng0, rf, rg = _ratios(Ff, Gf, split.f_part, split.g_part, p, q, act)
    failed = resid > FAILURE_FACTOR * dom.h or not (np.isfinite(nF) and np.isfinite(nG))
    report = MixedReport(resid, rf, rg, nF, nG, nf0, ng0, dom.h, failed, extra)
    return R, Ff, Gf, report
