"""Nonlinear and linearized elastic energies and the small-strain limit experiment.

The default density is W(x, F) = g(p(x), dist(F, SO(n))). Its Hessian at the
identity is |M_sym|^2, so the limit energy is 1/2 of the integral of |e u|^2.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import cg

from .exponent import ExponentField, build_exponent
from .grid import GridDomain, TensorField, gradient, make_domain, sym
from .rotgeo import dist_SO, g_eval, nearest_rotation
from .varnorm import equi_integrability_profile, modular, norm

DENSITIES = ("g-dist", "quadratic-well")
BC_TOL = 1e-10
GTOL = 1e-8
MAXITER = 2000
TAIL_THRESHOLDS = (1.0, 2.0, 5.0, 10.0)
COLUMNS = (
    "eps", "F_eps", "gap", "wp_dist", "modular", "compactness_rhs",
    "tail_1", "tail_2", "tail_5", "tail_10", "iters", "flag",
)
FLAG_FAILURE = 1
FLAG_COLD_MISMATCH = 2


@dataclass
class EnergySpec:
    domain: GridDomain
    p: ExponentField
    h: TensorField
    dirichlet_mask: np.ndarray | None = None
    density: str = "g-dist"
    epsilons: tuple = (1e-1, 1e-2, 1e-3)

    def __post_init__(self):
        if not (1.0 < self.p.p_minus and self.p.p_plus <= 2.0):
            raise ValueError("energy exponents need 1 < p_minus <= p_plus <= 2")
        if self.density not in DENSITIES:
            raise ValueError(f"density must be one of {DENSITIES}")
        if self.h.rank != 1 or not self.h.domain.same_grid(self.domain):
            raise ValueError("boundary data must be a vector field on the domain")
        if self.dirichlet_mask is None:
            self.dirichlet_mask = self.domain.dirichlet_mask.copy()
        self.dirichlet_mask = np.asarray(self.dirichlet_mask, bool) & self.domain.active_mask
        eps = np.asarray(self.epsilons, float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise ValueError("epsilons must be positive and strictly decreasing")
        self.epsilons = tuple(float(e) for e in eps)

    @property
    def free_mask(self) -> np.ndarray:
        return self.domain.active_mask & ~self.dirichlet_mask

    def lift(self) -> TensorField:
        """Boundary data on the active nodes, zero elsewhere."""
        return TensorField(self.domain, np.where(self.domain.active_mask[..., None], self.h.values, 0.0))

    def pack(self, u: TensorField) -> np.ndarray:
        return u.values[self.free_mask].ravel()

    def unpack(self, x: np.ndarray) -> TensorField:
        vals = self.lift().values
        vals[self.free_mask] = x.reshape(-1, self.domain.dim)
        return TensorField(self.domain, vals)


def _check_bc(u: TensorField, spec: EnergySpec):
    m = spec.dirichlet_mask
    if m.any():
        gap = np.abs(u.values[m] - spec.h.values[m]).max()
        if gap > BC_TOL:
            raise ValueError(f"Dirichlet data violated by {gap:.3g}")


def density(F, p, kind: str = "g-dist") -> np.ndarray:
    d = dist_SO(F)
    if kind == "quadratic-well":
        return 0.5 * d * d
    return g_eval(p, d)


def density_derivative(F, p, kind: str = "g-dist") -> np.ndarray:
    """dW/dF = phi(dist) (F - R) with phi = 1 on the quadratic branch and dist^(p-2) beyond."""
    R = nearest_rotation(F)
    diff = F - R
    if kind == "quadratic-well":
        return diff
    d = np.linalg.norm(diff, axis=(-2, -1))
    phi = np.where(d > 1.0, np.maximum(d, 1.0) ** (p - 2.0), 1.0)
    return phi[..., None, None] * diff


def energy_nonlinear(u: TensorField, eps: float, spec: EnergySpec) -> float:
    """eps^-2 times the quadrature of W(x, I + eps grad u)."""
    _check_bc(u, spec)
    return _energy_values(u, eps, spec)


def _energy_values(u, eps, spec):
    dom = spec.domain
    sel = dom.weights > 0
    F = np.eye(dom.dim) + eps * gradient(u).values[sel]
    W = density(F, spec.p.values[sel], spec.density)
    return float(np.dot(dom.weights[sel], W)) / eps**2


def energy_gradient(u: TensorField, eps: float, spec: EnergySpec) -> TensorField:
    """Derivative of energy_nonlinear with respect to every nodal value of u."""
    dom = spec.domain
    n = dom.dim
    gs = dom.grid_shape
    F = np.eye(n) + eps * gradient(u).values
    dW = density_derivative(F, spec.p.values, spec.density) * dom.weights[..., None, None]
    N = int(np.prod(gs))
    flat = dW.reshape(N, n, n)
    out = np.zeros((N, n))
    for j, D in enumerate(dom.diff_operators):
        out += D.T @ flat[:, :, j]
    return TensorField(dom, out.reshape(gs + (n,)) / eps)


def energy_linear(u: TensorField, spec: EnergySpec) -> float:
    """1/2 times the quadrature of |e u|^2."""
    _check_bc(u, spec)
    eu = sym(gradient(u).values)
    return 0.5 * float(np.dot(spec.domain.weights.ravel(), (eu * eu).sum(axis=(-2, -1)).ravel()))


@dataclass
class MinimizeTrace:
    energies: list
    iterations: int
    converged: bool
    warning: bool
    message: str
    grad_inf: float


def minimize_nonlinear(spec: EnergySpec, eps: float, init: TensorField | None = None):
    """L-BFGS on the free nodes; returns (u_eps, trace)."""
    init = spec.lift() if init is None else init
    _check_bc(init, spec)
    free = spec.free_mask
    x0 = spec.pack(init)
    cache: dict = {}

    def fun(x):
        u = spec.unpack(x)
        e = _energy_values(u, eps, spec)
        gr = energy_gradient(u, eps, spec).values[free].ravel()
        cache["x"], cache["f"] = x.copy(), e
        return e, gr

    e0 = _energy_values(init, eps, spec)
    energies = [e0]

    def callback(xk):
        if "x" in cache and np.array_equal(cache["x"], xk):
            energies.append(cache["f"])
        else:
            energies.append(_energy_values(spec.unpack(xk), eps, spec))

    if x0.size == 0:
        return init, MinimizeTrace(energies, 0, True, False, "no free nodes", 0.0)
    res = minimize(
        fun, x0, jac=True, method="L-BFGS-B", callback=callback,
        options={"maxiter": MAXITER, "gtol": GTOL, "ftol": 0.0, "maxcor": 20, "maxls": 50},
    )
    x = res.x
    if res.fun > e0:
        x = x0
    u = spec.unpack(x)
    ginf = float(np.abs(energy_gradient(u, eps, spec).values[free]).max())
    converged = ginf <= GTOL
    warn = not converged and res.status != 0
    if warn:
        warnings.warn(f"minimization stopped early at eps={eps:g}: {res.message}", RuntimeWarning, stacklevel=2)
    return u, MinimizeTrace(energies, int(res.nit), converged, warn, str(res.message), ginf)


def _strain_operator(domain: GridDomain) -> list:
    """Sparse maps from the flat node-major displacement to each (e u)_ij, i <= j."""
    n = domain.dim
    N = int(np.prod(domain.grid_shape))
    D = domain.diff_operators
    sel = [sp.kron(sp.identity(N, format="csr"), sp.csr_matrix(np.eye(n)[i:i + 1]), format="csr") for i in range(n)]
    blocks = []
    for i in range(n):
        for j in range(i, n):
            b = 0.5 * (D[j] @ sel[i] + D[i] @ sel[j])
            blocks.append((b, 1.0 if i == j else 2.0))
    return blocks


def minimize_linear(spec: EnergySpec) -> TensorField:
    """Minimize 1/2 sum w |e u|^2 with frozen Dirichlet nodes by conjugate gradient."""
    dom = spec.domain
    n = dom.dim
    w = dom.weights.ravel()
    H = None
    for b, mult in _strain_operator(dom):
        term = mult * (b.T @ sp.diags(w) @ b)
        H = term if H is None else H + term
    H = H.tocsr()
    freeflat = np.repeat(spec.free_mask.ravel(), n)
    fixedflat = np.repeat(spec.dirichlet_mask.ravel(), n)
    lift = spec.lift().values.reshape(-1)
    Hff = H[freeflat][:, freeflat]
    rhs = -(H[freeflat][:, fixedflat] @ lift[fixedflat])
    u = lift.copy()
    bnorm = np.linalg.norm(rhs)
    if bnorm > 0:
        x, info = cg(Hff, rhs, rtol=1e-12, atol=0.0, maxiter=50 * Hff.shape[0])
        res = np.linalg.norm(rhs - Hff @ x) / bnorm
        if info != 0 and res > 1e-10:
            raise RuntimeError(f"linear elasticity solve did not converge (residual {res:.3e})")
        u[freeflat] = x
    else:
        u[freeflat] = 0.0
    return TensorField(dom, u.reshape(dom.grid_shape + (n,)))


def boundary_integral(values: np.ndarray, mask: np.ndarray, h: float) -> float:
    """Trapezoid rule for |values| over axis-adjacent pairs of masked nodes."""
    total = 0.0
    mask = np.asarray(mask, bool)
    for axis in range(mask.ndim):
        a = [slice(None)] * mask.ndim
        b = [slice(None)] * mask.ndim
        a[axis], b[axis] = slice(None, -1), slice(1, None)
        pair = mask[tuple(a)] & mask[tuple(b)]
        total += 0.5 * h * float((values[tuple(a)][pair] + values[tuple(b)][pair]).sum())
    return total


def compactness_check(u: TensorField, eps: float, spec: EnergySpec) -> tuple:
    """(modular of grad u, 1 + F_eps(u) + (boundary integral of |h|)^2)."""
    lhs = modular(gradient(u), spec.p)
    hb = boundary_integral(np.linalg.norm(spec.h.values, axis=-1), spec.dirichlet_mask, spec.domain.h)
    return lhs, 1.0 + energy_nonlinear(u, eps, spec) + hb * hb


@dataclass
class ConvergenceTable:
    rows: list
    linear_energy: float
    linear_grad_norm: float
    diagnostics: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in self.rows:
            writer.writerow([repr(float(r[c])) if c not in ("iters", "flag") else int(r[c]) for c in COLUMNS])
        return buf.getvalue()


def _tails(u, eps, spec):
    F = np.eye(spec.domain.dim) + eps * gradient(u).values
    t = TensorField(spec.domain, dist_SO(F) / eps)
    return [m for _, m in equi_integrability_profile(t, spec.p, TAIL_THRESHOLDS)]


def _diagnostics(u, eps, spec, eu_star, hb):
    dom = spec.domain
    w = dom.weights
    du = gradient(u).values
    good = np.sqrt(eps) * np.linalg.norm(du, axis=(-2, -1)) <= 1.0
    eu = sym(du)
    diff = np.where(good[..., None, None], eu, 0.0) - eu_star
    strain_gap = float(np.sqrt(np.dot(w.ravel(), (diff * diff).sum(axis=(-2, -1)).ravel())))
    F = np.eye(dom.dim) + eps * du
    W = density(F, spec.p.values, spec.density)
    outer = float(np.dot(w[~good], W[~good])) / eps**2
    mean_F = np.tensordot(w, F, axes=w.ndim) / w.sum()
    R = nearest_rotation(mean_F)
    num = float(np.linalg.norm(np.eye(dom.dim) - R))
    den = float(np.dot(w.ravel(), np.linalg.norm(F - R, axis=(-2, -1)).ravel())) + eps * hb
    return {
        "strain_gap": strain_gap,
        "outer_energy": outer,
        "poincare_constant": num / den if den > 0 else 0.0,
    }


def gamma_convergence_experiment(spec: EnergySpec, cold_check: bool = True) -> ConvergenceTable:
    """Warm-started minimization along the epsilon schedule compared with the linear minimizer."""
    u_star = minimize_linear(spec)
    F_star = energy_linear(u_star, spec)
    grad_star = gradient(u_star)
    g_star_norm = norm(grad_star, spec.p)
    eu_star = sym(grad_star.values)
    hb = boundary_integral(np.linalg.norm(spec.h.values, axis=-1), spec.dirichlet_mask, spec.domain.h)
    rows, diags = [], []
    current = spec.lift()
    for eps in spec.epsilons:
        flag = 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                u_eps, trace = minimize_nonlinear(spec, eps, current)
                if trace.warning:
                    flag |= FLAG_FAILURE
            except (ValueError, np.linalg.LinAlgError):
                u_eps, trace, flag = current, None, FLAG_FAILURE
        F_eps = energy_nonlinear(u_eps, eps, spec)
        cold_energy = float("nan")
        if cold_check:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                u_cold, _ = minimize_nonlinear(spec, eps, spec.lift())
            cold_energy = energy_nonlinear(u_cold, eps, spec)
            if abs(cold_energy - F_eps) > 0.01 * max(abs(F_eps), 1e-300):
                flag |= FLAG_COLD_MISMATCH
        lhs, rhs = compactness_check(u_eps, eps, spec)
        tails = _tails(u_eps, eps, spec)
        rows.append({
            "eps": eps,
            "F_eps": F_eps,
            "gap": abs(F_eps - F_star),
            "wp_dist": norm(gradient(u_eps) - grad_star, spec.p),
            "modular": lhs,
            "compactness_rhs": rhs,
            "tail_1": tails[0],
            "tail_2": tails[1],
            "tail_5": tails[2],
            "tail_10": tails[3],
            "iters": trace.iterations if trace else 0,
            "flag": flag,
        })
        d = _diagnostics(u_eps, eps, spec, eu_star, hb)
        d.update(cold_energy=cold_energy, grad_inf=trace.grad_inf if trace else float("nan"))
        diags.append(d)
        current = u_eps
    return ConvergenceTable(rows, F_star, g_star_norm, diags)


def gamma_scenario(resolution: int = 33, bump: float = 0.2, epsilons=(1e-1, 1e-2, 1e-3)) -> EnergySpec:
    """L-shape, Dirichlet on {x1 = 0} and {x2 = 0}, ramp 1.3 -> 2.0,
    h = 0.1 (x2, x1) plus a smooth bump on the bottom edge."""
    dom = make_domain(
        "lshape", resolution, dirichlet=lambda x: (np.abs(x[..., 0]) < 1e-12) | (np.abs(x[..., 1]) < 1e-12)
    )
    p = build_exponent("linear-ramp", {"start": 1.3, "stop": 2.0, "axis": 0}, dom)

    def data(x):
        base = 0.1 * np.stack([x[..., 1], x[..., 0]], axis=-1)
        b = bump * np.exp(-((x[..., 0] - 0.25) ** 2 + x[..., 1] ** 2) / 0.01)
        return base + np.stack([np.zeros_like(b), b], axis=-1)

    return EnergySpec(dom, p, TensorField.from_function(dom, data), epsilons=epsilons)
