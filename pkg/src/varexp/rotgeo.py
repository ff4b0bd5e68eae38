"""Pointwise matrix geometry around SO(n). Every function broadcasts over leading axes."""

from __future__ import annotations

import numpy as np

# constant in |dist(A, SO(n)) - |A_sym - I|| <= C |A - I|^2, checked by the test-suite sweep
TAYLOR_CONSTANT = 1.0


def _svd(a):
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=float))
    return u, s, vt


def dist_SO(a) -> np.ndarray:
    """Frobenius distance to SO(n) from the singular values; the det < 0 case flips the smallest."""
    a = np.asarray(a, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    neg = np.linalg.det(a) < 0
    last = np.where(neg, s[..., -1] + 1.0, s[..., -1] - 1.0)
    d2 = ((s[..., :-1] - 1.0) ** 2).sum(axis=-1) + last**2
    return np.sqrt(d2)


def nearest_rotation(a) -> np.ndarray:
    """R = U diag(1, ..., det(U V^T)) V^T, flipping the smallest singular direction."""
    u, _, vt = _svd(a)
    sign = np.sign(np.linalg.det(u @ vt))
    sign = np.where(sign == 0, 1.0, sign)
    u = u.copy()
    u[..., :, -1] *= sign[..., None]
    return u @ vt


def rotation_is_unique(a, tol: float = 1e-12) -> np.ndarray:
    """False where det < 0 and the two smallest singular values sum to ~0 (non-unique projection)."""
    a = np.asarray(a, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    scale = np.maximum(s[..., 0], 1.0)
    return ~((np.linalg.det(a) < 0) & (s[..., -2] + s[..., -1] <= tol * scale))


def g_eval(q, t) -> np.ndarray:
    """t^2/2 for t <= 1 and t^q/q + 1/2 - 1/q for t > 1."""
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(~(q >= 1.0)) or np.any(~(q <= 2.0)):
        raise ValueError("g needs 1 <= q <= 2")
    if np.any(~(t >= 0.0)):
        raise ValueError("g needs t >= 0")
    big = t > 1.0
    return np.where(big, np.maximum(t, 1.0) ** q / q + 0.5 - 1.0 / q, 0.5 * t * t)


def g_derivative(q, t) -> np.ndarray:
    """d/dt g(q, t)."""
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.where(t > 1.0, np.maximum(t, 1.0) ** (q - 1.0), t)


def sym_skew_split(a):
    a = np.asarray(a, dtype=float)
    at = np.swapaxes(a, -1, -2)
    return 0.5 * (a + at), 0.5 * (a - at)


def cofactor(a) -> np.ndarray:
    """Cofactor matrix, A cof(A)^T = det(A) I (n = 2, 3)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n == 2:
        out = np.empty_like(a)
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 0, 1] = -a[..., 1, 0]
        out[..., 1, 0] = -a[..., 0, 1]
        out[..., 1, 1] = a[..., 0, 0]
        return out
    if n == 3:
        r0, r1, r2 = a[..., 0, :], a[..., 1, :], a[..., 2, :]
        return np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2)
    raise ValueError("cofactor implemented for n = 2, 3")


def taylor_defect(a) -> np.ndarray:
    """|dist(A, SO(n)) - |A_sym - I|| / |A - I|^2; NaN where |A - I| < 1e-8."""
    a = np.asarray(a, dtype=float)
    eye = np.eye(a.shape[-1])
    dev = np.linalg.norm(a - eye, axis=(-2, -1))
    if a.ndim == 2 and dev < 1e-8:
        raise ValueError("taylor_defect is undefined for |A - I| < 1e-8")
    a_sym, _ = sym_skew_split(a)
    num = np.abs(dist_SO(a) - np.linalg.norm(a_sym - eye, axis=(-2, -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(dev < 1e-8, np.nan, num / dev**2)
    return out if out.ndim else float(out)


def dist_SO_gradient(a) -> tuple:
    """(dist, A - R(A)); the second factor is dist times the gradient of dist."""
    r = nearest_rotation(a)
    diff = np.asarray(a, dtype=float) - r
    return np.linalg.norm(diff, axis=(-2, -1)), diff
