"""Finite-difference Finsler p-Laplacian, residuals, the matrix W = D[a(grad v)], and S2 identities.

Scalar fields are vectorized callables ``f(x)`` with ``x`` of shape (..., n).
The discrete p-Laplacian is the compact flux form

    sum_j [a_j(g^+_j) - a_j(g^-_j)] / h,

where g^{+-}_j approximates grad u at x +- (h/2) e_j: its j-th component is the
one-sided difference across the half step and the others average the central
differences at x and at x +- h e_j.  The same fluxes give every column of W,
so trace(W) equals the p-Laplacian exactly.  The scheme is second order.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .bubbles import BubbleParams, bubble_eval, bubble_grad
from .cones import ConeSpec, WeightSpec
from .norms import NormSpec, as_real
from .report import VerificationReport

DEGENERATE_GRAD = 1e-6


class DegeneratePointError(ValueError):
    """grad u is (numerically) zero at a point where a() is not differentiable."""


def central_gradient(f, x, h):
    x = as_real(x)
    n = x.shape[-1]
    E = np.eye(n) * h
    return np.stack([(f(x + E[j]) - f(x - E[j])) / (2 * h) for j in range(n)], axis=-1)


def _half_point_gradients(f, x, h):
    """Gradients at x + s (h/2) e_j for s = +1, -1; arrays of shape (2, n, ..., n)."""
    x = as_real(x)
    n = x.shape[-1]
    E = np.eye(n) * h
    f0 = f(x)
    cg = [None] * n
    fp = [f(x + E[j]) for j in range(n)]
    fm = [f(x - E[j]) for j in range(n)]
    for k in range(n):
        cg[k] = (fp[k] - fm[k]) / (2 * h)
    out = np.empty((2, n) + x.shape, dtype=x.dtype)
    for si, s in enumerate((1.0, -1.0)):
        for j in range(n):
            y = x + s * E[j]
            fy = fp[j] if s > 0 else fm[j]
            for k in range(n):
                if k == j:
                    out[si, j, ..., k] = s * (fy - f0) / h
                else:
                    out[si, j, ..., k] = 0.5 * (cg[k] + (f(y + E[k]) - f(y - E[k])) / (2 * h))
    return out


def _guard(f, x, h, p):
    if p < 2:
        g = np.linalg.norm(central_gradient(f, x, h), axis=-1)
        if np.any(g < DEGENERATE_GRAD):
            raise DegeneratePointError("gradient vanishes at an evaluation point with p < 2")


def _fluxes(f, H, p, x, h, weight=None):
    G = _half_point_gradients(f, x, h)
    A = H.a_map(G, p)
    if weight is not None:
        x = as_real(x)
        n = x.shape[-1]
        E = np.eye(n) * (h / 2)
        for si, s in enumerate((1.0, -1.0)):
            for j in range(n):
                A[si, j] *= weight.eval(x + s * E[j])[..., None]
    return A


def w_matrix(f, H: NormSpec, p: float, x, h: float = 1e-3) -> np.ndarray:
    """W_ij = d_j a_i(grad f) at x; shape (..., n, n)."""
    _guard(f, x, h, p)
    A = _fluxes(f, H, p, x, h)
    D = (A[0] - A[1]) / h          # (j, ..., i)
    return np.moveaxis(D, 0, -1)   # (..., i, j)


def finsler_p_laplacian(f, H: NormSpec, p: float, x, h: float = 1e-3) -> np.ndarray:
    return np.trace(w_matrix(f, H, p, x, h), axis1=-2, axis2=-1)


def weighted_divergence(f, H: NormSpec, p: float, w: WeightSpec, x, h: float = 1e-3) -> np.ndarray:
    """div(w a(grad f)) by the same compact flux scheme."""
    _guard(f, x, h, p)
    A = _fluxes(f, H, p, x, h, weight=w)
    n = np.asarray(x).shape[-1]
    return sum((A[0, j, ..., j] - A[1, j, ..., j]) / h for j in range(n))


def _bubble_field(B, H):
    return lambda y: bubble_eval(B, H, y)


def pde_residual(B: BubbleParams, H: NormSpec, cone: ConeSpec, x, h: float = 1e-3) -> np.ndarray:
    """Delta_p^H U + U^(p*-1) at interior points.

    Evaluated in extended precision: the nested differences divide rounding
    by h^2, which at h/2 would otherwise be comparable to the truncation error
    and spoil the Richardson ratio.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(cone.contains(x)):
        raise ValueError("residual points must lie in the cone")
    U = _bubble_field(B, H)
    xl = x.astype(np.longdouble)
    return (finsler_p_laplacian(U, H, B.p, xl, h) + U(xl) ** (B.beta - 1)).astype(float)


def weighted_residual(B: BubbleParams, H: NormSpec, w: WeightSpec, x, h: float = 1e-3,
                      multiplier: float = 1.0) -> np.ndarray:
    """div(w a(grad U)) + multiplier * w U^(beta-1)."""
    U = _bubble_field(B, H)
    x = np.asarray(x, dtype=np.longdouble)
    return (weighted_divergence(U, H, B.p, w, x, h) + multiplier * w.eval(x) * U(x) ** (B.beta - 1)).astype(float)


def neumann_residual(B: BubbleParams, H: NormSpec, cone: ConeSpec, x) -> float:
    """a(grad U) . nu at a smooth boundary point."""
    x = np.asarray(x, dtype=float)
    nu = cone.normal_at(x)
    return float(H.a_map(bubble_grad(B, H, x), B.p) @ nu)


def richardson_check(B, H, cone, x, h=1e-3, tol_factor=10.0, ratio_range=(3.5, 4.5)) -> VerificationReport:
    """Residual at h and h/2: max |res(h)| <= tol_factor h^2 and the ratio of max residuals."""
    r1 = np.abs(pde_residual(B, H, cone, x, h))
    r2 = np.abs(pde_residual(B, H, cone, x, h / 2))
    rep = VerificationReport("pde_residual")
    tol = tol_factor * h * h
    for xi, a, b in zip(x, r1, r2):
        rep.add(point=xi, h=h, residual=a, residual_half=b, tolerance=tol, **{"pass": a <= tol})
    ratio = float(r1.max() / r2.max()) if r2.max() > 0 else math.inf
    rep.add(point="max", h=h, residual=r1.max(), residual_half=r2.max(), ratio=ratio,
            tolerance=tol, **{"pass": bool(r1.max() <= tol and ratio_range[0] <= ratio <= ratio_range[1])})
    rep.info.update(max_residual=float(r1.max()), ratio=ratio)
    return rep


# ---- second symmetric function ------------------------------------------

def s2(M) -> np.ndarray:
    """Sum of principal 2x2 minors: ((tr M)^2 - tr(M^2)) / 2."""
    M = as_real(M)
    t = np.trace(M, axis1=-2, axis2=-1)
    return 0.5 * (t * t - np.einsum("...ij,...ji->...", M, M))


def s2_cofactor(M) -> np.ndarray:
    """S2_ij(M) = -m_ji + delta_ij tr M, so that S2(M) = sum_ij S2_ij m_ij / 2."""
    M = as_real(M)
    n = M.shape[-1]
    t = np.trace(M, axis1=-2, axis2=-1)
    return -np.swapaxes(M, -1, -2) + t[..., None, None] * np.eye(n)


def s2_bruteforce(M) -> float:
    M = np.asarray(M, dtype=float)
    return float(sum(M[i, i] * M[j, j] - M[i, j] * M[j, i]
                     for i, j in combinations(range(M.shape[0]), 2)))


def check_newton(B, C, slack: float = 1e-12, eq_tol: float = 1e-9) -> VerificationReport:
    """S2(BC) <= (n-1)/(2n) tr(BC)^2 for B symmetric PSD and C symmetric.

    At detected equality with tr(BC) != 0 the product must be (tr/n) Id.
    Violations are measured against max(rhs, |BC|_F^2) and equality against
    rhs, so a nearly traceless product is not mistaken for an equality case.
    """
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if B.ndim == 2:
        B, C = B[None], C[None]
    n = B.shape[-1]
    if not (np.allclose(B, np.swapaxes(B, -1, -2)) and np.allclose(C, np.swapaxes(C, -1, -2))):
        raise ValueError("B and C must be symmetric")
    if np.any(np.linalg.eigvalsh(B) < -1e-12 * np.maximum(1.0, np.abs(B).max())):
        raise ValueError("B must be positive semi-definite")
    M = B @ C
    t = np.trace(M, axis1=-2, axis2=-1)
    lhs = s2(M)
    rhs = (n - 1) / (2 * n) * t * t
    # both sides are quadratic in M; rounding in S2 scales with |M|_F^2
    scale = np.maximum(rhs, np.sum(M * M, axis=(-2, -1)))
    rep = VerificationReport("newton")
    for i in range(M.shape[0]):
        gap = rhs[i] - lhs[i]
        ok = gap >= -slack * scale[i]
        row = dict(index=i, lhs=lhs[i], rhs=rhs[i], residual=max(-gap, 0.0), tolerance=slack * scale[i])
        if abs(t[i]) > 0 and abs(gap) <= eq_tol * rhs[i]:
            off = np.abs(M[i] - t[i] / n * np.eye(n)).max()
            row.update(equality=True, off_identity=off)
            ok = ok and off <= 1e-8 * abs(t[i])
        else:
            row["equality"] = False
        row["pass"] = bool(ok)
        rep.add(**row)
    return rep


# ---- rigidity --------------------------------------------------------------

def w_matrix_error(f, H, p, x, h=1e-3):
    """W at step h with an error bound: Richardson difference plus a rounding floor."""
    W1 = w_matrix(f, H, p, x, h)
    W2 = w_matrix(f, H, p, x, h / 2)
    amag = np.abs(H.a_map(central_gradient(f, x, h), p)).max(axis=-1)
    fmag = np.abs(f(np.asarray(x, dtype=float)))
    eps = np.finfo(float).eps
    # |da/dxi| ~ |a|/|grad f|; rounding in f enters grad at eps |f| / h
    g = np.maximum(np.linalg.norm(central_gradient(f, x, h), axis=-1), 1e-300)
    floor = 64 * eps * (amag + (amag / g) * fmag / h) / (h / 2)
    bound = np.abs(W1 - W2).max(axis=(-2, -1)) * 4 / 3 + floor
    return W1, bound


def off_identity(W) -> np.ndarray:
    n = W.shape[-1]
    t = np.trace(W, axis1=-2, axis2=-1)
    return np.abs(W - t[..., None, None] / n * np.eye(n)).max(axis=(-2, -1))


def check_rigidity(f, H, p, x, h=1e-3, factor=5.0, label="rigidity") -> VerificationReport:
    """Deviation of W from a multiple of the identity, against its FD error bound."""
    W, bound = w_matrix_error(f, H, p, x, h)
    dev = off_identity(W)
    rep = VerificationReport(label)
    for xi, d, b in zip(x, dev, bound):
        rep.add(point=xi, h=h, residual=d, tolerance=factor * b, **{"pass": d <= factor * b})
    rep.info.update(max_deviation=float(dev.max()), max_bound=float(bound.max()),
                    min_ratio=float((dev / bound).min()))
    return rep


# ---- differential identity -------------------------------------------------------

def differential_identity_terms(f, H: NormSpec, p: float, gamma: float, x, h: float, extended: bool = True):
    """Both sides of the pointwise identity

        2 v^g S2(W) = div(v^g S2_ij(W) a_i + g(p-1) v^(g-1) V a)
                      - g(g-1) p(p-1) v^(g-2) V^2 - g(2p-1) v^(g-1) V tr W,

    with V = H^p/p and a = grad V at grad v.  The divergence is a central
    difference of the flux evaluated (with compact W) at x +- h e_k.  The
    nested differences divide rounding errors by h^3, so by default the field
    is sampled in extended precision (``f`` must then accept long doubles).
    """
    x = np.asarray(x, dtype=np.longdouble if extended else float)
    n = x.shape[-1]
    _guard(f, x, h, p)
    v0 = f(x)
    if np.any(v0 <= 0):
        raise ValueError("v must be positive")
    W0 = w_matrix(f, H, p, x, h)
    lhs = 2 * v0**gamma * s2(W0)

    def flux(y):
        v = f(y)
        g = central_gradient(f, y, h)
        a = H.a_map(g, p)
        V = H.eval(g) ** p / p
        S = s2_cofactor(w_matrix(f, H, p, y, h))
        return (v**gamma)[..., None] * np.einsum("...ij,...i->...j", S, a) \
            + (gamma * (p - 1) * v ** (gamma - 1) * V)[..., None] * a

    E = np.eye(n) * h
    div = sum((flux(x + E[k])[..., k] - flux(x - E[k])[..., k]) / (2 * h) for k in range(n))
    g0 = central_gradient(f, x, h)
    V0 = H.eval(g0) ** p / p
    tr = np.trace(W0, axis1=-2, axis2=-1)
    rhs = (div - gamma * (gamma - 1) * p * (p - 1) * v0 ** (gamma - 2) * V0**2
           - gamma * (2 * p - 1) * v0 ** (gamma - 1) * V0 * tr)
    scale = np.maximum.reduce([np.abs(lhs), np.abs(div), np.abs(v0 ** (gamma - 1) * V0 * tr), np.ones_like(lhs)])
    return lhs.astype(float), rhs.astype(float), scale.astype(float)


def check_differential_identity(f, H, p, gamma, x, h=1e-3, C=1.0, h_coarse=None,
                                extended: bool = True) -> VerificationReport:
    """Pointwise identity at steps h and 10 h: |LHS - RHS| <= C h scale and decay between the two.

    ``scale`` is the magnitude of the largest term, so C is dimensionless.
    """
    h_coarse = 10 * h if h_coarse is None else h_coarse
    x = np.atleast_2d(np.asarray(x, dtype=float))
    l1, r1, s1 = differential_identity_terms(f, H, p, gamma, x, h, extended)
    l0, r0, _ = differential_identity_terms(f, H, p, gamma, x, h_coarse, extended)
    res1 = np.abs(l1 - r1)
    res0 = np.abs(l0 - r0)
    # third-order nested differences amplify rounding by 1/h^3
    eps = float(np.finfo(np.longdouble if extended else float).eps)
    floor = 64 * eps * s1 / h**3
    rep = VerificationReport("differential_identity")
    for i in range(len(x)):
        tol = C * h * s1[i]
        order = math.log(res0[i] / res1[i]) / math.log(h_coarse / h) if res1[i] > 0 and res0[i] > 0 else math.inf
        # decay must be visible unless the fine residual is already at rounding level
        # (fields whose differences are exact, such as quadratics at p = 2)
        decays = order >= 0.9 or res1[i] <= floor[i]
        rep.add(point=x[i], h=h, gamma=gamma, p=p, residual=res1[i], residual_coarse=res0[i],
                order=order, rounding_floor=floor[i], tolerance=tol, **{"pass": bool(res1[i] <= tol and decays)})
    return rep
