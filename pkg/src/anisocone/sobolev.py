"""Sobolev quotient by radial reduction, sharp constants, endgame identities and scaling checks.

For a profile u = phi(rho) about the center, every cone integral becomes
N mu times a one-dimensional integral against r^(N-1) dr, with N = n + a and
mu the (weighted) sector measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bubbles import BubbleParams, bubble_eval, bubble_grad, calibrate_constant, critical_exponent
from .cones import ConeSpec, WeightSpec, direction_quadrature, sector_measure, sphere_rule
from .norms import NormSpec
from .radial import RadialProfile, cumulative, graded_grid, radial_quadrature_with_error
from .report import VerificationReport


@dataclass
class QuotientResult:
    numerator: float
    denominator: float
    J: float
    numerator_err: float = 0.0
    denominator_err: float = 0.0
    J_err: float = 0.0


def _measure(cone, H, w, mu, seed=0):
    if mu is not None:
        return float(mu), 0.0
    m = sector_measure(cone, H, w, seed=seed)
    return m.value, m.stderr


def profile_derivative(prof: RadialProfile) -> np.ndarray:
    """u'(r) by second-order differences in log r."""
    t = np.log(prof.r)
    return np.gradient(prof.values, t, edge_order=2) / prof.r


def radial_parts(r, u, du, N, p, beta):
    """(int |u'|^p r^(N-1), err, int |u|^beta r^(N-1), err)."""
    a, ea = radial_quadrature_with_error(RadialProfile(r, np.abs(du) ** p), N - 1)
    b, eb = radial_quadrature_with_error(RadialProfile(r, np.abs(u) ** beta), N - 1)
    return a, ea, b, eb


def _assemble(a, ea, b, eb, N, mu, mu_err, beta, p) -> QuotientResult:
    num = N * mu * a
    den_int = N * mu * b
    den = den_int ** (p / beta)
    J = num / den
    rel = ea / a + (p / beta) * eb / b + (1 - p / beta) * (mu_err / mu if mu else 0.0)
    return QuotientResult(num, den, J, N * mu * ea, (p / beta) * den * (eb / b), J * rel)


def quotient(profile, H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None, p: float | None = None,
             mu: float | None = None, r=None, seed: int = 0) -> QuotientResult:
    """J(u) = int H^p(grad u) w / (int u^beta w)^(p/beta) for gauge-radial u.

    ``profile`` is a BubbleParams (exact derivative) or a RadialProfile
    (derivative by differences in log r; ``p`` required).
    """
    w = w or WeightSpec.unit()
    n, a = cone.n, w.degree
    N = n + a
    if isinstance(profile, BubbleParams):
        p = profile.p
        r = graded_grid() if r is None else r
        u, du = profile.profile(r, 1)
    else:
        if p is None:
            raise ValueError("p is required for sampled profiles")
        r, u = profile.r, profile.values
        du = profile_derivative(profile)
    if not np.any(u):
        raise ValueError("zero profile")
    beta = critical_exponent(n, p, a)
    m, me = _measure(cone, H, w, mu, seed)
    return _assemble(*radial_parts(r, u, du, N, p, beta), N, m, me, beta, p)


def sharp_constant(H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None, p: float = 2.0,
                   mu: float | None = None, seed: int = 0) -> float:
    """J at the calibrated bubble centered per the cone's placement rule."""
    w = w or WeightSpec.unit()
    c = calibrate_constant(cone.n, p, w.degree, H, w, cone)
    B = BubbleParams.for_cone(cone, p, w.degree, c=c)
    return quotient(B, H, cone, w, mu=mu, seed=seed).J


# ---- perturbations -----------------------------------------------------------

def smooth_bump(s):
    """exp(1 - 1/(1 - s^2)) for |s| < 1, else 0; value 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def smooth_bump_deriv(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    q = 1.0 - s[m] ** 2
    out[m] = np.exp(1.0 - 1.0 / q) * (-2 * s[m] / q**2)
    return out


@dataclass
class RadialBump:
    """phi(rho) = bump((rho - center) / width)."""

    center: float = 1.0
    width: float = 0.5
    label: str = "radial"


@dataclass
class LocalBump:
    """phi(x) = (1 - |x - center|^2 / radius^2)^4 on the ball, a non-radial compact perturbation."""

    center: np.ndarray
    radius: float
    label: str = "local"


@dataclass
class Translation:
    """Move the center to x0 + t * direction (t supplied by the epsilon list)."""

    direction: np.ndarray
    label: str = "translation"


def _radial_J(B, r, mu, N, p, beta, extra=None, eps=0.0):
    u, du = B.profile(r, 1)
    if extra is not None:
        s = (r - extra.center) / extra.width
        u = u + eps * smooth_bump(s)
        du = du + eps * smooth_bump_deriv(s) / extra.width
    a, ea, b, eb = radial_parts(r, u, du, N, p, beta)
    return _assemble(a, ea, b, eb, N, mu, 0.0, beta, p).J


def ball_sphere_count(n: int, order: int) -> int:
    """Nodes per angle for the ball rule.

    The odd part of J(eps) must resolve to ~1e-4 of the even part at eps = 1e-3;
    these counts reach that for the bump sizes used by the suites (the 2 c^(n-1)
    node total caps what is affordable from n = 7 on).
    """
    return order if n <= 3 else {4: 20, 5: 14, 6: 12}.get(n, 8)


def _local_J(B, H, w, bump, base, eps_list, order, sphere_count=None):
    """J(U + eps phi) from the base integrals plus difference integrals over the bump support.

    The support is a ball; the rule is Gauss-Legendre in the radius times a
    product rule on the sphere, accumulated one radial shell at a time.
    """
    p, beta = B.p, B.beta
    c = np.asarray(bump.center, float)
    n, R = len(c), bump.radius
    xg, wg = np.polynomial.legendre.leggauss(order)
    d, dw = sphere_rule(n, sphere_count or ball_sphere_count(n, order))
    dA = np.zeros(len(eps_list))
    dB = np.zeros(len(eps_list))
    for sk, wk in zip(0.5 * (xg + 1), 0.5 * wg):
        x = c + R * sk * d
        wt = wk * sk ** (n - 1) * R**n * dw * w.eval(x)
        phi = (1 - sk * sk) ** 4
        dphi = (-8 * sk * (1 - sk * sk) ** 3 / R) * d
        U = bubble_eval(B, H, x)
        G = bubble_grad(B, H, x)
        HG, Ub = H.eval(G) ** p, U**beta
        for i, eps in enumerate(eps_list):
            dA[i] += np.sum(wt * (H.eval(G + eps * dphi) ** p - HG))
            dB[i] += np.sum(wt * (np.abs(U + eps * phi) ** beta - Ub))
    A0, B0 = base
    return [(A0 + a) / (B0 + b) ** (p / beta) for a, b in zip(dA, dB)]


def _polar_J(B, H, cone, w, x0, count, r):
    """J of the bubble centered at x0 by direction quadrature times a radial grid about O."""
    d, dw = direction_quadrature(cone, count)
    p, beta, n = B.p, B.beta, cone.n
    Bt = B.with_(x0=np.asarray(x0, float))
    A = 0.0
    Bd = 0.0
    t = np.log(r)
    from scipy.integrate import simpson

    for i in range(0, len(d), 64):
        dd = d[i:i + 64]
        x = r[None, :, None] * dd[:, None, :]
        U = bubble_eval(Bt, H, x)
        G = bubble_grad(Bt, H, x)
        jac = r ** n * w.eval(x)  # r^(n-1) dr = r^n dt
        A += np.sum(dw[i:i + 64] * simpson(H.eval(G) ** p * jac, x=t, axis=1))
        Bd += np.sum(dw[i:i + 64] * simpson(U**beta * jac, x=t, axis=1))
    return A, Bd


def perturbation_test(B: BubbleParams, H: NormSpec, cone: ConeSpec, directions,
                      eps_list=(1e-2, -1e-2, 1e-3, -1e-3), w: WeightSpec | None = None,
                      mu: float | None = None, rel_slack: float = 1e-8, crit_ratio: float = 1e-3,
                      order: int = 24, polar_count: int = 32) -> VerificationReport:
    """J(U + eps phi) >= J(U)(1 - slack) and vanishing first variation.

    Criticality compares the odd part of J(eps) - J(0) (first order) with its
    even part (second order) at the smallest |eps|, which must appear with
    both signs.  It passes when odd <= crit_ratio * even, or when the ratio
    odd/even shrinks at least linearly between the two smallest magnitudes,
    which is the signature of a vanishing first variation (odd ~ eps^3,
    even ~ eps^2) as opposed to a nonzero one (ratio ~ 1/eps).
    """
    w = w or WeightSpec.unit()
    N, p, beta = B.N, B.p, B.beta
    m, _ = _measure(cone, H, w, mu)
    r = graded_grid()
    # bump profiles need a finer log grid than the bubble alone
    r_fine = graded_grid(ratio=1.002)
    J0 = _radial_J(B, r, m, N, p, beta)
    rep = VerificationReport("perturbation")
    eps_list = list(eps_list)
    for k, dirn in enumerate(directions):
        if isinstance(dirn, RadialBump):
            base = _radial_J(B, r_fine, m, N, p, beta)
            Js = [_radial_J(B, r_fine, m, N, p, beta, dirn, e) for e in eps_list]
        elif isinstance(dirn, LocalBump):
            if not np.all(cone.boundary_distance(np.asarray(dirn.center)) > dirn.radius):
                raise ValueError("bump support must lie inside the cone")
            a, _, b, _ = radial_parts(r_fine, *B.profile(r_fine, 1), N, p, beta)
            Js = _local_J(B, H, w, dirn, (N * m * a, N * m * b), eps_list, order)
            base = J0
        elif isinstance(dirn, Translation):
            rr = graded_grid(1e-4, 1e4, 1.01)
            A0, B0 = _polar_J(B, H, cone, w, B.x0, polar_count, rr)
            base = A0 / B0 ** (p / beta)
            Js = []
            for e in eps_list:
                A1, B1 = _polar_J(B, H, cone, w, B.x0 + e * np.asarray(dirn.direction, float), polar_count, rr)
                Js.append(A1 / B1 ** (p / beta))
        else:
            raise TypeError(f"unknown perturbation {dirn!r}")
        for e, J in zip(eps_list, Js):
            ok = J >= base * (1 - rel_slack)
            rep.add(direction=f"{dirn.label}{k}", eps=e, J=J, J0=base, residual=(base - J) / base,
                    tolerance=rel_slack, **{"pass": bool(ok)})
        if isinstance(dirn, Translation):
            # an exact symmetry: J is constant along the orbit, so criticality means invariance
            dev = max(abs(J - base) for J in Js) / base
            rep.add(direction=f"{dirn.label}{k}", eps=max(abs(e) for e in eps_list), J=max(Js), J0=base,
                    residual=dev, tolerance=rel_slack, kind="invariance", **{"pass": bool(dev <= rel_slack)})
            continue
        mags = sorted({abs(e) for e in eps_list if e != 0 and -e in eps_list})
        if not mags:
            continue

        def ratio(e):
            jp, jm = Js[eps_list.index(e)], Js[eps_list.index(-e)]
            odd, even = abs(jp - jm) / 2, abs(jp + jm - 2 * base) / 2
            return odd, even, (odd / even if even > 0 else math.inf)

        odd, even, q = ratio(mags[0])
        ok = q <= crit_ratio
        decay = math.nan
        if not ok and len(mags) > 1:
            q1 = ratio(mags[1])[2]
            decay = q / q1 if q1 > 0 else math.inf
            ok = decay <= 2.0 * mags[0] / mags[1]
        rep.add(direction=f"{dirn.label}{k}", eps=mags[0], J=odd, J0=even, residual=q,
                tolerance=crit_ratio, ratio_decay=decay, kind="criticality", **{"pass": bool(ok)})
    return rep


# ---- endgame identities --------------------------------------------------------

def _require_symmetric(H):
    if not H.symmetric:
        raise ValueError("the v-transform identities need a symmetric norm")


def v_radial(B: BubbleParams, r):
    """v, v', v'' of the v-transform of B as functions of the gauge."""
    c1, c2 = B.v_coefficients()
    s = B.s
    return c1 + c2 * r**s, c2 * s * r ** (s - 1), c2 * s * (s - 1) * r ** (s - 2)


def check_identity_v(B: BubbleParams, H: NormSpec, cone: ConeSpec, p: float | None = None,
                     tol: float = 1e-6) -> VerificationReport:
    """(p/(N-p))^(p-1) int v^(-N-1) = (N/p) int v^(-N-1) H^p(grad v) for the bubble's v."""
    _require_symmetric(H)
    p = B.p if p is None else p
    N = B.N
    r = graded_grid()
    v, dv, _ = v_radial(B, r)
    L, eL = radial_quadrature_with_error(RadialProfile(r, v ** (-N - 1)), N - 1)
    R, eR = radial_quadrature_with_error(RadialProfile(r, v ** (-N - 1) * np.abs(dv) ** p), N - 1)
    lhs = (p / (N - p)) ** (p - 1) * L
    rhs = N / p * R
    rel = abs(lhs - rhs) / abs(lhs)
    rep = VerificationReport("identity_v")
    # common factor N mu cancels; it is reported for completeness
    rep.add(link="identity_v", lhs=lhs, rhs=rhs, residual=rel, tolerance=tol,
            quad_err=eL / L + eR / R, **{"pass": rel <= tol})
    return rep


def radial_v_terms(v, dv, d2v, r, n, p):
    """W-derived quantities for v = v(rho) increasing: (S2(W), tr W, V).

    a(grad v) = g (x - x0) with g = v'^(p-1)/rho, and W = g Id + g' (x - x0) (x) grad rho.
    """
    g = dv ** (p - 1) / r
    dg = (p - 1) * dv ** (p - 2) * d2v / r - dv ** (p - 1) / r**2
    tr = n * g + dg * r
    S2 = (n - 1) * g * (0.5 * n * g + dg * r)
    V = dv**p / p
    return S2, tr, V


def integral_inequality_integrand(v, dv, d2v, r, n, p, gamma):
    S2, tr, V = radial_v_terms(v, dv, d2v, r, n, p)
    return (2 * v**gamma * S2 + gamma * (gamma - 1) * p * (p - 1) * v ** (gamma - 2) * V**2
            + gamma * (2 * p - 1) * v ** (gamma - 1) * V * tr)


def check_integral_inequality(B: BubbleParams, H: NormSpec, cone: ConeSpec, p: float | None = None,
                              gamma: float | None = None, mu: float | None = None, v_profile=None,
                              tol_scale: float = 1.0) -> VerificationReport:
    """Integral of 2 v^g S2(W) + g(g-1)p(p-1) v^(g-2) V^2 + g(2p-1) v^(g-1) V tr W over the cone.

    Must be >= -err; at g = 1 - n and for a bubble it must vanish within err,
    where err is the quadrature error bound.  ``v_profile`` (callable r ->
    (v, v', v'')) replaces the bubble's v for non-extremal probes.
    """
    _require_symmetric(H)
    p = B.p if p is None else p
    n = cone.n
    gamma = 1 - n if gamma is None else gamma
    if gamma >= -n * (p - 1) / p:
        raise ValueError(f"gamma must be < {-n * (p - 1) / p:g}")
    m, me = _measure(cone, H, WeightSpec.unit(), mu)
    r = graded_grid()
    v, dv, d2v = (v_radial(B, r) if v_profile is None else v_profile(r))
    f = integral_inequality_integrand(v, dv, d2v, r, n, p, gamma)
    val, err = radial_quadrature_with_error(RadialProfile(r, f), n - 1)
    # the three pieces separately bound the cancellation scale
    S2, tr, V = radial_v_terms(v, dv, d2v, r, n, p)
    scale = radial_quadrature_with_error(RadialProfile(r, np.abs(2 * v**gamma * S2)), n - 1)[0]
    total, terr = n * m * val, n * m * err * tol_scale + n * m * scale * 1e-13 + abs(n * m * val) * (me / m if m else 0)
    slack = _newton_slack(v, dv, d2v, r, n, p, gamma) * n * m
    rep = VerificationReport("integral_inequality")
    rep.add(link="nonnegative", gamma=gamma, value=total, residual=max(-total, 0.0), tolerance=terr,
            **{"pass": total >= -terr})
    if gamma == 1 - n and v_profile is None:
        rep.add(link="equality", gamma=gamma, value=total, residual=abs(total), tolerance=terr,
                **{"pass": abs(total) <= terr})
    rep.info.update(value=total, err=terr, newton_slack=slack)
    return rep


def _newton_slack(v, dv, d2v, r, n, p, gamma):
    """int v^g [(n-1)/n (tr W)^2 - 2 S2(W)] r^(n-1): zero iff W is a multiple of Id."""
    S2, tr, _ = radial_v_terms(v, dv, d2v, r, n, p)
    f = v**gamma * ((n - 1) / n * tr**2 - 2 * S2)
    return radial_quadrature_with_error(RadialProfile(r, f), n - 1)[0]


# ---- Caccioppoli scaling ----------------------------------------------------------

def _gradient_moment(H: NormSpec, cone: ConeSpec, count=32):
    """Ratio int_{K cap cone} |z|^2 |grad H0(z)|^2 / H0(z)^2 over the sector measure (1 for euclidean)."""
    if H.family == "euclidean":
        return 1.0
    d, dw = direction_quadrature(cone, count)
    rho = H.dual(-d)
    q = np.sum(H.dual_grad(-d) ** 2, axis=1) / rho**2
    base = rho ** (-cone.n)
    return float(np.sum(dw * q * base) / np.sum(dw * base))


def caccioppoli_scaling(B: BubbleParams, H: NormSpec, cone: ConeSpec, exponent: float,
                        r_list=None, version: str = "u", fit_decade: float = 10.0,
                        margin: float = 0.05) -> VerificationReport:
    """Growth of I(r) = int over {rho < r} of |grad a(grad f)|^2 f^exponent.

    version 'u': f = U, bound exponent max(0, -n - gamma (n-p)/(p-1)).
    version 'v': f = v-transform, bound exponent n + sigma p/(p-1).
    The log-log slope over the top decade of ``r_list`` must not exceed the
    bound exponent plus ``margin``.
    """
    n, p = cone.n, B.p
    r_list = np.geomspace(1.0, 1e4, 25) if r_list is None else np.asarray(r_list, float)
    r = graded_grid(1e-4, r_list[-1], 1.01)
    q = _gradient_moment(H, cone)
    if version == "u":
        u, du, d2u = B.profile(r, 2)
        G = -np.abs(du) ** (p - 1) / r
        dG = ((p - 1) * np.abs(du) ** (p - 2) * d2u) / r + np.abs(du) ** (p - 1) / r**2
        f = u
        bound = max(0.0, -n - exponent * (n - p) / (p - 1))
    elif version == "v":
        _require_symmetric(H)
        f, dv, d2v = v_radial(B, r)
        G = dv ** (p - 1) / r
        dG = (p - 1) * dv ** (p - 2) * d2v / r - dv ** (p - 1) / r**2
        bound = n + exponent * p / (p - 1)
    else:
        raise ValueError("version must be 'u' or 'v'")
    # |W|_F^2 with W = G Id + G' (x - x0) (x) grad rho
    integrand = (n * G**2 + 2 * G * dG * r + dG**2 * r**2 * q) * f**exponent
    I = n * cumulative(r, integrand, n - 1)
    Ir = np.interp(np.log(r_list), np.log(r), I)
    top = r_list >= r_list[-1] / fit_decade
    slope = float(np.polyfit(np.log(r_list[top]), np.log(Ir[top]), 1)[0])
    rep = VerificationReport("caccioppoli")
    rep.add(version=version, exponent=exponent, fitted=slope, bound=bound, residual=slope - bound,
            tolerance=margin, **{"pass": slope <= bound + margin})
    rep.info.update(r=r_list, I=Ir)
    return rep
