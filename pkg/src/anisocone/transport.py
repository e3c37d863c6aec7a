"""Radial monotone transport between gauge-radial densities and the transport
proof of the sharp Sobolev inequality, link by link.

Densities are F = f^beta w and G = g^beta w with f, g functions of the gauge
rho(x) = H0(-x).  The monotone map is T(x) = psi(rho) x / rho where psi
matches the radial mass functions.  Since x . grad rho = rho, DT has the
eigenvalue psi' once and psi/rho with multiplicity n-1, w(T) = (psi/rho)^a w
and H0(-T) = psi.  Every cone integral of a radial quantity is then N mu times
a 1-D integral against r^(N-1) dr, N = n + a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .bubbles import BubbleParams, critical_exponent
from .cones import ConeSpec, NonSmoothBoundaryError, WeightSpec, sector_measure
from .norms import NormSpec
from .radial import IntegrabilityError, RadialProfile, radial_quadrature_with_error
from .report import VerificationReport

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


class NormalizationError(ValueError):
    """Total masses of the two densities differ."""


class _Radial:
    """Evaluator u(r), u'(r) for a bubble or a sampled profile, times a scale."""

    def __init__(self, prof, scale: float = 1.0):
        self.scale = scale
        if isinstance(prof, BubbleParams):
            self.bubble = prof
            self.r = None
            self.decay = (prof.N - prof.p) / (prof.p - 1)
            return
        self.bubble = None
        r, u = prof.r, prof.values
        if np.any(u < 0):
            raise ValueError("profiles must be nonnegative")
        pos = np.nonzero(u > 0)[0]
        if len(pos) < 4 or pos[0] != 0:
            raise ValueError("profile must be positive near the origin")
        last = pos[-1]
        if np.any(u[: last + 1] <= 0):
            raise ValueError("profile support must be an interval (0, R)")
        self.r = r[: last + 1]
        self.truncated = last < len(r) - 1
        self.decay = prof.decay
        self.spline = CubicSpline(np.log(self.r), np.log(u[: last + 1]))

    def __call__(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        if self.bubble is not None:
            u, du = self.bubble.profile(r, 1)
            u, du = self.scale * u, self.scale * du
            return (u, du) if order else u
        r0, rN = self.r[0], self.r[-1]
        t = np.log(np.clip(r, r0, rN))
        lu = self.spline(t)
        u = np.exp(lu)
        du = u * self.spline(t, 1) / r
        core = r < r0
        du[core] = 0.0
        far = r > rN
        if np.any(far):
            if self.truncated or self.decay is None:
                u[far], du[far] = 0.0, 0.0
            else:
                uN = math.exp(float(self.spline(math.log(rN))))
                u[far] = uN * (r[far] / rN) ** (-self.decay)
                du[far] = -self.decay * u[far] / r[far]
        u, du = self.scale * u, self.scale * du
        return (u, du) if order else u

    @property
    def tail_decay(self):
        """Power-law decay past the last node, None when the support is bounded."""
        if self.bubble is None and (self.truncated or self.decay is None):
            return None
        return self.decay


class RadialDensity:
    """Radial density u^beta on a grid, with exact-to-rounding mass functions.

    ``left[i]`` is the mass of {rho <= r_i} and ``right[i]`` that of
    {rho >= r_i}, both as integrals against r^(N-1) dr (the common factor
    N mu is left out).  Interval masses use 10-point Gauss-Legendre on the
    interpolated (or analytic) profile, so the mass function at any radius is
    consistent with the node values.
    """

    def __init__(self, prof, N: float, beta: float, r=None, scale: float = 1.0):
        self.u = _Radial(prof, scale)
        if r is None:
            if self.u.r is None:
                raise ValueError("a grid is required for analytic profiles")
            r = self.u.r
        self.r = np.asarray(r, dtype=float)
        self.N, self.beta = float(N), float(beta)
        if self.u.r is not None and self.u.truncated:
            self.r = self.r[self.r <= self.u.r[-1]]
        pieces = self._piece(np.concatenate([[0.0], self.r[:-1]]), self.r)
        self.left = np.cumsum(pieces)
        self.tail = self._tail_mass(self.r[-1])
        self.mass = float(self.left[-1] + self.tail)
        right = np.cumsum(pieces[:0:-1])[::-1]
        self.right = np.append(right, 0.0) + self.tail

    def density(self, r):
        return self.u(r) ** self.beta

    def _piece(self, a, b):
        """Integral of density * s^(N-1) over [a, b], elementwise."""
        a, b = np.asarray(a, float), np.asarray(b, float)
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[..., None] + half[..., None] * _GL_X
        return half * np.sum(_GL_W * self.density(s) * s ** (self.N - 1), axis=-1)

    def _tail_mass(self, R):
        d = self.u.tail_decay
        if d is None:
            return 0.0
        e = self.beta * d - self.N
        if e <= 0:
            raise IntegrabilityError("density tail is not integrable")
        return float(self.tail_from(np.array([R]))[0])

    def tail_from(self, x):
        """Mass of {rho >= x} for x at or past the last node.

        With r = x v^(-1/e), e the decay of density * r^N, the integrand in v
        is constant for a pure power law, so Gauss-Legendre on (0, 1) only has
        to resolve the lower-order corrections.
        """
        x = np.asarray(x, float)
        e = self.beta * self.u.tail_decay - self.N
        v = 0.5 * (_GL_X + 1.0)
        s = x[..., None] * v ** (-1.0 / e)
        vals = self.density(s) * s**self.N / (e * v)
        return 0.5 * np.sum(_GL_W * vals, axis=-1)
    def mass_left(self, x):
        """Mass of {rho <= x} for arbitrary radii inside the grid range."""
        x = np.asarray(x, float)
        j = np.searchsorted(self.r, x) - 1
        base = np.where(j >= 0, self.left[np.maximum(j, 0)], 0.0)
        start = np.where(j >= 0, self.r[np.maximum(j, 0)], 0.0)
        return base + self._piece(start, x)

    def mass_right(self, x):
        x = np.asarray(x, float)
        j = np.minimum(np.searchsorted(self.r, x), len(self.r) - 1)
        out = self.right[j] + self._piece(x, self.r[j])
        far = x > self.r[-1]
        if np.any(far):
            out = np.where(far, self.tail_from(np.where(far, x, self.r[-1])), out)
        return out

    def cdf(self, x):
        return self.mass_left(x) / self.mass


@dataclass
class TransportMap:
    """psi on the grid of the source density, with psi' from the Jacobian equation."""

    r: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    pushforward_error: float
    source: RadialDensity
    target: RadialDensity

    def __call__(self, x):
        """psi at arbitrary radii (solved, not interpolated)."""
        psi = _solve(self.source, self.target, np.atleast_1d(np.asarray(x, float)))
        return psi

    def derivative(self, x, psi=None):
        x = np.atleast_1d(np.asarray(x, float))
        psi = self(x) if psi is None else psi
        S, T = self.source, self.target
        return S.density(x) * x ** (S.N - 1) / (T.density(psi) * psi ** (T.N - 1))


def _invert(D: RadialDensity, a, from_left):
    """Radii x with mass_left(x) = a (or mass_right(x) = a), by safeguarded Newton."""
    r = D.r
    if from_left:
        j = np.clip(np.searchsorted(D.left, a), 0, len(r) - 1)
        lo = np.where(j > 0, r[np.maximum(j - 1, 0)], 0.0)
        hi = r[j]
        mlo = np.where(j > 0, D.left[np.maximum(j - 1, 0)], 0.0)
        mhi = D.left[j]
    else:
        beyond = a < D.tail
        if np.any(beyond):
            out = np.empty_like(a)
            out[beyond] = _invert_tail(D, a[beyond])
            if np.any(~beyond):
                out[~beyond] = _invert(D, a[~beyond], False)
            return out
        # right is decreasing; find the interval [r_{j-1}, r_j] with right_j <= a <= right_{j-1}
        k = np.searchsorted(-D.right, -a)
        j = np.clip(k, 1, len(r) - 1)
        lo, hi = r[j - 1], r[j]
        mlo, mhi = D.right[j - 1], D.right[j]
    frac = np.clip((a - mlo) / np.where(mhi != mlo, mhi - mlo, 1.0), 0.0, 1.0)
    x = lo + frac * (hi - lo)
    for _ in range(30):
        m = D.mass_left(x) if from_left else D.mass_right(x)
        dm = D.density(x) * x ** (D.N - 1)
        f = (m - a) if from_left else (a - m)
        step = np.where(dm > 0, f / np.where(dm > 0, dm, 1.0), 0.0)
        xn = np.clip(x - step, lo, hi)
        if np.all(np.abs(xn - x) <= 4e-16 * np.abs(x)):
            x = xn
            break
        x = xn
    return x


def _invert_tail(D: RadialDensity, a):
    """Radii past the last node with mass_right(x) = a (Newton from the power-law guess)."""
    e = D.beta * D.u.tail_decay - D.N
    x = D.r[-1] * (D.tail / a) ** (1 / e)
    for _ in range(30):
        m = D.tail_from(x)
        xn = np.maximum(x - (a - m) / (D.density(x) * x ** (D.N - 1)), D.r[-1])
        if np.all(np.abs(xn - x) <= 4e-16 * x):
            return xn
        x = xn
    return x


def _solve(S: RadialDensity, T: RadialDensity, x):
    mL = S.mass_left(x)
    inside = x <= S.r[-1]
    mR = np.where(inside, S.mass_right(np.minimum(x, S.r[-1])), S.mass - mL)
    use_left = mL <= 0.5 * S.mass
    out = np.empty_like(x)
    if np.any(use_left):
        out[use_left] = _invert(T, mL[use_left], True)
    if np.any(~use_left):
        out[~use_left] = _invert(T, mR[~use_left], False)
    return out


def radial_transport(F: RadialDensity, G: RadialDensity, rel_mass_tol: float = 1e-10) -> TransportMap:
    """Monotone radial map psi with mass_G(psi(r)) = mass_F(r).

    Small masses are matched from the side where they are small (left mass
    below the median, right mass above), so psi keeps full relative accuracy
    in both tails.  Raises NormalizationError when the total masses differ by
    more than ``rel_mass_tol``.
    """
    if abs(F.mass - G.mass) > rel_mass_tol * max(F.mass, G.mass):
        raise NormalizationError(f"mass mismatch {F.mass:.17g} vs {G.mass:.17g}; normalize first")
    r = F.r
    keep = F.density(r) > 0
    r = r[keep]
    psi = _solve(F, G, r)
    psi = np.maximum.accumulate(psi)
    dpsi = F.density(r) * r ** (F.N - 1) / (G.density(psi) * psi ** (G.N - 1))
    err = float(np.max(np.abs(G.cdf(psi) - F.cdf(r))))
    return TransportMap(r, psi, dpsi, err, F, G)


# ---- inequality chain ------------------------------------------------------------

def gamma_exponent(n, p, a=0.0) -> float:
    """gamma = p(N-1)/(N-p), the exponent with (beta - gamma)/beta = 1/N."""
    N = n + a
    return p * (N - 1) / (N - p)


def _integrals(f, g, N, p, beta, gamma, rf, rg):
    """All radial integrals of the chain on the grids rf (for f) and rg (for g)."""
    sp = p / (p - 1)
    F = RadialDensity(f, N, beta, rf)
    G0 = RadialDensity(g, N, beta, rg)
    scale = (F.mass / G0.mass) ** (1 / beta)
    G = RadialDensity(g, N, beta, rg, scale=G0.u.scale * scale)
    T = radial_transport(F, G)
    r, psi, dpsi = T.r, T.psi, T.dpsi
    fu, df = F.u(r, 1)
    gp = G.u(psi)
    gr = G.u(G.r)
    jac = dpsi * (psi / r) ** (N - 1)

    def quad(x, y, decay):
        return radial_quadrature_with_error(RadialProfile(x, y, decay), N - 1)

    dF = F.u.tail_decay
    dG = G.u.tail_decay
    with np.errstate(divide="ignore", invalid="ignore"):
        pull = np.where(fu > 0, gp ** (gamma - beta) * fu**beta, 0.0)
        fgm1 = np.where(fu > 0, fu ** (gamma - 1), 0.0)
    out = {
        "g_gamma": quad(G.r, gr**gamma, None if dG is None else gamma * dG),
        "pullback": quad(r, pull, None),
        "jacobian": quad(r, jac ** (1 / N) * fu**gamma, None),
        "divergence": quad(r, (dpsi + (N - 1) * psi / r) * fu**gamma / N, None),
        "by_parts": quad(r, -gamma / N * psi * fgm1 * df, None),
        "dual": quad(r, gamma / N * psi * fgm1 * np.abs(df), None),
        "energy": quad(r, np.abs(df) ** p, None if dF is None else p * (dF + 1)),
        "moment_psi": quad(r, psi**sp * fu**beta, None),
        "moment_g": quad(G.r, G.r**sp * gr**beta, None if dG is None else beta * dG - sp),
    }
    e, ee = out["energy"]
    mp, emp = out["moment_psi"]
    mg, emg = out["moment_g"]
    hold = gamma / N * e ** (1 / p) * mp ** (1 / sp)
    out["holder"] = (hold, hold * (ee / e / p + emp / mp / sp))
    rhs = gamma / N * e ** (1 / p) * mg ** (1 / sp)
    out["sobolev_rhs"] = (rhs, rhs * (ee / e / p + emg / mg / sp))
    pointwise = dict(lhs=jac ** (1 / N), rhs=(dpsi + (N - 1) * psi / r) / N)
    return out, pointwise, T, scale


LINKS = [
    # name, lhs key, rhs key, relation
    ("transport_change_of_variables", "g_gamma", "pullback", "eq"),
    ("jacobian_equation", "pullback", "jacobian", "eq"),
    ("amgm_integrated", "jacobian", "divergence", "le"),
    ("integration_by_parts", "divergence", "by_parts", "eq"),
    ("duality", "by_parts", "dual", "le"),
    ("holder", "dual", "holder", "le"),
    ("moment_transport", "moment_psi", "moment_g", "eq"),
    ("sobolev_transport_inequality", "g_gamma", "sobolev_rhs", "le"),
]


def check_chain(f, g, H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None, p: float | None = None,
                r=None, mu: float | None = None, expect_equality: bool = False, tol_scale: float = 1.0,
                samples: int = 200, seed: int = 0) -> VerificationReport:
    """Evaluate every link of the transport chain for the pair (f, g).

    ``f`` and ``g`` are BubbleParams or RadialProfile objects, radial in the
    gauge about the vertex; ``g`` is rescaled to the beta-mass of ``f``.
    Each link is computed on ``r`` and on every other node of ``r``; the
    tolerance of a link is the sum of both sides' quadrature error bounds and
    coarse/fine discrepancies, times ``tol_scale``.  Inequality links pass when
    lhs <= rhs + tol, and with ``expect_equality`` also need |lhs - rhs| <= tol.
    Sample-based rows check the duality step, the weight step, the radial
    determinant formula and the sign of T . nu with the actual norm and cone.
    """
    w = w or WeightSpec.unit()
    w.check_cone(cone)
    n, a = cone.n, w.degree
    N = n + a
    if p is None:
        p = f.p if isinstance(f, BubbleParams) else g.p
    if not (1 < p < n):
        raise ValueError("require 1<p<n")
    beta = critical_exponent(n, p, a)
    gamma = gamma_exponent(n, p, a)
    sp = p / (p - 1)
    if r is None:
        r = f.r if isinstance(f, RadialProfile) else np.exp(np.linspace(math.log(1e-3), math.log(1e3), 1381))
    r = np.asarray(r, float)
    if (len(r) - 1) % 4:
        raise ValueError("grid needs a multiple of 4 intervals")

    def grid_for(prof, rr, widen=False):
        if isinstance(prof, RadialProfile):
            return prof.r
        if not widen:
            return rr
        # analytic targets get room for dilations of up to a factor 100 either way
        t = np.log(rr)
        m = 4 * math.ceil(math.log(100.0) / (t[1] - t[0]) / 4)
        return np.exp(np.linspace(t[0] - m * (t[1] - t[0]), t[-1] + m * (t[1] - t[0]), len(t) + 2 * m))

    fine, pw, T, gscale = _integrals(f, g, N, p, beta, gamma, grid_for(f, r), grid_for(g, r, True))
    fcoarse = f if isinstance(f, BubbleParams) else RadialProfile(f.r[::2], f.values[::2], f.decay)
    gcoarse = g if isinstance(g, BubbleParams) else RadialProfile(g.r[::2], g.values[::2], g.decay)
    coarse, _, _, _ = _integrals(fcoarse, gcoarse, N, p, beta, gamma, grid_for(fcoarse, r[::2]),
                                 grid_for(gcoarse, r[::2], True))
    _, dfr = T.source.u(T.r, 1)
    if np.any(dfr > 0) and not H.symmetric:
        raise ValueError("the radial duality step needs a nonincreasing f for asymmetric norms")
    mu = sector_measure(cone, H, w, seed=seed).value if mu is None else mu
    M = N * mu

    rep = VerificationReport("transport_chain")
    for name, lk, rk, rel in LINKS:
        lhs, el = fine[lk]
        rhs, er = fine[rk]
        tol = tol_scale * (el + er + abs(lhs - coarse[lk][0]) + abs(rhs - coarse[rk][0])) \
            + 1e-13 * max(abs(lhs), abs(rhs))
        slack = rhs - lhs
        if rel == "eq" or expect_equality:
            ok = abs(slack) <= tol
        else:
            ok = slack >= -tol
        rep.add(link=name, relation=rel, lhs=M * lhs, rhs=M * rhs, slack=M * slack, tolerance=M * tol,
                **{"pass": bool(ok)})
    # pointwise AM-GM on the grid
    lhs, rhs = pw["lhs"], pw["rhs"]
    gap = (rhs - lhs) / rhs
    viol = float(np.max(-gap))
    tol_pw = tol_scale * 1e-9 if expect_equality else 1e-12
    ok = viol <= 1e-12 and (not expect_equality or float(np.max(np.abs(gap))) <= tol_pw)
    rep.add(link="amgm_pointwise", relation="le", lhs=float(np.max(lhs / rhs)), rhs=1.0,
            slack=float(np.min(gap)), tolerance=tol_pw if expect_equality else 1e-12, **{"pass": bool(ok)})
    # exponent identity gamma - 1 - beta/p' = 0
    ident = gamma - 1 - beta / sp
    rep.add(link="gamma_identity", relation="eq", lhs=gamma - 1, rhs=beta / sp, slack=-ident,
            tolerance=1e-12, **{"pass": abs(ident) <= 1e-12})
    rep.add(link="pushforward", relation="eq", lhs=T.pushforward_error, rhs=0.0, slack=-T.pushforward_error,
            tolerance=1e-8, **{"pass": T.pushforward_error <= 1e-8})
    for row in _sample_rows(T, H, cone, w, expect_equality, samples, seed):
        rep.add(**row)
    rep.info.update(n=n, p=p, a=a, beta=beta, gamma=gamma, g_scale=gscale, mu=mu)
    return rep


def _sample_rows(T: TransportMap, H, cone, w, expect_equality, count, seed):
    """Vector checks at sampled points of the cone."""
    rng = np.random.default_rng(seed)
    rows = []
    lo, hi = T.r[0] * 10, T.r[-1] / 10
    x = cone.sample_interior(count, rng, r_range=(0.2, 5.0))
    rho = H.dual(-x)
    m = (rho > lo) & (rho < hi)
    x, rho = x[m], rho[m]
    psi = T(rho)
    Tx = (psi / rho)[:, None] * x
    _, df = T.source.u(rho, 1)
    grad_f = df[:, None] * (-H.dual_grad(-x))
    lhs = -np.sum(Tx * grad_f, axis=1)
    rhs = H.dual(-Tx) * H.eval(grad_f)
    scale = np.maximum(np.abs(rhs), 1e-300)
    gap = (rhs - lhs) / scale
    ok = np.all(gap >= -1e-12) and (not expect_equality or np.all(np.abs(gap) <= 1e-10))
    rows.append(dict(link="duality_samples", relation="le", lhs=float(np.max(lhs / scale)), rhs=1.0,
                     slack=float(np.min(gap)), tolerance=1e-12, **{"pass": bool(ok)}))
    if w.degree > 0:
        rep = check_weight_concavity_step(w, x, Tx)
        v = rep.rows[0]
        rows.append(dict(link="weight_concavity", relation="le", lhs=v["max_lhs_ratio"], rhs=1.0,
                         slack=v["min_slack"], tolerance=1e-12, **{"pass": rep.passed}))
    # determinant formula against central differences of the vector map
    k = min(20, len(x))
    det_err = 0.0
    for xi, ri in zip(x[:k], rho[:k]):
        h = 1e-5 * np.linalg.norm(xi)
        pts = xi + h * np.concatenate([np.eye(cone.n), -np.eye(cone.n)])
        rp = H.dual(-pts)
        Tp = (T(rp) / rp)[:, None] * pts
        DT = (Tp[: cone.n] - Tp[cone.n:]).T / (2 * h)
        ps = T(np.array([ri]))
        dps = T.derivative(np.array([ri]), ps)
        radial = float(dps[0] * (ps[0] / ri) ** (cone.n - 1))
        det_err = max(det_err, abs(np.linalg.det(DT) - radial) / radial)
    rows.append(dict(link="det_formula", relation="eq", lhs=det_err, rhs=0.0, slack=-det_err,
                     tolerance=1e-6, **{"pass": det_err <= 1e-6}))
    try:
        xb = cone.sample_boundary(count, rng, r_range=(0.2, 5.0))
    except NonSmoothBoundaryError:
        return rows
    rb = H.dual(-xb)
    Tb = (T(rb) / rb)[:, None] * xb
    nu = np.array([cone.normal_at(xi) for xi in xb])
    tn = np.sum(Tb * nu, axis=1) / np.linalg.norm(Tb, axis=1)
    worst = float(np.max(tn))
    rows.append(dict(link="boundary_sign", relation="le", lhs=worst, rhs=0.0, slack=-worst,
                     tolerance=1e-12, **{"pass": worst <= 1e-12}))
    return rows


def check_weight_concavity_step(w: WeightSpec, x, Tx) -> VerificationReport:
    """a (w(T)/w(x))^(1/a) <= grad w(x) . T / w(x) at each sample (x, T(x))."""
    x, Tx = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(Tx, float))
    a = w.degree
    if w.kind != "monomial" or a <= 0:
        raise ValueError("the weight step needs a monomial weight of positive degree")
    m = len(w.exponents)
    if np.any(x[:, :m] <= 0) or np.any(Tx[:, :m] < 0):
        raise ValueError("samples and targets must lie in the orthant of the weight")
    wx = w.eval(x)
    lhs = a * (w.eval(Tx) / wx) ** (1 / a)
    rhs = np.sum(w.grad(x) * Tx, axis=1) / wx
    slack = rhs - lhs
    scale = np.maximum(np.abs(rhs), 1e-300)
    rep = VerificationReport("weight_concavity")
    bad = int(np.sum(slack < -1e-12 * scale))
    rep.add(samples=len(x), violations=bad, max_lhs_ratio=float(np.max(lhs / scale)),
            min_slack=float(np.min(slack / scale)), **{"pass": bad == 0})
    return rep
