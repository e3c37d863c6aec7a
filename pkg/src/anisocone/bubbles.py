"""Extremal bubbles, their radial profiles, calibration, v-transform and decay checks.

The bubble centered at x0 is a function of the gauge rho(x) = H0(x0 - x).
For asymmetric H this is the orientation for which H(grad U) = |phi'(rho)|
and a(grad U) = |phi'|^(p-1) (x0 - x) / rho hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import ConeSpec, WeightSpec
from .norms import DomainError, NormSpec, as_real
from .radial import graded_grid
from .report import VerificationReport


class CalibrationError(RuntimeError):
    pass


def talenti_constant(N: float, p: float) -> float:
    """N^(1/p) ((N-p)/(p-1))^((p-1)/p)."""
    return N ** (1 / p) * ((N - p) / (p - 1)) ** ((p - 1) / p)


def critical_exponent(n: float, p: float, a: float = 0.0) -> float:
    """beta = p(n+a)/(n+a-p); equals p* when a = 0."""
    N = n + a
    return p * N / (N - p)


@dataclass(frozen=True, eq=False)
class BubbleParams:
    n: int
    p: float
    a: float = 0.0
    lam: float = 1.0
    x0: np.ndarray = field(default=None)
    c: float = None

    def __post_init__(self):
        if not (1 < self.p < self.n):
            raise ValueError("require 1<p<n")
        if self.a < 0 or self.lam <= 0:
            raise ValueError("need a >= 0 and lam > 0")
        x0 = np.zeros(self.n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.shape != (self.n,):
            raise ValueError("x0 has the wrong dimension")
        object.__setattr__(self, "x0", x0)
        if self.c is None:
            if self.a != 0:
                raise ValueError("weighted bubbles need an explicit (calibrated) constant")
            object.__setattr__(self, "c", talenti_constant(self.n, self.p))

    @classmethod
    def for_cone(cls, cone: ConeSpec, p, a=0.0, lam=1.0, x0=None, c=None):
        """Bubble whose center obeys the placement rule of the cone."""
        x0 = np.zeros(cone.n) if x0 is None else np.asarray(x0, dtype=float)
        return cls(cone.n, p, a, lam, cone.project_vertex(x0), c)

    @property
    def N(self) -> float:
        return self.n + self.a

    @property
    def beta(self) -> float:
        return critical_exponent(self.n, self.p, self.a)

    @property
    def k(self) -> float:
        return (self.N - self.p) / self.p

    @property
    def s(self) -> float:
        """Conjugate exponent p' = p/(p-1)."""
        return self.p / (self.p - 1)

    def with_(self, **kw) -> "BubbleParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "a": self.a, "lam": self.lam,
                "x0": self.x0.tolist(), "c": self.c}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), float(d["p"]), float(d.get("a", 0.0)), float(d.get("lam", 1.0)),
                   d.get("x0"), d.get("c"))

    # ---- radial profile -------------------------------------------------
    def profile(self, r, order: int = 0):
        """phi(r), and optionally phi', phi'' (order 1 or 2), as a tuple when order > 0."""
        r = as_real(r)
        k, s, lam = self.k, self.s, self.lam
        A = lam ** (1 / (self.p - 1)) * self.c
        D = lam**s + r**s
        phi = (A / D) ** k
        if order == 0:
            return phi
        d1 = -k * s * r ** (s - 1) * phi / D
        if order == 1:
            return phi, d1
        with np.errstate(divide="ignore", invalid="ignore"):
            d2 = -k * s * phi / D * ((s - 1) * r ** (s - 2) - (k + 1) * s * r ** (2 * s - 2) / D)
        return phi, d1, d2

    def v_coefficients(self) -> tuple[float, float]:
        """(c1, c2) with v = c1 + c2 rho^p' for v = U^(-p/(N-p))."""
        return self.lam / self.c, self.lam ** (-1 / (self.p - 1)) / self.c


def gauge(H: NormSpec, x0, x) -> np.ndarray:
    """rho(x) = H0(x0 - x)."""
    return H.dual(np.asarray(x0, dtype=float) - as_real(x))


def gauge_grad(H: NormSpec, x0, x) -> np.ndarray:
    return -H.dual_grad(np.asarray(x0, dtype=float) - as_real(x))


def bubble_eval(B: BubbleParams, H: NormSpec, x) -> np.ndarray:
    return B.profile(gauge(H, B.x0, x))


def bubble_grad(B: BubbleParams, H: NormSpec, x) -> np.ndarray:
    x = as_real(x)
    rho = gauge(H, B.x0, x)
    if np.any(rho == 0):
        raise DomainError("bubble gradient is undefined at the center")
    _, d1 = B.profile(rho, 1)
    return d1[..., None] * gauge_grad(H, B.x0, x)


def v_transform(B: BubbleParams, H: NormSpec, x) -> np.ndarray:
    """U^(-p/(N-p)); for a bubble this is c1 + c2 rho^p'."""
    return bubble_eval(B, H, x) ** (-1.0 / B.k)


def v_closed_form(B: BubbleParams, H: NormSpec, x) -> np.ndarray:
    c1, c2 = B.v_coefficients()
    return c1 + c2 * gauge(H, B.x0, x) ** B.s


def radial_operator_terms(n, p, a, r):
    """Operator and reaction parts of the weighted radial residual at c = 1.

    For U = phi(rho) and a homogeneous weight of degree a, the weighted
    Euler-Lagrange residual div(w a(grad U)) + w U^(beta-1) equals
    w [-(r^(N-1) |phi'|^(p-1))' / r^(N-1) + phi^(beta-1)].  Returns the two
    bracketed terms evaluated on the unit-constant profile.
    """
    N = n + a
    B = BubbleParams(n, p, a, 1.0, None, 1.0)
    k, sp = B.k, B.s
    D = 1.0 + r**sp
    phi = D ** (-k)
    # r^(N-1) |phi'|^(p-1) = C r^N D^(-e) since (p'-1)(p-1) = 1; e p' = N
    # makes its log-derivative collapse to N / D without cancellation
    e = (k + 1) * (p - 1)
    C = (k * sp) ** (p - 1)
    op = -C * N * D ** (-e - 1)
    react = phi ** (B.beta - 1)
    return op, react


def calibrate_constant(n, p, a=0.0, H: NormSpec | None = None, w: WeightSpec | None = None,
                       cone: ConeSpec | None = None, tol: float = 1e-8, r=None) -> float:
    """Constant c for which the weighted bubble solves its Euler-Lagrange equation.

    The residual factorizes as c^(k(p-1)) [A(r) + c^p B(r)], so the least-squares
    value of c^p (relative weighting) has a closed form.  Raises CalibrationError
    when the normalized residual at the optimum exceeds ``tol``.
    """
    if not (1 < p < n):
        raise ValueError("require 1<p<n")
    if a != 0:
        if w is None or w.kind != "monomial" or abs(w.degree - a) > 1e-12:
            raise ValueError("a > 0 requires a monomial weight of matching degree")
        if cone is not None:
            w.check_cone(cone)
    r = graded_grid(1e-3, 1e3, 1.05) if r is None else np.asarray(r, dtype=float)
    A, Bv = radial_operator_terms(n, p, a, r)
    q = A / Bv
    cp = -np.mean(q)
    if cp <= 0:
        raise CalibrationError("no positive constant balances the radial equation")
    resid = np.max(np.abs(q + cp)) / cp
    if resid > tol:
        raise CalibrationError(f"calibration residual {resid:.3g} exceeds {tol:g}")
    return float(cp ** (1 / p))


def check_decay(B: BubbleParams, H: NormSpec, r_range=(1e2, 1e4), count: int = 41,
                directions: int = 8, tol: float = 0.01, seed: int = 0) -> VerificationReport:
    """Fit power-law decay of U and |grad U| along rays and bound U by its decay kernel."""
    rep = VerificationReport("decay")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(directions, B.n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = np.geomspace(*r_range, count)
    sU = -(B.N - B.p) / (B.p - 1)
    sG = -(B.N - 1) / (B.p - 1)
    for i, di in enumerate(d):
        x = B.x0 + r[:, None] * di
        U = bubble_eval(B, H, x)
        G = np.linalg.norm(bubble_grad(B, H, x), axis=1)
        slopeU = np.polyfit(np.log(r), np.log(U), 1)[0]
        slopeG = np.polyfit(np.log(r), np.log(G), 1)[0]
        rep.add(quantity="u", direction=i, fitted=slopeU, expected=sU,
                residual=abs(slopeU - sU), tolerance=tol, **{"pass": abs(slopeU - sU) <= tol})
        rep.add(quantity="grad_u", direction=i, fitted=slopeG, expected=sG,
                residual=abs(slopeG - sG), tolerance=tol, **{"pass": abs(slopeG - sG) <= tol})
    # two-sided bound C0 <= U (1 + |x|^{-sU}) <= C1 on a wide radial sweep
    rr = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, 200)])
    x = B.x0 + rr[:, None, None] * d[None]
    prod = bubble_eval(B, H, x.reshape(-1, B.n)) * (1 + np.linalg.norm(x, axis=-1).ravel() ** (-sU))
    C0, C1 = float(prod.min()), float(prod.max())
    rep.add(quantity="two_sided_bound", C0=C0, C1=C1, residual=C1 / C0, tolerance=math.inf,
            **{"pass": C0 > 0 and math.isfinite(C1)})
    rep.info.update(C0=C0, C1=C1, slope_u=sU, slope_grad=sG)
    return rep
