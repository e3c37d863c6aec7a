"""Minimization of the Sobolev quotient over discretized gauge-radial profiles.

A profile is piecewise linear in r on a graded grid, constant on (0, r_0) and
continued past r_N by the power law u_N (r / r_N)^(-s), s = (N-p)/(p-1), the
only decay compatible with a finite-energy extremal.  All integrals of the
discrete profile are then exact except the reaction integral, which uses the
trapezoid rule in r.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import least_squares

from .bubbles import BubbleParams, critical_exponent
from .cones import ConeSpec, WeightSpec, sector_measure
from .norms import NormSpec
from .radial import RadialProfile, graded_grid


class NonConvergenceError(RuntimeError):
    def __init__(self, message, profile=None, trace=None):
        super().__init__(message)
        self.profile = profile
        self.trace = trace


@dataclass
class _Discretization:
    r: np.ndarray
    N: float
    p: float
    beta: float
    coef: float          # (N mu)^(1 - p/beta)

    def __post_init__(self):
        r, N = self.r, self.N
        self.h = np.diff(r)
        self.m = (r[1:] ** N - r[:-1] ** N) / N       # exact int r^(N-1) over each interval
        rn = r ** (N - 1)
        om = np.zeros_like(r)
        om[:-1] += 0.5 * self.h * rn[:-1]
        om[1:] += 0.5 * self.h * rn[1:]
        om[0] += r[0] ** N / N                          # constant core
        self.omega = om
        self.s = (N - self.p) / (self.p - 1)
        s, p, beta = self.s, self.p, self.beta
        if (s + 1) * p <= N or s * beta <= N:
            raise ValueError("tail integrals diverge for these exponents")
        self.tailA = r[-1] ** (N - p) * s**p / ((s + 1) * p - N)
        self.tailB = r[-1] ** N / (s * beta - N)

    def parts(self, u):
        g = np.diff(u) / self.h
        A = np.sum(np.abs(g) ** self.p * self.m) + self.tailA * abs(u[-1]) ** self.p
        f = np.abs(u) ** self.beta
        Bi = np.sum(self.omega * f) + self.tailB * f[-1]
        return A, Bi, g

    def J(self, u):
        A, Bi, _ = self.parts(u)
        return self.coef * A / Bi ** (self.p / self.beta)

    def J_and_grad(self, u):
        p, beta = self.p, self.beta
        A, Bi, g = self.parts(u)
        J = self.coef * A / Bi ** (p / beta)
        q = p * np.abs(g) ** (p - 1) * np.sign(g) * self.m / self.h
        dA = np.zeros_like(u)
        dA[1:] += q
        dA[:-1] -= q
        dA[-1] += p * self.tailA * abs(u[-1]) ** (p - 1) * np.sign(u[-1])
        dB = beta * np.abs(u) ** (beta - 1) * np.sign(u) * self.omega
        dB[-1] += beta * self.tailB * abs(u[-1]) ** (beta - 1) * np.sign(u[-1])
        return J, J * (dA / A - (p / beta) * dB / Bi)

    def norm_const(self, u):
        """(int |u|^beta r^(N-1) dr)^(1/beta) without the sector factor."""
        return self.parts(u)[1] ** (1 / self.beta)

    def metric(self, u=None):
        """Banded SPD metric used as the descent preconditioner.

        Without ``u``: weighted H1 metric in t = log r with weight r^(N-2),
        which is the right scaling for p = 2.  With ``u``: the exact second
        variation of the energy term plus the reaction mass term taken with a
        positive sign, both at the current iterate (clipped away from the
        degenerate or singular values of |u'|^(p-2) and |u|^(beta-2)).
        """
        r, N = self.r, self.N
        if u is not None:
            p, beta = self.p, self.beta
            A, Bi, g = self.parts(u)
            ag = np.abs(g)
            k = p * (p - 1) * np.maximum(ag, 1e-8 * ag.max()) ** (p - 2) * self.m / self.h**2
            au = np.maximum(np.abs(u), 1e-12 * np.abs(u).max())
            mass = beta * (beta - 1) * au ** (beta - 2) * self.omega * (A / Bi)
            mass[-1] += p * (p - 1) * self.tailA * au[-1] ** (p - 2)
        else:
            dt = np.diff(np.log(r))
            wmid = np.sqrt(r[1:] * r[:-1]) ** (N - 2)
            k = wmid / dt
            mass = np.zeros_like(r)
            mass[:-1] += 0.5 * dt * wmid
            mass[1:] += 0.5 * dt * wmid
        diag = mass.copy()
        diag[:-1] += k
        diag[1:] += k
        ab = np.zeros((3, len(r)))
        ab[0, 1:] = -k
        ab[1] = diag
        ab[2, :-1] = -k
        return ab


def _setup(r, H, cone, w, p, mu):
    w = w or WeightSpec.unit()
    N = cone.n + w.degree
    beta = critical_exponent(cone.n, p, w.degree)
    if mu is None:
        mu = sector_measure(cone, H, w).value
    return _Discretization(np.asarray(r, float), N, p, beta, (N * mu) ** (1 - p / beta))


def discrete_quotient(prof: RadialProfile, H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None,
                      p: float = 2.0, mu: float | None = None) -> float:
    if not np.any(prof.values):
        raise ValueError("zero profile")
    return float(_setup(prof.r, H, cone, w, p, mu).J(prof.values))


def gradient(prof: RadialProfile, H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None,
             p: float = 2.0, mu: float | None = None) -> np.ndarray:
    """Derivative of the discrete quotient with respect to the nodal values."""
    return _setup(prof.r, H, cone, w, p, mu).J_and_grad(prof.values)[1]


@dataclass
class SearchOptions:
    max_iter: int = 100_000
    rel_tol: float = 1e-10
    window: int = 50
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    precondition: bool = True
    time_limit: float = math.inf


@dataclass
class SearchTrace:
    J: list = field(default_factory=list)
    step: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    converged: bool = False
    seconds: float = 0.0

    def rows(self):
        return [dict(iteration=i, J=j, step=s, grad_norm=g)
                for i, (j, s, g) in enumerate(zip(self.J, self.step, self.grad_norm))]


def minimize(init: RadialProfile, H: NormSpec, cone: ConeSpec, w: WeightSpec | None = None,
             p: float = 2.0, opts: SearchOptions | None = None, mu: float | None = None,
             raise_on_cap: bool = False):
    """Projected (preconditioned) gradient descent with Armijo backtracking.

    Each iterate is rescaled so that int |u|^beta w = 1; the quotient is
    scale invariant, so the projection leaves J unchanged.  Returns the final
    profile and the trace; ``trace.converged`` is False when the iteration cap
    or the time limit is reached first.
    """
    opts = opts or SearchOptions()
    w = w or WeightSpec.unit()
    if np.any(init.values < 0) or not np.any(init.values > 0):
        raise ValueError("initial profile must be nonnegative and nonzero")
    mu = sector_measure(cone, H, w).value if mu is None else mu
    D = _setup(init.r, H, cone, w, p, mu)
    N = D.N
    scale = (N * mu) ** (1 / D.beta)

    def project(u):
        return u / (D.norm_const(u) * scale)

    adaptive = opts.precondition and D.p != 2
    ab = D.metric() if opts.precondition else None
    u = project(np.asarray(init.values, float))
    J, g = D.J_and_grad(u)
    trace = SearchTrace()
    step = opts.step0
    t0 = time.perf_counter()
    for it in range(opts.max_iter):
        if adaptive:
            ab = D.metric(u)
        d = solve_banded((1, 1), ab, g) if ab is not None else g
        # keep the direction free of the scaling mode so the step size is meaningful
        slope = float(g @ d)
        if slope <= 0:
            trace.J.append(J), trace.step.append(0.0), trace.grad_norm.append(float(np.linalg.norm(g)))
            trace.converged = True
            break
        dn = d / max(np.abs(d).max() / max(np.abs(u).max(), 1e-300), 1e-300)
        slope = float(g @ dn)
        a = min(step / opts.shrink, opts.step0)
        while True:
            un = u - a * dn
            Jn = D.J(un)
            if Jn <= J - opts.armijo * a * slope:
                break
            a *= opts.shrink
            if a < 1e-20:
                un, Jn = u, J
                break
        step = a
        u = project(un)
        J, g = D.J_and_grad(u)
        trace.J.append(J)
        trace.step.append(a)
        trace.grad_norm.append(float(np.linalg.norm(g)))
        k = opts.window
        if len(trace.J) > k and (trace.J[-k - 1] - J) <= opts.rel_tol * abs(J):
            trace.converged = True
            break
        if time.perf_counter() - t0 > opts.time_limit:
            break
    trace.seconds = time.perf_counter() - t0
    prof = RadialProfile(init.r, u, decay=D.s)
    if not trace.converged and raise_on_cap:
        raise NonConvergenceError("iteration cap reached", prof, trace)
    return prof, trace


@dataclass
class BubbleFit:
    amplitude: float
    lam: float
    linf_rel: float


def fit_bubble(prof: RadialProfile, n: int, p: float, a: float = 0.0, c: float | None = None,
               r_range=(0.1, 10.0)) -> BubbleFit:
    """Least-squares fit of amplitude * U_lambda to log u on r_range; reports the L-inf relative error."""
    m = (prof.r >= r_range[0]) & (prof.r <= r_range[1])
    r, u = prof.r[m], prof.values[m]
    if np.any(u <= 0):
        return BubbleFit(math.nan, math.nan, math.inf)
    base = BubbleParams(n, p, a, 1.0, None, c)

    def model(th):
        return th[0] + np.log(base.with_(lam=math.exp(th[1])).profile(r))

    res = least_squares(lambda th: model(th) - np.log(u), x0=[0.0, 0.0])
    fit = np.exp(model(res.x))
    return BubbleFit(math.exp(res.x[0]), math.exp(res.x[1]), float(np.max(np.abs(fit - u) / u)))


def gaussian_profile(r=None, width: float = 1.0) -> RadialProfile:
    r = graded_grid(1e-3, 1e3, 1.02) if r is None else r
    return RadialProfile(r, np.exp(-(r / width) ** 2))
