"""Convex cones R^k x C, homogeneous weights, sector measures and cone quadrature."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import betainc, gammaln, roots_jacobi

from .norms import NormSpec

KINDS = ("full_space", "half_space", "orthant", "circular", "product")


class NonSmoothBoundaryError(ValueError):
    """Boundary point lies on an edge or at the vertex."""


class SectorMeasureError(RuntimeError):
    def __init__(self, message: str, rel_stderr: float):
        super().__init__(message)
        self.rel_stderr = rel_stderr


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True, eq=False)
class ConeSpec:
    kind: str
    n: int
    normal: np.ndarray | None = None        # half_space: inward unit normal
    m: int = 0                              # orthant: first m coordinates >= 0
    axis: np.ndarray | None = None          # circular
    half_aperture: float = 0.0              # circular
    k: int = 0                              # product: R^k factor
    tail: "ConeSpec | None" = None          # product: cone over R^(n-k)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind == "half_space":
            v = np.asarray(self.normal, dtype=float)
            object.__setattr__(self, "normal", v / np.linalg.norm(v))
        if self.kind == "circular":
            v = np.asarray(self.axis, dtype=float)
            object.__setattr__(self, "axis", v / np.linalg.norm(v))
            if not (0 < self.half_aperture <= math.pi / 2):
                raise ValueError("half_aperture must lie in (0, pi/2]")
        if self.kind == "orthant" and not (1 <= self.m <= self.n):
            raise ValueError("orthant needs 1 <= m <= n")
        if self.kind == "product":
            if self.tail is None or self.tail.n != self.n - self.k or not (0 <= self.k < self.n):
                raise ValueError("product needs a tail cone over R^(n-k)")

    # ---- constructors -------------------------------------------------
    @classmethod
    def full(cls, n):
        return cls("full_space", n)

    @classmethod
    def half(cls, n, normal=None):
        if normal is None:
            normal = np.eye(n)[-1]
        return cls("half_space", n, normal=np.asarray(normal, dtype=float))

    @classmethod
    def orthant(cls, n, m):
        return cls("orthant", n, m=m)

    @classmethod
    def circular(cls, n, half_aperture, axis=None):
        if axis is None:
            axis = np.eye(n)[-1]
        return cls("circular", n, axis=np.asarray(axis, dtype=float), half_aperture=half_aperture)

    @classmethod
    def product(cls, k, tail):
        return cls("product", k + tail.n, k=k, tail=tail)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "half_space":
            d["normal"] = self.normal.tolist()
        elif self.kind == "orthant":
            d["m"] = self.m
        elif self.kind == "circular":
            d["axis"] = self.axis.tolist()
            d["half_aperture"] = self.half_aperture
        elif self.kind == "product":
            d["k"] = self.k
            d["tail"] = self.tail.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConeSpec":
        kind, n = d["kind"], int(d["n"])
        if kind == "full_space":
            return cls.full(n)
        if kind == "half_space":
            return cls.half(n, d.get("normal"))
        if kind == "orthant":
            return cls.orthant(n, int(d["m"]))
        if kind == "circular":
            return cls.circular(n, float(d["half_aperture"]), d.get("axis"))
        if kind == "product":
            return cls.product(int(d["k"]), cls.from_dict(d["tail"]))
        raise ValueError(f"unknown cone kind {kind!r}")

    # ---- geometry -----------------------------------------------------
    def _g(self, x):
        """Defining functions g_j(x) <= 0, shape (..., J); the cone is their common sublevel set."""
        x = np.asarray(x, dtype=float)
        if self.kind == "full_space":
            return np.zeros(x.shape[:-1] + (0,))
        if self.kind == "half_space":
            return -(x @ self.normal)[..., None]
        if self.kind == "orthant":
            return -x[..., : self.m]
        if self.kind == "circular":
            return (np.linalg.norm(x, axis=-1) * math.cos(self.half_aperture) - x @ self.axis)[..., None]
        return self.tail._g(x[..., self.k:])

    def _dg(self, x, j):
        x = np.asarray(x, dtype=float)
        if self.kind == "half_space":
            return -self.normal
        if self.kind == "orthant":
            e = np.zeros(self.n)
            e[j] = -1.0
            return e
        if self.kind == "circular":
            return x / np.linalg.norm(x) * math.cos(self.half_aperture) - self.axis
        if self.kind == "product":
            return np.concatenate([np.zeros(self.k), self.tail._dg(x[self.k:], j)])
        raise NonSmoothBoundaryError("full space has no boundary")

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Membership in the closed cone.

        The defining functions are 1-homogeneous, so the comparison is made
        relative to |x| with a floor of a few ulps; boundary points then stay
        members under dilation despite rounding.
        """
        x = np.asarray(x, dtype=float)
        # rescale each point to unit max-norm so tiny or huge inputs neither underflow nor overflow
        m = np.max(np.abs(x), axis=-1, keepdims=True)
        x = x / np.where(m > 0, m, 1.0)
        scale = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.all(self._g(x) <= max(tol, 8 * np.finfo(float).eps) * scale, axis=-1)

    def _active(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        if r == 0:
            raise NonSmoothBoundaryError("the vertex is not a smooth boundary point")
        g = self._g(x)
        act = np.flatnonzero(np.abs(g) <= tol * r)
        if np.any(g > tol * r):
            raise ValueError("point lies outside the cone")
        return act

    def normal_at(self, x) -> np.ndarray:
        """Outward unit normal at a smooth boundary point."""
        act = self._active(x)
        if act.size == 0:
            raise ValueError("point is not on the boundary")
        if act.size > 1:
            raise NonSmoothBoundaryError("point lies on an edge of the cone")
        v = self._dg(x, int(act[0]))
        return v / np.linalg.norm(v)

    def shape_operator(self, x) -> np.ndarray:
        """Tangential part of D(nu) at a smooth boundary point (n x n, symmetric)."""
        x = np.asarray(x, dtype=float)
        nu = self.normal_at(x)
        P = np.eye(self.n) - np.outer(nu, nu)
        if self.kind in ("half_space", "orthant"):
            return np.zeros((self.n, self.n))
        if self.kind == "product":
            S = np.zeros((self.n, self.n))
            S[self.k:, self.k:] = self.tail.shape_operator(x[self.k:])
            return S
        # circular: nu = grad g / |grad g|, g = |x| cos(a) - x.axis
        r = np.linalg.norm(x)
        xh = x / r
        grad = xh * math.cos(self.half_aperture) - self.axis
        D2g = math.cos(self.half_aperture) * (np.eye(self.n) - np.outer(xh, xh)) / r
        return P @ D2g @ P / np.linalg.norm(grad)

    @property
    def lineality(self) -> int:
        """Dimension k of the largest linear subspace R^k contained in the cone."""
        if self.kind == "full_space":
            return self.n
        if self.kind == "half_space":
            return self.n - 1
        if self.kind == "orthant":
            return self.n - self.m
        if self.kind == "circular":
            return self.n - 1 if self.half_aperture == math.pi / 2 else 0
        return self.k + self.tail.lineality

    def vertex_subspace(self) -> np.ndarray:
        """Orthonormal basis (rows) of the set where the extremal's center may sit."""
        if self.kind == "full_space":
            return np.eye(self.n)
        if self.kind == "half_space" or (self.kind == "circular" and self.half_aperture == math.pi / 2):
            nrm = self.normal if self.kind == "half_space" else self.axis
            Q, _ = np.linalg.qr(np.column_stack([nrm, np.eye(self.n)]))
            return Q[:, 1:self.n].T
        if self.kind == "orthant":
            return np.eye(self.n)[self.m:]
        if self.kind == "circular":
            return np.zeros((0, self.n))
        sub = self.tail.vertex_subspace()
        rows = [np.eye(self.n)[i] for i in range(self.k)]
        rows += [np.concatenate([np.zeros(self.k), s]) for s in sub]
        return np.array(rows).reshape(-1, self.n)

    def project_vertex(self, x0) -> np.ndarray:
        """Closest admissible center: x0 projected onto R^k x {O}."""
        B = self.vertex_subspace()
        x0 = np.asarray(x0, dtype=float)
        return B.T @ (B @ x0) if B.size else np.zeros(self.n)

    # ---- sampling -----------------------------------------------------
    def sample_interior(self, count, rng, r_range=(0.5, 2.0), margin=0.0):
        """Points inside the cone with |x| in r_range and boundary distance > margin."""
        out, got = [], 0
        for _ in range(1000):
            d = rng.normal(size=(4 * count, self.n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            x = d * rng.uniform(*r_range, size=(4 * count, 1))
            ok = self.contains(x) & (self.boundary_distance(x) > margin)
            out.append(x[ok])
            got += int(ok.sum())
            if got >= count:
                return np.concatenate(out)[:count]
        raise ValueError("margin too large for the requested radii")

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "full_space":
            return np.full(x.shape[:-1], np.inf)
        if self.kind == "half_space":
            return x @ self.normal
        if self.kind == "orthant":
            return np.min(x[..., : self.m], axis=-1)
        if self.kind == "circular":
            r = np.linalg.norm(x, axis=-1)
            ang = np.arccos(np.clip(x @ self.axis / np.maximum(r, 1e-300), -1, 1))
            return r * np.sin(np.clip(self.half_aperture - ang, -math.pi / 2, math.pi / 2))
        return self.tail.boundary_distance(x[..., self.k:])

    def sample_boundary(self, count, rng, r_range=(0.5, 2.0)):
        """Smooth boundary points (edges and vertex excluded) with |x| in r_range."""
        if self.kind == "full_space":
            raise NonSmoothBoundaryError("full space has no boundary")
        if self.kind == "product":
            pts = self.tail.sample_boundary(count, rng, r_range)
            y = rng.normal(size=(count, self.k))
            x = np.concatenate([y, pts], axis=1)
            return x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(*r_range, size=(count, 1))
        rad = rng.uniform(*r_range, size=(count, 1))
        if self.kind == "half_space":
            d = rng.normal(size=(count, self.n))
            d -= (d @ self.normal)[:, None] * self.normal
        elif self.kind == "orthant":
            d = rng.normal(size=(count, self.n))
            d[:, : self.m] = np.abs(d[:, : self.m]) + 0.05
            face = rng.integers(0, self.m, size=count)
            d[np.arange(count), face] = 0.0
        else:
            u = rng.normal(size=(count, self.n))
            u -= (u @ self.axis)[:, None] * self.axis
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            a = self.half_aperture
            d = math.cos(a) * self.axis + math.sin(a) * u
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * rad

    # ---- solid angle --------------------------------------------------
    def direction_fraction(self) -> float | None:
        """Fraction of the unit sphere inside the cone, when known in closed form."""
        if self.kind == "full_space":
            return 1.0
        if self.kind == "half_space":
            return 0.5
        if self.kind == "orthant":
            return 0.5**self.m
        if self.kind == "circular":
            a = self.half_aperture
            return 0.5 * betainc((self.n - 1) / 2, 0.5, math.sin(a) ** 2)
        return self.tail.direction_fraction()


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """w(x) = prod x_i^{a_i} over the first m coordinates (unit weight when empty)."""

    kind: str = "unit"
    exponents: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("unit", "monomial"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        ex = tuple(float(a) for a in self.exponents)
        if any(a < 0 for a in ex):
            raise ValueError("weight exponents must be >= 0")
        if self.kind == "unit":
            ex = ()
        object.__setattr__(self, "exponents", ex)

    @classmethod
    def unit(cls):
        return cls()

    @classmethod
    def monomial(cls, exponents):
        return cls("monomial", tuple(exponents))

    @property
    def degree(self) -> float:
        return float(sum(self.exponents))

    def to_dict(self):
        return {"kind": self.kind, "exponents": list(self.exponents)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "unit"), tuple(d.get("exponents", ())))

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for i, a in enumerate(self.exponents):
            if a:
                out = out * np.maximum(x[..., i], 0.0) ** a
        return out

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = self.eval(x)
        g = np.zeros_like(x)
        for i, a in enumerate(self.exponents):
            if a:
                g[..., i] = a * w / x[..., i]
        return g

    def check_cone(self, cone: ConeSpec) -> None:
        """Monomial weights live on orthants whose sign constraints cover their coordinates."""
        if self.kind == "unit":
            return
        m = len(self.exponents)
        ok = (cone.kind == "orthant" and cone.m >= m) or (
            cone.kind == "half_space" and m == 1 and np.allclose(cone.normal, np.eye(cone.n)[0]))
        if not ok:
            raise ValueError("monomial weight requires an orthant containing its coordinates")


class SectorMeasure(NamedTuple):
    value: float
    stderr: float
    method: str


def _exact_sector(cone: ConeSpec, H: NormSpec, w: WeightSpec) -> float | None:
    n = cone.n
    if w.kind == "monomial":
        if H.family != "euclidean":
            return None
        a = w.degree
        ex = list(w.exponents) + [0.0] * (n - len(w.exponents))
        log_sphere = math.log(2.0) + sum(gammaln((ai + 1) / 2) for ai in ex) - gammaln((n + a) / 2)
        m = cone.m if cone.kind == "orthant" else 1
        return math.exp(log_sphere) / 2**m / (n + a)
    frac = cone.direction_fraction()
    if frac is None:
        return None
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    if H.family == "euclidean":
        return frac * ball
    if H.family == "quadratic" and cone.kind in ("full_space", "half_space"):
        # gauge ball {z^T A^-1 z <= 1} is centrally symmetric
        return frac * ball * math.sqrt(np.linalg.det(H.params["A"]))
    return None


def sector_measure(cone: ConeSpec, H: NormSpec, w: WeightSpec | None = None, *,
                   method: str = "auto", samples: int = 1_000_000, seed: int = 0,
                   target_rse: float = 5e-3, threads: int = 1,
                   chunk: int = 100_000) -> SectorMeasure:
    """Weighted measure of the unit gauge ball inside the cone.

    mu = integral of w over {x in cone : H0(-x) <= 1}; then for any gauge-radial
    g, the cone integral of g(H0(-x)) w dx equals (n + a) mu times the integral
    of g(r) r^(n+a-1) dr.  ``method='auto'`` uses a closed form when one exists
    and Monte Carlo otherwise.  The Monte Carlo estimator samples directions and
    integrates the radial coordinate exactly, so only the angular part carries
    sampling error.
    """
    w = w or WeightSpec.unit()
    if method not in ("auto", "exact", "mc"):
        raise ValueError("method must be auto, exact or mc")
    if method != "mc":
        val = _exact_sector(cone, H, w)
        if val is not None:
            return SectorMeasure(val, 0.0, "exact")
        if method == "exact":
            raise ValueError("no closed form for this cone/norm/weight combination")
    n, a = cone.n, w.degree
    nchunks = max(1, -(-samples // chunk))
    streams = np.random.SeedSequence(seed).spawn(nchunks)

    def run(i):
        size = min(chunk, samples - i * chunk)
        rng = np.random.Generator(np.random.Philox(streams[i]))
        d = rng.normal(size=(size, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        inside = cone.contains(d)
        f = np.zeros(size)
        if np.any(inside):
            di = d[inside]
            f[inside] = w.eval(di) * H.dual(-di) ** (-(n + a))
        return f.sum(), (f * f).sum(), size

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(nchunks)))
    else:
        parts = [run(i) for i in range(nchunks)]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    N = sum(p[2] for p in parts)
    mean = s1 / N
    var = max(s2 / N - mean**2, 0.0)
    scale = sphere_area(n) / (n + a)
    value = scale * mean
    stderr = scale * math.sqrt(var / N)
    rse = stderr / value if value > 0 else math.inf
    if rse > target_rse:
        raise SectorMeasureError(f"relative standard error {rse:.3g} above target {target_rse:g}", rse)
    return SectorMeasure(value, stderr, "mc")


def sphere_rule(n: int, count: int, axis=None, alpha: float = math.pi):
    """Product rule on the spherical cap {d : angle(d, axis) <= alpha} of S^(n-1).

    With t = cos(angle) the measure is (1 - t^2)^((n-3)/2) dt times that of
    S^(n-2); t uses Gauss-Jacobi nodes (exact in the weight for the full
    sphere, the smooth factor (1 + t)^((n-3)/2) left to the nodes on a cap)
    and the remaining directions recurse down to a trapezoid rule on the
    circle.  Roughly 2 count^(n-1) nodes.
    """
    axis = np.eye(n)[0] if axis is None else np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    Q, _ = np.linalg.qr(np.column_stack([axis, np.eye(n)]))
    perp = Q[:, 1:n]
    if n == 2:
        if alpha >= math.pi:
            k = 2 * count
            th = 2 * math.pi * np.arange(k) / k
            wt = np.full(k, 2 * math.pi / k)
        else:
            xg, wg = np.polynomial.legendre.leggauss(count)
            th, wt = alpha * xg, alpha * wg
        return np.cos(th)[:, None] * axis + np.sin(th)[:, None] * perp[:, 0], wt
    e = 0.5 * (n - 3)
    if alpha >= math.pi:
        t, wt = roots_jacobi(count, e, e)
    else:
        c = math.cos(alpha)
        s, ws = roots_jacobi(count, e, 0.0)
        t = c + 0.5 * (1 - c) * (s + 1)
        wt = ws * (0.5 * (1 - c)) ** (e + 1) * (1 + t) ** e
    y, wy = sphere_rule(n - 1, count)
    st = np.sqrt(np.maximum(1 - t * t, 0.0))
    d = t[:, None, None] * axis + st[:, None, None] * (y @ perp.T)[None]
    return d.reshape(-1, n), (wt[:, None] * wy[None]).ravel()


def direction_quadrature(cone: ConeSpec, count: int = 64, seed: int = 0):
    """Directions and weights on the unit sphere inside the cone.

    For rotationally symmetric cones (full, half, circular) a product rule in
    spherical coordinates is used; otherwise scrambled Sobol points are
    filtered by membership and weighted by the exact solid angle when it is
    known.  Weights sum to the solid angle of the cone.
    """
    n = cone.n
    if n == 3 and cone.kind in ("full_space", "half_space", "circular"):
        if cone.kind == "full_space":
            axis, alpha = np.array([0.0, 0.0, 1.0]), math.pi
        elif cone.kind == "half_space":
            axis, alpha = cone.normal, math.pi / 2
        else:
            axis, alpha = cone.axis, cone.half_aperture
        xg, wg = np.polynomial.legendre.leggauss(count)
        c0 = math.cos(alpha)
        cth = 0.5 * (1 - c0) * xg + 0.5 * (1 + c0)
        wth = 0.5 * (1 - c0) * wg
        nphi = 2 * count
        phi = 2 * math.pi * np.arange(nphi) / nphi
        sth = np.sqrt(1 - cth**2)
        Q, _ = np.linalg.qr(np.column_stack([axis, np.eye(3)]))
        e1, e2 = Q[:, 1], Q[:, 2]
        d = (cth[:, None, None] * axis
             + sth[:, None, None] * (np.cos(phi)[None, :, None] * e1 + np.sin(phi)[None, :, None] * e2))
        wts = np.broadcast_to(wth[:, None] * (2 * math.pi / nphi), (count, nphi))
        return d.reshape(-1, 3), wts.reshape(-1).copy()
    if cone.kind in ("full_space", "half_space", "circular"):
        if cone.kind == "full_space":
            axis, alpha = np.eye(n)[0], math.pi
        elif cone.kind == "half_space":
            axis, alpha = cone.normal, math.pi / 2
        else:
            axis, alpha = cone.axis, cone.half_aperture
        # node count ~ 2 count^2 as in three dimensions; weights rescaled to the exact solid angle
        d, w = sphere_rule(n, max(3, round(count ** (2 / (n - 1)))), axis, alpha)
        return d, w * (sphere_area(n) * cone.direction_fraction() / w.sum())
    from scipy.stats import norm, qmc

    m = int(math.ceil(math.log2(max(count, 2) ** 2)))
    pts = qmc.Sobol(n, scramble=True, seed=seed).random_base2(m)
    d = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    inside = cone.contains(d)
    frac = cone.direction_fraction()
    total = sphere_area(n) * (frac if frac is not None else inside.mean())
    d = d[inside]
    return d, np.full(len(d), total / len(d))
