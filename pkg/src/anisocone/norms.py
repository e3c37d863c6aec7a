"""Anisotropic norms H, their derivatives, dual norms and the map a(xi).

Every function accepts arrays shaped ``(..., n)`` and broadcasts over the
leading axes.  Four parametric families are supported:

* ``euclidean``      H(xi) = |xi|
* ``quadratic``      H(xi) = sqrt(xi^T A xi), A symmetric positive definite
* ``blend``          H(xi) = ((1 - eps)|xi|^2 + eps ||xi||_q^2)^(1/2), q > 2
* ``shifted``        H(xi) = |xi| + b.xi, |b| < 1  (not symmetric)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from .report import VerificationReport

FAMILIES = ("euclidean", "quadratic", "blend", "shifted")

# multi-start ascent settings for duals without a closed form
DUAL_STARTS = 32
DUAL_TOL = 1e-10
DUAL_MAXITER = 200


def as_real(x) -> np.ndarray:
    """Float array, keeping extended precision when the input carries it."""
    x = np.asarray(x)
    return x if x.dtype in (np.float64, np.longdouble) else x.astype(float)


class DomainError(ValueError):
    """Derivative requested where it does not exist (xi = 0)."""


class DualConvergenceError(RuntimeError):
    """The dual-norm ascent did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _nonzero(xi: np.ndarray, what: str) -> None:
    if np.any(np.linalg.norm(xi, axis=-1) == 0.0):
        raise DomainError(f"{what} is undefined at the origin")


@dataclass(frozen=True, eq=False)
class NormSpec:
    family: str
    n: int
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")
        if not (2 <= self.n <= 16):
            raise ValueError("dimension must satisfy 2 <= n <= 16")
        p = dict(self.params)
        if self.family == "quadratic":
            A = np.asarray(p["A"], dtype=float)
            if A.shape != (self.n, self.n):
                raise ValueError("A must be n x n")
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max()):
                raise ValueError("A must be symmetric")
            evals = np.linalg.eigvalsh(A)
            if evals.min() <= 0:
                raise ValueError("A must be positive definite")
            p["A"] = A
            object.__setattr__(self, "_Ainv", np.linalg.inv(A))
        elif self.family == "blend":
            q, eps = float(p["q"]), float(p["eps"])
            if q <= 2:
                raise ValueError("blend requires q > 2")
            if not (0.0 < eps <= 1.0):
                raise ValueError("blend requires eps in (0, 1]")
            p["q"], p["eps"] = q, eps
        elif self.family == "shifted":
            b = np.asarray(p["b"], dtype=float)
            if b.shape != (self.n,):
                raise ValueError("b must have length n")
            if np.linalg.norm(b) >= 1:
                raise ValueError("shifted norm requires |b| < 1")
            p["b"] = b
        object.__setattr__(self, "params", p)

    # ---- constructors -------------------------------------------------
    @classmethod
    def euclidean(cls, n: int) -> "NormSpec":
        return cls("euclidean", n)

    @classmethod
    def quadratic(cls, A) -> "NormSpec":
        A = np.asarray(A, dtype=float)
        return cls("quadratic", A.shape[0], {"A": A})

    @classmethod
    def blend(cls, n: int, q: float, eps: float) -> "NormSpec":
        return cls("blend", n, {"q": q, "eps": eps})

    @classmethod
    def shifted(cls, b) -> "NormSpec":
        b = np.asarray(b, dtype=float)
        return cls("shifted", b.shape[0], {"b": b})

    # ---- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params.items():
            params[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return {"family": self.family, "params": params, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "NormSpec":
        return cls(d["family"], int(d["n"]), dict(d.get("params", {})))

    @property
    def symmetric(self) -> bool:
        return not (self.family == "shifted" and np.any(self.params["b"] != 0))

    # ---- H and derivatives --------------------------------------------
    def eval(self, xi) -> np.ndarray:
        xi = as_real(xi)
        if self.family == "euclidean":
            return np.linalg.norm(xi, axis=-1)
        if self.family == "quadratic":
            A = self.params["A"]
            return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", xi, A, xi), 0.0))
        if self.family == "blend":
            return np.sqrt(self._blend_sq(xi))
        b = self.params["b"]
        return np.linalg.norm(xi, axis=-1) + xi @ b

    def _blend_sq(self, xi):
        q, eps = self.params["q"], self.params["eps"]
        S = np.sum(np.abs(xi) ** q, axis=-1)
        return (1 - eps) * np.sum(xi * xi, axis=-1) + eps * S ** (2.0 / q)

    def grad(self, xi) -> np.ndarray:
        xi = as_real(xi)
        _nonzero(xi, "grad H")
        if self.family == "euclidean":
            return xi / np.linalg.norm(xi, axis=-1, keepdims=True)
        if self.family == "quadratic":
            Axi = xi @ self.params["A"]
            return Axi / self.eval(xi)[..., None]
        if self.family == "blend":
            g2, _ = self._blend_sq_derivs(xi, hessian=False)
            return g2 / (2.0 * np.sqrt(self._blend_sq(xi)))[..., None]
        return xi / np.linalg.norm(xi, axis=-1, keepdims=True) + self.params["b"]

    def _blend_sq_derivs(self, xi, hessian=True):
        # gradient and Hessian of H^2 for the blend family
        q, eps = self.params["q"], self.params["eps"]
        ax = np.abs(xi)
        S = np.sum(ax**q, axis=-1)[..., None]
        t = ax ** (q - 2) * xi
        grad = 2 * (1 - eps) * xi + eps * 2 * S ** (2 / q - 1) * t
        if not hessian:
            return grad, None
        n = xi.shape[-1]
        eye = np.eye(n)
        D = 2 * (q - 1) * S[..., None] ** (2 / q - 1) * (ax ** (q - 2))[..., None] * eye
        R = 2 * (2 - q) * S[..., None] ** (2 / q - 2) * t[..., :, None] * t[..., None, :]
        hess = 2 * (1 - eps) * eye + eps * (D + R)
        return grad, hess

    def hess(self, xi) -> np.ndarray:
        xi = as_real(xi)
        _nonzero(xi, "Hessian of H")
        n = xi.shape[-1]
        eye = np.eye(n)
        if self.family in ("euclidean", "shifted"):
            r = np.linalg.norm(xi, axis=-1)[..., None, None]
            u = xi / r[..., 0]
            return (eye - u[..., :, None] * u[..., None, :]) / r
        if self.family == "quadratic":
            A = self.params["A"]
            H = self.eval(xi)[..., None, None]
            g = self.grad(xi)
            return (A - g[..., :, None] * g[..., None, :]) / H
        g2, h2 = self._blend_sq_derivs(xi)
        H = np.sqrt(self._blend_sq(xi))[..., None, None]
        g = g2 / (2 * H[..., 0])
        return (0.5 * h2 - g[..., :, None] * g[..., None, :]) / H

    # ---- dual norm ----------------------------------------------------
    def dual(self, zeta) -> np.ndarray:
        """H0(zeta) = sup over H(xi) = 1 of zeta.xi."""
        return self._dual(zeta)[0]

    def dual_grad(self, zeta) -> np.ndarray:
        """Gradient of H0; equals the maximizing xi with H(xi) = 1."""
        zeta = as_real(zeta)
        _nonzero(zeta, "grad H0")
        return self._dual(zeta)[1]

    def _dual(self, zeta):
        zeta = as_real(zeta)
        if self.family == "euclidean":
            r = np.linalg.norm(zeta, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                return r, zeta / r[..., None]
        if self.family == "quadratic":
            Az = zeta @ self._Ainv
            val = np.sqrt(np.maximum(np.sum(zeta * Az, axis=-1), 0.0))
            with np.errstate(invalid="ignore", divide="ignore"):
                return val, Az / val[..., None]
        if self.family == "shifted":
            # the unit ball is an ellipsoid with a focus at the origin
            b = self.params["b"]
            k = 1.0 - b @ b
            bz = zeta @ b
            root = np.sqrt(k * np.sum(zeta * zeta, axis=-1) + bz**2)
            val = (root - bz) / k
            with np.errstate(invalid="ignore", divide="ignore"):
                g = ((k * zeta + bz[..., None] * b) / root[..., None] - b) / k
            return val, g
        return maximize_ratio(self, zeta)

    def a_map(self, xi, p: float) -> np.ndarray:
        return a_map(self, p, xi)


def a_map(H, p: float, xi) -> np.ndarray:
    """a(xi) = H(xi)^(p-1) grad H(xi), extended by a(0) = 0."""
    xi = as_real(xi)
    out = np.zeros_like(xi)
    nz = np.linalg.norm(xi, axis=-1) > 0
    if np.any(nz):
        x = xi[nz]
        out[nz] = H.eval(x)[..., None] ** (p - 1) * H.grad(x)
    return out


def maximize_ratio(H, zeta, starts: int = DUAL_STARTS, tol: float = DUAL_TOL,
                   maxiter: int = DUAL_MAXITER):
    """Maximize zeta.xi / H(xi) over the unit sphere by Newton ascent.

    Superlevel sets of the ratio are convex cones when H is convex, so a local
    maximum is global; one ascent from zeta/|zeta| normally suffices and the
    multi-start pass only covers points where it stalls.  Returns
    ``(value, argmax)`` with the argmax scaled to H(argmax) = 1, which is also
    the gradient of the dual norm at zeta.  ``H`` needs ``eval`` and ``grad``;
    its ``hess`` is used when present, else a finite-difference Hessian of
    ``grad``.
    """
    zeta = np.asarray(zeta, dtype=float)
    shape = zeta.shape[:-1]
    n = zeta.shape[-1]
    Z = zeta.reshape(-1, n)
    P = Z.shape[0]
    znorm = np.linalg.norm(Z, axis=1)
    scale = np.maximum(znorm, 1e-300)

    rng = np.random.default_rng(12345)
    extra = rng.normal(size=(starts - 1, n))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    zhat = np.where(znorm[:, None] > 0, Z / scale[:, None], extra[0])

    f, X, gnorm = _ascend(H, Z, zhat[:, None, :].copy(), tol, maxiter)
    f, X, gnorm = f[:, 0], X[:, 0], gnorm[:, 0]
    redo = np.flatnonzero(gnorm > tol * scale)
    if redo.size:
        X0 = np.concatenate([zhat[redo, None, :], np.broadcast_to(extra, (redo.size, starts - 1, n))], axis=1)
        fr, Xr, gr = _ascend(H, Z[redo], X0.copy(), tol, maxiter)
        best = np.argmax(fr, axis=1)
        k = np.arange(redo.size)
        f[redo], X[redo], gnorm[redo] = fr[k, best], Xr[k, best], gr[k, best]
    if np.any(gnorm > 10 * tol * scale):
        raise DualConvergenceError("dual-norm ascent did not converge", float(np.max(gnorm / scale)))
    arg = X / H.eval(X)[:, None]
    val = np.where(znorm > 0, f, 0.0)
    return val.reshape(shape), arg.reshape(shape + (n,))


def _ascend(H, Z, X, tol, maxiter):
    """Projected Newton ascent of Z.X / H(X) for every start X[i, j]; returns (f, X, |tangential grad|)."""
    n = Z.shape[-1]
    hess = getattr(H, "hess", None)
    eye = np.eye(n)
    outer = lambda a, b: a[..., :, None] * b[..., None, :]  # noqa: E731
    zscale = np.maximum(np.linalg.norm(Z, axis=-1), 1e-300)[:, None]

    def objective(ZZ, X):
        return np.sum(ZZ * X, axis=-1) / H.eval(X)

    def tangential(ZZ, X):
        h = H.eval(X)[..., None]
        g = H.grad(X)
        zx = np.sum(ZZ * X, axis=-1)[..., None]
        grad = ZZ / h - zx * g / h**2
        return grad - np.sum(grad * X, axis=-1, keepdims=True) * X, h, g, zx

    ZZ = np.broadcast_to(Z[:, None, :], X.shape)
    f = objective(ZZ, X)
    gnorm = np.linalg.norm(tangential(ZZ, X)[0], axis=-1)
    active = np.flatnonzero(np.any(gnorm > tol * zscale, axis=1))
    for _ in range(maxiter):
        if active.size == 0:
            break
        Xa, Za = X[active], np.broadcast_to(Z[active, None, :], X[active].shape)
        fa = f[active]
        grad, h, g, zx = tangential(Za, Xa)
        D2H = hess(Xa) if hess is not None else _fd_jacobian(H.grad, Xa)
        D2 = (-(outer(Za, g) + outer(g, Za)) / h[..., None] ** 2
              - zx[..., None] * D2H / h[..., None] ** 2
              + 2 * zx[..., None] * outer(g, g) / h[..., None] ** 3)
        Pm = eye - outer(Xa, Xa)
        Hr = Pm @ D2 @ Pm - outer(Xa, Xa)
        try:
            step = -np.linalg.solve(Hr, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = grad.copy()
        ascent = np.sum(step * grad, axis=-1) > 0
        step = np.where(ascent[..., None], step, grad)
        slen = np.linalg.norm(step, axis=-1, keepdims=True)
        step = np.where(slen > 0.5, step * 0.5 / np.maximum(slen, 1e-300), step)
        done = np.linalg.norm(grad, axis=-1) <= tol * zscale[active]
        t = np.ones(Xa.shape[:2])
        for _ in range(40):
            Xn = Xa + t[..., None] * step
            Xn /= np.linalg.norm(Xn, axis=-1, keepdims=True)
            fn = objective(Za, Xn)
            ok = (fn >= fa - 1e-15 * np.abs(fa)) | done
            if np.all(ok):
                break
            t = np.where(ok, t, 0.5 * t)
        X[active] = np.where(done[..., None], Xa, Xn)
        f[active] = np.where(done, fa, fn)
        gnorm[active] = np.linalg.norm(tangential(Za, X[active])[0], axis=-1)
        # a point is finished once its best start has converged
        best = np.argmax(f[active], axis=1)
        k = np.arange(active.size)
        active = active[gnorm[active][k, best] > tol * zscale[active, 0]]
    return f, X, gnorm


def _fd_jacobian(F, X, rel=1e-6):
    n = X.shape[-1]
    h = rel * np.maximum(1.0, np.linalg.norm(X, axis=-1))[..., None]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append((F(X + h * e) - F(X - h * e)) / (2 * h))
    J = np.stack(cols, axis=-1)
    return 0.5 * (J + np.swapaxes(J, -1, -2))


class DualNorm:
    """H0 viewed as a norm in its own right (used for bidual sampling)."""

    def __init__(self, H: NormSpec):
        self.base = H
        self.n = H.n

    def eval(self, zeta):
        return self.base.dual(zeta)

    def grad(self, zeta):
        return self.base.dual_grad(zeta)

    def dual(self, x):
        return maximize_ratio(self, x)[0]


def check_ellipticity(H: NormSpec, samples: int, floor: float = 1e-3, seed: int = 0):
    """Extreme eigenvalues of H D^2H + grad H (x) grad H over unit vectors.

    The sample set always contains the signed coordinate axes, where
    non-uniformly convex blends degenerate.  Returns ``(lam, Lam, passed)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(samples, H.n))
    axes = np.concatenate([np.eye(H.n), -np.eye(H.n)])
    xi = np.concatenate([xi, axes])
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    g = H.grad(xi)
    M = H.eval(xi)[:, None, None] * H.hess(xi) + g[:, :, None] * g[:, None, :]
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    lam, Lam = float(ev.min()), float(ev.max())
    return lam, Lam, lam >= floor


def check_dual_identities(H: NormSpec, p: float = 2.0, samples: int = 1000, seed: int = 0,
                          tol: float = 1e-8) -> "VerificationReport":
    """Duality identities at random xi: H0(grad H) = 1, H0(a) = H^(p-1),
    p V = H0(a)^p' with V = H^p / p, plus homogeneity and Euler residuals."""
    from .report import VerificationReport

    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(samples, H.n)) * rng.uniform(0.1, 10.0, size=(samples, 1))
    Hx = H.eval(xi)
    g = H.grad(xi)
    a = a_map(H, p, xi)
    ell = rng.uniform(0.01, 100.0, size=samples)
    Ha = H.dual(a)
    res = {
        "grad_duality": np.abs(H.dual(g) - 1.0),
        "a_duality": np.abs(Ha - Hx ** (p - 1)) / np.maximum(1.0, Hx ** (p - 1)),
        "conjugate_energy": np.abs(Hx**p - Ha ** (p / (p - 1))) / np.maximum(1.0, Hx**p),
        "homogeneity": np.abs(H.eval(ell[:, None] * xi) - ell * Hx) / (ell * Hx),
        "euler": np.abs(np.sum(g * xi, axis=1) - Hx) / np.maximum(1.0, Hx),
    }
    rep = VerificationReport("dual_identities")
    for name, r in res.items():
        t = 1e-12 if name == "homogeneity" else tol
        rep.add(identity=name, family=H.family, p=p, samples=samples, max_residual=float(r.max()),
                tolerance=t, **{"pass": bool(r.max() <= t)})
    return rep
