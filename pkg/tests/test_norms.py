import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import approx_fprime

from anisocone.norms import DomainError, NormSpec, check_dual_identities, check_ellipticity

FAMILIES = {
    "euclidean": NormSpec.euclidean(3),
    "quadratic": NormSpec.quadratic(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 3.0]])),
    "blend": NormSpec.blend(3, 4.0, 0.5),
    "shifted": NormSpec.shifted([0.2, -0.3, 0.1]),
}

vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


# ---- closed-form values ----------------------------------------------------------

def test_eval_closed_forms():
    assert NormSpec.euclidean(2).eval(np.array([3.0, 4.0])) == pytest.approx(5.0, abs=1e-15)
    assert NormSpec.blend(2, 4.0, 1.0).eval(np.array([1.0, 1.0])) == pytest.approx(2 ** 0.25, rel=1e-14)
    S = NormSpec.shifted([0.5, 0.0])
    assert S.eval(np.array([1.0, 0.0])) == pytest.approx(1.5)
    assert S.eval(np.array([-1.0, 0.0])) == pytest.approx(0.5)


def test_grad_closed_forms():
    np.testing.assert_allclose(NormSpec.euclidean(2).grad(np.array([3.0, 4.0])), [0.6, 0.8], atol=1e-15)
    np.testing.assert_allclose(NormSpec.quadratic(np.diag([4.0, 1.0])).grad(np.array([1.0, 0.0])), [2.0, 0.0],
                               atol=1e-15)


def test_hess_euclidean_axis():
    np.testing.assert_allclose(NormSpec.euclidean(2).hess(np.array([1.0, 0.0])), [[0, 0], [0, 1]], atol=1e-15)


def test_dual_closed_forms():
    assert NormSpec.euclidean(2).dual(np.array([3.0, 4.0])) == pytest.approx(5.0)
    # the dual of the pure l4 norm is the l^(4/3) norm
    assert NormSpec.blend(2, 4.0, 1.0).dual(np.array([1.0, 1.0])) == pytest.approx(2 ** 0.75, rel=1e-9)


def test_dual_blend_against_direct_maximization():
    # value frozen from Nelder-Mead maximization of zeta.xi / H(xi) over 20 starts
    z = np.array([0.3, -1.2, 0.7])
    assert FAMILIES["blend"].dual(z) == pytest.approx(1.5373362086923565, rel=1e-8)


def test_a_map_closed_forms():
    E = NormSpec.euclidean(2)
    np.testing.assert_allclose(E.a_map(np.array([1.0, 2.0]), 2.0), [1.0, 2.0])
    np.testing.assert_allclose(E.a_map(np.array([3.0, 4.0]), 3.0), [15.0, 20.0])


def test_zero_vector_rejected():
    with pytest.raises(DomainError):
        NormSpec.euclidean(3).grad(np.zeros(3))


# ---- finite-difference agreement ---------------------------------------------------

@pytest.mark.parametrize("name", FAMILIES)
def test_grad_matches_finite_differences(name, rng):
    H = FAMILIES[name]
    for xi in rng.normal(size=(20, 3)):
        fd = approx_fprime(xi, lambda x: float(H.eval(x)), 1e-7)
        np.testing.assert_allclose(H.grad(xi), fd, atol=2e-6)


@pytest.mark.parametrize("name", FAMILIES)
def test_hess_matches_finite_differences(name, rng):
    H = FAMILIES[name]
    h = 1e-5
    for xi in rng.normal(size=(10, 3)):
        fd = np.array([(H.grad(xi + h * e) - H.grad(xi - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(H.hess(xi), fd, atol=1e-7)


@pytest.mark.parametrize("name", FAMILIES)
def test_hessian_annihilates_xi(name, rng):
    H = FAMILIES[name]
    xi = rng.normal(size=(1000, 3))
    assert np.abs(np.einsum("kij,kj->ki", H.hess(xi), xi)).max() < 1e-10


# ---- properties ----------------------------------------------------------------

@pytest.mark.parametrize("name", FAMILIES)
@given(xi=vec3, ell=st.floats(1e-3, 1e3))
def test_positive_homogeneity(name, xi, ell):
    H = FAMILIES[name]
    assert abs(H.eval(ell * xi) - ell * H.eval(xi)) <= 1e-12 * ell * H.eval(xi)


@pytest.mark.parametrize("name", FAMILIES)
@given(xi=vec3)
def test_euler_identity(name, xi):
    H = FAMILIES[name]
    assert abs(H.grad(xi) @ xi - H.eval(xi)) <= 1e-10 * max(1.0, H.eval(xi))


@pytest.mark.parametrize("name", FAMILIES)
@given(xi=vec3)
def test_gradient_has_unit_dual_norm(name, xi):
    H = FAMILIES[name]
    assert abs(H.dual(H.grad(xi)) - 1.0) <= 1e-8


@pytest.mark.parametrize("name", FAMILIES)
@given(xi=vec3, p=st.floats(1.2, 2.9))
def test_a_map_dual_norm(name, xi, p):
    H = FAMILIES[name]
    want = H.eval(xi) ** (p - 1)
    assert abs(H.dual(H.a_map(xi, p)) - want) <= 1e-8 * max(1.0, want)


@pytest.mark.parametrize("name", FAMILIES)
@given(x1=vec3, x2=vec3, p=st.floats(1.2, 2.9))
def test_a_map_monotone(name, x1, x2, p):
    H = FAMILIES[name]
    lhs = (H.a_map(x1, p) - H.a_map(x2, p)) @ (x1 - x2)
    assert lhs >= -1e-9 * (1 + np.linalg.norm(x1) + np.linalg.norm(x2)) ** p


@pytest.mark.parametrize("name", ["euclidean", "quadratic", "blend"])
def test_bidual_recovers_norm(name, rng):
    H = FAMILIES[name]
    xi = rng.normal(size=(100, 3))
    # H00(xi) = max xi.zeta / H0(zeta); for a symmetric norm H0 is attained on grad H
    zeta = H.grad(xi)
    np.testing.assert_allclose(np.sum(xi * zeta, axis=1) / H.dual(zeta), H.eval(xi), rtol=1e-8)


@pytest.mark.parametrize("name", FAMILIES)
def test_positive_on_sphere(name, rng):
    xi = rng.normal(size=(1000, 3))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    assert FAMILIES[name].eval(xi).min() > 0


# ---- ellipticity -------------------------------------------------------------

def test_ellipticity_euclidean_is_identity():
    lam, Lam, ok = check_ellipticity(NormSpec.euclidean(4), 200)
    assert lam == pytest.approx(1.0, abs=1e-10) and Lam == pytest.approx(1.0, abs=1e-10) and ok


def test_ellipticity_quadratic_matches_spectrum():
    # H D2H + grad H (x) grad H equals A itself for H = sqrt(xi^T A xi)
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    ev = np.linalg.eigvalsh(A)
    lam, Lam, ok = check_ellipticity(NormSpec.quadratic(A), 2000)
    assert ok
    assert lam == pytest.approx(ev[0], rel=1e-10) and Lam == pytest.approx(ev[1], rel=1e-10)


def test_ellipticity_pure_l4_fails():
    lam, _, ok = check_ellipticity(NormSpec.blend(3, 4.0, 1.0), 200)
    assert lam < 1e-3 and not ok


@pytest.mark.parametrize("name", FAMILIES)
def test_dual_identity_report(name):
    rep = check_dual_identities(FAMILIES[name], p=2.5, samples=200)
    assert rep.passed
    assert {r["identity"] for r in rep.rows} >= {"grad_duality", "a_duality"}


def test_serialization_roundtrip():
    for H in FAMILIES.values():
        G = NormSpec.from_dict(H.to_dict())
        xi = np.array([0.3, -0.4, 1.1])
        assert G.eval(xi) == H.eval(xi)
        assert not math.isnan(G.dual(xi))
