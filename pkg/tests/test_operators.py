import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from anisocone.bubbles import BubbleParams, calibrate_constant, v_transform
from anisocone.cones import ConeSpec, WeightSpec
from anisocone.norms import NormSpec
from anisocone.operators import (DegeneratePointError, check_differential_identity, check_newton, check_rigidity,
                                 differential_identity_terms, finsler_p_laplacian, neumann_residual, pde_residual,
                                 richardson_check, s2, s2_bruteforce, s2_cofactor, w_matrix, weighted_residual)
from anisocone.suites import _control_field, newton_equality_cases, newton_samples, residual_points

mats = st.integers(2, 6).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-5, 5)))


def half_sq(y):
    return 0.5 * np.sum(y * y, axis=-1)


# ---- finite-difference operator ---------------------------------------------

def test_laplacian_of_quadratic():
    x = np.array([[0.3, -1.2, 2.0], [1.0, 1.0, 1.0]])
    np.testing.assert_allclose(finsler_p_laplacian(half_sq, NormSpec.euclidean(3), 2.0, x), 3.0, rtol=1e-10)


def test_linear_field_is_p_harmonic():
    x = np.random.default_rng(0).normal(size=(10, 3))
    out = finsler_p_laplacian(lambda y: y[..., 0], NormSpec.euclidean(3), 3.0, x)
    np.testing.assert_allclose(out, 0.0, atol=1e-9)


def test_trace_of_w_is_the_operator(rng):
    H = NormSpec.quadratic(np.diag([1.0, 2.0, 0.5]))
    f = lambda y: np.exp(-np.sum(y * y, axis=-1)) + y[..., 1]  # noqa: E731
    x = rng.normal(size=(8, 3))
    W = w_matrix(f, H, 2.5, x)
    np.testing.assert_allclose(np.trace(W, axis1=-2, axis2=-1), finsler_p_laplacian(f, H, 2.5, x), rtol=1e-13)


def test_degenerate_point_below_two():
    with pytest.raises(DegeneratePointError):
        finsler_p_laplacian(half_sq, NormSpec.euclidean(3), 1.5, np.zeros((1, 3)))


# ---- bubble residuals --------------------------------------------------------

@pytest.mark.parametrize("norm", ["euclidean", "quadratic"])
@pytest.mark.parametrize("n,p", [(3, 2.0), (4, 3.0)])
def test_bubble_solves_equation(norm, n, p, rng):
    H = NormSpec.euclidean(n) if norm == "euclidean" else NormSpec.quadratic(np.diag(np.arange(1.0, n + 1)))
    B = BubbleParams(n, p)
    x = residual_points(B, H, ConeSpec.full(n), 40, rng)
    rep = richardson_check(B, H, ConeSpec.full(n), x)
    assert rep.passed, rep.info
    assert rep.info["max_residual"] <= 10 * 1e-6


def test_three_dimensional_laplacian_of_bubble(rng):
    B = BubbleParams(3, 2.0, lam=1.4)
    H = NormSpec.euclidean(3)
    x = residual_points(B, H, ConeSpec.full(3), 20, rng)
    U = B.profile(np.linalg.norm(x, axis=1))
    lap = finsler_p_laplacian(lambda y: B.profile(np.linalg.norm(y, axis=-1)), H, 2.0, x)
    np.testing.assert_allclose(lap, -U**5, rtol=1e-5)


def test_wrong_constant_is_detected(rng):
    B = BubbleParams(3, 2.0)
    H = NormSpec.euclidean(3)
    x = residual_points(B, H, ConeSpec.full(3), 40, rng)
    bad = B.with_(c=1.01 * B.c)
    assert not richardson_check(bad, H, ConeSpec.full(3), x).passed
    assert np.abs(pde_residual(bad, H, ConeSpec.full(3), x)).max() > 1e-3


def test_residual_points_outside_cone_rejected():
    with pytest.raises(ValueError):
        pde_residual(BubbleParams(3, 2.0), NormSpec.euclidean(3), ConeSpec.half(3), np.array([[0, 0, -1.0]]))


def test_weighted_bubble_residual(rng):
    C = ConeSpec.half(2, [1.0, 0.0])
    w = WeightSpec.monomial([1.0])
    H = NormSpec.euclidean(2)
    B = BubbleParams(2, 1.5, 1.0, c=calibrate_constant(2, 1.5, 1.0, H, w, C))
    x = residual_points(B, H, C, 30, rng)
    res = np.abs(weighted_residual(B, H, w, x)) / w.eval(x)
    assert res.max() <= 10 * 1e-6
    assert np.abs(weighted_residual(B, H, w, x, multiplier=1.05)).max() > 1e-3


@pytest.mark.parametrize("cone", [ConeSpec.half(3), ConeSpec.circular(3, math.pi / 4), ConeSpec.orthant(3, 2)])
@pytest.mark.parametrize("norm", [NormSpec.euclidean(3), NormSpec.blend(3, 4.0, 0.5)])
def test_neumann_condition(cone, norm, rng):
    B = BubbleParams.for_cone(cone, 2.0)
    xb = cone.sample_boundary(20, rng)
    assert max(abs(neumann_residual(B, norm, cone, x)) for x in xb) <= 1e-10
    off = cone.sample_interior(1, rng, r_range=(0.5, 1.0), margin=0.1)[0]
    moved = B.with_(x0=off)
    assert max(abs(neumann_residual(moved, norm, cone, x)) for x in xb) >= 1e-3


# ---- second symmetric function and Newton ----------------------------------------

def test_s2_diagonal():
    assert s2(np.diag([1.0, 2.0, 3.0])) == pytest.approx(11.0)


@given(M=mats)
def test_s2_matches_minors(M):
    assert s2(M) == pytest.approx(s2_bruteforce(M), rel=1e-10, abs=1e-9)


@given(M=mats)
def test_s2_cofactor_contraction(M):
    assert 0.5 * np.sum(s2_cofactor(M) * M) == pytest.approx(s2(M), rel=1e-10, abs=1e-9)


def test_newton_random_products(rng):
    for Bm, C in newton_samples(2000, rng):
        rep = check_newton(Bm, C)
        assert rep.passed


def test_newton_equality_forces_identity(rng):
    for Bm, C in newton_equality_cases(rng):
        row = check_newton(Bm, C).rows[0]
        assert row["equality"] and row["pass"]
        assert row["off_identity"] <= 1e-8


def test_newton_rank_one_is_strict():
    v = np.array([1.0, 2.0, 0.5])
    row = check_newton(np.outer(v, v), np.eye(3)).rows[0]
    assert not row["equality"] and row["lhs"] == pytest.approx(0.0, abs=1e-12)


def test_newton_input_validation():
    with pytest.raises(ValueError):
        check_newton(-np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        check_newton(np.eye(3), np.triu(np.ones((3, 3))))


# ---- rigidity ------------------------------------------------------------------

def test_w_matrix_of_three_dimensional_v():
    B = BubbleParams(3, 2.0)
    H = NormSpec.euclidean(3)
    x = np.array([[0.5, 1.0, -0.3], [2.0, 0.1, 0.4]])
    W = w_matrix(lambda y: v_transform(B, H, y), H, 2.0, x)
    np.testing.assert_allclose(W, np.broadcast_to(2 / math.sqrt(3) * np.eye(3), W.shape), atol=1e-8)


@pytest.mark.parametrize("n,p", [(3, 2.0), (4, 3.0)])
@pytest.mark.parametrize("norm", ["euclidean", "quadratic"])
def test_rigidity_and_control(n, p, norm, rng):
    H = NormSpec.euclidean(n) if norm == "euclidean" else NormSpec.quadratic(np.diag(np.arange(1.0, n + 1)))
    B = BubbleParams(n, p)
    x = residual_points(B, H, ConeSpec.full(n), 30, rng, rho_range=(0.5, 3.0))
    assert check_rigidity(lambda y: v_transform(B, H, y), H, p, x).passed
    ctrl = check_rigidity(_control_field, H, p, x)
    assert min(r["residual"] / r["tolerance"] for r in ctrl.rows) >= 1e3


# ---- pointwise identity -----------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.0, -2.0, -3.0])
@pytest.mark.parametrize("p", [2.0, 3.0])
def test_differential_identity_quadratic_field(gamma, p, rng):
    H = NormSpec.quadratic(np.diag([1.0, 2.0, 3.0, 1.5]))
    x = rng.normal(size=(10, 4))
    rep = check_differential_identity(lambda y: 1 + np.sum(y * y, axis=-1), H, p, gamma, x)
    assert rep.passed


def test_differential_identity_separates_exponents(rng):
    # sides taken at different exponents must disagree far beyond the tolerance
    H = NormSpec.euclidean(3)
    f = lambda y: 1 + np.sum(y * y, axis=-1) + 0.3 * y[..., 0] ** 3  # noqa: E731
    x = rng.normal(size=(5, 3))
    l1, r1, s = differential_identity_terms(f, H, 2.0, -2.0, x, 1e-3)
    _, r2, _ = differential_identity_terms(f, H, 2.0, -3.0, x, 1e-3)
    assert np.all(np.abs(l1 - r1) <= 1e-3 * s)
    assert np.all(np.abs(l1 - r2) > 1e-2 * s)
