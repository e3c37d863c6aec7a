import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisocone.bubbles import BubbleParams
from anisocone.cones import ConeSpec, WeightSpec
from anisocone.norms import NormSpec
from anisocone.radial import RadialProfile, graded_grid
from anisocone.sobolev import (LocalBump, RadialBump, Translation, ball_sphere_count, caccioppoli_scaling,
                               check_identity_v, check_integral_inequality, perturbation_test, quotient,
                               sharp_constant, smooth_bump, smooth_bump_deriv)
from anisocone.suites import bump_center

PAIRS = [(3, 2.0), (4, 2.0), (4, 3.0), (5, 2.0)]
J_FULL_3_2 = 5.47790408953133187     # 3 (pi/2)^(4/3)


def test_sharp_constant_three_dimensions():
    assert sharp_constant(NormSpec.euclidean(3), ConeSpec.full(3)) == pytest.approx(J_FULL_3_2, rel=1e-10)


def test_weighted_quarter_plane_constant():
    J = sharp_constant(NormSpec.euclidean(2), ConeSpec.orthant(2, 2), WeightSpec.monomial([1.0]), 1.5)
    assert J == pytest.approx(2.12132034355964257, rel=1e-10)


@pytest.mark.parametrize("n,p", PAIRS)
def test_half_space_ratio(n, p):
    H = NormSpec.euclidean(n)
    ratio = sharp_constant(H, ConeSpec.half(n), p=p) / sharp_constant(H, ConeSpec.full(n), p=p)
    assert ratio == pytest.approx(2 ** (-p / n), rel=1e-10)


@pytest.mark.parametrize("n,p", PAIRS)
@given(lam=st.floats(0.05, 20.0))
@settings(max_examples=15)
def test_dilation_invariance(n, p, lam):
    H, C = NormSpec.euclidean(n), ConeSpec.full(n)
    B = BubbleParams(n, p)
    q0, q1 = quotient(B, H, C), quotient(B.with_(lam=lam), H, C)
    # the two values agree within their own quadrature error estimates
    assert abs(q1.J - q0.J) <= q0.J_err + q1.J_err + 1e-12 * q0.J
    assert abs(q1.J - q0.J) <= 1e-7 * q0.J


@given(t=st.floats(1e-3, 1e3))
@settings(max_examples=15)
def test_amplitude_invariance(t):
    r = graded_grid(1e-3, 1e3, 1.01)
    prof = RadialProfile(r, np.exp(-r**2))
    H, C = NormSpec.euclidean(3), ConeSpec.full(3)
    assert quotient(prof.scaled(t), H, C, p=2.0).J == pytest.approx(quotient(prof, H, C, p=2.0).J, rel=1e-12)


def test_gaussian_is_above_sharp_constant():
    r = graded_grid(1e-3, 1e3, 1.01)
    q = quotient(RadialProfile(r, np.exp(-r**2)), NormSpec.euclidean(3), ConeSpec.full(3), p=2.0)
    assert q.J > J_FULL_3_2 * (1 + 1e-3)


def test_quotient_needs_exponent_for_samples():
    r = graded_grid(1e-3, 1e3, 1.05)
    with pytest.raises(ValueError):
        quotient(RadialProfile(r, np.exp(-r)), NormSpec.euclidean(3), ConeSpec.full(3))
    with pytest.raises(ValueError):
        quotient(RadialProfile(r, 0 * r), NormSpec.euclidean(3), ConeSpec.full(3), p=2.0)


# ---- endgame identities --------------------------------------------------------

@pytest.mark.parametrize("n,p", PAIRS)
def test_identity_v(n, p):
    rep = check_identity_v(BubbleParams(n, p, lam=1.5), NormSpec.euclidean(n), ConeSpec.full(n))
    assert rep.passed and rep.rows[0]["residual"] <= 1e-6


@pytest.mark.parametrize("n,p", PAIRS)
@pytest.mark.parametrize("offset", [0.0, -4.0])
def test_integral_inequality_for_bubble(n, p, offset):
    gamma = 1 - n + offset
    rep = check_integral_inequality(BubbleParams(n, p), NormSpec.euclidean(n), ConeSpec.full(n), gamma=gamma)
    assert rep.passed
    if offset == 0:
        assert any(r["link"] == "equality" for r in rep.rows)


def test_newton_slack_separates_the_bubble():
    # the integrand is a divergence, so its integral vanishes for any decaying radial v;
    # what singles out the bubble is the vanishing Newton slack, i.e. W proportional to Id
    def v_profile(r):
        q = 1 + r * r
        return q**1.2, 2.4 * r * q**0.2, 2.4 * q**0.2 + 0.96 * r * r * q ** -0.8
    rep = check_integral_inequality(BubbleParams(3, 2.0), NormSpec.euclidean(3), ConeSpec.full(3), gamma=-2.0,
                                    v_profile=v_profile)
    bubble = check_integral_inequality(BubbleParams(3, 2.0), NormSpec.euclidean(3), ConeSpec.full(3), gamma=-2.0)
    assert rep.passed and abs(rep.info["value"]) <= rep.info["err"]
    assert rep.info["newton_slack"] > 1.0
    assert abs(bubble.info["newton_slack"]) <= 1e-10


def test_integral_inequality_rejects_large_exponent():
    with pytest.raises(ValueError):
        check_integral_inequality(BubbleParams(3, 2.0), NormSpec.euclidean(3), ConeSpec.full(3), gamma=-1.0)


def test_identities_need_symmetric_norm():
    with pytest.raises(ValueError):
        check_identity_v(BubbleParams(3, 2.0), NormSpec.shifted([0.2, 0, 0]), ConeSpec.full(3))


@pytest.mark.parametrize("n,p", PAIRS)
@pytest.mark.parametrize("version,exponent", [("u", 0.0), ("u", -4.0), ("v", 1.0)])
def test_caccioppoli_slopes(n, p, version, exponent):
    rep = caccioppoli_scaling(BubbleParams(n, p), NormSpec.euclidean(n), ConeSpec.full(n), exponent,
                              version=version)
    row = rep.rows[0]
    assert row["fitted"] <= row["bound"] + 0.05


# ---- perturbations ---------------------------------------------------------------

def test_bump_profile():
    assert smooth_bump(0.0) == 1.0
    assert smooth_bump(np.array([1.0, -1.5])).tolist() == [0.0, 0.0]
    s = np.linspace(-0.9, 0.9, 7)
    h = 1e-6
    np.testing.assert_allclose(smooth_bump_deriv(s), (smooth_bump(s + h) - smooth_bump(s - h)) / (2 * h),
                               rtol=1e-6, atol=1e-9)


def test_ball_sphere_counts():
    assert [ball_sphere_count(n, 24) for n in (2, 3, 4, 5, 6, 8)] == [24, 24, 20, 14, 12, 8]


@pytest.mark.parametrize("cone", [ConeSpec.full(3), ConeSpec.half(3), ConeSpec.circular(3, math.pi / 4)])
def test_bubble_is_a_critical_minimum(cone, rng):
    B = BubbleParams.for_cone(cone, 2.0)
    center = bump_center(cone, rng, 0.3)
    rep = perturbation_test(B, NormSpec.euclidean(3), cone, [RadialBump(1.0, 0.5), LocalBump(center, 0.25)])
    assert rep.passed
    assert all(r["J"] >= r["J0"] * (1 - 1e-8) for r in rep.rows if "kind" not in r)


def test_translation_is_a_symmetry():
    C = ConeSpec.half(3)
    B = BubbleParams.for_cone(C, 2.0)
    e = C.vertex_subspace()[0]
    rep = perturbation_test(B, NormSpec.euclidean(3), C, [Translation(e)], eps_list=(0.1, -0.1))
    inv = [r for r in rep.rows if r.get("kind") == "invariance"]
    assert rep.passed and inv and inv[0]["residual"] <= 1e-8


def test_local_bump_must_stay_inside():
    C = ConeSpec.half(3)
    B = BubbleParams.for_cone(C, 2.0)
    with pytest.raises(ValueError):
        perturbation_test(B, NormSpec.euclidean(3), C, [LocalBump(np.zeros(3), 0.2)])


def test_unknown_direction():
    with pytest.raises(TypeError):
        perturbation_test(BubbleParams(3, 2.0), NormSpec.euclidean(3), ConeSpec.full(3), ["up"])
