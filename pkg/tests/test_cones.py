import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisocone.cones import (ConeSpec, NonSmoothBoundaryError, WeightSpec, direction_quadrature,
                             sector_measure, sphere_area, sphere_rule)
from anisocone.norms import NormSpec

CONES = {
    "full": ConeSpec.full(3),
    "half": ConeSpec.half(3),
    "orthant": ConeSpec.orthant(3, 2),
    "circular": ConeSpec.circular(3, math.pi / 4),
    "product": ConeSpec.product(1, ConeSpec.circular(2, math.pi / 3)),
}

pts = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_membership_examples():
    assert not ConeSpec.half(3).contains(np.array([1.0, 0.0, -1.0]))
    assert ConeSpec.orthant(2, 2).contains(np.array([1.0, 2.0]))
    c = ConeSpec.circular(3, math.pi / 4)
    assert c.contains(np.array([0.0, 0.0, 1.0]))
    assert not c.contains(np.array([1.0, 0.0, 0.0]))


def test_outward_normals():
    np.testing.assert_allclose(ConeSpec.half(3).normal_at(np.array([1.0, 0.0, 0.0])), [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(ConeSpec.orthant(2, 2).normal_at(np.array([1.0, 0.0])), [0, -1], atol=1e-15)
    x = np.array([1.0, 0.0, 1.0]) / math.sqrt(2)
    nu = ConeSpec.circular(3, math.pi / 4).normal_at(x)
    assert abs(nu @ x) < 1e-15 and np.linalg.norm(nu) == pytest.approx(1.0)


@pytest.mark.parametrize("name", CONES)
@given(x=pts, t=st.floats(1e-3, 1e3))
def test_membership_is_dilation_invariant(name, x, t):
    C = CONES[name]
    assert bool(C.contains(x)) == bool(C.contains(t * x))


@pytest.mark.parametrize("name", ["half", "orthant", "circular", "product"])
def test_normals_orthogonal_to_boundary_points(name, rng):
    C = CONES[name]
    x = C.sample_boundary(200, rng)
    nu = np.array([C.normal_at(xi) for xi in x])
    assert np.abs(np.sum(nu * x, axis=1)).max() <= 1e-12


def test_full_space_has_no_boundary(rng):
    with pytest.raises(NonSmoothBoundaryError):
        ConeSpec.full(3).sample_boundary(3, rng)


@pytest.mark.parametrize("alpha", [0.3, math.pi / 4, 1.2])
def test_circular_shape_operator_psd(alpha, rng):
    C = ConeSpec.circular(3, alpha)
    for x in C.sample_boundary(50, rng):
        assert np.linalg.eigvalsh(C.shape_operator(x)).min() >= -1e-12


@pytest.mark.parametrize("name, expected", [
    ("full", 4 * math.pi / 3),
    ("half", 2 * math.pi / 3),
    ("circular", 2 * math.pi / 3 * (1 - math.sqrt(2) / 2)),
])
def test_sector_measure_closed_forms(name, expected):
    assert sector_measure(CONES[name], NormSpec.euclidean(3)).value == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("name, expected", [
    ("half", 2 * math.pi / 3),
    ("orthant", math.pi / 3),
    ("circular", 2 * math.pi / 3 * (1 - math.sqrt(2) / 2)),
])
def test_sector_measure_monte_carlo(name, expected):
    m = sector_measure(CONES[name], NormSpec.euclidean(3), method="mc", samples=1_000_000, seed=3)
    assert abs(m.value - expected) <= 3 * m.stderr


def test_sector_measure_threads_do_not_change_result():
    H = NormSpec.blend(3, 4.0, 0.5)
    a = sector_measure(CONES["half"], H, method="mc", samples=200_000, seed=1, threads=1)
    b = sector_measure(CONES["half"], H, method="mc", samples=200_000, seed=1, threads=4)
    assert a.value == b.value


def test_quadratic_sector_measure_is_ellipsoid_volume():
    A = np.diag([1.0, 4.0, 9.0])
    # {z : z^T A^-1 z <= 1} has volume 4/3 pi sqrt(det A)
    m = sector_measure(ConeSpec.full(3), NormSpec.quadratic(A), method="mc", samples=400_000)
    assert abs(m.value - 4 * math.pi / 3 * 6) <= 3 * m.stderr


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("kind", ["full", "half", "circular"])
def test_direction_rules_integrate_solid_angle(n, kind):
    C = {"full": ConeSpec.full(n), "half": ConeSpec.half(n), "circular": ConeSpec.circular(n, 0.7)}[kind]
    d, w = direction_quadrature(C, 16)
    assert w.sum() == pytest.approx(sphere_area(n) * C.direction_fraction(), rel=1e-12)
    assert np.all(C.contains(d, tol=1e-12))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_sphere_rule_second_moments(n):
    d, w = sphere_rule(n, 10)
    M = (d * w[:, None]).T @ d
    np.testing.assert_allclose(M, np.eye(n) * sphere_area(n) / n, atol=1e-12)


@given(exps=st.lists(st.floats(0.1, 3.0), min_size=1, max_size=3), t=st.floats(0.01, 100.0))
def test_weight_homogeneity(exps, t):
    w = WeightSpec.monomial(exps)
    x = np.array([0.7, 1.3, 0.4])[: max(len(exps), 1)]
    x = np.concatenate([x, np.ones(3 - len(x))])
    assert w.eval(t * x) == pytest.approx(t ** w.degree * w.eval(x), rel=1e-12)


@given(exps=st.lists(st.floats(0.1, 3.0), min_size=1, max_size=3),
       s=st.floats(0.0, 1.0))
def test_weight_root_concave_on_segments(exps, s):
    w = WeightSpec.monomial(exps)
    x, y = np.array([0.3, 1.1, 2.0]), np.array([1.7, 0.2, 0.9])
    g = lambda z: w.eval(z) ** (1 / w.degree)
    assert g(s * x + (1 - s) * y) >= s * g(x) + (1 - s) * g(y) - 1e-12


def test_weight_must_fit_cone():
    with pytest.raises(ValueError):
        WeightSpec.monomial([1.0, 1.0]).check_cone(ConeSpec.half(3))


def test_lineality_and_centers():
    assert ConeSpec.full(3).lineality == 3
    assert ConeSpec.half(3).lineality == 2
    assert CONES["circular"].lineality == 0
    np.testing.assert_allclose(CONES["circular"].project_vertex(np.array([1.0, 2.0, 3.0])), 0.0)
    np.testing.assert_allclose(ConeSpec.half(3).project_vertex(np.array([1.0, 2.0, 3.0])), [1, 2, 0], atol=1e-15)


def test_serialization_roundtrip():
    for C in CONES.values():
        D = ConeSpec.from_dict(C.to_dict())
        x = np.array([[0.2, 0.5, 1.0], [1.0, -0.5, 0.3]])
        np.testing.assert_array_equal(C.contains(x), D.contains(x))
