import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npc.targets import (Euclidean, HyperbolicPlane, MetricTree, Product, cat0_slack, check_cat0_comparison,
                         check_distance_convexity, check_quadrilateral, farthest_point_probes,
                         quadrilateral_slack, space_from_dict, space_from_json, weighted_barycenter)

SPACES = {
    "euclidean3": lambda: Euclidean(3),
    "tripod": MetricTree.tripod,
    "tree5": lambda: MetricTree.random(np.random.default_rng(3), 5),
    "hyperbolic": HyperbolicPlane,
    "product": lambda: Product(Euclidean(1), MetricTree.tripod()),
}


def leg(e, s):
    return np.array([float(e), float(s)])


def test_tripod_distances():
    T = MetricTree.tripod()
    # edges (0,k) start at the center, so the offset is the distance from it
    assert T.distance(leg(0, 0.3), leg(0, 0.8)) == pytest.approx(0.5)
    assert T.distance(leg(0, 0.3), leg(1, 0.4)) == pytest.approx(0.7)
    assert T.distance(leg(2, 1.0), leg(1, 1.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("a,b,c", [(0.9, 0.1, 0.2), (0.3, 0.4, 0.5), (1.0, 0.0, 0.0)])
def test_tripod_barycenter_closed_form(a, b, c):
    # On leg 0 at height x: Σd² = (a-x)² + (b+x)² + (c+x)², minimized at x = (a-b-c)/3
    T = MetricTree.tripod()
    pts = np.stack([leg(0, a), leg(1, b), leg(2, c)])
    bc = T.barycenter(pts[None])[0]
    x = max((a - b - c) / 3, 0.0)
    assert T.distance(bc, leg(0, x)) == pytest.approx(0.0, abs=1e-10)


def poincare_distance(r1, t1, r2, t2):
    a = math.tanh(r1 / 2) * np.array([math.cos(t1), math.sin(t1)])
    b = math.tanh(r2 / 2) * np.array([math.cos(t2), math.sin(t2)])
    return math.acosh(1 + 2 * np.sum((a - b) ** 2) / ((1 - a @ a) * (1 - b @ b)))


@pytest.mark.parametrize("r1,t1,r2,t2", [(0.5, 0.0, 1.5, 2.0), (2.0, 1.0, 2.0, -1.0), (0.0, 0.0, 3.0, 0.4)])
def test_hyperbolic_distance_matches_poincare_model(r1, t1, r2, t2):
    H = HyperbolicPlane()
    p, q = H.from_polar(r1, t1), H.from_polar(r2, t2)
    assert float(H.distance(p, q)) == pytest.approx(poincare_distance(r1, t1, r2, t2), rel=1e-10)


def test_hyperbolic_symmetric_barycenter_is_center():
    H = HyperbolicPlane()
    pts = H.from_polar(np.full(3, 1.7), np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]))
    bc = H.barycenter(pts[None])[0]
    assert float(H.distance(bc, H.origin())) < 1e-9


def test_euclidean_barycenter_is_weighted_mean():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(6, 3))
    w = rng.uniform(0.1, 2, size=6)
    assert np.allclose(weighted_barycenter(Euclidean(3), pts, w), w @ pts / w.sum())


@pytest.mark.parametrize("name", list(SPACES))
def test_geodesic_midpoint_equidistant(name):
    S = SPACES[name]()
    rng = np.random.default_rng(1)
    p, q = S.random_points(rng, 200), S.random_points(rng, 200)
    m = S.midpoint(p, q)
    d = S.distance(p, q)
    assert np.allclose(S.distance(p, m), d / 2, atol=1e-9)
    assert np.allclose(S.distance(m, q), d / 2, atol=1e-9)


@pytest.mark.parametrize("name", list(SPACES))
def test_distance_convexity(name):
    S = SPACES[name]()
    rng = np.random.default_rng(2)
    rep = check_distance_convexity(S, *(S.random_points(rng, 100) for _ in range(3)))
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("name", list(SPACES))
def test_json_roundtrip(name):
    S = SPACES[name]()
    assert space_from_json(S.to_json()) == S
    rng = np.random.default_rng(4)
    u = S.random_points(rng, 5)
    assert np.allclose(S.field_from_records(S.field_to_records(u)), u)


def test_quadrilateral_equality_and_printed_variant():
    # Collinear configuration where the inequality is an equality; the variant
    # with |ms|² in the last term is violated there.
    E = Euclidean(1)
    p, q, r, s = (np.array([v]) for v in (0.0, 0.0, 2.0, 1.0))
    assert float(quadrilateral_slack(E, p, q, r, s)) == pytest.approx(0.0, abs=1e-12)
    m = E.midpoint(q, r)
    d = E.distance
    lhs = (d(p, s) - d(q, r)) * d(q, r)
    printed = (d(p, m) ** 2 - d(p, q) ** 2 - d(m, q) ** 2) + (d(s, m) ** 2 - d(s, r) ** 2 - d(m, s) ** 2)
    assert float(lhs - printed) < -0.5


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        MetricTree.tripod().validate([[5.0, 0.1]])
    with pytest.raises(ValueError):
        HyperbolicPlane().validate([[2.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        space_from_dict({"kind": "sphere"})


def test_farthest_point_probes_are_spread():
    E = Euclidean(1)
    pts = np.linspace(0, 1, 101)[:, None]
    probes = farthest_point_probes(E, pts, 3)
    assert sorted(probes[:, 0].tolist()) == [0.0, 0.5, 1.0]


@settings(max_examples=25, deadline=None)
@given(name=st.sampled_from(list(SPACES)), seed=st.integers(0, 2**31 - 1))
def test_cat0_and_quadrilateral_property(name, seed):
    S = SPACES[name]()
    rng = np.random.default_rng(seed)
    z, p, q, r = (S.random_points(rng, 64) for _ in range(4))
    t = rng.uniform(0, 1, 64)
    assert check_cat0_comparison(S, z, p, q, t).passed
    assert check_quadrilateral(S, p, q, r, z).passed


def test_euclidean_cat0_slack_is_zero():
    E = Euclidean(3)
    rng = np.random.default_rng(5)
    z, p, q = (E.random_points(rng, 500) for _ in range(3))
    assert np.abs(cat0_slack(E, z, p, q, rng.uniform(0, 1, 500))).max() < 1e-10
