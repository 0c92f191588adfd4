import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npc import hopflax as HL
from npc.domain import build_path, build_torus_grid
from npc.energy import lip_slope
from npc.report import DIAGNOSTIC, EXACT, PRECONDITION
from npc.targets import Euclidean


def brute_q(g, f, t):
    D = g.distance_matrix()
    return np.min(f[None, :] + D**2 / (2 * t), axis=1)


def test_hopf_lax_three_vertex_example():
    g = build_path(3, 1.0)
    q = HL.hopf_lax(g, np.array([0.0, 10.0, 10.0]), 1.0)
    assert q[1] == pytest.approx(0.5)
    assert HL.prox_map(g, np.array([0.0, 10.0, 10.0]), 1.0).minimizer[1] == 0


def test_hopf_lax_limits():
    g = build_path(6, 0.5)
    f = np.arange(6.0) ** 2
    assert np.array_equal(HL.hopf_lax(g, f, 0.0), f)
    assert np.all(HL.hopf_lax(g, f, np.inf) == 0.0)


def test_symmetric_two_minimizer_example():
    g = build_path(3, 1.0)
    table = np.zeros((3, 3))
    table[1] = [-5.0, 0.0, -5.0]
    res = HL.two_var_evolve(g, HL.TwoVarFunction(table, validate=False), 100.0)
    assert res.argmin[1].tolist() == [0, 2]
    assert res.d_minus[1] == res.d_plus[1] == 1.0


def test_from_potential_cross_validates_against_scalar_semigroup():
    g = build_path(40, 0.1)
    h = np.sin(3 * g.positions[:, 0])
    res = HL.two_var_evolve(g, HL.TwoVarFunction.from_potential(h), 0.3)
    assert np.allclose(res.f_t + h, HL.hopf_lax(g, h, 0.3), atol=1e-14)


def test_reverse_triangle_validation():
    with pytest.raises(ValueError):
        HL.TwoVarFunction([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        HL.TwoVarFunction(np.ones((2, 3)))
    HL.TwoVarFunction(-build_path(5, 1.0).distance_matrix())


def test_tilt_examples():
    g = build_path(11, 0.1)
    assert HL.tilt(g, HL.TwoVarFunction.from_metric(g), 5) == pytest.approx(1.0)
    u = 2.5 * g.positions
    F = HL.TwoVarFunction.from_map(g, Euclidean(1), u)
    assert np.allclose(HL.tilt_field(g, F), lip_slope(g, Euclidean(1), u))
    assert HL.tilt(g, HL.TwoVarFunction(np.zeros((11, 11))), 3) == 0.0
    with pytest.raises(ValueError):
        HL.tilt(g, F, 3, radius=0.01)


def test_time_derivative_for_unique_minimizer_at_distance_one():
    # f(x, y) = -d(x, y) on a long path: D = t at every vertex away from the ends
    g = build_path(201, 0.01)
    F = HL.TwoVarFunction.from_metric(g)
    rep = HL.check_time_derivative(g, F, 100, 0.5, 0.01)
    assert rep.passed, rep.summary()


def test_dpm_monotonicity_and_slope_bound():
    g = build_path(120, 0.05)
    rng = np.random.default_rng(0)
    u = np.cumsum(rng.normal(size=(120, 1)), axis=0) * 0.05
    F = HL.TwoVarFunction.from_map(g, Euclidean(1), u)
    assert HL.check_dpm_monotonicity(g, F, [0.1, 0.2, 0.4, 0.8]).passed
    assert HL.check_slope_bound(g, F, 0.3).passed
    assert HL.check_integral_bound(g, F, 0.3).passed


def test_duality_on_negative_distance():
    g = build_path(400, 0.025)
    rep = HL.check_duality(g, HL.TwoVarFunction.from_metric(g), 200)
    assert rep.passed
    assert rep.measured["half_tilt_sq"] == pytest.approx(0.5)


def test_lip_bound_and_oscillation_random_path():
    g = build_path(50, 0.1)
    f = np.random.default_rng(1).normal(size=50)
    for t in (1.0, 2.0):
        assert HL.check_hopflax_lip(g, f, t).passed
        assert HL.check_oscillation(g, f, t).passed
    assert HL.check_semigroup_inequality(g, f, 0.3, 0.7).passed


def test_hamilton_jacobi_smooth():
    g = build_path(201, 0.01)
    f = np.cos(np.pi * g.positions[:, 0])
    rep = HL.check_hamilton_jacobi(g, f, 0.2, 0.01)
    assert rep.passed, rep.summary()


def test_quadratic_prox_closed_form():
    g = build_path(401, 0.01, origin=-2.0)
    x = g.positions[:, 0]
    a, T = 1.0, 0.5
    prox = HL.prox_map(g, a * x**2 / 2, T)
    inner = np.abs(x) <= 0.8
    assert np.abs(x[prox.minimizer] - x / (1 + a * T))[inner].max() <= 0.01
    assert np.abs(prox.smoothed_density[inner] - (1 + a * T)).max() < 1e-3
    assert HL.check_prox_identities(g, prox).passed
    rep = HL.check_pushforward_bound(g, prox, C=a, region=inner)
    assert rep.passed and rep.measured["max_density"] <= np.exp(a * T)


def test_pushforward_precondition():
    g = build_path(50, 0.1)
    f = g.positions[:, 0] ** 2  # Δf = 2 in the interior
    rep = HL.check_pushforward_bound(g, HL.prox_map(g, f, 0.5), C=1.0)
    assert rep.gate == PRECONDITION and not rep.passed


def test_key_pointwise_bound_flat_and_curved():
    g = build_path(60, 0.05)
    f = np.sin(4 * g.positions[:, 0])
    rep = HL.check_key_pointwise_bound(g, f, 0.2, [0.0, 0.01, 0.1])
    assert rep.gate == EXACT and rep.passed
    rep = HL.check_key_pointwise_bound(g, f, 0.2, [0.01], K=-1.0)
    assert rep.gate == DIAGNOSTIC and rep.passed


def test_result_serialization():
    g = build_path(8, 0.5)
    F = HL.TwoVarFunction.from_metric(g)
    res = HL.two_var_evolve(g, F, 0.7)
    back = HL.HopfLaxResult.from_dict(res.to_dict())
    assert np.array_equal(back.f_t, res.f_t) and [a.tolist() for a in back.argmin] == [a.tolist() for a in res.argmin]
    csv = HL.sweep_to_csv(HL.time_sweep(g, F, [0.5, 1.0]))
    assert csv.splitlines()[0] == "t,vertex,f_t,Dminus,Dplus,argmin_count"
    assert len(csv.splitlines()) == 1 + 2 * 8
    prox = HL.prox_map(g, np.cos(g.positions[:, 0]), 0.3)
    p2 = HL.ProxResult.from_dict(prox.to_dict())
    assert np.array_equal(p2.minimizer, prox.minimizer)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.01, 5.0), s=st.floats(0.01, 5.0))
def test_scalar_semigroup_properties(seed, t, s):
    g = build_torus_grid(5, 5, 0.4)
    f = np.random.default_rng(seed).normal(size=25)
    q = HL.hopf_lax(g, f, t)
    assert np.allclose(q, brute_q(g, f, t), rtol=0, atol=1e-12)
    assert np.all(q <= f + 1e-15)
    assert np.all(HL.hopf_lax(g, f, t + s) <= q + 1e-12)  # non-increasing in t
    assert HL.check_semigroup_inequality(g, f, t, s).passed
    assert HL.check_oscillation(g, f, t).passed
