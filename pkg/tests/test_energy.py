import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npc.domain import VertexSubset, build_path, build_torus_grid
from npc.energy import (default_scales, dirichlet_energy, energy_density, ks_density, lip_slope,
                        weak_gradient)
from npc.targets import Euclidean, MetricTree


def linear_path(n=81, h=0.025, a=1.7):
    g = build_path(n, h)
    return g, a * g.positions


def test_dirichlet_energy_of_linear_map():
    n, h, a = 81, 0.025, 1.7
    g, u = linear_path(n, h, a)
    # ½ Σ_edges (1/h)(a h)²
    assert dirichlet_energy(g, Euclidean(1), u) == pytest.approx(0.5 * a**2 * h * (n - 1))


def test_ks_density_matches_ball_sum():
    n, h, a = 81, 0.025, 1.7
    g, u = linear_path(n, h, a)
    r = 4.5 * h
    ks = ks_density(g, Euclidean(1), u, None, r)
    K = 4  # vertices k·h with |k| ≤ 4 lie in the open ball
    k = np.arange(-K, K + 1)
    expected = np.sqrt(np.mean((a * k * h) ** 2)) / r
    assert ks[40] == pytest.approx(expected, rel=1e-12)
    assert ks[0] > 0  # without a region every ball is admissible


def test_energy_density_default_scales_closed_form():
    # At r = (K+½)h the open ball holds |k| ≤ K, so ks²(r) = a²(1/3 - h²/(12 r²)) exactly;
    # e₂² is the intercept of the line through the three smallest scales.
    n, h, a = 81, 0.025, 1.7
    g, u = linear_path(n, h, a)
    prof = energy_density(g, Euclidean(1), u, None)
    r = prof.scales
    closed = a**2 * (1 / 3 - h**2 / (12 * r**2))
    assert np.allclose(prof.ks[:, 40] ** 2, closed, rtol=1e-12)
    intercept = np.polyfit(r[-3:], closed[-3:], 1)[1]
    assert prof.e2[40] ** 2 == pytest.approx(intercept, rel=1e-10)
    assert prof.to_csv().splitlines()[0] == "vertex,scale,ks_density,e2_extrapolated,fit_residual"


def test_energy_density_converges_with_fixed_scales():
    # ks²(r) → a²/3 in one dimension (mean of s² over [-1, 1]); first order in h at fixed r
    errs = []
    for h in (0.01, 0.005, 0.0025):
        n = int(round(1 / h)) + 1
        g = build_path(n, h)
        prof = energy_density(g, Euclidean(1), 1.7 * g.positions, None, scales=[0.2, 0.15, 0.1, 0.05])
        errs.append(abs(prof.e2[n // 2] ** 2 / (1.7**2 / 3) - 1))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_energy_density_respects_region():
    g, u = linear_path()
    mask = np.zeros(g.vertex_count, dtype=bool)
    mask[20:61] = True
    prof = energy_density(g, Euclidean(1), u, VertexSubset.from_mask(g, mask))
    assert not prof.valid[21] and prof.valid[40]


def test_scale_validation():
    g, u = linear_path()
    with pytest.raises(ValueError):
        energy_density(g, Euclidean(1), u, None, scales=[0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        energy_density(g, Euclidean(1), u, None, scales=[0.2, 0.1])
    assert np.allclose(default_scales(g), np.array([6.5, 5.5, 4.5, 3.5]) * 0.025)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_weak_gradient_never_exceeds_lip(seed):
    rng = np.random.default_rng(seed)
    g = build_torus_grid(6, 6, 0.5)
    T = MetricTree.tripod()
    u = T.random_points(rng, g.vertex_count)
    wg = weak_gradient(g, T, u)
    assert np.all(wg <= lip_slope(g, T, u) + 1e-12)
