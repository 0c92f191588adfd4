import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from npc import hopflax as HL
from npc.domain import VertexSubset, build_path, build_torus_grid
from npc.estimators import (EnergyDensityEstimator, HarmonicMapSolver, HeatSemigroupTransformer,
                            HopfLaxTransformer, ProxEstimator, ScenarioVerifier)
from npc.laplacian import heat_semigroup
from npc.scenario import standard_scenarios
from npc.solver import DirichletProblem, solve_dirichlet
from npc.targets import Euclidean, MetricTree


def ends(g):
    return VertexSubset.from_mask(g, np.ones(g.vertex_count, dtype=bool), boundary=[0, g.vertex_count - 1])


def test_params_and_clone():
    est = HarmonicMapSolver(space=Euclidean(1), tolerance=1e-9)
    assert est.get_params()["tolerance"] == 1e-9
    est.set_params(mode="jacobi")
    c = clone(est)
    assert c.mode == "jacobi" and c.space == Euclidean(1)
    assert set(HopfLaxTransformer().get_params()) == {"t"}


def test_harmonic_map_solver_matches_functional_core():
    g = build_path(21, 0.05)
    T = MetricTree.tripod()
    bnd = np.array([[0.0, 0.5], [2.0, 1.0]])
    est = HarmonicMapSolver(space=T).fit(g, bnd, region=ends(g))
    ref = solve_dirichlet(DirichletProblem(g, ends(g), T, bnd))
    assert np.allclose(est.transform(), ref.u)
    assert np.allclose(est.predict([3, 4]), ref.u[[3, 4]])
    assert est.converged_ and est.score() < 0
    est2 = HarmonicMapSolver().fit_problem(DirichletProblem(g, ends(g), T, bnd))
    assert np.allclose(est2.u_, ref.u)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        HarmonicMapSolver(space=Euclidean(1)).transform()
    with pytest.raises(NotFittedError):
        HopfLaxTransformer().transform(np.zeros(3))


def test_row_transformers():
    g = build_torus_grid(5, 5, 0.4)
    F = np.random.default_rng(0).normal(size=(3, 25))
    heat = HeatSemigroupTransformer(t=0.1).fit(g)
    assert np.allclose(heat.transform(F), heat_semigroup(g, F.T, 0.1).T)
    hl = HopfLaxTransformer(t=0.5).fit(g)
    out = hl.transform(F)
    assert out.shape == (3, 25)
    assert np.allclose(out[1], HL.hopf_lax(g, F[1], 0.5))
    assert hl.transform(F[0]).shape == (25,)
    with pytest.raises(ValueError):
        hl.transform(np.zeros((2, 7)))


def test_prox_estimator():
    g = build_path(3, 1.0)
    est = ProxEstimator(T=1.0).fit(g, np.array([0.0, 10.0, 10.0]))
    assert est.predict([1]).tolist() == [0]
    assert est.transform([1])[0] == pytest.approx(0.5)


def test_energy_density_estimator():
    g = build_path(81, 0.025)
    u = 1.7 * g.positions
    est = EnergyDensityEstimator(space=Euclidean(1)).fit(g, u)
    assert np.allclose(est.transform(u), est.profile_.e2)
    assert np.allclose(est.transform(2 * u), 2 * est.profile_.e2)  # homogeneity under dilation


def test_scenario_verifier():
    sc = standard_scenarios()["path-tripod"]
    v = ScenarioVerifier(checks=["subharmonicity", "rademacher"]).fit(sc.to_dict())
    assert v.predict().tolist() == [True, True, True]
    assert v.score() == 1.0 and v.hard_passed
