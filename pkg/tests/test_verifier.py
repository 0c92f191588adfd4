import numpy as np
import pytest

from npc import verifier as V
from npc.domain import VertexSubset, build_path, build_torus_grid
from npc.report import EXACT, PRECONDITION, TREND
from npc.scenario import boundary_field, moser_instance, seam_region, standard_scenarios
from npc.solver import DirichletProblem, solve_dirichlet
from npc.targets import Euclidean, HyperbolicPlane, MetricTree


@pytest.fixture(scope="module")
def tripod_torus():
    built, res = standard_scenarios()["torus-tripod"].solve(0)
    return built, res.u


def test_hop_depth_on_path():
    g = build_path(9, 1.0)
    U = VertexSubset.from_mask(g, np.ones(9, dtype=bool), boundary=[0, 8])
    assert V.hop_depth(g, U).tolist() == [0, 1, 2, 3, 4, 3, 2, 1, 0]


def test_subharmonicity_passes_on_solution(tripod_torus):
    b, u = tripod_torus
    rep = V.check_subharmonicity(b.graph, b.space, u, b.region)
    assert rep.passed and rep.gate == EXACT
    assert rep.measured["probes"] == 32


def test_unsolved_map_is_a_precondition_failure():
    g = build_torus_grid(8, 8, 0.125)
    U = seam_region(g, 8, 8)
    T = MetricTree.tripod()
    u = T.random_points(np.random.default_rng(0), g.vertex_count)
    rep = V.check_subharmonicity(g, T, u, U)
    assert rep.gate == PRECONDITION and not rep.passed


def test_euclidean_zzz_exact_on_flat_grid():
    g = build_torus_grid(24, 24, 1 / 24)
    U = seam_region(g, 24, 24)
    E = Euclidean(2)
    res = solve_dirichlet(DirichletProblem(g, U, E, boundary_field(E, g, "smooth", 2, period=(1.0, 1.0))))
    rep = V.check_zzz(g, E, res.u, U)
    assert rep.passed and rep.measured["violation_fraction"] == 0.0


def test_rademacher_and_local_estimates(tripod_torus):
    b, u = tripod_torus
    g, S, U = b.graph, b.space, b.region
    assert V.check_rademacher(g, S, u, U).passed
    for fn in (V.check_local_boundedness, V.check_reverse_poincare, V.check_lipschitz_estimate):
        assert fn(g, S, u, U, b.center, b.radius).gate == TREND
    rep = V.check_lipschitz_estimate(g, S, u, U, b.center, b.radius)
    assert np.isfinite(rep.measured["C_emp"]) and rep.measured["C_emp"] > 0
    assert not V.check_reverse_poincare(g, S, u, U, b.center, b.radius, bound=1e-9).passed


def test_auxiliary_split(tripod_torus):
    b, u = tripod_torus
    rep = V.check_auxiliary_split(b.graph, b.space, u, b.region, b.center, b.radius)
    assert rep.passed, rep.summary()
    assert rep.measured["equality_defect"] <= 1e-12


def test_split_identity_at_base_pair():
    g = build_path(30, 0.1)
    H = HyperbolicPlane()
    u = H.from_polar(np.linspace(0.1, 2.0, 30), np.linspace(0, 1, 30))
    region = np.ones(30, dtype=bool)
    F1 = V.split_function(g, H, u, region, 5, 20)
    F2 = V.split_function(g, H, u, region, 20, 5)
    # F(z) = (d²(u(z),u(x̄)) - d²(u(z),p) + ¼d²)/d with p the midpoint: 0 at x̄ and d at ȳ
    d = float(H.distance(u[5], u[20]))
    assert F1[5] == pytest.approx(0.0, abs=1e-12)
    assert F2[20] == pytest.approx(0.0, abs=1e-12)
    assert F1[20] == pytest.approx(d, rel=1e-10)


def test_moser_conclusion_with_frozen_constants():
    inst = moser_instance("path", 101, "subsolution")
    rep = V.check_moser_conclusion(inst["graph"], inst["f"], inst["region"], inst["center"], inst["alpha"],
                                   inst["beta"], inst["R"], family="path")
    assert rep.passed, rep.summary()


def test_moser_rejects_non_subsolution():
    inst = moser_instance("torus", 100, "subsolution")
    rep = V.check_moser_conclusion(inst["graph"], inst["f"], inst["region"], inst["center"], 0.0, 0.0,
                                   inst["R"], family="torus")
    assert rep.gate == PRECONDITION and not rep.passed


def test_calibration_file_shape():
    cal = V.load_calibration()
    assert set(cal["moser"]) == {"torus", "path", "hyperbolic"}
    assert cal["safety"] == 1.5 and cal["fresh_seeds"] == [100, 101, 102, 103, 104]
    for key in ("reverse_poincare", "lipschitz_estimate", "local_boundedness"):
        assert set(cal[key]) == set(standard_scenarios())
