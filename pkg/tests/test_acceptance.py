"""Acceptance suite: one test group per criterion, each at its stated tolerance.

Every part records a pass/fail line through the ``criterion`` fixture; the
terminal summary prints one line per criterion.
"""

from functools import lru_cache

import numpy as np
import pytest

from npc import hopflax as HL
from npc import verifier as V
from npc.domain import build_path, build_torus_grid
from npc.laplacian import (LaplacianBoundClaim, check_duhamel_bound, check_heat_symmetry, check_maximum_principle,
                           check_min_stability, laplacian_apply)
from npc.scenario import (FRESH_SEEDS, boundary_field, moser_instance, refine, run_checks, seam_region,
                          smooth_scalars, standard_scenarios)
from npc.solver import DirichletProblem, linear_oracle, solve_dirichlet
from npc.targets import (Euclidean, HyperbolicPlane, MetricTree, Product, cat0_slack, check_cat0_comparison,
                         check_quadrilateral)

SAMPLES = 10_000
SPACES = {
    "euclidean3": lambda: Euclidean(3),
    "tripod": MetricTree.tripod,
    "tree5": lambda: MetricTree.random(np.random.default_rng(5), 5),
    "hyperbolic": HyperbolicPlane,
    "product": lambda: Product(Euclidean(1), MetricTree.tripod()),
}
SCENARIOS = list(standard_scenarios())


@lru_cache(maxsize=None)
def study(name):
    """Three-level refinement of a standard scenario, restricted to the constants under test."""
    return refine(standard_scenarios()[name], 3, ["reverse_poincare", "lipschitz_estimate", "zzz"])


# 1 -------------------------------------------------------------------------


@pytest.mark.parametrize("name", list(SPACES))
def test_c01_cat0_comparison(criterion, name):
    S = SPACES[name]()
    rng = np.random.default_rng(1)
    z, p, q = (S.random_points(rng, SAMPLES) for _ in range(3))
    t = rng.uniform(0, 1, SAMPLES)
    rep = check_cat0_comparison(S, z, p, q, t)
    ok = rep.passed and rep.measured["min_slack"] >= -1e-9
    detail = f"min slack {rep.measured['min_slack']:.3e}"
    if name == "euclidean3":
        dev = float(np.abs(cat0_slack(S, z, p, q, t)).max())
        ok &= dev <= 1e-10
        detail += f", max |slack| {dev:.3e}"
    criterion(1, "CAT(0) comparison, 1e4 samples per space", name, ok, detail)


# 2 -------------------------------------------------------------------------


@pytest.mark.parametrize("name", list(SPACES))
def test_c02_quadrilateral(criterion, name):
    S = SPACES[name]()
    rng = np.random.default_rng(2)
    p, q, r, s = (S.random_points(rng, SAMPLES) for _ in range(4))
    rep = check_quadrilateral(S, p, q, r, s)
    criterion(2, "quadrilateral inequality, 1e4 samples per space", name,
              rep.passed and rep.measured["min_slack"] >= -1e-9, f"min slack {rep.measured['min_slack']:.3e}")


# 3 -------------------------------------------------------------------------


def test_c03_solver_matches_oracle(criterion):
    g = build_torus_grid(32, 32, 1.0)
    U = seam_region(g, 32, 32)
    S = Euclidean(2)
    worst_dist, worst_res, rises = 0.0, 0.0, 0
    for seed in range(10):
        p = DirichletProblem(g, U, S, boundary_field(S, g, "random", seed))
        res = solve_dirichlet(p)
        assert res.converged
        worst_dist = max(worst_dist, float(np.max(S.distance(res.u, linear_oracle(p)))))
        worst_res = max(worst_res, res.residual)
        rises += int(np.sum(np.diff(np.asarray(res.energy_trace)) > 0))
    ok = worst_dist <= 1e-6 and worst_res <= 1e-10 and rises == 0
    criterion(3, "Euclidean solver against the direct solve", "10 seeds", ok,
              f"max distance {worst_dist:.2e}, max residual {worst_res:.2e}, energy rises {rises}")


# 4 -------------------------------------------------------------------------


@pytest.mark.parametrize("space", [MetricTree.tripod, HyperbolicPlane], ids=["tripod", "hyperbolic"])
def test_c04_subharmonicity(criterion, space):
    S = space()
    g = build_torus_grid(32, 32, 1 / 32)
    U = seam_region(g, 32, 32)
    res = solve_dirichlet(DirichletProblem(g, U, S, boundary_field(S, g, "smooth", 0, period=(1.0, 1.0))))
    rep = V.check_subharmonicity(g, S, res.u, U)
    ok = res.converged and rep.passed and rep.hard and rep.measured["probes"] == 32
    criterion(4, "subharmonicity of d(u, p), 32 probes", type(S).__name__, ok,
              f"net violation {rep.max_violation:.2e}, raw min Laplacian {rep.measured['min_laplacian']:.2e}")


# 5 -------------------------------------------------------------------------


@pytest.mark.parametrize("graph", ["path", "torus"])
def test_c05_heat_calculus(criterion, graph):
    g = build_path(50, 0.1) if graph == "path" else build_torus_grid(16, 16, 0.25)
    rng = np.random.default_rng(5)
    failures = []
    for k in range(20):
        f, h, f2 = rng.normal(size=(3, g.vertex_count))
        t = float(rng.uniform(0.01, 2.0))
        lap1, lap2 = laplacian_apply(g, f), laplacian_apply(g, f2)
        slack1, slack2 = rng.uniform(0, 1, (2, g.vertex_count))
        reps = [
            check_heat_symmetry(g, f, h, t),
            check_maximum_principle(g, f, t, lower=f - rng.uniform(0, 1, g.vertex_count)),
            check_duhamel_bound(g, LaplacianBoundClaim(f, lap1 + slack1), t),
            check_duhamel_bound(g, LaplacianBoundClaim(f, lap1 - slack1, direction="lower"), t),
            check_min_stability(g, f, f2, lap1 + slack1, lap2 + slack2),
        ]
        failures += [f"field {k}: {r.summary()}" for r in reps if not r.passed]
    criterion(5, "heat calculus gates, 20 random fields", graph, not failures,
              "; ".join(failures) or "symmetry, maximum principle, Duhamel and min-stability hold")


# 6 -------------------------------------------------------------------------


def test_c06_hopf_lax(criterion):
    g = build_path(200, 0.05)
    x = g.positions[:, 0]
    rng = np.random.default_rng(6)
    failures = []
    for k in range(10):
        f = rng.normal(size=g.vertex_count) if k % 2 else smooth_scalars(x, rng, 1)[:, 0]
        for t in (0.05, 0.5, 2.0):
            for rep in (HL.check_oscillation(g, f, t), HL.check_hopflax_lip(g, f, t)):
                if not rep.passed:
                    failures.append(f"field {k}, t={t}: {rep.summary()}")
    judged = 0
    for k in range(3):
        u = smooth_scalars(x, rng, 1)
        F = HL.TwoVarFunction.from_map(g, Euclidean(1), u)
        der = HL.check_time_derivative(g, F, None, 0.5, 0.01)
        mono = HL.check_dpm_monotonicity(g, F, [0.1, 0.25, 0.5, 1.0, 2.0])
        judged += der.measured["judged"]
        failures += [f"map {k}: {r.summary()}" for r in (der, mono) if not r.passed]
    F = HL.TwoVarFunction.from_metric(g)
    der = HL.check_time_derivative(g, F, None, 0.5, 0.01)
    judged += der.measured["judged"]
    failures += [f"-d: {r.summary()}" for r in (der, HL.check_dpm_monotonicity(g, F, [0.1, 0.5, 1.0])) if not r.passed]
    criterion(6, "Hopf-Lax gates on path(200, 0.05)", "all", not failures and judged > 0,
              "; ".join(failures) or f"derivative judged at {judged} single-minimizer vertices")


# 7 -------------------------------------------------------------------------


def test_c07_duality(criterion):
    g = build_path(400, 0.025)
    rep = HL.check_duality(g, HL.TwoVarFunction.from_metric(g), 200, rtol=0.10)
    m = rep.measured
    criterion(7, "tilt duality within 10%", "f = -d", rep.passed,
              f"1/2 tilt^2 {m['half_tilt_sq']:.4f}, -f_t/t {m['minus_f_over_t']:.4f}, "
              f"D-^2/2t^2 {m['dminus']:.4f}, D+^2/2t^2 {m['dplus']:.4f}")


# 8 -------------------------------------------------------------------------


@pytest.mark.parametrize("name", SCENARIOS)
def test_c08_prox_identities_on_scenarios(criterion, name):
    built = standard_scenarios()[name].build(0)
    g = built.graph
    rng = np.random.default_rng(8)
    failures = []
    for T in (0.05, 0.5):
        f = smooth_scalars(g.positions, rng, 1)[:, 0]
        rep = HL.check_prox_identities(g, HL.prox_map(g, f, T))
        if not rep.passed:
            failures.append(f"T={T}: {rep.summary()}")
    criterion(8, "variational principle", f"identities on {name}", not failures,
              "; ".join(failures) or "minimal value and range hold")


def test_c08_quadratic_prox(criterion):
    g = build_path(401, 0.01, origin=-2.0)
    x = g.positions[:, 0]
    a, T = 1.0, 0.5
    prox = HL.prox_map(g, a * x**2 / 2, T)
    inner = np.abs(x) <= 0.8
    err = float(np.abs(prox.smoothed_density[inner] - (1 + a * T)).max())
    rep = HL.check_pushforward_bound(g, prox, C=a, region=inner)
    top = rep.measured["max_density"]
    criterion(8, "variational principle", "quadratic prox density", err <= 1e-3 and top <= np.exp(a * T),
              f"max |density - 1.5| {err:.2e}, max density {top:.5f} <= e^0.5 = {np.exp(a * T):.5f}")


def test_c08_prox_multiplicity(criterion):
    g = build_path(401, 0.01, origin=-2.0)
    fracs = []
    for seed in range(10):
        f = smooth_scalars(g.positions, np.random.default_rng(seed), 1)[:, 0]
        fracs.append(float(np.mean(HL.prox_map(g, f, 0.5).multiplicity == 1)))
    criterion(8, "variational principle", "multiplicity one", min(fracs) >= 0.99,
              f"smallest unique fraction {min(fracs):.4f} over 10 fields")


# 9 -------------------------------------------------------------------------


def cosine_series(x, x0, L, seed, modes=4):
    """Random cosine series with zero slope at both ends of ``[x0, x0 + L]``."""
    k = np.arange(1, modes + 1)
    a = np.random.default_rng(seed).normal(size=modes) / k**2
    return np.cos(np.pi * np.outer(x - x0, k) / L) @ a


def test_c09_pushforward_bound(criterion):
    L, T = 4.0, 0.5
    failures, ratios = [], []
    for seed in range(5):
        usage = []
        for h in (0.04, 0.02, 0.01):
            g = build_path(int(round(L / h)) + 1, h, origin=-2.0)
            f = cosine_series(g.positions[:, 0], -2.0, L, seed)
            C = float(laplacian_apply(g, f).max())
            rep = HL.check_pushforward_bound(g, HL.prox_map(g, f, T), C=C, allowance=0.25)
            usage.append(rep.measured["allowance_usage"])
            ratios.append(rep.measured["max_density"] / rep.measured["bound"])
            if not rep.passed:
                failures.append(f"seed {seed}, h={h}: {rep.summary()}")
        if np.any(np.diff(usage) > 0):
            failures.append(f"seed {seed}: allowance usage {usage} increases under refinement")
    criterion(9, "pushforward density bound", "5 fields x 3 meshes", not failures,
              "; ".join(failures) or f"largest density/bound {max(ratios):.3f}")


# 10 ------------------------------------------------------------------------


@pytest.mark.parametrize("name", SCENARIOS)
def test_c10_constants_stable_under_refinement(criterion, name):
    st = study(name)
    parts = []
    for key in ("reverse_poincare", "lipschitz_estimate"):
        vals = st.constants[key]
        var = st.variation(key)
        parts.append((bool(np.all(np.isfinite(vals))) and var < 2, f"{key} {np.round(vals, 3).tolist()} x{var:.2f}"))
    criterion(10, "reverse Poincare and Lipschitz constants", f"refinement {name}",
              all(p for p, _ in parts), ", ".join(d for _, d in parts))


@pytest.mark.parametrize("name", SCENARIOS)
def test_c10_frozen_constants_on_fresh_seeds(criterion, name):
    sc = standard_scenarios()[name]
    failures, worst = [], {}
    for seed in FRESH_SEEDS:
        _, _, reps = run_checks(sc.with_seed(seed), 0, ["reverse_poincare", "lipschitz_estimate"])
        for r in reps:
            if r.name == "solve":
                continue
            bound = r.measured["bound"]
            if bound is None or not r.passed:
                failures.append(f"seed {seed}: {r.summary()}")
                continue
            key = "c_emp" if r.name == "reverse_poincare" else "C_emp"
            worst[r.name] = max(worst.get(r.name, 0.0), r.measured[key] / bound)
    criterion(10, "reverse Poincare and Lipschitz constants", f"fresh seeds {name}", not failures,
              "; ".join(failures) or ", ".join(f"{k} at {v:.0%} of frozen" for k, v in worst.items()))


# 11 ------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["torus-euclidean", "torus-tripod"])
def test_c11_zzz(criterion, name):
    st = study(name)
    v = st.constants["zzz_fraction"]
    criterion(11, "ZZZ violation fraction", name, st.non_increasing("zzz_fraction") and v[-1] <= 0.05,
              f"fractions {v}")


# 12 ------------------------------------------------------------------------


@pytest.mark.parametrize("name", SCENARIOS)
def test_c12_rademacher(criterion, name):
    built, res = standard_scenarios()[name].solve(0)
    rep = V.check_rademacher(built.graph, built.space, res.u, built.region, count=32)
    m = rep.measured
    criterion(12, "Rademacher: weak gradient below lip", name,
              rep.passed,
              f"max excess {m['max_excess']:.2e}, median gap {m['median_gap']:.3f}")


# 13 ------------------------------------------------------------------------


def test_c13_liouville(criterion):
    rep = V.liouville_experiment((16, 32, 64), 0.0, factor=1.8)
    m = rep.measured
    criterion(13, "Liouville decay per doubling", "L = 16, 32, 64", rep.passed,
              f"decay {np.round(m['decay_per_doubling'], 3).tolist()} (need >= 1.8)")


# 14 ------------------------------------------------------------------------


@pytest.mark.parametrize("family", ["torus", "path", "hyperbolic"])
def test_c14_moser(criterion, family):
    failures, ratios = [], []
    for kind in ("harmonic", "subsolution"):
        for seed in FRESH_SEEDS:
            inst = moser_instance(family, seed, kind)
            rep = V.check_moser_conclusion(inst["graph"], inst["f"], inst["region"], inst["center"],
                                           inst["alpha"], inst["beta"], inst["R"], family=family)
            if rep.passed:
                ratios.append(rep.measured["sup"] / rep.measured["rhs"])
            else:
                failures.append(f"{kind} seed {seed}: {rep.summary()}")
    criterion(14, "Moser conclusion with frozen constants", family, not failures and len(ratios) == 10,
              "; ".join(failures) or f"sup/rhs at most {max(ratios):.3f} over 10 instances")
