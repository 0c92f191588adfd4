"""Checks of the regularity theory on solved harmonic maps.

Every check takes the target space explicitly and returns a ``CheckReport``.
Checks that need a harmonic map first confirm that ``u`` solves the discrete
Dirichlet problem (residual at most ``SOLVED_TOL``) and otherwise return a
precondition failure.  All Laplacians use the same stencil as the solver: the
conductances of edges with both endpoints in ``U``.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Iterable

import numpy as np
from scipy import sparse

from .domain import DomainGraph, VertexSubset, ball_indices
from .energy import energy_density, lip_slope, weak_gradient
from .report import EXACT, TREND, CheckReport, precondition_failure, top_witnesses
from .solver import DirichletProblem, SolverParams, region_weights, residual, solve_dirichlet
from .targets import Euclidean, TargetSpace, farthest_point_probes
from .validation import check_map_field, check_scalar_field, check_vertex

#: Largest barycenter residual accepted as "solved".
SOLVED_TOL = 1e-9
#: Default ZZZ tolerance constant; the tolerance is ``c·h·(local lip)²``.
C_ZZZ = 1.0


# ---------------------------------------------------------------------------
# Helpers


def region_laplacian(g: DomainGraph, U: VertexSubset | None, f: np.ndarray) -> np.ndarray:
    """``Δ_U f(x) = m(x)⁻¹ Σ_{y ∈ U, y ~ x} w_xy (f(y) - f(x))``."""
    W = region_weights(g, U)
    deg = np.asarray(W.sum(axis=1)).ravel()
    f = np.asarray(f, dtype=float)
    return (W @ f - deg * f) / g.measure


def hop_depth(g: DomainGraph, U: VertexSubset) -> np.ndarray:
    """Number of edges from each vertex to the nearest vertex outside the interior of ``U``."""
    depth = np.full(g.vertex_count, np.inf)
    front = np.flatnonzero(~U.interior_mask)
    depth[front] = 0
    A = sparse.csr_matrix((np.ones(2 * g.edges.shape[0]),
                           (np.r_[g.edges[:, 0], g.edges[:, 1]], np.r_[g.edges[:, 1], g.edges[:, 0]])),
                          shape=(g.vertex_count, g.vertex_count))
    k = 0
    seen = np.zeros(g.vertex_count, dtype=bool)
    seen[front] = True
    while front.size:
        k += 1
        nxt = np.unique(A[front].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        depth[nxt] = k
        front = nxt
    return depth


def _unsolved(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset, name: str) -> CheckReport | None:
    res = residual(g, space, u, U)
    if res > SOLVED_TOL:
        return precondition_failure(name, f"map is not solved (residual {res:.3e} > {SOLVED_TOL:g})", res)
    return None


def _probes(space: TargetSpace, u: np.ndarray, probes, count: int = 32) -> np.ndarray:
    if probes is None:
        return farthest_point_probes(space, u, count)
    return space.validate(np.atleast_2d(np.asarray(probes, dtype=float)))


def interior_subset(g: DomainGraph, U: VertexSubset) -> VertexSubset:
    """The interior of ``U`` as a region of its own: energy balls must avoid the pinned vertices."""
    return VertexSubset.from_mask(g, U.interior_mask, boundary=np.zeros(g.vertex_count, dtype=bool))


def _ball_inside(g: DomainGraph, U: VertexSubset, center: int, r: float) -> np.ndarray | None:
    """Vertices of ``B_r(center)`` if they are all interior to ``U`` (where ``u`` is harmonic)."""
    B = ball_indices(g, center, r)
    return B if U.interior_mask[B].all() else None


def _mass_barycenter(g: DomainGraph, space: TargetSpace, u: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Minimizer of ``o ↦ Σ_{x ∈ B} d²(u(x), o) m(x)``."""
    return space.barycenter(u[B][None], g.measure[B][None])[0]


def _l2_to(g: DomainGraph, space: TargetSpace, u: np.ndarray, B: np.ndarray, o: np.ndarray) -> float:
    return float(np.sum(space.distance(u[B], o) ** 2 * g.measure[B]))


def best_center(g: DomainGraph, space: TargetSpace, u: np.ndarray, B: np.ndarray,
                n_perturb: int = 16, seed: int = 0) -> tuple[np.ndarray, float]:
    """Approximate ``argmin_o ∫_B d²(u, o)`` by the mass barycenter and perturbation probes."""
    rng = np.random.default_rng(seed)
    o = _mass_barycenter(g, space, u, B)
    best = _l2_to(g, space, u, B, o)
    for _ in range(n_perturb):
        cand = space.geodesic_point(o, u[B[rng.integers(B.size)]], rng.uniform(0.0, 0.2))
        val = _l2_to(g, space, u, B, cand)
        if val < best:
            o, best = cand, val
    return o, best


# ---------------------------------------------------------------------------
# Laplacian comparison for compositions


def residual_allowance(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset) -> np.ndarray:
    """``(W_x/m_x)·d(u(x), b_x)`` with ``b_x`` the neighbor barycenter and ``W_x`` the total conductance.

    Jensen's inequality at the barycenter gives
    ``Δd(u, p)(x) ≥ (W_x/m_x)(d(b_x, p) - d(u(x), p)) ≥ -(W_x/m_x)·d(u(x), b_x)``,
    so this is exactly how far an unconverged solve can push the Laplacian of
    a convex composition below zero.
    """
    from .solver import neighbor_barycenters, region_stencil

    I = U.interior
    st = region_stencil(g, U)
    out = np.zeros(g.vertex_count)
    if I.size:
        b = neighbor_barycenters(g, space, u, I, st)
        out[I] = st[1][I].sum(axis=1) / g.measure[I] * space.distance(u[I], b)
    return out


def check_subharmonicity(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset,
                         probes=None, tol: float = 1e-8) -> CheckReport:
    """``Δ d_Y(u(·), p) ≥ -tol`` at interior vertices for every probe ``p``.

    At an exact barycenter fixed point this is the discrete Jensen inequality
    for the convex function ``d_Y(·, p)``.  The solver residual enters through
    ``residual_allowance``, which is added to ``tol`` pointwise; the raw
    minimum is reported as well.
    """
    u = check_map_field(space, g, u)
    bad = _unsolved(g, space, u, U, "subharmonicity")
    if bad is not None:
        return bad
    P = _probes(space, u, probes)
    I = U.interior
    allow = residual_allowance(g, space, u, U)
    worst = np.full(g.vertex_count, -np.inf)
    per_probe = []
    for p in P:
        lap = region_laplacian(g, U, space.distance(u, p))
        per_probe.append(float(lap[I].min()))
        worst[I] = np.maximum(worst[I], -lap[I] - allow[I])
    v = float(worst[I].max())
    return CheckReport("subharmonicity", v <= tol, v, tol, witnesses=top_witnesses(worst, tol), gate=EXACT,
                       notes="max_violation is net of the pointwise residual allowance",
                       measured={"probes": int(len(P)), "min_laplacian": min(per_probe), "per_probe_min": per_probe,
                                 "max_residual_allowance": float(allow.max())})


def check_convexity_laplacian(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset,
                              probes=None, lambda2: float = 2.0, c_tol: float = 1.0,
                              dimension: float | None = None) -> CheckReport:
    """``Δ d²_Y(u, p) ≥ λ(d+2)e₂² - c·h·lip²`` at interior vertices where ``e₂`` is defined.

    ``d`` defaults to the graph's nominal dimension.
    """
    u = check_map_field(space, g, u)
    bad = _unsolved(g, space, u, U, "convexity_laplacian")
    if bad is not None:
        return bad
    prof = energy_density(g, space, u, interior_subset(g, U))
    judged = prof.valid
    if not judged.any():
        return precondition_failure("convexity_laplacian", "no interior vertex has its energy balls inside U")
    d = g.dimension_n if dimension is None else float(dimension)
    rhs = lambda2 * (d + 2) * prof.e2**2
    lip = lip_slope(g, space, u, U)
    tol = c_tol * g.mesh_scale * lip**2
    viol = np.full(g.vertex_count, -np.inf)
    P = _probes(space, u, probes)
    for p in P:
        lhs = region_laplacian(g, U, space.distance(u, p) ** 2)
        viol = np.maximum(viol, np.where(judged, rhs - lhs - tol, -np.inf))
    fails = int(np.sum(viol > 0))
    return CheckReport(
        "convexity_laplacian", fails == 0, float(viol.max()), 0.0, witnesses=top_witnesses(viol, 0.0),
        gate=TREND, notes="tolerance c·h·lip² folded into max_violation",
        measured={"judged": int(judged.sum()), "failures": fails, "pass_rate": 1 - fails / int(judged.sum()),
                  "c_tol": c_tol, "dimension": d},
    )


# ---------------------------------------------------------------------------
# Regularity estimates with empirical constants


def check_local_boundedness(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset,
                            center: int, r: float, lam: float = 0.5, probes=None,
                            bound: float | None = None) -> CheckReport:
    """``sup_{B_λr} d_Y(u, o) ≤ C·√(avg_{B_r} d²_Y(u, o))``; reports ``C_emp`` (max over probes).

    Passes iff ``C_emp`` is finite and, when a frozen ``bound`` is given, at most ``bound``.
    """
    u = check_map_field(space, g, u)
    center = check_vertex(g, center)
    B = _ball_inside(g, U, center, r)
    if B is None:
        return precondition_failure("local_boundedness", "B_r(center) is not inside the interior of U")
    inner = ball_indices(g, center, lam * r)
    P = _probes(space, u[B], probes, count=8)
    P = np.concatenate([P, _mass_barycenter(g, space, u, B)[None]])
    m = g.measure[B]
    consts = []
    for o in P:
        sup = float(space.distance(u[inner], o).max())
        avg = float(np.sum(space.distance(u[B], o) ** 2 * m) / m.sum())
        consts.append(0.0 if sup == 0 else (sup / np.sqrt(avg) if avg > 0 else np.inf))
    c = max(consts)
    ok = bool(np.isfinite(c)) and (bound is None or c <= bound)
    return CheckReport("local_boundedness", ok, c - (np.inf if bound is None else bound), 0.0, gate=TREND,
                       measured={"C_emp": c, "per_probe": consts, "bound": bound, "lambda": lam, "r": r})


def check_reverse_poincare(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset,
                           center: int, r: float, lam: float = 0.5, n_perturb: int = 16, seed: int = 0,
                           bound: float | None = None) -> CheckReport:
    """Empirical constant ``c_emp = ∫_{B_λr}(e₂² + |du|²)·r²(1-λ)² / inf_o ∫_{B_r} d²(u, o)``."""
    u = check_map_field(space, g, u)
    center = check_vertex(g, center)
    bad = _unsolved(g, space, u, U, "reverse_poincare")
    if bad is not None:
        return bad
    B = _ball_inside(g, U, center, r)
    if B is None:
        return precondition_failure("reverse_poincare", "B_r(center) is not inside the interior of U")
    inner = ball_indices(g, center, lam * r)
    prof = energy_density(g, space, u, interior_subset(g, U))
    if not prof.valid[inner].all():
        return precondition_failure("reverse_poincare", "e₂ undefined on part of B_λr (energy balls leave U)")
    wg = weak_gradient(g, space, u, U=U)
    m = g.measure
    lhs = float(np.sum((prof.e2[inner] ** 2 + wg[inner] ** 2) * m[inner]))
    _, rhs = best_center(g, space, u, B, n_perturb, seed)
    if rhs == 0:
        if lhs > 0:
            return CheckReport("reverse_poincare", False, lhs, 0.0, gate=EXACT,
                               notes="right side vanishes with positive energy on the inner ball",
                               measured={"lhs": lhs, "rhs": rhs})
        c = 0.0
    else:
        c = lhs * r**2 * (1 - lam) ** 2 / rhs
    ok = bool(np.isfinite(c)) and (bound is None or c <= bound)
    return CheckReport("reverse_poincare", ok, c - (np.inf if bound is None else bound), 0.0, gate=TREND,
                       measured={"c_emp": c, "lhs": lhs, "rhs": rhs, "bound": bound, "lambda": lam, "r": r})


def lipschitz_on(g: DomainGraph, space: TargetSpace, u: np.ndarray, B: np.ndarray) -> float:
    """``max_{x ≠ y ∈ B} d_Y(u(x), u(y)) / d(x, y)`` with graph distances."""
    D = g.distance_matrix()[np.ix_(B, B)] if g.vertex_count <= 4096 else np.stack([g.distances_from(x)[B] for x in B])
    du = space.distance(u[B][:, None, :], u[B][None, :, :])
    off = D > 0
    return float(np.max(du[off] / D[off])) if off.any() else 0.0


def lipschitz_constant(g: DomainGraph, space: TargetSpace, u: np.ndarray, center: int, r: float) -> tuple[float, float, float]:
    """``(C_emp, Lip(u|B_r), Norm)`` with ``Norm = inf_o √(avg_{B_2r} d²(u, o))``."""
    B = ball_indices(g, center, r)
    B2 = ball_indices(g, center, 2 * r)
    lip = lipschitz_on(g, space, u, B)
    _, l2 = best_center(g, space, u, B2)
    norm = np.sqrt(l2 / g.measure[B2].sum())
    if norm == 0:
        return (0.0 if lip == 0 else np.inf), lip, 0.0
    return r * lip / norm, lip, float(norm)


def check_lipschitz_estimate(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset,
                             center: int, r: float, nested=(1.0, 0.75, 0.5),
                             bound: float | None = None) -> CheckReport:
    """``Lip(u|B) ≤ (C/r)·inf_o √(avg_{2B} d²(u, o))``; reports ``C_emp``.

    The constants at the nested radii ``s·r`` are reported; whether they are
    non-increasing in the radius is a diagnostic only.
    """
    u = check_map_field(space, g, u)
    center = check_vertex(g, center)
    bad = _unsolved(g, space, u, U, "lipschitz_estimate")
    if bad is not None:
        return bad
    if _ball_inside(g, U, center, 2 * r) is None:
        return precondition_failure("lipschitz_estimate", "B_2r(center) is not inside the interior of U")
    c, lip, norm = lipschitz_constant(g, space, u, center, r)
    radii = sorted((s * r for s in nested), reverse=True)
    profile = [lipschitz_constant(g, space, u, center, s)[0] for s in radii]
    mono = bool(np.all(np.diff(profile) >= -1e-12))
    ok = bool(np.isfinite(c)) and (bound is None or c <= bound)
    return CheckReport("lipschitz_estimate", ok, c - (np.inf if bound is None else bound), 0.0, gate=TREND,
                       measured={"C_emp": c, "lip": lip, "norm": norm, "bound": bound, "r": r,
                                 "nested_radii": radii, "nested_C_emp": profile,
                                 "non_increasing_in_r": mono})


# ---------------------------------------------------------------------------
# ZZZ and Rademacher


def check_zzz(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset, K: float | None = None,
              c_zzz: float = C_ZZZ, min_depth: int = 3, max_fraction: float = 0.05) -> CheckReport:
    """``Δ(lip²/2) ≥ K·lip² - c·h·(local lip)²`` at vertices at least ``min_depth`` edges inside ``U``.

    ``local lip`` is the largest slope over the vertex and its neighbors.
    Passes iff the violating fraction is at most ``max_fraction``; the trend
    under refinement is judged by the refinement study.
    """
    u = check_map_field(space, g, u)
    bad = _unsolved(g, space, u, U, "zzz")
    if bad is not None:
        return bad
    K = g.curvature_k if K is None else float(K)
    lip = lip_slope(g, space, u, U)
    judged = hop_depth(g, U) >= min_depth
    if not judged.any():
        return precondition_failure("zzz", f"no vertex lies {min_depth} edges inside U")
    a, b = g.edge_key()
    local = lip.copy()
    np.maximum.at(local, a, lip[b])
    np.maximum.at(local, b, lip[a])
    lhs = region_laplacian(g, U, 0.5 * lip**2)
    tol = c_zzz * g.mesh_scale * local**2
    viol = np.where(judged, K * lip**2 - lhs - tol, -np.inf)
    frac = float(np.mean(viol[judged] > 0))
    return CheckReport(
        "zzz", frac <= max_fraction, float(viol.max()), 0.0, witnesses=top_witnesses(viol, 0.0), gate=TREND,
        notes="tolerance c·h·(local lip)² folded into max_violation",
        measured={"violation_fraction": frac, "judged": int(judged.sum()), "K": K, "c_zzz": c_zzz},
    )


def check_rademacher(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset | None = None,
                     probes=None, count: int = 32, max_gap: float = 0.10) -> CheckReport:
    """``weak_gradient ≤ lip_slope`` exactly, and median relative gap at most ``max_gap``."""
    u = check_map_field(space, g, u)
    P = _probes(space, u, probes, count)
    wg = weak_gradient(g, space, u, P, U)
    lip = lip_slope(g, space, u, U)
    excess = wg - lip
    scale = 1e-12 * max(1.0, float(lip.max()))
    pos = lip > scale
    gaps = (lip[pos] - wg[pos]) / lip[pos]
    med = float(np.median(gaps)) if gaps.size else 0.0
    exact_ok = bool(excess.max() <= scale)
    return CheckReport(
        "rademacher", exact_ok and med <= max_gap, max(float(excess.max()) - scale, med - max_gap), 0.0,
        witnesses=top_witnesses(excess, scale), gate=EXACT if not exact_ok else TREND,
        measured={"median_gap": med, "max_gap": float(gaps.max()) if gaps.size else 0.0,
                  "max_excess": float(excess.max()), "probes": int(len(P))},
    )


# ---------------------------------------------------------------------------
# Moser conclusion and Liouville


@lru_cache(maxsize=1)
def load_calibration() -> dict:
    """Frozen empirical constants shipped with the package."""
    return json.loads(resources.files("npc").joinpath("data/calibration.json").read_text())


def moser_constants(family: str, lam: float = 0.5) -> tuple[float, float]:
    entry = load_calibration()["moser"][family]
    if abs(entry["lambda"] - lam) > 1e-12:
        raise KeyError(f"no Moser constants for {family} at lambda={lam}")
    return float(entry["C1"]), float(entry["C2"])


def moser_terms(g: DomainGraph, f: np.ndarray, center: int, r: float, lam: float) -> tuple[float, float]:
    """``(‖f⁺‖_∞ on B_λr, avg_{B_r} f⁺)``."""
    fp = np.maximum(np.asarray(f, dtype=float), 0.0)
    inner = ball_indices(g, center, lam * r)
    B = ball_indices(g, center, r)
    m = g.measure[B]
    return float(fp[inner].max()), float(np.sum(fp[B] * m) / m.sum())


def subsolution_defect(g: DomainGraph, U: VertexSubset, f: np.ndarray, alpha: float, beta: float, R: float) -> np.ndarray:
    """``-R⁻²(αf + β) - Δf`` on the interior of ``U`` (≤ 0 where ``f`` is a subsolution)."""
    lap = region_laplacian(g, U, f)
    d = -(alpha * f + beta) / R**2 - lap
    return np.where(U.interior_mask, d, -np.inf)


def check_moser_conclusion(g: DomainGraph, f: np.ndarray, U: VertexSubset, center: int, alpha: float,
                           beta: float, R: float, lam: float = 0.5, r: float | None = None,
                           C1: float | None = None, C2: float | None = None,
                           family: str | None = None) -> CheckReport:
    """``‖f⁺‖_{∞,B_λr} ≤ C₁·avg_{B_r} f⁺ + β(r²/R²)C₂`` with frozen constants.

    The subsolution inequality ``Δf ≥ -R⁻²(αf + β)`` is verified on the
    interior of ``U`` first.  ``C1``/``C2`` default to the calibration entry
    of ``family``.
    """
    f = check_scalar_field(g, f)
    center = check_vertex(g, center)
    r = R if r is None else float(r)
    if not (0 < r <= R) or not (0 < lam < 1) or beta < 0:
        raise ValueError("need 0 < r ≤ R, 0 < lam < 1 and beta ≥ 0")
    if _ball_inside(g, U, center, R) is None:
        return precondition_failure("moser_conclusion", "B_R(center) is not inside the interior of U")
    defect = subsolution_defect(g, U, f, alpha, beta, R)
    tol = 1e-9 * max(1.0, float(np.abs(f).max())) / R**2
    if defect.max() > tol:
        return precondition_failure("moser_conclusion", "subsolution inequality fails",
                                    float(defect.max()), top_witnesses(defect, tol))
    if C1 is None or C2 is None:
        if family is None:
            raise ValueError("give C1 and C2 or a calibrated graph family")
        C1, C2 = moser_constants(family, lam)
    sup, avg = moser_terms(g, f, center, r, lam)
    rhs = C1 * avg + beta * r**2 / R**2 * C2
    slack = 1e-12 * max(1.0, rhs)
    return CheckReport("moser_conclusion", sup <= rhs + slack, sup - rhs, slack, gate=TREND,
                       measured={"sup": sup, "avg": avg, "rhs": rhs, "C1": C1, "C2": C2,
                                 "ratio": sup / avg if avg > 0 else (0.0 if sup == 0 else np.inf)})


def liouville_experiment(sizes: Iterable[int] = (16, 32, 64), boundary_scale_exponent: float = 0.0,
                         space: TargetSpace | None = None, seed: int = 0, factor: float | None = None,
                         params: SolverParams | None = None) -> CheckReport:
    """Interior slope of harmonic maps on growing flat grids with bounded-growth boundary data.

    On the ``L × L`` torus pinned along its seam the boundary data are a fixed
    smooth periodic pattern scaled by ``L^exponent``.  The largest ``lip`` on
    the central ``L/2`` box must shrink by at least ``factor`` (default
    ``0.9·2^(1-exponent)``) per doubling of ``L``.
    """
    from .scenario import seam_region, smooth_field

    if not boundary_scale_exponent < 1:
        raise ValueError("the exponent must be sublinear (< 1)")
    sizes = sorted(int(L) for L in sizes)
    space = Euclidean(1) if space is None else space
    factor = 0.9 * 2 ** (1 - boundary_scale_exponent) if factor is None else float(factor)
    from .domain import build_torus_grid

    lips, sweeps = [], []
    for L in sizes:
        g = build_torus_grid(L, L, 1.0)
        U = seam_region(g, L, L)
        unit = g.positions / L
        bv = smooth_field(space, unit, np.random.default_rng(seed), period=(1.0, 1.0),
                          amplitude=float(L) ** boundary_scale_exponent)
        res = solve_dirichlet(DirichletProblem(g, U, space, bv, params))
        i = np.arange(L * L) % L
        j = np.arange(L * L) // L
        box = (np.abs(i - L / 2) <= L / 4) & (np.abs(j - L / 2) <= L / 4)
        lips.append(float(lip_slope(g, space, res.u, U)[box].max()))
        sweeps.append(res.sweeps)
    ratios = [a / b if b > 0 else np.inf for a, b in zip(lips[:-1], lips[1:])]
    doubling = all(b == 2 * a for a, b in zip(sizes[:-1], sizes[1:]))
    per_doubling = [rt ** (1 / np.log2(b / a)) for rt, a, b in zip(ratios, sizes[:-1], sizes[1:])]
    worst = min(per_doubling) if per_doubling else np.inf
    return CheckReport(
        "liouville", worst >= factor, factor - worst, 0.0, gate=TREND,
        notes="" if doubling else "sizes are not successive doublings; ratios normalised per doubling",
        measured={"sizes": sizes, "interior_lip": lips, "decay_per_doubling": per_doubling,
                  "required_factor": factor, "exponent": boundary_scale_exponent, "sweeps": sweeps},
    )


# ---------------------------------------------------------------------------
# Auxiliary split function


def split_function(g: DomainGraph, space: TargetSpace, u: np.ndarray, region: np.ndarray,
                   xbar: int, ybar: int) -> np.ndarray:
    """``F_{x̄,ȳ}(z) = (d_u²(z, x̄) - d²(u(z), p) + ¼d_u²(x̄, ȳ)) / d_u(x̄, ȳ)`` on ``B'``, else 0.

    ``p`` is the midpoint of ``u(x̄)`` and ``u(ȳ)``.
    """
    dxy = float(space.distance(u[xbar], u[ybar]))
    if dxy == 0:
        return np.zeros(g.vertex_count)
    p = space.midpoint(u[xbar], u[ybar])
    F = (space.distance(u, u[xbar]) ** 2 - space.distance(u, p) ** 2 + 0.25 * dxy**2) / dxy
    return np.where(region, F, 0.0)


def check_auxiliary_split(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset, center: int,
                          r: float, pairs: list[tuple[int, int]] | None = None, n_pairs: int = 8,
                          seed: int = 0, c_tol: float = 1.0) -> CheckReport:
    """``f(x,y) ≤ f(x̄,ȳ) + F_{x̄,ȳ}(x) + F_{ȳ,x̄}(y)`` over ``B' × B'`` with ``B' = B_{3r/2}``.

    ``f = -d_u`` on ``B' × B'``; outside, the clamped value makes the
    inequality trivial, so only ``B' × B'`` is enumerated.  Equality at
    ``(x̄, ȳ)`` is checked too.  ``ΔF_{x̄,ȳ}(x̄) ≤ c·h·lip²/d_u(x̄,ȳ)`` is a diagnostic.
    """
    u = check_map_field(space, g, u)
    center = check_vertex(g, center)
    Bp = ball_indices(g, center, 1.5 * r)
    region = np.zeros(g.vertex_count, dtype=bool)
    region[Bp] = True
    # Only B' × B' is examined, so the clamped table is formed there alone.
    fB = -space.distance(u[Bp][:, None, :], u[Bp][None, :, :])
    pos = {int(x): k for k, x in enumerate(Bp)}
    cand = Bp[U.interior_mask[Bp]]
    if pairs is None:
        rng = np.random.default_rng(seed)
        pairs = [tuple(int(v) for v in rng.choice(cand, 2, replace=False)) for _ in range(n_pairs)]
    lip = lip_slope(g, space, u, U)
    scale = 1e-9 * max(1.0, float(-fB.min()))
    worst, eq_worst = -np.inf, 0.0
    lap_vals, lap_fails = [], 0
    for xb, yb in pairs:
        if xb not in pos or yb not in pos:
            raise ValueError("pair vertices must lie in B'")
        F1 = split_function(g, space, u, region, xb, yb)
        F2 = split_function(g, space, u, region, yb, xb)
        fxy = fB[pos[xb], pos[yb]]
        rhs = fxy + F1[Bp][:, None] + F2[Bp][None, :]
        worst = max(worst, float(np.max(fB - rhs)))
        eq_worst = max(eq_worst, abs(float(fxy - rhs[pos[xb], pos[yb]])))
        dxy = float(space.distance(u[xb], u[yb]))
        if dxy > 0:
            lv = float(region_laplacian(g, U, F1)[xb])
            lap_vals.append(lv)
            lap_fails += lv > c_tol * g.mesh_scale * lip[xb] ** 2 / dxy
    v = max(worst, eq_worst)
    return CheckReport(
        "auxiliary_split", v <= scale, v, scale, gate=EXACT,
        notes="Laplacian of F at the base point is a diagnostic",
        measured={"pairs": [list(map(int, p)) for p in pairs], "split_violation": worst,
                  "equality_defect": eq_worst, "lap_F_at_base": lap_vals, "lap_F_failures": int(lap_fails),
                  "region_size": int(Bp.size)},
    )


__all__ = [
    "SOLVED_TOL", "C_ZZZ", "region_laplacian", "hop_depth", "best_center",
    "check_subharmonicity", "check_convexity_laplacian", "check_local_boundedness",
    "check_reverse_poincare", "lipschitz_on", "lipschitz_constant", "check_lipschitz_estimate",
    "check_zzz", "check_rademacher", "load_calibration", "moser_constants", "moser_terms",
    "subsolution_defect", "check_moser_conclusion", "liouville_experiment", "split_function",
    "check_auxiliary_split",
]
