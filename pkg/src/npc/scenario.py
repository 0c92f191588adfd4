"""Scenarios, boundary data generators, refinement studies and calibration.

A scenario names a graph family, a target space, a region, a boundary data
generator, solver parameters and a list of checks.  Refinement level ``k``
halves the mesh scale ``k`` times while keeping the physical domain fixed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import verifier as V
from .domain import (DomainGraph, VertexSubset, ball_indices, build_hyperbolic_disk, build_path,
                     build_torus_grid)
from .report import EXACT, TREND, CheckReport
from .solver import DirichletProblem, SolveResult, SolverParams, linear_oracle, solve_dirichlet, thread_cap
from .targets import Euclidean, HyperbolicPlane, MetricTree, Product, TargetSpace, space_from_dict

log = logging.getLogger(__name__)

CALIBRATION_SEEDS = (0, 1, 2, 3, 4)
FRESH_SEEDS = (100, 101, 102, 103, 104)
SAFETY = 1.5


# ---------------------------------------------------------------------------
# Regions


def seam_region(g: DomainGraph, nx: int, ny: int) -> VertexSubset:
    """All torus vertices, with the seam ``i = 0`` or ``j = 0`` pinned.

    The pinned cross cuts the torus into a square whose opposite sides carry
    the same boundary values.
    """
    k = np.arange(g.vertex_count)
    i, j = k % nx, k // nx
    return VertexSubset.from_mask(g, np.ones(g.vertex_count, dtype=bool), boundary=(i == 0) | (j == 0))


def ends_region(g: DomainGraph) -> VertexSubset:
    n = g.vertex_count
    return VertexSubset.from_mask(g, np.ones(n, dtype=bool), boundary=[0, n - 1])


def rim_region(g: DomainGraph) -> VertexSubset:
    """All vertices of a hyperbolic disk mesh with the outermost ring pinned."""
    rad = np.arccosh(np.maximum(g.positions[:, 0], 1.0))
    return VertexSubset.from_mask(g, np.ones(g.vertex_count, dtype=bool),
                                  boundary=rad >= rad.max() * (1 - 1e-9))


# ---------------------------------------------------------------------------
# Boundary data


def smooth_scalars(positions: np.ndarray, rng: np.random.Generator, count: int,
                   period: tuple[float, ...] | None = None, modes: int = 2) -> np.ndarray:
    """``count`` random low-frequency trigonometric fields, shape ``(n, count)``.

    With ``period`` the wave vectors are integer multiples of ``2π/period`` so
    the fields are periodic.  The coefficients depend only on ``rng``.
    """
    P = np.atleast_2d(np.asarray(positions, dtype=float))
    if P.shape[0] == 1 and np.asarray(positions).ndim == 1:
        P = P.T
    dim = P.shape[1]
    out = np.zeros((P.shape[0], count))
    for c in range(count):
        for _ in range(2 * modes):
            n = rng.integers(-modes, modes + 1, size=dim)
            if not n.any():
                n[0] = 1
            if period is None:
                ext = np.ptp(P, axis=0) + 1e-12
                k = 2 * np.pi * n / (2 * ext)
            else:
                k = 2 * np.pi * n / np.asarray(period, dtype=float)
            amp = rng.normal() / np.sqrt(2 * modes)
            phase = rng.uniform(0, 2 * np.pi)
            out[:, c] += amp * np.cos(P @ k + phase)
    return out


def fold_to_star(tree: MetricTree, v: np.ndarray) -> np.ndarray:
    """Map planar vectors onto the edges at tree vertex 0, continuously.

    The edges at vertex 0 get equally spaced directions; a vector goes to the
    edge whose direction it is most aligned with, at distance (largest minus
    second largest inner product), clipped to the edge length.
    """
    inc = [e for e, (a, b) in enumerate(tree.edges) if a == 0 or b == 0]
    if len(inc) < 2:
        raise ValueError("folding needs at least two edges at vertex 0")
    ang = 2 * np.pi * np.arange(len(inc)) / len(inc)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    ip = v @ dirs.T
    order = np.argsort(-ip, axis=1)
    top = np.take_along_axis(ip, order[:, :1], axis=1)[:, 0]
    second = np.take_along_axis(ip, order[:, 1:2], axis=1)[:, 0]
    e = np.asarray(inc)[order[:, 0]]
    ln = tree.lengths[e]
    a = np.clip(top - second, 0.0, ln)
    start_at_zero = np.array([tree.edges[k][0] == 0 for k in e])
    s = np.where(start_at_zero, a, ln - a)
    return tree.canonical(np.stack([e.astype(float), s], axis=1))


def smooth_field(space: TargetSpace, positions: np.ndarray, rng: np.random.Generator,
                 period: tuple[float, ...] | None = None, amplitude: float = 1.0) -> np.ndarray:
    """A smooth map field with values in ``space``."""
    if isinstance(space, Euclidean):
        return amplitude * smooth_scalars(positions, rng, space.dim, period)
    if isinstance(space, MetricTree):
        return fold_to_star(space, amplitude * smooth_scalars(positions, rng, 2, period))
    if isinstance(space, HyperbolicPlane):
        v = amplitude * smooth_scalars(positions, rng, 2, period)
        return HyperbolicPlane.from_polar(np.hypot(v[:, 0], v[:, 1]), np.arctan2(v[:, 1], v[:, 0]))
    if isinstance(space, Product):
        return space.join(smooth_field(space.a, positions, rng, period, amplitude),
                          smooth_field(space.b, positions, rng, period, amplitude))
    raise TypeError(f"no smooth generator for {space!r}")


BOUNDARY_FAMILIES = ("smooth", "random", "constant", "linear")


def boundary_field(space: TargetSpace, g: DomainGraph, family: str, seed: int, amplitude: float = 1.0,
                   period: tuple[float, ...] | None = None) -> np.ndarray:
    """Full ``(n, D)`` field from a named family; only boundary rows matter to a problem."""
    rng = np.random.default_rng(seed)
    if family == "smooth":
        return smooth_field(space, g.positions, rng, period, amplitude)
    if family == "random":
        return space.random_points(rng, g.vertex_count)
    if family == "constant":
        return np.repeat(space.random_points(rng, 1), g.vertex_count, axis=0)
    if family == "linear":
        if not isinstance(space, Euclidean):
            raise TypeError("linear boundary data need a Euclidean target")
        A = rng.normal(size=(g.positions.shape[1], space.dim))
        return amplitude * g.positions @ A
    raise ValueError(f"unknown boundary family {family!r}; expected one of {BOUNDARY_FAMILIES}")


# ---------------------------------------------------------------------------
# Scenarios


@dataclass
class Built:
    """A scenario instantiated at one refinement level."""

    graph: DomainGraph
    region: VertexSubset
    space: TargetSpace
    boundary: np.ndarray
    center: int
    radius: float
    period: tuple[float, ...] | None = None

    def problem(self, params: SolverParams) -> DirichletProblem:
        return DirichletProblem(self.graph, self.region, self.space, self.boundary, params)


DEFAULT_CHECKS = ("subharmonicity", "convexity_laplacian", "local_boundedness", "reverse_poincare",
                  "lipschitz_estimate", "zzz", "rademacher", "auxiliary_split")


@dataclass
class Scenario:
    """Serializable description of a verification run.

    ``graph`` is ``{"family": "torus"|"path"|"hyperbolic", ...}`` with
    ``n``/``spacing`` (torus, path; a path may set ``origin``) or
    ``radius``/``spacing`` (hyperbolic).  ``region`` is ``{"kind":
    "seam"|"ends"|"rim"}``.  ``boundary`` is ``{"family", "seed",
    "amplitude"}``.  ``ball`` gives the radius (and optionally the center
    vertex) used by the local estimates.  ``checks`` maps check names to
    keyword overrides (tolerances and the like).
    """

    name: str
    graph: dict[str, Any]
    target: dict[str, Any]
    region: dict[str, Any] = field(default_factory=dict)
    boundary: dict[str, Any] = field(default_factory=lambda: {"family": "smooth", "seed": 0, "amplitude": 1.0})
    solver: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, dict[str, Any]] = field(default_factory=lambda: {c: {} for c in DEFAULT_CHECKS})
    levels: int = 3
    ball: dict[str, Any] = field(default_factory=lambda: {"radius": 0.2})

    # -- serialization

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        sc = cls(**known)
        sc.validate()
        return sc

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_json(Path(path).read_text())

    def with_seed(self, seed: int) -> "Scenario":
        data = self.to_dict()
        data["boundary"] = {**data["boundary"], "seed": int(seed)}
        return Scenario.from_dict(data)

    def validate(self) -> None:
        fam = self.graph.get("family")
        if fam not in ("torus", "path", "hyperbolic"):
            raise ValueError(f"unknown graph family {fam!r}")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ValueError(f"unknown checks: {sorted(unknown)}")
        space_from_dict(self.target)

    @property
    def family(self) -> str:
        return self.graph["family"]

    @property
    def params(self) -> SolverParams:
        return SolverParams(**self.solver)

    # -- instantiation

    def build(self, level: int = 0) -> Built:
        gspec = self.graph
        fam = gspec["family"]
        k = 2**level
        space = space_from_dict(self.target)
        period = None
        if fam == "torus":
            n = int(gspec["n"]) * k
            h = float(gspec["spacing"]) / k
            g = build_torus_grid(n, n, h)
            U = seam_region(g, n, n)
            center = (n // 2) * n + n // 2
            period = (n * h, n * h)
        elif fam == "path":
            n = (int(gspec["n"]) - 1) * k + 1
            g = build_path(n, float(gspec["spacing"]) / k, float(gspec.get("origin", 0.0)))
            U = ends_region(g)
            center = (n - 1) // 2
        else:
            g = build_hyperbolic_disk(float(gspec["radius"]), float(gspec["spacing"]) / k)
            U = rim_region(g)
            center = 0
        if self.ball.get("center") is not None and level == 0:
            center = int(self.ball["center"])
        b = self.boundary
        pos_period = period
        bv = boundary_field(space, g, b.get("family", "smooth"), int(b.get("seed", 0)),
                            float(b.get("amplitude", 1.0)), pos_period)
        return Built(g, U, space, bv, center, float(self.ball.get("radius", 0.2)), period)

    def solve(self, level: int = 0) -> tuple[Built, SolveResult]:
        built = self.build(level)
        return built, solve_dirichlet(built.problem(self.params))


# ---------------------------------------------------------------------------
# Check registry


def _run_named(name: str, built: Built, u: np.ndarray, overrides: dict[str, Any]) -> CheckReport:
    g, U, S, c, r = built.graph, built.region, built.space, built.center, built.radius
    kw = dict(overrides)
    if name in ("local_boundedness", "reverse_poincare", "lipschitz_estimate", "auxiliary_split"):
        kw.setdefault("center", c)
        kw.setdefault("r", r)
    return CHECKS[name](g, S, u, U, **kw)


CHECKS: dict[str, Callable[..., CheckReport]] = {
    "subharmonicity": V.check_subharmonicity,
    "convexity_laplacian": V.check_convexity_laplacian,
    "local_boundedness": V.check_local_boundedness,
    "reverse_poincare": V.check_reverse_poincare,
    "lipschitz_estimate": V.check_lipschitz_estimate,
    "zzz": V.check_zzz,
    "rademacher": V.check_rademacher,
    "auxiliary_split": V.check_auxiliary_split,
}


def solve_report(res: SolveResult, tol: float) -> CheckReport:
    """The solve itself as an exact gate: converged and energy trace non-increasing."""
    e = np.asarray(res.energy_trace)
    rise = float(np.max(np.diff(e) / np.maximum(np.abs(e[:-1]), 1e-300))) if e.size > 1 else -np.inf
    ok = res.converged and rise <= 1e-12
    return CheckReport("solve", ok, max(res.residual - tol, rise - 1e-12), 0.0, gate=EXACT,
                       measured={"residual": res.residual, "sweeps": res.sweeps,
                                 "max_relative_energy_rise": rise, "relaxation": res.relaxation})


def run_checks(sc: Scenario, level: int = 0, only: list[str] | None = None,
               solved: tuple[Built, SolveResult] | None = None) -> tuple[Built, SolveResult, list[CheckReport]]:
    """Solve the scenario at ``level`` and run its checks concurrently on the read-only solution."""
    built, res = sc.solve(level) if solved is None else solved
    names = list(sc.checks) if only is None else only
    unknown = set(names) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    u = res.u.copy()
    u.setflags(write=False)
    threads = thread_cap()
    overrides = [dict(sc.checks.get(n, {})) for n in names]
    if level == 0:
        # Frozen constants were fitted at level 0 of the standard scenarios.
        cal = V.load_calibration()
        for n, o in zip(names, overrides):
            if sc.name in cal.get(n, {}):
                o.setdefault("bound", float(cal[n][sc.name]))
    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(min(threads, len(names))) as ex:
            reports = list(ex.map(lambda a: _run_named(a[0], built, u, a[1]), zip(names, overrides)))
    else:
        reports = [_run_named(n, built, u, o) for n, o in zip(names, overrides)]
    return built, res, [solve_report(res, sc.params.tolerance)] + reports


# ---------------------------------------------------------------------------
# Refinement studies


STUDY_KEYS = {
    "reverse_poincare": ("reverse_poincare", "c_emp"),
    "lipschitz_estimate": ("lipschitz_estimate", "C_emp"),
    "local_boundedness": ("local_boundedness", "C_emp"),
    "zzz_fraction": ("zzz", "violation_fraction"),
    "rademacher_gap": ("rademacher", "median_gap"),
}


@dataclass
class RefinementStudy:
    """Measured constants per refinement level, ordered by decreasing mesh scale."""

    scenario: str
    mesh_scales: list[float]
    constants: dict[str, list[float]]
    reports: list[list[CheckReport]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.mesh_scales, self.mesh_scales[1:])):
            raise ValueError("levels must be ordered by decreasing mesh scale")

    def variation(self, key: str) -> float:
        """``max/min`` of a constant across levels (1 when constant, inf when it vanishes somewhere)."""
        v = np.asarray(self.constants[key], dtype=float)
        if np.all(v == 0):
            return 1.0
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            return float("inf")
        return float(v.max() / v.min())

    def non_increasing(self, key: str, tol: float = 1e-12) -> bool:
        v = np.asarray(self.constants[key], dtype=float)
        return bool(np.all(np.diff(v) <= tol))

    def stability_report(self, key: str, factor: float = 2.0) -> CheckReport:
        var = self.variation(key)
        return CheckReport(f"{key}_stability", var < factor, var - factor, 0.0, gate=TREND,
                           measured={"values": self.constants[key], "variation": var,
                                     "mesh_scales": self.mesh_scales})

    def hard_reports(self) -> list[CheckReport]:
        out = [r for level in self.reports for r in level]
        for key in ("reverse_poincare", "lipschitz_estimate", "local_boundedness"):
            if key in self.constants:
                out.append(self.stability_report(key))
        if "zzz_fraction" in self.constants:
            v = self.constants["zzz_fraction"]
            out.append(CheckReport("zzz_trend", self.non_increasing("zzz_fraction") and v[-1] <= 0.05,
                                   v[-1] - 0.05, 0.0, gate=TREND, measured={"values": v}))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"scenario": self.scenario, "mesh_scales": self.mesh_scales, "constants": self.constants,
                "reports": [[r.to_dict() for r in lv] for lv in self.reports]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = sorted(self.constants)
        w.writerow(["level", "mesh_scale"] + keys)
        for i, h in enumerate(self.mesh_scales):
            w.writerow([i, repr(h)] + [repr(float(self.constants[k][i])) for k in keys])
        return buf.getvalue()


def refine(sc: Scenario, levels: int | None = None, only: list[str] | None = None) -> RefinementStudy:
    levels = sc.levels if levels is None else int(levels)
    scales, consts, reps = [], {}, []
    for lv in range(levels):
        built, _, reports = run_checks(sc, lv, only)
        scales.append(built.graph.mesh_scale)
        reps.append(reports)
        by_name = {r.name: r for r in reports}
        for key, (check, field_) in STUDY_KEYS.items():
            if check in by_name and field_ in by_name[check].measured:
                consts.setdefault(key, []).append(float(by_name[check].measured[field_]))
    return RefinementStudy(sc.name, scales, consts, reps)


# ---------------------------------------------------------------------------
# Standard scenarios


def standard_scenarios() -> dict[str, Scenario]:
    """The scenario suite used for calibration and the acceptance runs."""
    torus = {"family": "torus", "n": 16, "spacing": 1 / 16}
    path = {"family": "path", "n": 65, "spacing": 1 / 64}
    disk = {"family": "hyperbolic", "radius": 1.0, "spacing": 0.12}
    tri = MetricTree.tripod().to_dict()
    out = [
        Scenario("torus-euclidean", torus, Euclidean(2).to_dict(), {"kind": "seam"}, ball={"radius": 0.2}),
        Scenario("torus-tripod", torus, tri, {"kind": "seam"}, ball={"radius": 0.2}),
        Scenario("torus-hyperbolic", torus, HyperbolicPlane().to_dict(), {"kind": "seam"}, ball={"radius": 0.2}),
        Scenario("path-tripod", path, tri, {"kind": "ends"}, ball={"radius": 0.2}),
        # The max-edge slope on an unstructured mesh depends on edge directions,
        # so the ZZZ check is left to the flat grids.
        Scenario("disk-euclidean", disk, Euclidean(2).to_dict(), {"kind": "rim"}, ball={"radius": 0.25},
                 checks={c: {} for c in DEFAULT_CHECKS if c != "zzz"}),
    ]
    return {s.name: s for s in out}


# ---------------------------------------------------------------------------
# Moser instances and calibration


def moser_instance(family: str, seed: int, kind: str = "harmonic", level: int = 0) -> dict[str, Any]:
    """A sub-solution instance ``(g, U, f, center, R, alpha, beta)`` on a standard graph family.

    ``harmonic``: a discrete-harmonic scalar shifted to change sign on
    ``B_R`` (``α = β = 0``).  ``subsolution``: the same minus a multiple of
    the squared embedding distance to the center, with the smallest valid
    ``β`` for ``α = 0``.
    """
    sc = {"torus": "torus-euclidean", "path": "path-tripod", "hyperbolic": "disk-euclidean"}[family]
    scen = standard_scenarios()[sc]
    data = scen.to_dict()
    data["target"] = Euclidean(1).to_dict()
    data["boundary"] = {"family": "smooth", "seed": int(seed), "amplitude": 1.0}
    built = Scenario.from_dict(data).build(level)
    g, U = built.graph, built.region
    f = linear_oracle(built.problem(SolverParams()))[:, 0]
    R = 2 * built.radius
    BR = ball_indices(g, built.center, R)
    rng = np.random.default_rng(seed + 7919)
    f = f - np.quantile(f[BR], rng.uniform(0.2, 0.8))
    beta = 0.0
    if kind == "subsolution":
        # A smooth bump: squared distance in the embedding coordinates, whose
        # Laplacian stays bounded (graph distance has kinks along the axes).
        q = np.sum((g.positions - g.positions[built.center]) ** 2, axis=1)
        s = rng.uniform(0.25, 1.0) * np.ptp(f[BR]) / R**2
        f = f - s * q
        lap = V.region_laplacian(g, U, f)
        beta = float(max(0.0, np.max(-lap[U.interior]) * R**2))
    elif kind != "harmonic":
        raise ValueError("kind must be 'harmonic' or 'subsolution'")
    return {"graph": g, "region": U, "f": f, "center": built.center, "R": R, "alpha": 0.0, "beta": beta}


def _moser_terms_for(inst: dict[str, Any], lam: float) -> tuple[float, float, float]:
    sup, avg = V.moser_terms(inst["graph"], inst["f"], inst["center"], inst["R"], lam)
    return sup, avg, inst["beta"]  # r = R so β r²/R² = β


def calibrate(seeds=CALIBRATION_SEEDS, safety: float = SAFETY, lam: float = 0.5,
              scenarios: list[str] | None = None) -> dict[str, Any]:
    """Fit every empirical constant on the calibration seeds and inflate it by ``safety``."""
    suite = standard_scenarios()
    names = list(suite) if scenarios is None else scenarios
    consts: dict[str, dict[str, float]] = {"reverse_poincare": {}, "lipschitz_estimate": {}, "local_boundedness": {}}
    for nm in names:
        vals = {k: [] for k in consts}
        for s in seeds:
            _, _, reps = run_checks(suite[nm].with_seed(s), 0, list(consts))
            by = {r.name: r for r in reps}
            vals["reverse_poincare"].append(by["reverse_poincare"].measured["c_emp"])
            vals["lipschitz_estimate"].append(by["lipschitz_estimate"].measured["C_emp"])
            vals["local_boundedness"].append(by["local_boundedness"].measured["C_emp"])
        for k in consts:
            consts[k][nm] = safety * float(max(vals[k]))
    moser = {}
    for fam in ("torus", "path", "hyperbolic"):
        ratios, subs = [], []
        for s in seeds:
            sup, avg, _ = _moser_terms_for(moser_instance(fam, s, "harmonic"), lam)
            ratios.append(sup / avg if avg > 0 else 0.0)
            subs.append(_moser_terms_for(moser_instance(fam, s, "subsolution"), lam))
        c1 = max(ratios)
        c2 = max((max(0.0, sup - c1 * avg) / beta if beta > 0 else 0.0) for sup, avg, beta in subs)
        moser[fam] = {"lambda": lam, "C1": safety * c1, "C2": safety * c2}
    return {"seeds": list(seeds), "fresh_seeds": list(FRESH_SEEDS), "safety": safety, **consts, "moser": moser}


def write_calibration(path: str | Path | None = None, **kwargs: Any) -> Path:
    path = Path(__file__).with_name("data") / "calibration.json" if path is None else Path(path)
    path.write_text(json.dumps(calibrate(**kwargs), indent=2, sort_keys=True) + "\n")
    V.load_calibration.cache_clear()
    return path


def frozen_bound(check: str, scenario: str) -> float:
    return float(V.load_calibration()[check][scenario])
