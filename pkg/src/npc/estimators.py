"""scikit-learn style facades over the functional core.

The estimators follow the ``fit``/``transform``/``predict`` protocol and get
``get_params``/``set_params``/``clone`` from :class:`sklearn.base.BaseEstimator`.
The fit is only partial: the "data" here is a graph plus fields on its
vertices rather than a sample matrix, so most ``fit`` methods take the
domain graph as ``X`` and the estimators are not meant for cross-validation
or pipelines over rows.  The transformers that act on scalar fields do treat
each row of ``X`` as one field, which is the one place where the usual
``(n_samples, n_features)`` convention holds (features = vertices).
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import hopflax as HL
from .domain import DomainGraph, VertexSubset
from .energy import dirichlet_energy, energy_density
from .laplacian import heat_semigroup
from .report import CheckReport
from .scenario import Scenario, run_checks
from .solver import DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE, DirichletProblem, SolverParams, solve_dirichlet
from .targets import TargetSpace

__all__ = ["HarmonicMapSolver", "HeatSemigroupTransformer", "HopfLaxTransformer", "ProxEstimator",
           "EnergyDensityEstimator", "ScenarioVerifier"]


def _graph(X: Any) -> DomainGraph:
    if not isinstance(X, DomainGraph):
        raise TypeError(f"expected a DomainGraph, got {type(X).__name__}")
    return X


def _rows(g: DomainGraph, X: Any) -> tuple[np.ndarray, bool]:
    """Fields as rows; a single 1D field is accepted and flagged for unwrapping."""
    A = np.asarray(X, dtype=float)
    single = A.ndim == 1
    A = np.atleast_2d(A)
    if A.ndim != 2 or A.shape[1] != g.vertex_count:
        raise ValueError(f"expected fields with {g.vertex_count} columns, got shape {np.shape(X)}")
    if not np.all(np.isfinite(A)):
        raise ValueError("fields must be finite")
    return A, single


class HarmonicMapSolver(BaseEstimator):
    """Discrete harmonic map with prescribed boundary values.

    Parameters
    ----------
    space : TargetSpace
    tolerance, max_sweeps, mode, relaxation, init, seed
        Forwarded to :class:`~npc.solver.SolverParams`.

    Attributes
    ----------
    u_ : ndarray, shape (n, D)
    residual_ : float
    energy_trace_ : list of float
    n_iter_ : int
    converged_ : bool
    problem_ : DirichletProblem
    """

    def __init__(self, space: TargetSpace | None = None, tolerance: float = DEFAULT_TOLERANCE,
                 max_sweeps: int = DEFAULT_MAX_SWEEPS, mode: str = "gauss-seidel", relaxation: bool = True,
                 init: str = "boundary-barycenter", seed: int = 0):
        self.space = space
        self.tolerance = tolerance
        self.max_sweeps = max_sweeps
        self.mode = mode
        self.relaxation = relaxation
        self.init = init
        self.seed = seed

    def _params(self) -> SolverParams:
        return SolverParams(max_sweeps=self.max_sweeps, tolerance=self.tolerance, mode=self.mode,
                            relaxation=self.relaxation, init=self.init, seed=self.seed)

    def fit(self, X: DomainGraph, y: Any, region: VertexSubset | None = None) -> "HarmonicMapSolver":
        """Solve on graph ``X`` with boundary values ``y`` over ``region`` (all vertices by default)."""
        if self.space is None:
            raise ValueError("a target space is required")
        g = _graph(X)
        if region is None:
            raise ValueError("a region with a non-empty boundary is required")
        self.problem_ = DirichletProblem(g, region, self.space, y, self._params())
        res = solve_dirichlet(self.problem_)
        self.result_ = res
        self.u_ = res.u
        self.residual_ = res.residual
        self.energy_trace_ = list(res.energy_trace)
        self.n_iter_ = res.sweeps
        self.converged_ = res.converged
        return self

    def fit_problem(self, problem: DirichletProblem) -> "HarmonicMapSolver":
        """Fit from a ready-made problem; its space and parameters override the estimator's."""
        self.set_params(space=problem.space, **{k: v for k, v in problem.params.to_dict().items()
                                                 if k in self.get_params()})
        return self.fit(problem.graph, problem.boundary_values, problem.region)

    def transform(self, X: Any = None) -> np.ndarray:
        """The fitted map (``X`` is ignored; the map lives on the fitted graph)."""
        check_is_fitted(self, "u_")
        return self.u_.copy()

    def predict(self, X: Any) -> np.ndarray:
        """Values of the fitted map at the vertex indices ``X``."""
        check_is_fitted(self, "u_")
        idx = np.asarray(X, dtype=int)
        if np.any((idx < 0) | (idx >= len(self.u_))):
            raise IndexError("vertex index out of range")
        return self.u_[idx]

    def score(self, X: Any = None, y: Any = None) -> float:
        """Negative Dirichlet energy on the fitted region (higher is better)."""
        check_is_fitted(self, "u_")
        p = self.problem_
        return -dirichlet_energy(p.graph, p.space, self.u_, p.region)


class _GraphTransformer(TransformerMixin, BaseEstimator):
    def fit(self, X: DomainGraph, y: Any = None):
        self.graph_ = _graph(X)
        self.n_features_in_ = self.graph_.vertex_count
        return self

    def _apply(self, f: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def transform(self, X: Any) -> np.ndarray:
        """Apply the operator to every row of ``X`` (one scalar field per row)."""
        check_is_fitted(self, "graph_")
        A, single = _rows(self.graph_, X)
        out = self._apply(A)
        return out[0] if single else out

    def fit_transform(self, X: Any, y: Any = None, **fit_params: Any) -> np.ndarray:
        raise TypeError("fit takes the graph and transform takes fields; call them separately")


class HeatSemigroupTransformer(_GraphTransformer):
    """``f ↦ h_t f`` row by row."""

    def __init__(self, t: float = 1.0, method: str = "auto"):
        self.t = t
        self.method = method

    def _apply(self, A: np.ndarray) -> np.ndarray:
        return heat_semigroup(self.graph_, A.T, self.t, method=self.method).T


class HopfLaxTransformer(_GraphTransformer):
    """``f ↦ Q_t f`` row by row (exhaustive minimization over the vertex set)."""

    def __init__(self, t: float = 1.0):
        self.t = t

    def _apply(self, A: np.ndarray) -> np.ndarray:
        return np.stack([HL.hopf_lax(self.graph_, f, self.t) for f in A])


class ProxEstimator(BaseEstimator):
    """Proximal map ``x ↦ argmin_y f(y) + d²(x,y)/(2T)`` of one scalar field.

    ``fit(graph, f)`` computes the map; ``predict`` returns minimizers,
    ``transform`` the minimal values ``Q_T f``.
    """

    def __init__(self, T: float = 1.0, bandwidth: float | None = None):
        self.T = T
        self.bandwidth = bandwidth

    def fit(self, X: DomainGraph, y: Any) -> "ProxEstimator":
        g = _graph(X)
        f, single = _rows(g, y)
        if not single:
            raise ValueError("fit expects a single field")
        self.graph_ = g
        self.prox_ = HL.prox_map(g, f[0], self.T, self.bandwidth)
        self.density_ = self.prox_.density
        self.smoothed_density_ = self.prox_.smoothed_density
        return self

    def predict(self, X: Any = None) -> np.ndarray:
        """Minimizer vertex for each vertex index in ``X`` (all vertices when omitted)."""
        check_is_fitted(self, "prox_")
        m = self.prox_.minimizer
        return m.copy() if X is None else m[np.asarray(X, dtype=int)]

    def transform(self, X: Any = None) -> np.ndarray:
        check_is_fitted(self, "prox_")
        v = self.prox_.value
        return v.copy() if X is None else v[np.asarray(X, dtype=int)]


class EnergyDensityEstimator(BaseEstimator):
    """Extrapolated energy density ``e₂[u]`` of maps on a fixed graph."""

    def __init__(self, space: TargetSpace | None = None, scales: Any = None):
        self.space = space
        self.scales = scales

    def fit(self, X: DomainGraph, y: Any = None, region: VertexSubset | None = None) -> "EnergyDensityEstimator":
        """Store the graph and region; when a map ``y`` is given, also profile it."""
        self.graph_ = _graph(X)
        self.region_ = region
        if y is not None:
            self.profile_ = energy_density(self.graph_, self.space, np.asarray(y, dtype=float),
                                           region, self.scales)
        return self

    def transform(self, X: Any) -> np.ndarray:
        """``e₂`` of the map ``X`` (zero where no ball at the fitted scales fits in the region)."""
        check_is_fitted(self, "graph_")
        return energy_density(self.graph_, self.space, np.asarray(X, dtype=float), self.region_, self.scales).e2


class ScenarioVerifier(BaseEstimator):
    """Solve a scenario and run its checks.

    ``fit`` takes a :class:`~npc.scenario.Scenario`, a dict or a JSON path;
    ``predict`` returns one boolean per report; ``score`` is the fraction of
    hard gates that pass.
    """

    def __init__(self, level: int = 0, checks: list[str] | None = None):
        self.level = level
        self.checks = checks

    def fit(self, X: Any, y: Any = None) -> "ScenarioVerifier":
        if isinstance(X, dict):
            X = Scenario.from_dict(X)
        elif isinstance(X, (str, Path)):
            X = Scenario.load(X)
        if not isinstance(X, Scenario):
            raise TypeError("expected a Scenario, a dict or a path")
        self.scenario_ = X
        self.built_, self.result_, self.reports_ = run_checks(X, self.level, self.checks)
        return self

    def predict(self, X: Any = None) -> np.ndarray:
        check_is_fitted(self, "reports_")
        return np.array([r.passed for r in self.reports_], dtype=bool)

    def score(self, X: Any = None, y: Any = None) -> float:
        check_is_fitted(self, "reports_")
        hard = [r for r in self.reports_ if r.hard]
        return float(np.mean([r.passed for r in hard])) if hard else 1.0

    @property
    def hard_passed(self) -> bool:
        check_is_fitted(self, "reports_")
        return all(r.passed for r in self.reports_ if r.hard)

    def report(self) -> list[CheckReport]:
        check_is_fitted(self, "reports_")
        return list(self.reports_)
