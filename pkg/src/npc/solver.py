"""Dirichlet problem for maps into CAT(0) targets, solved by barycenter sweeps.

Each sweep replaces the value at an interior vertex by the conductance-weighted
barycenter of its neighbors, which is the exact minimizer of the local part of
the discrete energy.  Vertices of one colour class of a greedy colouring are
pairwise non-adjacent, so a class is updated at once without changing the
Gauss–Seidel fixed point or its monotonicity.  Over-relaxation moves past the
barycenter along the geodesic and is kept only where it does not increase the
local energy.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, spsolve

from .domain import DomainGraph, VertexSubset
from .energy import dirichlet_energy
from .exact import weighted_sq_dist_pieces
from .targets import Euclidean, TargetSpace, space_from_dict
from .validation import check_map_field

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_SWEEPS = 100_000


def thread_cap() -> int:
    """Parallelism cap from ``NPC_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("NPC_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SolverParams:
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    tolerance: float = DEFAULT_TOLERANCE
    mode: Literal["gauss-seidel", "jacobi"] = "gauss-seidel"
    relaxation: bool = True
    init: Literal["boundary-barycenter", "random"] = "boundary-barycenter"
    seed: int = 0
    residual_every: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("gauss-seidel", "jacobi"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.init not in ("boundary-barycenter", "random"):
            raise ValueError(f"unknown initialization {self.init!r}")
        if self.max_sweeps < 1 or not self.tolerance > 0 or self.residual_every < 1:
            raise ValueError("invalid solver parameters")

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


class DirichletProblem:
    """Minimize the discrete energy on ``region`` with values fixed on its boundary.

    Parameters
    ----------
    graph : DomainGraph
    region : VertexSubset
        Must have a non-empty boundary and interior.
    space : TargetSpace
    boundary : array_like
        Either a full ``(n, D)`` map field (only boundary rows are read) or
        one row per boundary vertex in ascending vertex order.
    params : SolverParams, optional
    """

    def __init__(self, graph: DomainGraph, region: VertexSubset, space: TargetSpace,
                 boundary: Any, params: SolverParams | None = None):
        self.graph = graph
        self.region = region
        self.space = space
        self.params = params or SolverParams()
        bidx = region.boundary
        if bidx.size == 0:
            raise ValueError("the region needs a non-empty boundary")
        if region.interior.size == 0:
            raise ValueError("the region needs a non-empty interior")
        arr = np.asarray(boundary, dtype=float)
        if arr.ndim == 1 and space.coord_dim == 1:
            arr = arr[:, None]
        if arr.shape == (graph.vertex_count, space.coord_dim):
            arr = arr[bidx]
        if arr.shape != (bidx.size, space.coord_dim):
            raise ValueError(f"boundary data has shape {arr.shape}, expected ({bidx.size}, {space.coord_dim})")
        self.boundary_values = space.canonical(space.validate(arr))
        self._stencil: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def interior(self) -> np.ndarray:
        return self.region.interior

    def stencil(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded neighbor indices and conductances (zero-padded) of every vertex, restricted to the region."""
        if self._stencil is None:
            self._stencil = region_stencil(self.graph, self.region)
        return self._stencil

    def to_dict(self) -> dict[str, Any]:
        return {
            "graph": self.graph.to_dict(),
            "region": {"members": self.region.members.tolist(), "boundary": self.region.boundary.tolist()},
            "space": self.space.to_dict(),
            "boundary": self.space.field_to_records(self.boundary_values),
            "params": self.params.to_dict(),
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DirichletProblem":
        g = DomainGraph.from_dict(data["graph"])
        reg = data["region"]
        U = VertexSubset.from_indices(g, reg["members"], boundary=reg["boundary"])
        space = space_from_dict(data["space"])
        bvals = space.field_from_records(data["boundary"])
        return cls(g, U, space, bvals, SolverParams(**data.get("params", {})))

    @classmethod
    def from_json(cls, text: str) -> "DirichletProblem":
        return cls.from_dict(json.loads(text))


@dataclass
class SolveResult:
    u: np.ndarray
    residual: float
    energy_trace: list[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    residual_trace: list[float] = field(default_factory=list)
    relaxation: float = 1.0

    def to_dict(self, space: TargetSpace) -> dict[str, Any]:
        return {
            "u": space.field_to_records(self.u),
            "residual": float(self.residual),
            "energy_trace": [float(e) for e in self.energy_trace],
            "residual_trace": [float(r) for r in self.residual_trace],
            "sweeps": int(self.sweeps),
            "converged": bool(self.converged),
            "relaxation": float(self.relaxation),
        }

    def to_json(self, space: TargetSpace, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(space), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any], space: TargetSpace) -> "SolveResult":
        return cls(
            u=space.field_from_records(data["u"]),
            residual=float(data["residual"]),
            energy_trace=list(data.get("energy_trace", [])),
            sweeps=int(data.get("sweeps", 0)),
            converged=bool(data.get("converged", False)),
            residual_trace=list(data.get("residual_trace", [])),
            relaxation=float(data.get("relaxation", 1.0)),
        )


# ---------------------------------------------------------------------------
# Stencils, colouring, relaxation factor


def region_stencil(g: DomainGraph, U: VertexSubset | None) -> tuple[np.ndarray, np.ndarray]:
    W = g.weights
    if U is not None:
        keep = sparse.diags(U.mask.astype(float))
        W = sparse.csr_matrix(keep @ W @ keep)
        W.eliminate_zeros()
    deg = np.diff(W.indptr)
    kmax = max(1, int(deg.max()) if deg.size else 1)
    nbr = np.zeros((g.vertex_count, kmax), dtype=np.int64)
    wt = np.zeros((g.vertex_count, kmax))
    for x in range(g.vertex_count):
        lo, hi = W.indptr[x], W.indptr[x + 1]
        nbr[x, : hi - lo] = W.indices[lo:hi]
        nbr[x, hi - lo:] = x
        wt[x, : hi - lo] = W.data[lo:hi]
    return nbr, wt


def greedy_colouring(g: DomainGraph, vertices: np.ndarray) -> list[np.ndarray]:
    """Colour classes of a greedy colouring of the induced subgraph, in ascending vertex order."""
    vertices = np.sort(np.asarray(vertices, dtype=np.int64))
    inside = np.zeros(g.vertex_count, dtype=bool)
    inside[vertices] = True
    colour = np.full(g.vertex_count, -1, dtype=np.int64)
    W = g.weights
    for x in vertices:
        nb = W.indices[W.indptr[x]:W.indptr[x + 1]]
        used = {int(colour[y]) for y in nb if inside[y] and colour[y] >= 0}
        c = 0
        while c in used:
            c += 1
        colour[x] = c
    ncol = int(colour[vertices].max()) + 1
    return [vertices[colour[vertices] == c] for c in range(ncol)]


def optimal_relaxation(g: DomainGraph, U: VertexSubset) -> float:
    """``ω = 2 / (1 + √(1 - ρ_J²))`` from the Jacobi spectral radius of the interior block."""
    I = U.interior
    if I.size < 3:
        return 1.0
    nbr_W = region_weights(g, U)
    W_II = nbr_W[I][:, I]
    deg = np.asarray(nbr_W[I].sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(deg)
    S = sparse.diags(s) @ W_II @ sparse.diags(s)
    try:
        if I.size <= 400:
            rho = float(np.max(np.abs(np.linalg.eigvalsh(S.toarray()))))
        else:
            rho = float(abs(eigsh(S, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0]))
    except (ArpackNoConvergence, np.linalg.LinAlgError):
        return 1.0
    rho = min(rho, 1.0 - 1e-12)
    return 2.0 / (1.0 + np.sqrt(1.0 - rho**2))


def region_weights(g: DomainGraph, U: VertexSubset | None) -> sparse.csr_matrix:
    if U is None:
        return g.weights
    keep = sparse.diags(U.mask.astype(float))
    W = sparse.csr_matrix(keep @ g.weights @ keep)
    W.eliminate_zeros()
    return W


# ---------------------------------------------------------------------------
# Residual and energy


def neighbor_barycenters(g: DomainGraph, space: TargetSpace, u: np.ndarray, vertices: np.ndarray,
                         stencil: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    nbr, wt = stencil
    return space.barycenter(u[nbr[vertices]], wt[vertices])


def residual(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset) -> float:
    """``max_{x interior} d(u(x), barycenter of the neighbor values)``."""
    u = check_map_field(space, g, u)
    I = U.interior
    if I.size == 0:
        return 0.0
    st = region_stencil(g, U)
    return _residual(g, space, u, I, st)


def _residual(g, space, u, I, stencil) -> float:
    b = neighbor_barycenters(g, space, u, I, stencil)
    return float(np.max(space.distance(u[I], b)))


def _local_objective(space: TargetSpace, x: np.ndarray, nbr_vals: np.ndarray, wt: np.ndarray) -> np.ndarray:
    return np.sum(wt * space.distance(x[:, None, :], nbr_vals) ** 2, axis=-1)


def _exact_descent(new: np.ndarray, cur: np.ndarray, nbr_vals: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Rows where the exact local energy at ``new`` does not exceed that at ``cur`` (Euclidean).

    Float sums decide whenever they differ by more than a rounding bound;
    the rest (near convergence) are settled by exact expansions.
    """
    # Σ w(|new - y|² - |cur - y|²) = Σ w (new - cur)·(new + cur - 2y), whose
    # rounding error is proportional to |new - cur| rather than to the energy.
    delta = new - cur
    s = new[:, None, :] + cur[:, None, :] - 2.0 * nbr_vals
    diff = np.sum(wt * np.sum(delta[:, None, :] * s, axis=-1), axis=-1)
    mag = np.abs(new[:, None, :]) + np.abs(cur[:, None, :]) + 2.0 * np.abs(nbr_vals)
    k, D = nbr_vals.shape[1], nbr_vals.shape[2]
    err = 4 * (k + D + 6) * np.finfo(float).eps * np.sum(wt * np.sum(np.abs(delta)[:, None, :] * mag, axis=-1), axis=-1)
    ok = diff < -err
    unsure = np.flatnonzero(~ok & (diff <= err))
    if unsure.size:
        pn = weighted_sq_dist_pieces(new[unsure, None, :], nbr_vals[unsure], wt[unsure])
        po = weighted_sq_dist_pieces(cur[unsure, None, :], nbr_vals[unsure], wt[unsure])
        diff = np.concatenate([pn.reshape(unsure.size, -1), -po.reshape(unsure.size, -1)], axis=1)
        ok[unsure] = [math.fsum(row) <= 0.0 for row in diff]
    return ok


# ---------------------------------------------------------------------------
# Solvers


def initial_map(p: DirichletProblem) -> np.ndarray:
    space, g = p.space, p.graph
    bidx = p.region.boundary
    if p.params.init == "boundary-barycenter":
        start = space.barycenter(p.boundary_values[None], None)[0]
        u = np.repeat(start[None], g.vertex_count, axis=0)
    else:
        rng = np.random.default_rng(p.params.seed)
        pick = rng.integers(0, bidx.size, size=g.vertex_count)
        u = p.boundary_values[pick].copy()
    u[bidx] = p.boundary_values
    return space.canonical(u) if not isinstance(space, Euclidean) else u


def _update_class(space, u, C, stencil, omega, threads):
    nbr, wt = stencil

    def work(idx):
        vals = u[nbr[idx]]
        w = wt[idx]
        cur = u[idx]
        b = space.barycenter(vals, w)
        if isinstance(space, Euclidean):
            # Every move is checked against the exact energy, so the (exactly
            # evaluated) trace cannot rise; the rounded barycenter is within
            # O(eps²) of the true minimizer and passes until convergence.
            out = np.where(_exact_descent(b, cur, vals, w)[:, None], b, cur)
            if omega == 1.0:
                return out
            cand = space.extend(cur, b, omega)
            return np.where(_exact_descent(cand, cur, vals, w)[:, None], cand, out)
        if omega == 1.0:
            return b
        old = _local_objective(space, cur, vals, w)
        cand = space.extend(cur, b, omega)
        fc = _local_objective(space, cand, vals, w)
        # The over-relaxed point is kept only where it does not raise the local
        # energy; b itself is the exact local minimizer and always acceptable.
        return np.where((fc <= old)[:, None], cand, b)

    if threads > 1 and C.size >= 256:
        chunks = np.array_split(C, threads)
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
        return np.concatenate(parts)
    return work(C)


def solve_dirichlet(p: DirichletProblem, u0: np.ndarray | None = None) -> SolveResult:
    """Gauss–Seidel (or Jacobi) barycenter iteration until the residual meets the tolerance."""
    g, space, U, prm = p.graph, p.space, p.region, p.params
    stencil = p.stencil()
    I = U.interior
    bidx = U.boundary
    u = initial_map(p) if u0 is None else np.array(check_map_field(space, g, u0))
    u[bidx] = p.boundary_values
    threads = thread_cap()
    if prm.mode == "gauss-seidel":
        classes = greedy_colouring(g, I)
        omega = optimal_relaxation(g, U) if prm.relaxation else 1.0
    else:
        classes = [I]
        omega = 1.0
    energies = [dirichlet_energy(g, space, u, U)]
    res = _residual(g, space, u, I, stencil)
    residuals = [res]
    sweeps = 0
    while res > prm.tolerance and sweeps < prm.max_sweeps:
        if prm.mode == "gauss-seidel":
            for C in classes:
                u[C] = _update_class(space, u, C, stencil, omega, threads)
        else:
            b = _update_class(space, u, I, stencil, 1.0, threads)
            # Damped Jacobi (geodesic midpoint toward the barycenter): the
            # undamped iteration can oscillate on bipartite graphs.
            u[I] = space._geodesic(u[I], b, np.full(I.size, 0.5))
        sweeps += 1
        energies.append(dirichlet_energy(g, space, u, U))
        if sweeps % prm.residual_every == 0 or sweeps == prm.max_sweeps:
            res = _residual(g, space, u, I, stencil)
            residuals.append(res)
    converged = res <= prm.tolerance
    if not converged:
        log.warning("Dirichlet solve stopped after %d sweeps at residual %.3e", sweeps, res)
    u = space.canonical(u)
    u[bidx] = p.boundary_values
    return SolveResult(u, res, energies, sweeps, converged, residuals, omega)


def linear_oracle(p: DirichletProblem) -> np.ndarray:
    """Exact discrete-harmonic map for a Euclidean target by a sparse direct solve."""
    if not isinstance(p.space, Euclidean):
        raise TypeError("the linear oracle needs a Euclidean target")
    g, U = p.graph, p.region
    W = region_weights(g, U)
    I, B = U.interior, U.boundary
    deg = np.asarray(W.sum(axis=1)).ravel()
    A = sparse.csc_matrix(sparse.diags(deg[I]) - W[I][:, I])
    rhs = W[I][:, B] @ p.boundary_values
    u = initial_map(p)
    u[B] = p.boundary_values
    sol = spsolve(A, rhs)
    u[I] = sol.reshape(I.size, -1)
    return u
