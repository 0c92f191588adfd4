"""Weighted graphs standing in for metric-measure domains.

A :class:`DomainGraph` carries a vertex measure ``m``, undirected edges with
lengths and conductances, and declared (not verified) curvature/dimension
metadata. The graph Laplacian used throughout the package is

    (Δf)(x) = m(x)^-1 Σ_y w_xy (f(y) - f(x)),

which is self-adjoint for the ``m``-weighted inner product.

Conductance conventions of the generators are chosen so that this Laplacian
approximates the flat (or hyperbolic) Laplace operator: on a 1D path with
spacing ``h`` we use ``m = h`` and ``w = 1/h``; on the square torus ``m = h²``
and ``w = 1``; on triangulated meshes ``w_xy = (2/3) A_xy / ℓ_xy²`` with
``A_xy`` the area of the triangles incident to the edge.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import Delaunay

#: Above this size distances are computed per source instead of all-pairs.
DENSE_DISTANCE_LIMIT = 4096
MAX_MESH_VERTICES = 1_000_000
#: Open balls use ``d < r(1 - BALL_RTOL)`` so summed edge lengths do not flip membership.
BALL_RTOL = 1e-9


class DomainGraph:
    """Finite connected weighted graph with a positive vertex measure.

    Parameters
    ----------
    measure : array_like, shape (n,)
        Positive vertex weights ``m(x)``.
    edges : array_like, shape (E, 2)
        Undirected edges, each listed once.
    lengths, conductances : array_like, shape (E,)
        Strictly positive edge lengths ``ℓ`` and conductances ``w``.
    curvature_k, dimension_n : float
        Nominal lower Ricci bound ``K`` and dimension bound ``N``.
    positions : array_like, optional
        Embedding coordinates used by boundary-data generators.
    """

    def __init__(
        self,
        measure: Iterable[float],
        edges: Any,
        lengths: Iterable[float],
        conductances: Iterable[float],
        curvature_k: float = 0.0,
        dimension_n: float = 1.0,
        positions: Any = None,
        name: str = "graph",
    ) -> None:
        self.measure = np.array(measure, dtype=float)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.lengths = np.array(lengths, dtype=float)
        self.conductances = np.array(conductances, dtype=float)
        self.curvature_k = float(curvature_k)
        self.dimension_n = float(dimension_n)
        self.positions = None if positions is None else np.array(positions, dtype=float)
        self.name = name
        for arr in (self.measure, self.edges, self.lengths, self.conductances):
            arr.setflags(write=False)
        self._validate()
        n = self.vertex_count
        a, b = self.edges[:, 0], self.edges[:, 1]
        self.weights = sparse.csr_matrix(
            (np.r_[self.conductances, self.conductances], (np.r_[a, b], np.r_[b, a])),
            shape=(n, n),
        )
        self.length_matrix = sparse.csr_matrix(
            (np.r_[self.lengths, self.lengths], (np.r_[a, b], np.r_[b, a])), shape=(n, n)
        )
        self._lock = threading.Lock()
        self._dist: np.ndarray | None = None
        self._laplacian: sparse.csr_matrix | None = None
        self._eig: tuple[np.ndarray, np.ndarray] | None = None

    def _validate(self) -> None:
        n = self.measure.size
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        if np.any(~np.isfinite(self.measure)) or np.any(self.measure <= 0):
            raise ValueError("vertex measure must be strictly positive")
        if self.dimension_n < 1:
            raise ValueError("dimension_n must be >= 1")
        E = self.edges.shape[0]
        if self.lengths.shape != (E,) or self.conductances.shape != (E,):
            raise ValueError("lengths and conductances must have one entry per edge")
        if E and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if np.any(~(self.lengths > 0)) or np.any(~(self.conductances > 0)):
            raise ValueError("edge lengths and conductances must be strictly positive")
        key = np.sort(self.edges, axis=1)
        if np.unique(key, axis=0).shape[0] != E:
            raise ValueError("duplicate edges")
        if n > 1:
            adj = sparse.csr_matrix((np.ones(E), (key[:, 0], key[:, 1])), shape=(n, n))
            ncomp, _ = csgraph.connected_components(adj, directed=False)
            if ncomp != 1:
                raise ValueError("graph must be connected")

    # -- basic structure -------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return int(self.measure.size)

    n = vertex_count

    @property
    def mesh_scale(self) -> float:
        return float(self.lengths.max()) if self.lengths.size else 0.0

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def neighbors(self, x: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Neighbor indices of ``x`` with edge lengths and conductances."""
        lo, hi = self.weights.indptr[x], self.weights.indptr[x + 1]
        idx = self.weights.indices[lo:hi]
        lens = self.length_matrix[x, idx].toarray().ravel() if idx.size else np.zeros(0)
        return idx, lens, self.weights.data[lo:hi]

    def degrees(self) -> np.ndarray:
        return np.diff(self.weights.indptr)

    def edge_key(self) -> tuple[np.ndarray, np.ndarray]:
        return self.edges[:, 0], self.edges[:, 1]

    # -- Laplacian ---------------------------------------------------------

    @property
    def laplacian(self) -> sparse.csr_matrix:
        """Sparse matrix of ``f ↦ Δf``."""
        if self._laplacian is None:
            with self._lock:
                if self._laplacian is None:
                    W = self.weights
                    deg = np.asarray(W.sum(axis=1)).ravel()
                    L = sparse.diags(1.0 / self.measure) @ (W - sparse.diags(deg))
                    self._laplacian = sparse.csr_matrix(L)
        return self._laplacian

    def spectral_decomposition(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs ``(λ, V)`` of ``M^{1/2} Δ M^{-1/2}`` (symmetric, λ ≤ 0)."""
        if self._eig is None:
            with self._lock:
                if self._eig is None:
                    s = np.sqrt(self.measure)
                    W = self.weights.toarray()
                    deg = W.sum(axis=1)
                    S = (W - np.diag(deg)) / np.outer(s, s)
                    lam, V = np.linalg.eigh(S)
                    self._eig = (np.minimum(lam, 0.0), V)
        return self._eig

    # -- distances -----------------------------------------------------------

    def distance_matrix(self) -> np.ndarray:
        """All-pairs shortest-path distances (cached)."""
        if self.vertex_count > DENSE_DISTANCE_LIMIT:
            raise MemoryError(
                f"all-pairs distances disabled above {DENSE_DISTANCE_LIMIT} vertices; "
                "use distances_from()"
            )
        if self._dist is None:
            with self._lock:
                if self._dist is None:
                    D = csgraph.dijkstra(self.length_matrix, directed=False)
                    D.setflags(write=False)
                    self._dist = D
        return self._dist

    def distances_from(self, x: int, limit: float = np.inf) -> np.ndarray:
        if self.vertex_count <= DENSE_DISTANCE_LIMIT:
            return self.distance_matrix()[x]
        return csgraph.dijkstra(self.length_matrix, directed=False, indices=int(x), limit=limit)

    def distance(self, x: int, y: int) -> float:
        if x == y:
            return 0.0
        return float(self.distances_from(x)[y])

    def diameter(self) -> float:
        return float(self.distance_matrix().max())

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        vertices = []
        for i, m in enumerate(self.measure):
            rec: dict[str, Any] = {"id": i, "measure": float(m)}
            if self.positions is not None:
                rec["position"] = [float(v) for v in np.atleast_1d(self.positions[i])]
            vertices.append(rec)
        return {
            "vertices": vertices,
            "edges": [
                {"a": int(a), "b": int(b), "length": float(l), "conductance": float(w)}
                for (a, b), l, w in zip(self.edges, self.lengths, self.conductances)
            ],
            "k": self.curvature_k,
            "n": self.dimension_n,
            "scale": self.mesh_scale,
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DomainGraph":
        verts = sorted(data["vertices"], key=lambda v: v["id"])
        if [v["id"] for v in verts] != list(range(len(verts))):
            raise ValueError("vertex ids must be 0..n-1")
        positions = None
        if verts and all("position" in v for v in verts):
            positions = [v["position"] for v in verts]
        edges = data["edges"]
        g = cls(
            measure=[v["measure"] for v in verts],
            edges=[(e["a"], e["b"]) for e in edges],
            lengths=[e["length"] for e in edges],
            conductances=[e["conductance"] for e in edges],
            curvature_k=data.get("k", 0.0),
            dimension_n=data.get("n", 1.0),
            positions=positions,
        )
        if "scale" in data and not math.isclose(g.mesh_scale, float(data["scale"]), rel_tol=1e-12):
            raise ValueError("scale field disagrees with the maximum edge length")
        return g

    @classmethod
    def from_json(cls, text: str) -> "DomainGraph":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> bytes:
        parts = [self.measure, self.edges, self.lengths, self.conductances,
                 np.array([self.curvature_k, self.dimension_n])]
        return b"".join(np.ascontiguousarray(p).tobytes() for p in parts)

    def __repr__(self) -> str:
        return (f"DomainGraph(name={self.name!r}, n={self.vertex_count}, "
                f"edges={self.edges.shape[0]}, h={self.mesh_scale:g}, K={self.curvature_k:g}, "
                f"N={self.dimension_n:g})")


@dataclass(frozen=True, eq=False)
class VertexSubset:
    """Subset of vertices with an interior/boundary split.

    By default the boundary consists of the members adjacent to a non-member.
    A Dirichlet region may instead pin an explicit set of members (e.g. a seam
    on a torus), which is then used as the boundary.
    """

    mask: np.ndarray
    boundary_mask: np.ndarray

    @classmethod
    def from_mask(cls, graph: DomainGraph, mask: Any, boundary: Any = None) -> "VertexSubset":
        mask = np.asarray(mask, dtype=bool).copy()
        if mask.shape != (graph.vertex_count,):
            raise ValueError("mask must have one entry per vertex")
        if boundary is None:
            outside = (~mask).astype(float)
            touches = (graph.weights @ outside) > 0
            bmask = mask & touches
        else:
            boundary = np.asarray(boundary)
            if boundary.dtype == bool:
                bmask = boundary.copy()
            else:
                bmask = np.zeros_like(mask)
                bmask[boundary.astype(np.int64)] = True
            if np.any(bmask & ~mask):
                raise ValueError("boundary vertices must be members")
        mask.setflags(write=False)
        bmask.setflags(write=False)
        return cls(mask, bmask)

    @classmethod
    def from_indices(cls, graph: DomainGraph, members: Iterable[int], boundary: Any = None) -> "VertexSubset":
        mask = np.zeros(graph.vertex_count, dtype=bool)
        mask[np.fromiter(members, dtype=np.int64)] = True
        return cls.from_mask(graph, mask, boundary)

    @classmethod
    def everything(cls, graph: DomainGraph) -> "VertexSubset":
        return cls.from_mask(graph, np.ones(graph.vertex_count, dtype=bool))

    @property
    def interior_mask(self) -> np.ndarray:
        return self.mask & ~self.boundary_mask

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __contains__(self, x: int) -> bool:
        return bool(self.mask[x])

    def issubset(self, other: "VertexSubset") -> bool:
        return bool(np.all(~self.mask | other.mask))


# -- generators ----------------------------------------------------------------


def build_path(n: int, spacing: float, origin: float = 0.0) -> DomainGraph:
    """Path with ``n`` equally spaced vertices (measure ``spacing``, conductance ``1/spacing``).

    Vertex ``k`` sits at ``origin + k·spacing``.
    """
    if n < 2:
        raise ValueError("a path needs at least two vertices")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    idx = np.arange(n - 1)
    return DomainGraph(
        measure=np.full(n, float(spacing)),
        edges=np.c_[idx, idx + 1],
        lengths=np.full(n - 1, float(spacing)),
        conductances=np.full(n - 1, 1.0 / spacing),
        curvature_k=0.0,
        dimension_n=1.0,
        positions=(origin + np.arange(n) * spacing)[:, None],
        name=f"path({n},{spacing:g})",
    )


def torus_index(i: int, j: int, nx: int) -> int:
    return j * nx + i


def build_torus_grid(nx: int, ny: int, spacing: float) -> DomainGraph:
    """Periodic ``nx × ny`` square grid; vertex ``(i, j)`` has index ``j*nx + i``."""
    if nx < 3 or ny < 3:
        raise ValueError("torus grid needs nx, ny >= 3")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    here = j * nx + i
    right = j * nx + (i + 1) % nx
    up = ((j + 1) % ny) * nx + i
    edges = np.r_[np.c_[here, right], np.c_[here, up]]
    n = nx * ny
    return DomainGraph(
        measure=np.full(n, spacing**2),
        edges=edges,
        lengths=np.full(edges.shape[0], float(spacing)),
        conductances=np.ones(edges.shape[0]),
        curvature_k=0.0,
        dimension_n=2.0,
        positions=np.c_[i * spacing, j * spacing],
        name=f"torus({nx},{ny},{spacing:g})",
    )


def hyperboloid_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hyperbolic distance between hyperboloid points, accurate for nearby points."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    ds = p[..., 1:] - q[..., 1:]
    d0 = np.sum(ds * (p[..., 1:] + q[..., 1:]), axis=-1) / (p[..., 0] + q[..., 0])
    quad = np.maximum(np.sum(ds * ds, axis=-1) - d0 * d0, 0.0)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(quad))


def _hyperbolic_triangle_area(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Area (angle defect) of hyperbolic triangles with side lengths a, b, c."""

    def angle(opp, s1, s2):
        cosv = (np.cosh(s1) * np.cosh(s2) - np.cosh(opp)) / (np.sinh(s1) * np.sinh(s2))
        return np.arccos(np.clip(cosv, -1.0, 1.0))

    return np.pi - angle(a, b, c) - angle(b, c, a) - angle(c, a, b)


def build_hyperbolic_disk(radius: float, spacing: float) -> DomainGraph:
    """Triangulated disk of the hyperbolic plane (curvature -1).

    Vertices sit on concentric geodesic circles with arc spacing close to
    ``spacing``; the triangulation is the Delaunay triangulation in the
    Poincaré model. Vertex measure is one third of the hyperbolic area of the
    incident triangles, edge lengths are hyperbolic distances.
    """
    if not (radius > spacing > 0):
        raise ValueError("need radius > spacing > 0")
    rings = max(1, int(round(radius / spacing)))
    dr = radius / rings
    radii = dr * np.arange(1, rings + 1)
    counts = np.maximum(6, np.round(2 * np.pi * np.sinh(radii) / spacing)).astype(np.int64)
    total = 1 + int(counts.sum())
    if total > MAX_MESH_VERTICES:
        raise ValueError(f"mesh would have {total} vertices (> {MAX_MESH_VERTICES})")
    rs = [np.zeros(1)]
    thetas = [np.zeros(1)]
    for k, (r, c) in enumerate(zip(radii, counts)):
        shift = 0.5 * (k % 2)
        rs.append(np.full(c, r))
        thetas.append(2 * np.pi * (np.arange(c) + shift) / c)
    r = np.concatenate(rs)
    th = np.concatenate(thetas)
    hyper = np.c_[np.cosh(r), np.sinh(r) * np.cos(th), np.sinh(r) * np.sin(th)]
    rho = np.tanh(r / 2)
    tri = Delaunay(np.c_[rho * np.cos(th), rho * np.sin(th)]).simplices
    tri = np.sort(tri, axis=1)

    e01, e12, e02 = tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]
    la = hyperboloid_distance(hyper[tri[:, 1]], hyper[tri[:, 2]])
    lb = hyperboloid_distance(hyper[tri[:, 0]], hyper[tri[:, 2]])
    lc = hyperboloid_distance(hyper[tri[:, 0]], hyper[tri[:, 1]])
    area = _hyperbolic_triangle_area(la, lb, lc)
    keep = area > 1e-14 * spacing**2
    tri, area = tri[keep], area[keep]
    e01, e12, e02 = e01[keep], e12[keep], e02[keep]

    n = hyper.shape[0]
    measure = np.zeros(n)
    np.add.at(measure, tri.ravel(), np.repeat(area / 3.0, 3))
    all_edges = np.r_[e01, e12, e02]
    edge_area = np.r_[area, area, area]
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    inc_area = np.zeros(edges.shape[0])
    np.add.at(inc_area, inverse.ravel(), edge_area)
    lengths = hyperboloid_distance(hyper[edges[:, 0]], hyper[edges[:, 1]])
    conductances = (2.0 / 3.0) * inc_area / lengths**2
    return DomainGraph(
        measure=measure,
        edges=edges,
        lengths=lengths,
        conductances=conductances,
        curvature_k=-1.0,
        dimension_n=2.0,
        positions=hyper,
        name=f"hyperbolic_disk({radius:g},{spacing:g})",
    )


# -- metric queries ---------------------------------------------------------------


def graph_distance(g: DomainGraph, x: int, y: int) -> float:
    """Shortest-path distance between vertices ``x`` and ``y``."""
    n = g.vertex_count
    if not (0 <= x < n and 0 <= y < n):
        raise IndexError("vertex out of range")
    return g.distance(int(x), int(y))


def ball(g: DomainGraph, center: int, r: float) -> VertexSubset:
    """Open ball ``{y : d(center, y) < r}``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    d = g.distances_from(int(center), limit=r)
    return VertexSubset.from_mask(g, in_open_ball(d, r))


def ball_indices(g: DomainGraph, center: int, r: float) -> np.ndarray:
    return np.flatnonzero(in_open_ball(g.distances_from(int(center), limit=r), r))


def in_open_ball(d: np.ndarray, r: float) -> np.ndarray:
    return np.asarray(d) < r * (1.0 - BALL_RTOL)
