"""CAT(0) target spaces: Euclidean space, metric trees, the hyperbolic plane and products.

Points are flat float arrays of length ``space.coord_dim``; batches carry any
number of leading axes.  Every operation broadcasts over those axes.

* Euclidean(d): the coordinate vector.
* MetricTree: ``(edge id, offset)`` with ``0 ≤ offset ≤ length``.  A point
  sitting on a tree vertex is stored on the lowest-indexed incident edge.
* HyperbolicPlane: hyperboloid triple ``(x0, x1, x2)`` with
  ``x0² - x1² - x2² = 1`` and ``x0 ≥ 1``.
* Product(A, B): the concatenation of the two factor coordinates.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from collections import deque
from typing import Any

import numpy as np

from .report import EXACT, CheckReport, top_witnesses

#: Slack threshold shared by the comparison-type checks.
SLACK_TOL = 1e-9


class BarycenterError(RuntimeError):
    """Raised when an iterative barycenter fails to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _as_points(x: Any, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got shape {arr.shape}")
    return arr


def _check_t(t: Any) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise ValueError("geodesic parameter must lie in [0, 1]")
    return t


class TargetSpace(ABC):
    """A complete CAT(0) space with explicit geodesics."""

    kind: str = ""
    coord_dim: int = 0

    # Geometry ---------------------------------------------------------------

    @abstractmethod
    def distance(self, p: Any, q: Any) -> np.ndarray: ...

    @abstractmethod
    def _geodesic(self, p: np.ndarray, q: np.ndarray, t: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def barycenter(self, points: Any, weights: Any | None = None) -> np.ndarray:
        """Minimizer of ``Σ w_i d²(·, p_i)`` over the space.

        ``points`` has shape ``(..., k, D)`` and ``weights`` ``(..., k)``.
        Zero weights are allowed (padding); each row needs a positive weight.
        """

    @abstractmethod
    def extend(self, p: Any, b: Any, omega: float) -> np.ndarray:
        """The point at parameter ``omega ≥ 1`` on the geodesic from ``p`` through ``b``.

        Where the geodesic cannot be prolonged (tree vertices, edge ends) the
        result is clipped toward ``b``.
        """

    @abstractmethod
    def validate(self, points: Any) -> np.ndarray: ...

    @abstractmethod
    def random_points(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray: ...

    def canonical(self, points: Any) -> np.ndarray:
        return np.array(points, dtype=float)

    def geodesic_point(self, p: Any, q: Any, t: Any) -> np.ndarray:
        """Constant-speed geodesic ``γ_t`` from ``p`` to ``q``."""
        p = self.validate(p)
        q = self.validate(q)
        t = _check_t(t)
        return self._geodesic(p, q, t)

    def midpoint(self, p: Any, q: Any) -> np.ndarray:
        return self.geodesic_point(p, q, 0.5)

    def objective(self, x: Any, points: Any, weights: Any | None = None) -> np.ndarray:
        """``Σ w_i d²(x, p_i)``; ``x`` has shape ``(..., D)``, ``points`` ``(..., k, D)``."""
        points = np.asarray(points, dtype=float)
        w = np.ones(points.shape[:-1]) if weights is None else np.asarray(weights, dtype=float)
        x = np.asarray(x, dtype=float)
        d = self.distance(x[..., None, :], points)
        return np.sum(w * d**2, axis=-1)

    def _normalized_weights(self, points: np.ndarray, weights: Any | None) -> np.ndarray:
        if points.ndim < 2:
            raise ValueError("barycenter needs an array of points with shape (..., k, D)")
        if points.shape[-2] == 0:
            raise ValueError("barycenter needs at least one point")
        w = np.ones(points.shape[:-1]) if weights is None else np.broadcast_to(
            np.asarray(weights, dtype=float), points.shape[:-1])
        if np.any(w < 0) or np.any(~np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        tot = w.sum(axis=-1, keepdims=True)
        if np.any(tot <= 0):
            raise ValueError("every barycenter needs a positive total weight")
        return w / tot

    # Serialization ----------------------------------------------------------

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @abstractmethod
    def point_to_dict(self, p: Any) -> dict[str, Any]: ...

    @abstractmethod
    def point_from_dict(self, data: dict[str, Any]) -> np.ndarray: ...

    def field_to_records(self, u: Any) -> list[dict[str, Any]]:
        return [self.point_to_dict(p) for p in np.asarray(u, dtype=float)]

    def field_from_records(self, records: list[dict[str, Any]]) -> np.ndarray:
        if not records:
            return np.zeros((0, self.coord_dim))
        return np.stack([self.point_from_dict(r) for r in records])

    def _check_kind(self, data: dict[str, Any]) -> None:
        if data.get("kind") != self.kind:
            raise ValueError(f"point of kind {data.get('kind')!r} does not belong to a {self.kind} space")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TargetSpace) and self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(self.to_json(sort_keys=True))


# ---------------------------------------------------------------------------
# Euclidean space


class Euclidean(TargetSpace):
    kind = "euclidean"

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.coord_dim = self.dim

    def __repr__(self) -> str:
        return f"Euclidean({self.dim})"

    def validate(self, points: Any) -> np.ndarray:
        arr = _as_points(points, self.dim)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Euclidean points must be finite")
        return arr

    def distance(self, p: Any, q: Any) -> np.ndarray:
        return np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float), axis=-1)

    def _geodesic(self, p, q, t):
        t = t[..., None]
        return (1 - t) * p + t * q

    def barycenter(self, points, weights=None):
        points = np.asarray(points, dtype=float)
        w = self._normalized_weights(points, weights)
        return np.einsum("...k,...kd->...d", w, points)

    def extend(self, p, b, omega):
        p = np.asarray(p, dtype=float)
        return p + omega * (np.asarray(b, dtype=float) - p)

    def random_points(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.normal(size=size + (self.dim,))

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}

    def point_to_dict(self, p):
        return {"kind": self.kind, "coords": [float(c) for c in np.asarray(p, dtype=float)]}

    def point_from_dict(self, data):
        self._check_kind(data)
        return self.validate(np.asarray(data["coords"], dtype=float))


# ---------------------------------------------------------------------------
# Metric trees


class MetricTree(TargetSpace):
    """A finite metric tree with vertices ``0..V-1`` and weighted edges."""

    kind = "tree"
    coord_dim = 2

    def __init__(self, vertex_count: int, edges: Any, lengths: Any):
        self.vertex_count = int(vertex_count)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.lengths = np.asarray(lengths, dtype=float).ravel()
        V, E = self.vertex_count, len(self.edges)
        if V < 2:
            raise ValueError("a tree needs at least two vertices")
        if E != V - 1 or len(self.lengths) != E:
            raise ValueError("a tree on V vertices has exactly V-1 edges, each with a length")
        if np.any(self.edges < 0) or np.any(self.edges >= V) or np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("edge endpoints out of range or self-loop")
        if np.any(~np.isfinite(self.lengths)) or np.any(self.lengths <= 0):
            raise ValueError("edge lengths must be positive")
        self._adj: list[list[tuple[int, int]]] = [[] for _ in range(V)]
        for e, (a, b) in enumerate(self.edges):
            self._adj[a].append((int(b), e))
            self._adj[b].append((int(a), e))
        # All-pairs distances and next-hop edges by BFS from every vertex.
        self.vdist = np.full((V, V), np.inf)
        self.next_edge = np.full((V, V), -1, dtype=np.int64)
        for s in range(V):
            self.vdist[s, s] = 0.0
            queue = deque([s])
            first = {s: -1}
            while queue:
                x = queue.popleft()
                for y, e in self._adj[x]:
                    if y not in first:
                        first[y] = e if x == s else first[x]
                        self.vdist[s, y] = self.vdist[s, x] + self.lengths[e]
                        queue.append(y)
            if len(first) != V:
                raise ValueError("tree must be connected")
            for y, e in first.items():
                self.next_edge[s, y] = e
        # Path sums accumulate in BFS order; symmetrize so d(p, q) == d(q, p) bitwise.
        self.vdist = np.minimum(self.vdist, self.vdist.T)
        # Canonical (edge, offset) for a point on each vertex.
        self._vertex_point = np.zeros((V, 2))
        for v in range(V):
            e = min(e for _, e in self._adj[v])
            self._vertex_point[v] = (e, 0.0 if self.edges[e, 0] == v else self.lengths[e])

    def __repr__(self) -> str:
        return f"MetricTree(V={self.vertex_count}, E={len(self.edges)})"

    @classmethod
    def tripod(cls, length: float = 1.0) -> "MetricTree":
        """Three edges of equal length joined at the center vertex 0; tips 1, 2, 3."""
        return cls(4, [(0, 1), (0, 2), (0, 3)], [length] * 3)

    @classmethod
    def random(cls, rng: np.random.Generator, edge_count: int = 5,
               length_range: tuple[float, float] = (0.5, 1.5)) -> "MetricTree":
        """Random recursive tree: vertex ``k`` attaches to a uniform earlier vertex."""
        edges = [(int(rng.integers(0, k)), k) for k in range(1, edge_count + 1)]
        lengths = rng.uniform(*length_range, size=edge_count)
        return cls(edge_count + 1, edges, lengths)

    def vertex_point(self, v: Any) -> np.ndarray:
        return self._vertex_point[np.asarray(v, dtype=np.int64)]

    # Validation and canonical form

    def validate(self, points: Any) -> np.ndarray:
        arr = _as_points(points, 2)
        e = arr[..., 0]
        if np.any(~np.isfinite(arr)) or np.any(e != np.round(e)) or np.any(e < 0) or np.any(e >= len(self.edges)):
            raise ValueError("tree point has an invalid edge id")
        ln = self.lengths[e.astype(np.int64)]
        s = arr[..., 1]
        slack = 1e-12 * ln
        if np.any(s < -slack) or np.any(s > ln + slack):
            raise ValueError("tree point offset outside its edge")
        return arr

    def canonical(self, points: Any) -> np.ndarray:
        arr = np.array(points, dtype=float)
        e = arr[..., 0].astype(np.int64)
        ln = self.lengths[e]
        s = np.clip(arr[..., 1], 0.0, ln)
        arr[..., 1] = s
        at_a = s <= 0.0
        at_b = s >= ln
        if np.any(at_a):
            arr[at_a] = self._vertex_point[self.edges[e[at_a], 0]]
        if np.any(at_b):
            arr[at_b] = self._vertex_point[self.edges[e[at_b], 1]]
        return arr

    # Distances

    def _split(self, p: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        e = p[..., 0].astype(np.int64)
        s = p[..., 1]
        return e, s, self.lengths[e] - s, self.edges[e, 0], self.edges[e, 1]

    def distance_to_vertex(self, p: Any, v: Any) -> np.ndarray:
        e, s, rest, a, b = self._split(p)
        v = np.asarray(v, dtype=np.int64)
        return np.minimum(s + self.vdist[a, v], rest + self.vdist[b, v])

    def distance(self, p: Any, q: Any) -> np.ndarray:
        e1, s1, r1, a1, b1 = self._split(p)
        e2, s2, r2, a2, b2 = self._split(q)
        # Offsets are added first (commutative) so the result is symmetric bitwise.
        via = np.minimum.reduce([
            (s1 + s2) + self.vdist[a1, a2],
            (s1 + r2) + self.vdist[a1, b2],
            (r1 + s2) + self.vdist[b1, a2],
            (r1 + r2) + self.vdist[b1, b2],
        ])
        return np.where(e1 == e2, np.abs(s1 - s2), via)

    # Geodesics

    def _move(self, p: np.ndarray, q: np.ndarray, tau: float) -> np.ndarray:
        """Point at distance ``tau`` from ``p`` on the segment ``[p, q]``."""
        e1, s1 = int(p[0]), float(p[1])
        e2, s2 = int(q[0]), float(q[1])
        if e1 == e2:
            s = s1 + np.sign(s2 - s1) * min(tau, abs(s2 - s1))
            return np.array([e1, s])
        l1, l2 = self.lengths[e1], self.lengths[e2]
        best = None
        for u1, leg1 in ((self.edges[e1, 0], s1), (self.edges[e1, 1], l1 - s1)):
            for u2, leg2 in ((self.edges[e2, 0], s2), (self.edges[e2, 1], l2 - s2)):
                tot = leg1 + self.vdist[u1, u2] + leg2
                if best is None or tot < best[0]:
                    best = (tot, int(u1), leg1, int(u2))
        _, u1, leg1, u2 = best
        if tau <= leg1:
            return np.array([e1, s1 - tau if u1 == self.edges[e1, 0] else s1 + tau])
        tau -= leg1
        x = u1
        while x != u2:
            e = int(self.next_edge[x, u2])
            ln = self.lengths[e]
            forward = self.edges[e, 0] == x
            if tau <= ln:
                return np.array([e, tau if forward else ln - tau])
            tau -= ln
            x = int(self.edges[e, 1] if forward else self.edges[e, 0])
        return np.array([e2, tau if u2 == self.edges[e2, 0] else l2 - tau])

    def _geodesic(self, p, q, t):
        p, q, t = np.broadcast_arrays(p, q, t[..., None])
        t = t[..., 0]
        d = self.distance(p, q)
        out = np.empty(p.shape)
        for idx in np.ndindex(*p.shape[:-1]):
            out[idx] = self._move(p[idx], q[idx], float(t[idx] * d[idx]))
        return self.canonical(out)

    def extend(self, p, b, omega):
        """Prolong ``p → b`` past ``b`` only inside ``b``'s edge and away from ``p``."""
        p = np.asarray(p, dtype=float)
        b = np.asarray(b, dtype=float)
        p, b = np.broadcast_arrays(p, b)
        eb, sb, rb, ab, bb = self._split(b)
        lb = self.lengths[eb]
        L = self.distance(p, b)
        extra = (omega - 1.0) * L
        # p reaches b through the a end of b's edge iff d(p,a) + s_b = d(p,b);
        # then the prolongation moves toward the b end.
        da = self.distance_to_vertex(p, ab)
        same = p[..., 0].astype(np.int64) == eb
        toward_b = np.where(same, sb >= p[..., 1], np.abs(da + sb - L) <= 1e-12 * (1 + L))
        interior = (sb > 0) & (rb > 0)
        s_new = np.where(toward_b, np.minimum(sb + extra, lb), np.maximum(sb - extra, 0.0))
        s_new = np.where(interior & (L > 0), s_new, sb)
        out = np.stack([eb.astype(float), s_new], axis=-1)
        return self.canonical(out)

    # Barycenters

    def barycenter(self, points, weights=None):
        points = np.asarray(points, dtype=float)
        w = self._normalized_weights(points, weights)
        e, s, rest, _, _ = self._split(points)
        best_val = np.full(points.shape[:-2], np.inf)
        best = np.zeros(points.shape[:-2] + (2,))
        for k, (a, b) in enumerate(self.edges):
            ln = self.lengths[k]
            da = self.distance_to_vertex(points, a)
            dbv = self.distance_to_vertex(points, b)
            # Offset coordinate of each point's projection on the line through edge k.
            c = np.where(e == k, s, np.where(da <= dbv, -da, ln + dbv))
            s_star = np.clip(np.sum(w * c, axis=-1), 0.0, ln)
            val = np.sum(w * (s_star[..., None] - c) ** 2, axis=-1)
            take = val < best_val
            best_val = np.where(take, val, best_val)
            best[..., 0] = np.where(take, k, best[..., 0])
            best[..., 1] = np.where(take, s_star, best[..., 1])
        return self.canonical(best)

    def random_points(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        e = rng.choice(len(self.edges), size=size, p=self.lengths / self.lengths.sum())
        s = rng.uniform(0.0, 1.0, size=size) * self.lengths[e]
        return self.canonical(np.stack([e.astype(float), s], axis=-1))

    def discretized_points(self, per_edge: int) -> np.ndarray:
        """All points at offsets ``j·ℓ/per_edge`` on every edge, canonicalized and deduplicated."""
        pts = [(k, j * ln / per_edge) for k, ln in enumerate(self.lengths) for j in range(per_edge + 1)]
        pts = self.canonical(np.array(pts))
        return np.unique(pts, axis=0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "vertices": self.vertex_count,
            "edges": [{"a": int(a), "b": int(b), "length": float(ln)}
                      for (a, b), ln in zip(self.edges, self.lengths)],
        }

    def point_to_dict(self, p):
        p = np.asarray(p, dtype=float)
        return {"kind": self.kind, "edge": int(p[0]), "offset": float(p[1])}

    def point_from_dict(self, data):
        self._check_kind(data)
        return self.canonical(self.validate(np.array([data["edge"], data["offset"]], dtype=float)))


# ---------------------------------------------------------------------------
# Hyperbolic plane


def minkowski(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``⟨a, b⟩ = -a0 b0 + a1 b1 + a2 b2``."""
    return -a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _sinhc(x: np.ndarray) -> np.ndarray:
    """``sinh(x)/x`` with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x**2 / 6.0, np.sinh(xs) / xs)


class HyperbolicPlane(TargetSpace):
    """The hyperbolic plane of curvature -1 in the hyperboloid model."""

    kind = "hyperbolic"
    coord_dim = 3

    def __init__(self, max_iter: int = 10_000, tol: float = 1e-12, sample_radius: float = 3.0,
                 stall: float = 1e-8):
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.stall = float(stall)
        self.sample_radius = float(sample_radius)

    def __repr__(self) -> str:
        return "HyperbolicPlane()"

    @staticmethod
    def normalize(points: Any) -> np.ndarray:
        """Recompute ``x0`` from the spatial part."""
        p = np.array(points, dtype=float)
        p[..., 0] = np.sqrt(1.0 + p[..., 1] ** 2 + p[..., 2] ** 2)
        return p

    @staticmethod
    def from_polar(r: Any, theta: Any) -> np.ndarray:
        r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
        sh = np.sinh(r)
        return np.stack([np.cosh(r), sh * np.cos(theta), sh * np.sin(theta)], axis=-1)

    @staticmethod
    def origin() -> np.ndarray:
        return np.array([1.0, 0.0, 0.0])

    def validate(self, points: Any) -> np.ndarray:
        arr = _as_points(points, 3)
        if not np.all(np.isfinite(arr)):
            raise ValueError("hyperbolic points must be finite")
        if np.any(arr[..., 0] < 1.0 - 1e-10):
            raise ValueError("hyperboloid points need x0 >= 1")
        defect = np.abs(-minkowski(arr, arr) - 1.0) / np.maximum(1.0, arr[..., 0] ** 2)
        if np.any(defect > 1e-10):
            raise ValueError("point is not on the unit hyperboloid")
        return arr

    def distance(self, p: Any, q: Any) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        ds = q[..., 1:] - p[..., 1:]
        ss = q[..., 1:] + p[..., 1:]
        dsq = np.sum(ds**2, axis=-1)
        # x0(q) - x0(p) written without cancellation.
        d0 = np.sum(ds * ss, axis=-1) / (p[..., 0] + q[..., 0])
        chord = np.sqrt(np.maximum(dsq - d0**2, 0.0))
        return 2.0 * np.arcsinh(0.5 * chord)

    def log(self, p: Any, q: Any) -> np.ndarray:
        """Tangent vector at ``p`` pointing to ``q`` with Minkowski length ``d(p, q)``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        L = self.distance(p, q)
        # q + ⟨p,q⟩p rewritten as (q - p) - 2 sinh²(L/2) p to avoid cancellation.
        v = (q - p) - (2.0 * np.sinh(0.5 * L) ** 2)[..., None] * p
        return v / _sinhc(L)[..., None]

    def exp(self, p: Any, v: Any) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        n = np.sqrt(np.maximum(minkowski(v, v), 0.0))
        out = np.cosh(n)[..., None] * p + _sinhc(n)[..., None] * v
        return self.normalize(out)

    def _geodesic(self, p, q, t):
        # exp_p(t log_p q) is the sinh-weighted combination in closed form.
        return self.exp(p, t[..., None] * self.log(p, q))

    def extend(self, p, b, omega):
        return self.exp(p, omega * self.log(p, b))

    @staticmethod
    def tangent_frame(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minkowski-orthonormal radial/angular frame of ``T_y``."""
        xs = y[..., 1:]
        sh = np.linalg.norm(xs, axis=-1)
        safe = np.where(sh > 0, sh, 1.0)
        c = np.where(sh > 0, xs[..., 0] / safe, 1.0)
        s = np.where(sh > 0, xs[..., 1] / safe, 0.0)
        ch = y[..., 0]
        e1 = np.stack([sh, ch * c, ch * s], axis=-1)
        e2 = np.stack([np.zeros_like(sh), -s, c], axis=-1)
        return e1, e2

    def barycenter(self, points, weights=None):
        """Riemannian Newton iteration with backtracking.

        The Hessian of ``½d²(·, p)`` has eigenvalues 1 (radial) and ``L coth L``
        (transverse), so the Newton system is exact and positive definite.
        """
        points = np.asarray(points, dtype=float)
        w = self._normalized_weights(points, weights)
        batch = points.shape[:-2]
        P = points.reshape((-1,) + points.shape[-2:])
        W = w.reshape((-1, points.shape[-2]))
        c = np.einsum("nk,nkd->nd", W, P)
        Y = self.normalize(c / np.sqrt(np.maximum(-minkowski(c, c), 1e-300))[:, None])
        prev = np.full(len(Y), np.inf)
        todo = np.arange(len(Y))
        gn = np.zeros(0)
        for _ in range(self.max_iter):
            if todo.size == 0:
                return Y.reshape(batch + (3,))
            y, p, wt = Y[todo], P[todo], W[todo]
            e1, e2 = self.tangent_frame(y)
            v = self.log(y[:, None, :], p)
            a1 = minkowski(v, e1[:, None, :])
            a2 = minkowski(v, e2[:, None, :])
            L = np.hypot(a1, a2)
            g1 = np.sum(wt * a1, axis=-1)
            g2 = np.sum(wt * a2, axis=-1)
            gn = np.hypot(g1, g2)
            # Done at tolerance, or once Newton stops making progress: with
            # quadratic convergence that only happens at the rounding floor,
            # which grows with the size of the hyperboloid coordinates.
            done = (gn <= self.tol) | ((gn <= self.stall) & (gn >= 0.5 * prev[todo]))
            prev[todo] = gn
            keep = ~done
            todo, y, p, wt = todo[keep], y[keep], p[keep], wt[keep]
            e1, e2, a1, a2, L, g1, g2, gn = (x[keep] for x in (e1, e2, a1, a2, L, g1, g2, gn))
            if todo.size == 0:
                continue
            big = L > 1e-8
            Ls = np.where(big, L, 1.0)
            cth = np.where(big, Ls / np.tanh(Ls), 1.0 + L**2 / 3.0)
            u1 = np.where(big, a1 / Ls, 0.0)
            u2 = np.where(big, a2 / Ls, 0.0)
            h11 = np.sum(wt * (cth + (1 - cth) * u1 * u1), axis=-1)
            h22 = np.sum(wt * (cth + (1 - cth) * u2 * u2), axis=-1)
            h12 = np.sum(wt * ((1 - cth) * u1 * u2), axis=-1)
            det = h11 * h22 - h12**2
            d1 = (h22 * g1 - h12 * g2) / det
            d2 = (h11 * g2 - h12 * g1) / det
            f = 0.5 * self.objective(y, p, wt)
            step = np.ones(len(todo))
            for _ in range(60):
                cand = self.exp(y, (step * d1)[:, None] * e1 + (step * d2)[:, None] * e2)
                fc = 0.5 * self.objective(cand, p, wt)
                bad = fc > f + 1e-15 * np.abs(f)
                if not np.any(bad):
                    break
                step = np.where(bad, 0.5 * step, step)
            Y[todo] = np.where(bad[:, None], y, cand)
        if todo.size == 0:
            return Y.reshape(batch + (3,))
        raise BarycenterError("hyperbolic barycenter did not converge", float(np.max(gn)))

    def random_points(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        r = rng.uniform(0.0, self.sample_radius, size=size)
        theta = rng.uniform(0.0, 2 * np.pi, size=size)
        return self.from_polar(r, theta)

    def to_dict(self):
        return {"kind": self.kind}

    def point_to_dict(self, p):
        return {"kind": self.kind, "coords": [float(c) for c in np.asarray(p, dtype=float)]}

    def point_from_dict(self, data):
        self._check_kind(data)
        return self.validate(self.normalize(np.asarray(data["coords"], dtype=float)))


# ---------------------------------------------------------------------------
# Products


class Product(TargetSpace):
    """``A × B`` with ``d² = d_A² + d_B²``."""

    kind = "product"

    def __init__(self, a: TargetSpace, b: TargetSpace):
        self.a = a
        self.b = b
        self.coord_dim = a.coord_dim + b.coord_dim

    def __repr__(self) -> str:
        return f"Product({self.a!r}, {self.b!r})"

    def split(self, p: Any) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        return p[..., : self.a.coord_dim], p[..., self.a.coord_dim:]

    def join(self, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
        return np.concatenate([pa, pb], axis=-1)

    def validate(self, points):
        arr = _as_points(points, self.coord_dim)
        pa, pb = self.split(arr)
        self.a.validate(pa)
        self.b.validate(pb)
        return arr

    def canonical(self, points):
        pa, pb = self.split(points)
        return self.join(self.a.canonical(pa), self.b.canonical(pb))

    def distance(self, p, q):
        pa, pb = self.split(p)
        qa, qb = self.split(q)
        return np.hypot(self.a.distance(pa, qa), self.b.distance(pb, qb))

    def _geodesic(self, p, q, t):
        pa, pb = self.split(p)
        qa, qb = self.split(q)
        return self.join(self.a._geodesic(pa, qa, t), self.b._geodesic(pb, qb, t))

    def extend(self, p, b, omega):
        pa, pb = self.split(p)
        ba, bb = self.split(b)
        return self.join(self.a.extend(pa, ba, omega), self.b.extend(pb, bb, omega))

    def barycenter(self, points, weights=None):
        # The objective separates, so the product of factor barycenters is exact.
        pa, pb = self.split(points)
        return self.join(self.a.barycenter(pa, weights), self.b.barycenter(pb, weights))

    def random_points(self, rng, size):
        return self.join(self.a.random_points(rng, size), self.b.random_points(rng, size))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.to_dict(), "b": self.b.to_dict()}

    def point_to_dict(self, p):
        pa, pb = self.split(p)
        return {"kind": self.kind, "a": self.a.point_to_dict(pa), "b": self.b.point_to_dict(pb)}

    def point_from_dict(self, data):
        self._check_kind(data)
        return self.join(self.a.point_from_dict(data["a"]), self.b.point_from_dict(data["b"]))


def space_from_dict(data: dict[str, Any]) -> TargetSpace:
    kind = data.get("kind")
    if kind == "euclidean":
        return Euclidean(int(data["dim"]))
    if kind == "tree":
        edges = [(e["a"], e["b"]) for e in data["edges"]]
        return MetricTree(int(data["vertices"]), edges, [e["length"] for e in data["edges"]])
    if kind == "hyperbolic":
        return HyperbolicPlane()
    if kind == "product":
        return Product(space_from_dict(data["a"]), space_from_dict(data["b"]))
    raise ValueError(f"unknown target space kind {kind!r}")


def space_from_json(text: str) -> TargetSpace:
    return space_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Checks


def weighted_barycenter(s: TargetSpace, points: Any, weights: Any | None = None) -> np.ndarray:
    """Barycenter of a single finite weighted set of points."""
    pts = s.validate(np.atleast_2d(np.asarray(points, dtype=float)))
    if pts.ndim != 2:
        raise ValueError("expected a list of points")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != pts.shape[:1] or np.any(weights <= 0):
            raise ValueError("weights must be positive, one per point")
    return s.barycenter(pts, weights)


def _slack_report(name: str, slack: np.ndarray, tol: float = SLACK_TOL, **measured: Any) -> CheckReport:
    slack = np.atleast_1d(np.asarray(slack, dtype=float)).ravel()
    viol = -slack
    worst = float(viol.max())
    return CheckReport(
        name, bool(worst <= tol), worst, tol, witnesses=top_witnesses(viol, tol), gate=EXACT,
        measured={"min_slack": float(slack.min()), "max_abs_slack": float(np.abs(slack).max()),
                  "samples": int(slack.size), **measured},
    )


def cat0_slack(s: TargetSpace, z: Any, p: Any, q: Any, t: Any) -> np.ndarray:
    """``(1-t)d²(z,p) + t d²(z,q) - t(1-t)d²(p,q) - d²(z,γ_t)``."""
    t = _check_t(t)
    g = s.geodesic_point(p, q, t)
    return ((1 - t) * s.distance(z, p) ** 2 + t * s.distance(z, q) ** 2
            - t * (1 - t) * s.distance(p, q) ** 2 - s.distance(z, g) ** 2)


def check_cat0_comparison(s: TargetSpace, z: Any, p: Any, q: Any, t: Any) -> CheckReport:
    """``d²(z,γ_t) ≤ (1-t)d²(z,p) + t d²(z,q) - t(1-t)d²(p,q)``, batched."""
    z, p, q = s.validate(z), s.validate(p), s.validate(q)
    return _slack_report("cat0_comparison", cat0_slack(s, z, p, q, t))


def quadrilateral_slack(s: TargetSpace, p: Any, q: Any, r: Any, t4: Any) -> np.ndarray:
    """Slack of ``(|ps|-|qr|)|qr| ≥ (|pm|²-|pq|²-|mq|²) + (|sm|²-|sr|²-|mr|²)``, ``m`` the midpoint of ``q, r``."""
    m = s.midpoint(q, r)
    d = s.distance
    qr = d(q, r)
    lhs = (d(p, t4) - qr) * qr
    rhs = (d(p, m) ** 2 - d(p, q) ** 2 - d(m, q) ** 2) + (d(t4, m) ** 2 - d(t4, r) ** 2 - d(m, r) ** 2)
    return lhs - rhs


def check_quadrilateral(s: TargetSpace, p: Any, q: Any, r: Any, t4: Any) -> CheckReport:
    """Quadrilateral inequality for the four points ``p, q, r`` and ``t4`` (the point ``s``).

    The last squared term uses ``|mr|``; with ``|ms|`` the statement fails
    already on the line.
    """
    p, q, r, t4 = (s.validate(a) for a in (p, q, r, t4))
    return _slack_report("quadrilateral", quadrilateral_slack(s, p, q, r, t4))


def check_distance_convexity(s: TargetSpace, p: Any, a: Any, b: Any, samples: int = 33) -> CheckReport:
    """Convexity of ``d(·,p)`` and 2-convexity of ``d²(·,p)`` along ``[a, b]``."""
    if samples < 2:
        raise ValueError("need at least two samples")
    p, a, b = s.validate(p), s.validate(a), s.validate(b)
    t = np.linspace(0.0, 1.0, samples)
    shape = np.broadcast_shapes(p.shape[:-1], a.shape[:-1], b.shape[:-1])
    tt = t.reshape((samples,) + (1,) * len(shape))
    pe, ae, be = (np.broadcast_to(x, shape + (s.coord_dim,))[None] for x in (p, a, b))
    ae = np.broadcast_to(ae, (samples,) + ae.shape[1:])
    be = np.broadcast_to(be, ae.shape)
    g = s.geodesic_point(ae, be, np.broadcast_to(tt, ae.shape[:-1]))
    dap, dbp, dab = s.distance(ae, pe), s.distance(be, pe), s.distance(ae, be)
    dgp = s.distance(g, pe)
    lin = (1 - tt) * dap + tt * dbp - dgp
    quad = (1 - tt) * dap**2 + tt * dbp**2 - tt * (1 - tt) * dab**2 - dgp**2
    slack = np.minimum(lin, quad)
    rep = _slack_report("distance_convexity", slack)
    rep.measured.update(linear_min_slack=float(lin.min()), quadratic_min_slack=float(quad.min()))
    return rep


def farthest_point_probes(s: TargetSpace, points: Any, count: int = 32, start: int = 0) -> np.ndarray:
    """Greedy farthest-point subsample of a point cloud (deterministic from ``start``)."""
    pts = np.asarray(points, dtype=float).reshape(-1, s.coord_dim)
    if len(pts) == 0:
        raise ValueError("no points to sample from")
    count = min(int(count), len(pts))
    chosen = [int(start)]
    dmin = s.distance(pts, pts[start])
    for _ in range(count - 1):
        k = int(np.argmax(dmin))
        if dmin[k] <= 0:
            break
        chosen.append(k)
        dmin = np.minimum(dmin, s.distance(pts, pts[k]))
    return pts[chosen]
