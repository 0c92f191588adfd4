"""Korevaar–Schoen energies, energy density and slope surrogates of a map field."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import DomainGraph, VertexSubset, in_open_ball
from .laplacian import heat_kernel
from .exact import exact_sum, weighted_sq_dist_pieces
from .targets import Euclidean, TargetSpace, farthest_point_probes
from .validation import check_map_field, check_time, check_vertex

#: Number of probes used by ``weak_gradient`` when none are supplied.
DEFAULT_PROBES = 32


def _region_mask(g: DomainGraph, U: VertexSubset | None) -> np.ndarray:
    return np.ones(g.vertex_count, dtype=bool) if U is None else U.mask


def _ball_rows(g: DomainGraph, r: float):
    """Yield ``(x, members of B_r(x))`` for every vertex."""
    if g.vertex_count <= 4096:
        D = g.distance_matrix()
        for x in range(g.vertex_count):
            yield x, np.flatnonzero(in_open_ball(D[x], r))
    else:
        for x in range(g.vertex_count):
            yield x, np.flatnonzero(in_open_ball(g.distances_from(x, limit=r), r))


def ks_density(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset | None, r: float) -> np.ndarray:
    """Approximate energy density ``ks_{2,r}[u, U]`` at every vertex.

    ``ks² (x) = m(B_r(x))⁻¹ Σ_{y ∈ B_r(x)} d²(u(x), u(y)) m(y) / r²`` when the open
    ball ``B_r(x)`` lies inside ``U``, and 0 otherwise.  Returns ``ks`` (not squared).
    """
    if not r > 0:
        raise ValueError("scale r must be positive")
    u = check_map_field(space, g, u)
    inside = _region_mask(g, U)
    m = g.measure
    out = np.zeros(g.vertex_count)
    rows, cols = [], []
    for x, B in _ball_rows(g, r):
        if inside[x] and inside[B].all():
            rows.append(np.full(B.size, x))
            cols.append(B)
    if not rows:
        return out
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    d2 = space.distance(u[rows], u[cols]) ** 2
    num = np.bincount(rows, weights=d2 * m[cols], minlength=g.vertex_count)
    den = np.bincount(rows, weights=m[cols], minlength=g.vertex_count)
    ok = den > 0
    out[ok] = np.sqrt(num[ok] / den[ok]) / r
    return out


@dataclass
class EnergyProfile:
    """ks densities at decreasing scales and their ``r → 0`` extrapolation.

    Attributes
    ----------
    scales : ndarray, shape (S,)
        Strictly decreasing scales.
    ks : ndarray, shape (S, n)
        ``ks_{2,r}`` at each scale.
    e2 : ndarray, shape (n,)
        Extrapolated energy density; zero where ``valid`` is False.
    residual : ndarray, shape (n,)
        RMS residual of the linear fit of ``ks²`` in ``r``.
    valid : ndarray of bool, shape (n,)
        Vertices whose balls at the fitted scales all lie in ``U``.
    """

    scales: np.ndarray
    ks: np.ndarray
    e2: np.ndarray
    residual: np.ndarray
    valid: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex", "scale", "ks_density", "e2_extrapolated", "fit_residual"])
        for k, r in enumerate(self.scales):
            for x in range(self.ks.shape[1]):
                w.writerow([x, repr(float(r)), repr(float(self.ks[k, x])),
                            repr(float(self.e2[x])), repr(float(self.residual[x]))])
        return buf.getvalue()


def default_scales(g: DomainGraph, multiples=(6, 5, 4, 3)) -> np.ndarray:
    """Scales ``(k + ½)·h``.

    At half-integer multiples of the mesh scale no vertex sits on a ball's
    boundary shell, which makes the lattice bias of ``ks²`` second order in
    ``h/r`` (for integer multiples it is first order).
    """
    return (np.asarray(sorted(multiples, reverse=True), dtype=float) + 0.5) * g.mesh_scale


def energy_density(
    g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset | None, scales=None
) -> EnergyProfile:
    """Extrapolate ``e₂[u]`` from ks densities at three or more scales.

    ``ks²(r)`` is fitted by a line in ``r`` over the three smallest scales and
    ``e₂`` is the square root of the (clipped) intercept.
    """
    scales = default_scales(g) if scales is None else np.asarray(scales, dtype=float)
    if scales.ndim != 1 or scales.size < 3:
        raise ValueError("need at least three scales")
    if np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be strictly decreasing")
    if np.any(scales <= 2 * g.mesh_scale):
        raise ValueError("every scale must exceed twice the mesh scale")
    ks = np.stack([ks_density(g, space, u, U, r) for r in scales])
    fit_r = scales[-3:]
    y = ks[-3:] ** 2
    A = np.stack([np.ones(3), fit_r], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = np.sqrt(np.mean((A @ coef - y) ** 2, axis=0))
    inside = _region_mask(g, U)
    valid = inside.copy()
    r_big = fit_r[0]
    for x, B in _ball_rows(g, r_big):
        if valid[x]:
            valid[x] = inside[B].all()
    e2 = np.where(valid, np.sqrt(np.maximum(coef[0], 0.0)), 0.0)
    return EnergyProfile(scales, ks, e2, np.where(valid, resid, 0.0), valid)


def heat_kernel_energy(g: DomainGraph, space: TargetSpace, u: np.ndarray, x: int, t: float) -> float:
    """``t⁻¹ Σ_y d²(u(x), u(y)) ρ_t[x](y) m(y)``, to be compared with ``2(d+2)e₂²(x)``."""
    t = check_time(t, strict=True)
    x = check_vertex(g, x)
    u = check_map_field(space, g, u)
    rho = heat_kernel(g, x, t)
    d2 = space.distance(u[x], u) ** 2
    return float(np.sum(d2 * rho * g.measure) / t)


def _edge_slopes(g: DomainGraph, vals_a: np.ndarray, U: VertexSubset | None) -> tuple[np.ndarray, np.ndarray]:
    a, b = g.edge_key()
    keep = np.ones(a.size, dtype=bool)
    if U is not None:
        keep = U.mask[a] & U.mask[b]
    return keep, vals_a / g.lengths


def _max_over_edges(g: DomainGraph, slope: np.ndarray, keep: np.ndarray) -> np.ndarray:
    a, b = g.edge_key()
    out = np.zeros(g.vertex_count)
    np.maximum.at(out, a[keep], slope[keep])
    np.maximum.at(out, b[keep], slope[keep])
    return out


def lip_slope(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset | None = None) -> np.ndarray:
    """``lip u(x) = max_{y ~ x} d(u(x), u(y)) / ℓ_xy`` (neighbors restricted to ``U`` if given)."""
    u = check_map_field(space, g, u)
    a, b = g.edge_key()
    keep, slope = _edge_slopes(g, space.distance(u[a], u[b]), U)
    return _max_over_edges(g, slope, keep)


def scalar_lip_slope(g: DomainGraph, f: np.ndarray, U: VertexSubset | None = None) -> np.ndarray:
    """Neighbor slope ``max_{y ~ x} |f(y) - f(x)| / ℓ_xy`` of a scalar field."""
    f = np.asarray(f, dtype=float)
    a, b = g.edge_key()
    keep, slope = _edge_slopes(g, np.abs(f[a] - f[b]), U)
    return _max_over_edges(g, slope, keep)


def default_probes(space: TargetSpace, u: np.ndarray, count: int = DEFAULT_PROBES) -> np.ndarray:
    """Farthest-point sample of the image of ``u``."""
    return farthest_point_probes(space, u, count)


def weak_gradient(
    g: DomainGraph,
    space: TargetSpace,
    u: np.ndarray,
    probes: np.ndarray | None = None,
    U: VertexSubset | None = None,
) -> np.ndarray:
    """``|du|(x) ≈ max_p lip[d(u(·), p)](x)`` over a finite probe set.

    Post-composition with the 1-Lipschitz functions ``d(·, p)`` can only shrink
    slopes, so the result never exceeds ``lip_slope``.
    """
    u = check_map_field(space, g, u)
    if probes is None:
        probes = default_probes(space, u)
    probes = space.validate(np.atleast_2d(np.asarray(probes, dtype=float)))
    if probes.shape[0] == 0:
        raise ValueError("weak_gradient needs at least one probe")
    out = np.zeros(g.vertex_count)
    for p in probes:
        out = np.maximum(out, scalar_lip_slope(g, space.distance(u, p), U))
    return out


def dirichlet_energy(g: DomainGraph, space: TargetSpace, u: np.ndarray, U: VertexSubset | None = None) -> float:
    """``½ Σ w_xy d²(u(x), u(y))`` over undirected edges with both ends in ``U``."""
    u = check_map_field(space, g, u)
    a, b = g.edge_key()
    keep = np.ones(a.size, dtype=bool) if U is None else U.mask[a] & U.mask[b]
    w = g.conductances[keep]
    if isinstance(space, Euclidean):
        # Exact value, correctly rounded: with the solver's exact descent test
        # the recorded energy trace is non-increasing without tolerance.
        return 0.5 * exact_sum(weighted_sq_dist_pieces(u[a[keep]], u[b[keep]], w))
    d2 = space.distance(u[a[keep]], u[b[keep]]) ** 2
    return 0.5 * math.fsum(w * d2)
