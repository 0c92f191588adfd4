"""Input validation helpers shared by the public operations and estimators."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from .domain import DomainGraph
    from .targets import TargetSpace


def check_scalar_field(g: "DomainGraph", f: Any, allow_columns: bool = False) -> np.ndarray:
    """Return ``f`` as a finite float array with one entry (or row) per vertex."""
    arr = np.asarray(f, dtype=float)
    n = g.vertex_count
    if arr.ndim == 1 and arr.shape[0] == n:
        pass
    elif allow_columns and arr.ndim == 2 and arr.shape[0] == n:
        pass
    else:
        raise ValueError(f"field has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    return arr


def check_time(t: Any, strict: bool = False) -> float:
    t = float(t)
    if math.isnan(t) or t < 0 or (strict and t == 0):
        raise ValueError(f"time must be {'positive' if strict else 'non-negative'}, got {t}")
    return t


def check_vertex(g: "DomainGraph", x: Any) -> int:
    x = int(x)
    if not 0 <= x < g.vertex_count:
        raise IndexError(f"vertex {x} out of range")
    return x


def check_map_field(space: "TargetSpace", g: "DomainGraph", u: Any) -> np.ndarray:
    """Validate a map field: an ``(n, space.coord_dim)`` array of valid target points."""
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 1 and space.coord_dim == 1:
        arr = arr[:, None]
    if arr.shape != (g.vertex_count, space.coord_dim):
        raise ValueError(f"map field has shape {arr.shape}, expected ({g.vertex_count}, {space.coord_dim})")
    space.validate(arr)
    return arr
