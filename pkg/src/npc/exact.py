"""Error-free transformations for exact squared Euclidean distances.

The Dirichlet energy of a float-valued Euclidean map is a definite real
number.  Writing each ``w·|q - p|²`` as a short expansion of floats whose
exact sum is the true value lets ``math.fsum`` return the correctly rounded
energy, and lets the solver decide the sign of a local energy change
exactly.  The transformations are the classical ones of Dekker and Knuth.
"""

from __future__ import annotations

import math

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def weighted_sq_dist_pieces(p: np.ndarray, q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Floats whose exact sum over the last axis is ``w·|q - p|²``.

    ``p`` and ``q`` broadcast to ``(..., D)``; ``w`` to ``(...)``.  Exact as
    long as no intermediate overflows or underflows.
    """
    s, e = two_sum(np.asarray(q, dtype=float), -np.asarray(p, dtype=float))
    # (s + e)² = s² + 2se + e², every product split exactly
    pieces = [*two_prod(s, s), *two_prod(2.0 * s, e), *two_prod(e, e)]
    w = np.asarray(w, dtype=float)[..., None]
    out = []
    for x in pieces:
        out.extend(two_prod(np.broadcast_to(w, x.shape), x))
    return np.concatenate(out, axis=-1)


def exact_sum(pieces: np.ndarray) -> float:
    """Correctly rounded sum of all entries."""
    return math.fsum(np.asarray(pieces, dtype=float).ravel())
