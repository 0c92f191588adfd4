from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

from npc.exact import exact_sum, two_prod, two_sum, weighted_sq_dist_pieces

# exactness holds away from underflow, which the map coordinates never approach
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).filter(lambda x: x == 0 or abs(x) > 1e-60)


@settings(max_examples=200)
@given(a=finite, b=finite)
def test_error_free_transformations(a, b):
    s, e = two_sum(np.float64(a), np.float64(b))
    assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)
    p, e = two_prod(np.float64(a), np.float64(b))
    assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)


@settings(max_examples=200)
@given(p=st.lists(finite, min_size=3, max_size=3), q=st.lists(finite, min_size=3, max_size=3),
       w=st.floats(1e-3, 1e3))
def test_weighted_squared_distance_is_exact(p, q, w):
    pieces = weighted_sq_dist_pieces(np.array(p), np.array(q), np.float64(w))
    exact = Fraction(w) * sum((Fraction(b) - Fraction(a)) ** 2 for a, b in zip(p, q))
    assert sum(Fraction(x) for x in pieces) == exact


def test_exact_sum_is_correctly_rounded():
    assert exact_sum(np.array([1e16, 1.0, -1e16])) == 1.0
