"""Named problem instances used by tests, the CLI and the README."""

from __future__ import annotations

import numpy as np

from .gf import FieldSpec
from .linalg import MatrixGF
from .scheme import AggregationSpec, three_user_spec

EXAMPLE1_F = [[2, 0, 5, 3, 1], [5, 1, 4, 2, 4], [0, 4, 3, 5, 1]]

EXAMPLE2_F = [[1, 0, 5, 5, 3, 5], [0, 1, 5, 6, 0, 3]]
EXAMPLE2_G = [[3, 0, 1, 4, 2, 4], [2, 2, 1, 3, 5, 3], [1, 1, 3, 4, 3, 1]]
# The V / V-perp pair printed for the second example.
EXAMPLE2_V = [[1, 0, 6, 6], [0, 1, 6, 5]]
EXAMPLE2_VPERP = [[1, 1], [1, 2], [1, 0], [0, 1]]


def example1(L: int = 1) -> AggregationSpec:
    f = FieldSpec(7)
    return AggregationSpec(f, 5, MatrixGF(f, EXAMPLE1_F), MatrixGF.identity(f, 5), L)


def example2(L: int = 1) -> AggregationSpec:
    f = FieldSpec(7)
    return AggregationSpec(f, 6, MatrixGF(f, EXAMPLE2_F), MatrixGF(f, EXAMPLE2_G), L)


def secure_sum(K: int, q: int = 5, L: int = 1) -> AggregationSpec:
    """Sum of all inputs, every input protected."""
    f = FieldSpec(q)
    return AggregationSpec(f, K, MatrixGF(f, np.ones((1, K), dtype=np.int64)), MatrixGF.identity(f, K), L)


def three_user(q: int = 5) -> AggregationSpec:
    return three_user_spec(q)


NAMED = {
    "example1": example1,
    "example2": example2,
    "three_user": three_user,
}
