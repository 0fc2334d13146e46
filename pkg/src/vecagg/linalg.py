"""Dense matrices over F_q and the constructions the aggregation scheme needs.

Everything here is exact: entries are int64 residues in [0, q) and every
result is reduced mod q. Matrices are immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .gf import FieldElement, FieldMismatchError, FieldSpec, matmul_mod


class DegenerateInputError(ValueError):
    """Input violates a rank or shape assumption of a construction."""


class ZeroColumnError(DegenerateInputError):
    """The computation matrix has a zero column."""


class InternalInvariantError(AssertionError):
    """A post-condition of an internal construction failed."""


class MatrixGF:
    """Immutable dense matrix over a prime field."""

    __slots__ = ("field", "_a")

    def __init__(self, field: FieldSpec, entries, shape: tuple[int, int] | None = None):
        if isinstance(field, int):
            field = FieldSpec(field)
        arr = np.array(entries, dtype=object if _has_big(entries) else np.int64)
        if shape is not None:
            arr = arr.reshape(shape)
        if arr.ndim == 1 and shape is None:
            arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
        if arr.ndim != 2:
            raise ValueError(f"matrix entries must be 2-D, got shape {arr.shape}")
        arr = (arr % field.q).astype(np.int64)
        arr.flags.writeable = False
        self.field = field
        self._a = arr

    @classmethod
    def _wrap(cls, field: FieldSpec, arr: np.ndarray) -> MatrixGF:
        m = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.flags.writeable = False
        m.field = field
        m._a = arr
        return m

    @classmethod
    def zeros(cls, field: FieldSpec, rows: int, cols: int) -> MatrixGF:
        return cls._wrap(field, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, field: FieldSpec, n: int) -> MatrixGF:
        return cls._wrap(field, np.eye(n, dtype=np.int64))

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def array(self) -> np.ndarray:
        """Read-only int64 view of the entries."""
        return self._a

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def entries(self) -> list[int]:
        return [int(v) for v in self._a.ravel()]

    @property
    def T(self) -> MatrixGF:
        return MatrixGF._wrap(self.field, self._a.T)

    def tolist(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self._a]

    def element(self, i: int, j: int) -> FieldElement:
        return FieldElement(int(self._a[i, j]), self.field)

    def is_zero(self) -> bool:
        return not self._a.any()

    def _same_field(self, other: MatrixGF) -> None:
        if not isinstance(other, MatrixGF):
            raise TypeError(f"expected MatrixGF, got {type(other).__name__}")
        if other.field != self.field:
            raise FieldMismatchError(f"matrices over {self.field} and {other.field}")

    def __matmul__(self, other: MatrixGF) -> MatrixGF:
        self._same_field(other)
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        return MatrixGF._wrap(self.field, matmul_mod(self._a, other._a, self.q))

    def __add__(self, other: MatrixGF) -> MatrixGF:
        self._same_field(other)
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        return MatrixGF._wrap(self.field, (self._a + other._a) % self.q)

    def __sub__(self, other: MatrixGF) -> MatrixGF:
        self._same_field(other)
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} - {other.shape}")
        return MatrixGF._wrap(self.field, (self._a - other._a) % self.q)

    def __neg__(self) -> MatrixGF:
        return MatrixGF._wrap(self.field, (-self._a) % self.q)

    def scale(self, c: int) -> MatrixGF:
        return MatrixGF._wrap(self.field, (self._a * (int(c) % self.q)) % self.q)

    def __getitem__(self, key) -> MatrixGF:
        sub = self._a[key]
        if sub.ndim != 2:
            raise IndexError("MatrixGF indexing must keep two dimensions; use .array for scalars")
        return MatrixGF._wrap(self.field, sub)

    def take_rows(self, idx: Sequence[int]) -> MatrixGF:
        return MatrixGF._wrap(self.field, self._a[list(idx), :].reshape(len(idx), self.cols))

    def take_cols(self, idx: Sequence[int]) -> MatrixGF:
        return MatrixGF._wrap(self.field, self._a[:, list(idx)].reshape(self.rows, len(idx)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MatrixGF):
            return NotImplemented
        return self.field == other.field and self.shape == other.shape and np.array_equal(self._a, other._a)

    def __hash__(self) -> int:
        return hash((self.field.q, self.shape, self._a.tobytes()))

    def __repr__(self) -> str:
        return f"MatrixGF(q={self.q}, {self.tolist()})"


def _has_big(entries) -> bool:
    # Python ints beyond int64 (e.g. negative residues written large) need object dtype first.
    try:
        np.array(entries, dtype=np.int64)
        return False
    except OverflowError:
        return True


def vstack(blocks: Iterable[MatrixGF]) -> MatrixGF:
    blocks = list(blocks)
    field = blocks[0].field
    cols = {b.cols for b in blocks if b.rows}
    if len(cols) > 1:
        raise ValueError(f"column counts differ: {sorted(cols)}")
    for b in blocks[1:]:
        blocks[0]._same_field(b)
    width = cols.pop() if cols else blocks[0].cols
    arrs = [b.array.reshape(b.rows, width) for b in blocks]
    return MatrixGF._wrap(field, np.vstack(arrs))


def hstack(blocks: Iterable[MatrixGF]) -> MatrixGF:
    blocks = list(blocks)
    field = blocks[0].field
    rows = {b.rows for b in blocks if b.cols}
    if len(rows) > 1:
        raise ValueError(f"row counts differ: {sorted(rows)}")
    for b in blocks[1:]:
        blocks[0]._same_field(b)
    height = rows.pop() if rows else blocks[0].rows
    arrs = [b.array.reshape(height, b.cols) for b in blocks]
    return MatrixGF._wrap(field, np.hstack(arrs))


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------


def rref(A: MatrixGF) -> tuple[MatrixGF, MatrixGF, list[int]]:
    """Reduced row-echelon form with the transform that produces it.

    Returns ``(R, T, pivots)`` with ``R = T @ A`` and ``T`` invertible.
    Pivots are chosen as the first nonzero entry scanning columns left to
    right and rows top to bottom, so the pivot set is the lexicographically
    first set of independent columns.
    """
    q = A.q
    m, n = A.shape
    R = A.array.copy()
    T = np.eye(m, dtype=np.int64)
    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.nonzero(R[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            R[[r, p]] = R[[p, r]]
            T[[r, p]] = T[[p, r]]
        s = pow(int(R[r, c]), -1, q)
        R[r] = (R[r] * s) % q
        T[r] = (T[r] * s) % q
        col = R[:, c].copy()
        col[r] = 0
        rows = np.nonzero(col)[0]
        if rows.size:
            f = col[rows][:, None]
            R[rows] = (R[rows] - f * R[r]) % q
            T[rows] = (T[rows] - f * T[r]) % q
        pivots.append(c)
        r += 1
    return MatrixGF._wrap(A.field, R), MatrixGF._wrap(A.field, T), pivots


def rank(A: MatrixGF) -> int:
    return len(rref(A)[2])


def inverse(A: MatrixGF) -> MatrixGF:
    if A.rows != A.cols:
        raise ValueError(f"cannot invert non-square {A.shape}")
    R, T, piv = rref(A)
    if len(piv) != A.rows:
        raise DegenerateInputError("matrix is singular")
    return T


def conditional_rank(F: MatrixGF, G: MatrixGF) -> int:
    """rank([F; G]) - rank(F)."""
    F._same_field(G)
    if F.cols != G.cols:
        raise ValueError(f"F has {F.cols} columns but G has {G.cols}")
    return rank(vstack([F, G])) - rank(F)


def in_row_space(v: MatrixGF, A: MatrixGF) -> bool:
    return rank(vstack([A, v])) == rank(A)


# ---------------------------------------------------------------------------
# F normalization and the V / V-perp pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalization:
    """``T @ F[:, perm] == [I_M | Ftilde]``.

    ``perm[j]`` is the original column (user index) placed at position ``j``.
    """

    T: MatrixGF
    perm: tuple[int, ...]
    Ftilde: MatrixGF

    @property
    def M(self) -> int:
        return self.T.rows

    @property
    def K(self) -> int:
        return len(self.perm)

    def permutation_matrix(self) -> MatrixGF:
        """P with ``F @ P == F[:, perm]``."""
        field = self.T.field
        P = np.zeros((self.K, self.K), dtype=np.int64)
        for j, c in enumerate(self.perm):
            P[c, j] = 1
        return MatrixGF._wrap(field, P)

    def normalized(self) -> MatrixGF:
        return hstack([MatrixGF.identity(self.T.field, self.M), self.Ftilde])


def zero_columns(F: MatrixGF) -> list[int]:
    return [int(c) for c in np.nonzero(~F.array.any(axis=0))[0]]


def normalize_F(F: MatrixGF) -> Normalization:
    zc = zero_columns(F)
    if zc:
        raise ZeroColumnError(
            f"column(s) {zc} of F are zero; matrix F must not have zero columns "
            "(drop those users from the problem first)"
        )
    R, T, piv = rref(F)
    if len(piv) < F.rows:
        raise DegenerateInputError(f"F has rank {len(piv)} < {F.rows} rows; remove dependent rows")
    rest = [c for c in range(F.cols) if c not in piv]
    perm = tuple(piv + rest)
    Ftilde = R.take_cols(rest)
    return Normalization(T=T, perm=perm, Ftilde=Ftilde)


def find_V(F: MatrixGF, G: MatrixGF, norm: Normalization) -> MatrixGF:
    """Rows ``[0 | V]`` completing ``[F; G]`` (columns in ``norm.perm`` order) to rank K.

    Standard basis vectors are tried in index order; each accepted one has its
    first M coordinates cleared with the identity block of the normalized F.
    """
    F._same_field(G)
    K, M = F.cols, norm.M
    field = F.field
    q = field.q
    base = vstack([F, G]).take_cols(norm.perm)
    r = rank(base)
    ident = np.eye(K, dtype=np.int64)
    added: list[np.ndarray] = []
    cur = base
    cur_rank = r
    for j in range(K):
        if cur_rank == K:
            break
        e = MatrixGF._wrap(field, ident[j : j + 1])
        trial = vstack([cur, e])
        if rank(trial) > cur_rank:
            cur, cur_rank = trial, cur_rank + 1
            added.append(ident[j].copy())
    Fn = norm.normalized().array
    rows = []
    for v in added:
        v = (v - v[:M] @ Fn) % q
        rows.append(v[M:])
    if not rows:
        return MatrixGF.zeros(field, 0, K - M)
    return MatrixGF._wrap(field, np.array(rows, dtype=np.int64).reshape(len(rows), K - M))


def make_Vperp(V: MatrixGF, K: int, M: int, r: int) -> MatrixGF:
    """Right null-space basis of V in the block form ``[-Vtilde; I]``.

    V is brought to ``[I | Vtilde]`` by row operations and a column
    permutation; the permutation is undone on the rows of the result. A
    zero-row V gives ``I_{K-M}``.
    """
    field = V.field
    n = K - M
    if V.rows == 0:
        return MatrixGF.identity(field, n)
    if V.cols != n or V.rows != K - r:
        raise ValueError(f"V has shape {V.shape}, expected {(K - r, n)}")
    R, _, piv = rref(V)
    if len(piv) != V.rows:
        raise InternalInvariantError(f"V has rank {len(piv)} < {V.rows} rows")
    free = [c for c in range(n) if c not in piv]
    Vt = R.take_cols(free).array
    block = np.vstack([(-Vt) % field.q, np.eye(len(free), dtype=np.int64)])
    order = piv + free
    out = np.zeros((n, len(free)), dtype=np.int64)
    out[order, :] = block
    Vperp = MatrixGF._wrap(field, out)
    if not (V @ Vperp).is_zero() or rank(Vperp) != r - M:
        raise InternalInvariantError("V @ Vperp != 0 or Vperp rank deficient")
    return Vperp


def stack_condition(F: MatrixGF, G: MatrixGF, V: MatrixGF, norm: Normalization) -> bool:
    """True when ``[F P; G P; 0 | V]`` has full rank K."""
    K, M = F.cols, norm.M
    base = vstack([F, G]).take_cols(norm.perm)
    if V.rows == 0:
        return rank(base) == K
    pad = hstack([MatrixGF.zeros(F.field, V.rows, M), V]) if M else V
    return rank(vstack([base, pad])) == K
