"""Compile an (F, G, q) instance into a key-optimal linear aggregation scheme.

Users are indexed from 0 in this API. Every scheme here has the same shape:
input block ``l`` of user ``k`` is sent as ``X[k, l] = W[k, l] + Z[k, l]``,
where ``Z[:, l] = masks[l] @ S[:, l]`` and ``S`` is a matrix of uniform
source-key symbols (one column per block). Schemes from :func:`construct`
use the same mask in every block. The three-block scheme from
:func:`build_section6_symmetrized` rotates the mask from block to block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .gf import FieldSpec, matmul_mod
from .linalg import (
    DegenerateInputError,
    MatrixGF,
    Normalization,
    find_V,
    hstack,
    inverse,
    make_Vperp,
    normalize_F,
    rank,
    vstack,
    zero_columns,
    ZeroColumnError,
)

logger = logging.getLogger(__name__)

EXPORT_HEADER = "vecagg-scheme v1"


class IncompleteTranscriptError(ValueError):
    """Decoding was attempted without every user's message."""


class ConstructionError(RuntimeError):
    """A construction failed its own verification gate."""


class SchemeFormatError(ValueError):
    """Malformed scheme export text."""


@dataclass(frozen=True)
class AggregationSpec:
    """One problem instance: compute ``F @ W`` while hiding ``G @ W`` beyond it."""

    field: FieldSpec
    K: int
    F: MatrixGF
    G: MatrixGF | None
    L: int = 1

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.F.cols != self.K:
            raise ValueError(f"F has {self.F.cols} columns, expected K={self.K}")
        if self.F.field != self.field:
            raise ValueError("F is over a different field")
        zc = zero_columns(self.F)
        if zc:
            raise ZeroColumnError(
                f"column(s) {[c + 1 for c in zc]} of F are zero; matrix F must not have zero "
                "columns (those users contribute nothing and should be removed)"
            )
        if rank(self.F) != self.F.rows:
            raise DegenerateInputError("F must have full row rank; remove dependent rows")
        if self.G is not None:
            if self.G.cols != self.K or self.G.field != self.field:
                raise ValueError(f"G must be over {self.field} with K={self.K} columns")
            if rank(self.G) != self.G.rows:
                raise DegenerateInputError("G must have full row rank; remove dependent rows")

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def M(self) -> int:
        return self.F.rows

    @property
    def N(self) -> int:
        return 0 if self.G is None else self.G.rows

    def with_L(self, L: int) -> AggregationSpec:
        return replace(self, L=L)


@dataclass(frozen=True)
class KeyMaterial:
    """Source key S and everything derived from it.

    ``per_user[k]`` is user k's key block (1 x L), or a 1 x 0 matrix when the
    user never receives a mask.
    """

    S: MatrixGF
    N: MatrixGF | None
    per_user: tuple[MatrixGF, ...]


@dataclass(frozen=True)
class RateReport:
    R: Fraction
    R_Z: tuple[Fraction, ...]
    R_ZSigma: Fraction

    @property
    def R_Z_max(self) -> Fraction:
        return max(self.R_Z) if self.R_Z else Fraction(0)


@dataclass(frozen=True)
class LinearScheme:
    """A masked linear scheme. ``masks[l]`` is K x n_keys for input block l."""

    spec: AggregationSpec
    norm: Normalization
    masks: tuple[MatrixGF, ...]
    label: str = ""
    T_inv: MatrixGF = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.masks) != self.spec.L:
            raise ValueError(f"need one mask per block ({self.spec.L}), got {len(self.masks)}")
        widths = {m.cols for m in self.masks}
        if len(widths) != 1 or any(m.rows != self.spec.K for m in self.masks):
            raise ValueError("every block mask must be K x n_keys with a common n_keys")
        object.__setattr__(self, "T_inv", inverse(self.norm.T))

    # -- shape helpers -------------------------------------------------------

    @property
    def q(self) -> int:
        return self.spec.q

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def M(self) -> int:
        return self.spec.M

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def n_keys(self) -> int:
        """Source-key symbols per input block."""
        return self.masks[0].cols

    @property
    def key_symbols(self) -> int:
        """Total source-key symbols, L_{Z_Sigma}."""
        return self.n_keys * self.L

    def mask_tensor(self) -> np.ndarray:
        """int64 array of shape (L, K, n_keys)."""
        return np.stack([m.array for m in self.masks]).reshape(self.L, self.K, self.n_keys)

    def user_key_rank(self, k: int) -> int:
        """Number of independent key symbols user k actually holds."""
        rows = np.zeros((self.L, self.key_symbols), dtype=np.int64)
        for l, m in enumerate(self.masks):
            # S is flattened row-major (i, l) -> i * L + l.
            rows[l, np.arange(self.n_keys) * self.L + l] = m.array[k]
        return rank(MatrixGF._wrap(self.spec.field, rows))

    # -- protocol ------------------------------------------------------------

    def keygen(self, seed: int) -> KeyMaterial:
        rng = np.random.default_rng(seed)
        S = MatrixGF._wrap(self.spec.field, rng.integers(0, self.q, size=(self.n_keys, self.L), dtype=np.int64))
        return self.keys_from_source(S)

    def keys_from_source(self, S: MatrixGF) -> KeyMaterial:
        if S.shape != (self.n_keys, self.L):
            raise ValueError(f"S must be {(self.n_keys, self.L)}, got {S.shape}")
        Z = self.key_streams(S.array[None])[0]
        per_user = []
        for k in range(self.K):
            if any(m.array[k].any() for m in self.masks):
                per_user.append(MatrixGF._wrap(self.spec.field, Z[k : k + 1]))
            else:
                per_user.append(MatrixGF.zeros(self.spec.field, 1, 0))
        return KeyMaterial(S=S, N=self._noise(S), per_user=tuple(per_user))

    def _noise(self, S: MatrixGF) -> MatrixGF | None:
        return None

    def key_streams(self, S: np.ndarray) -> np.ndarray:
        """Batch key derivation: S of shape (n, n_keys, L) -> Z of shape (n, K, L)."""
        masks = self.mask_tensor()
        Z = np.einsum("lki,nil->nkl", masks, np.asarray(S, dtype=np.int64))
        return Z % self.q

    def encode(self, k: int, W_k: MatrixGF, Z_k: MatrixGF) -> MatrixGF:
        if W_k.shape != (1, self.L):
            raise ValueError(f"W_{k} must be 1 x {self.L}, got {W_k.shape}")
        if Z_k.cols == 0:
            return W_k
        if Z_k.shape != (1, self.L):
            raise ValueError(f"Z_{k} must be 1 x {self.L} or empty, got {Z_k.shape}")
        return W_k + Z_k

    def encode_batch(self, W: np.ndarray, S: np.ndarray) -> np.ndarray:
        """W (n, K, L), S (n, n_keys, L) -> X (n, K, L)."""
        return (np.asarray(W, dtype=np.int64) + self.key_streams(S)) % self.q

    def decode(self, X: Sequence[MatrixGF | None]) -> MatrixGF:
        if len(X) != self.K or any(x is None for x in X):
            missing = [k + 1 for k in range(self.K) if k >= len(X) or X[k] is None]
            raise IncompleteTranscriptError(f"missing messages from users {missing}")
        for k, x in enumerate(X):
            if x.shape != (1, self.L):
                raise ValueError(f"X_{k + 1} must be 1 x {self.L}, got {x.shape}")
        arr = np.vstack([x.array for x in X])
        return MatrixGF._wrap(self.spec.field, self.decode_batch(arr[None])[0])

    def decode_batch(self, X: np.ndarray) -> np.ndarray:
        """X (n, K, L) -> (n, M, L), computing T^-1 (X_head + Ftilde X_tail)."""
        q, M = self.q, self.M
        Xp = np.asarray(X, dtype=np.int64)[:, list(self.norm.perm), :]
        acc = Xp[:, :M, :]
        if self.K > M:
            acc = (acc + matmul_mod(self.norm.Ftilde.array, Xp[:, M:, :], q)) % q
        return matmul_mod(self.T_inv.array, acc, q)

    # -- variants ------------------------------------------------------------

    def drop_key_coordinate(self, i: int) -> LinearScheme:
        """The same scheme with source-key coordinate ``i`` removed from every block."""
        keep = [c for c in range(self.n_keys) if c != i]
        masks = tuple(m.take_cols(keep) for m in self.masks)
        return LinearScheme(spec=self.spec, norm=self.norm, masks=masks, label=f"{self.label} minus S[{i}]")

    def corrupt_mask(self, k: int, i: int, delta: int = 1, block: int | None = None) -> LinearScheme:
        """Add ``delta`` to mask entry (k, i) in one block (all blocks if None)."""
        masks = []
        for l, m in enumerate(self.masks):
            a = m.array.copy()
            if block is None or block == l:
                a[k, i] = (a[k, i] + delta) % self.q
            masks.append(MatrixGF._wrap(self.spec.field, a))
        return LinearScheme(spec=self.spec, norm=self.norm, masks=tuple(masks), label=f"{self.label} corrupted")


@dataclass(frozen=True)
class ConstructedScheme(LinearScheme):
    """Output of :func:`construct`; the same mask in every block."""

    V: MatrixGF | None = None
    Vperp: MatrixGF | None = None

    @property
    def mask(self) -> MatrixGF:
        return self.masks[0]

    @property
    def L_ZSigma(self) -> int:
        return self.n_keys

    def _noise(self, S: MatrixGF) -> MatrixGF:
        return self.Vperp @ S


def _mask_from_vperp(norm: Normalization, Vperp: MatrixGF, K: int) -> MatrixGF:
    field = Vperp.field
    head = -(norm.Ftilde @ Vperp) if norm.M < K else MatrixGF.zeros(field, norm.M, Vperp.cols)
    permuted = vstack([head, Vperp])
    # Row j of `permuted` belongs to user perm[j].
    out = np.zeros((K, Vperp.cols), dtype=np.int64)
    out[list(norm.perm), :] = permuted.array.reshape(K, Vperp.cols)
    return MatrixGF._wrap(field, out)


def construct(spec: AggregationSpec) -> ConstructedScheme:
    """Build the scheme using rank([F;G]) - rank(F) key symbols per input symbol."""
    if spec.G is None:
        raise ValueError("construct needs the protection matrix G")
    K = spec.K
    norm = normalize_F(spec.F)
    M = norm.M
    r = rank(vstack([spec.F, spec.G]))
    V = find_V(spec.F, spec.G, norm)
    Vperp = make_Vperp(V, K, M, r)
    mask = _mask_from_vperp(norm, Vperp, K)
    if not (spec.F @ mask).is_zero():
        raise ConstructionError("F @ mask != 0; noise would not cancel")
    logger.debug("constructed scheme K=%d M=%d r=%d keys=%d", K, M, r, Vperp.cols)
    return ConstructedScheme(
        spec=spec,
        norm=norm,
        masks=(mask,) * spec.L,
        label="constructed",
        V=V,
        Vperp=Vperp,
    )


def construct_with_vperp(spec: AggregationSpec, Vperp: MatrixGF, V: MatrixGF | None = None) -> ConstructedScheme:
    """Same as :func:`construct` but with a caller-chosen null-space basis."""
    norm = normalize_F(spec.F)
    mask = _mask_from_vperp(norm, Vperp, spec.K)
    if not (spec.F @ mask).is_zero():
        raise ConstructionError("F @ mask != 0")
    return ConstructedScheme(spec=spec, norm=norm, masks=(mask,) * spec.L, label="constructed", V=V, Vperp=Vperp)


def rate_report(scheme: LinearScheme) -> RateReport:
    L = scheme.L
    per_user = tuple(Fraction(scheme.user_key_rank(k), L) for k in range(scheme.K))
    return RateReport(R=Fraction(L, L), R_Z=per_user, R_ZSigma=Fraction(scheme.key_symbols, L))


# ---------------------------------------------------------------------------
# The K = 3 instance with rotated masks
# ---------------------------------------------------------------------------

THREE_USER_F = [[1, 1, 1]]
THREE_USER_G = [[1, 2, 3]]


def three_user_spec(field: FieldSpec | int = 5, L: int = 1) -> AggregationSpec:
    if isinstance(field, int):
        field = FieldSpec(field)
    return AggregationSpec(field, 3, MatrixGF(field, THREE_USER_F), MatrixGF(field, THREE_USER_G), L)


def three_user_scalar(field: FieldSpec | int = 5) -> LinearScheme:
    """X1 = W1, X2 = W2 + N, X3 = W3 - N."""
    spec = three_user_spec(field)
    f = spec.field
    return LinearScheme(
        spec=spec,
        norm=normalize_F(spec.F),
        masks=(MatrixGF(f, [[0], [1], [-1]]),),
        label="scalar K=3",
    )


def build_section6_symmetrized(field: FieldSpec | int = 5) -> LinearScheme:
    """Three blocks; in block b user b is uncovered, user b+1 adds N_b, user b+2 subtracts it.

    Each user holds two nonzero key symbols over three input symbols. The
    per-block security of the coefficients is checked exhaustively before
    the scheme is returned.
    """
    from . import oracle

    spec = three_user_spec(field, L=3)
    if spec.q < 5:
        raise ValueError("needs q >= 5 so that 1, 2, 3 are distinct nonzero residues")
    f = spec.field
    masks = []
    for b in range(3):
        m = np.zeros((3, 1), dtype=np.int64)
        m[(b + 1) % 3, 0] = 1
        m[(b + 2) % 3, 0] = -1
        masks.append(MatrixGF(f, m))
    norm = normalize_F(spec.F)
    scheme = LinearScheme(spec=spec, norm=norm, masks=tuple(masks), label="symmetrized K=3 L=3")
    # Blocks use disjoint inputs and key symbols, so each block is gated on its own.
    scalar_spec = spec.with_L(1)
    for b, m in enumerate(masks):
        block = LinearScheme(spec=scalar_spec, norm=norm, masks=(m,), label=f"block {b + 1}")
        counts = oracle.enumerate_joint(block)
        res = oracle.check_security(counts)
        if not res.passed or not oracle.check_correctness(counts).passed:
            raise ConstructionError(f"block {b + 1} mask {m.tolist()} fails verification: {res.line()}")
    return scheme


# ---------------------------------------------------------------------------
# Export format
# ---------------------------------------------------------------------------


def _block(name: str, m: MatrixGF) -> list[str]:
    lines = [f"{name} {m.rows} {m.cols}"]
    lines += [" ".join(str(v) for v in row) for row in m.tolist()]
    return lines


def export_scheme(scheme: ConstructedScheme) -> str:
    if not isinstance(scheme, ConstructedScheme):
        raise TypeError("only schemes built by construct() can be exported")
    s = scheme.spec
    lines = [
        EXPORT_HEADER,
        f"q={s.q} K={s.K} M={s.M} L={s.L} LZS={scheme.L_ZSigma}",
        "P=" + " ".join(str(p) for p in scheme.norm.perm),
    ]
    lines += _block("T", scheme.norm.T)
    lines += _block("Ftilde", scheme.norm.Ftilde)
    lines += _block("V", scheme.V)
    lines += _block("Vperp", scheme.Vperp)
    lines += _block("mask", scheme.mask)
    return "\n".join(lines) + "\n"


def load_scheme(text: str, G: MatrixGF | None = None) -> ConstructedScheme:
    """Inverse of :func:`export_scheme`.

    The export does not carry G; pass it to get a scheme the oracle can check.
    F is rebuilt from ``T``, ``Ftilde`` and ``P``.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != EXPORT_HEADER:
        raise SchemeFormatError(f"line 1: expected header {EXPORT_HEADER!r}")
    try:
        params = dict(tok.split("=", 1) for tok in lines[1].split())
        q, K, M, L, lzs = (int(params[k]) for k in ("q", "K", "M", "L", "LZS"))
    except (KeyError, ValueError, IndexError) as exc:
        raise SchemeFormatError(f"line 2: bad parameter line ({exc})") from None
    if not lines[2].startswith("P="):
        raise SchemeFormatError("line 3: expected P=<permutation>")
    perm = tuple(int(t) for t in lines[2][2:].split())
    if sorted(perm) != list(range(K)):
        raise SchemeFormatError(f"line 3: {perm} is not a permutation of 0..{K - 1}")
    field = FieldSpec(q)
    blocks: dict[str, MatrixGF] = {}
    i = 3
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 3:
            raise SchemeFormatError(f"line {i + 1}: expected '<name> <rows> <cols>'")
        name, rows, cols = head[0], int(head[1]), int(head[2])
        body = [[int(t) for t in lines[i + 1 + j].split()] for j in range(rows)] if rows else []
        if any(len(row) != cols for row in body):
            raise SchemeFormatError(f"block {name}: rows must have {cols} entries")
        blocks[name] = MatrixGF(field, np.array(body, dtype=np.int64).reshape(rows, cols))
        i += 1 + rows
    missing = {"T", "Ftilde", "V", "Vperp", "mask"} - blocks.keys()
    if missing:
        raise SchemeFormatError(f"missing blocks {sorted(missing)}")
    norm = Normalization(T=blocks["T"], perm=perm, Ftilde=blocks["Ftilde"])
    Fperm = inverse(norm.T) @ norm.normalized()
    F = np.zeros((M, K), dtype=np.int64)
    F[:, list(perm)] = Fperm.array
    spec = AggregationSpec(field, K, MatrixGF(field, F), G, L)
    mask = blocks["mask"]
    if mask.shape != (K, lzs):
        raise SchemeFormatError(f"mask is {mask.shape}, expected {(K, lzs)}")
    return ConstructedScheme(
        spec=spec, norm=norm, masks=(mask,) * L, label="loaded", V=blocks["V"], Vperp=blocks["Vperp"]
    )
