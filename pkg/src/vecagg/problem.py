"""Problem file format.

Line 1 holds ``q K M N``, optionally followed by ``L``. The next M lines
hold the rows of F. They are followed by either N rows of G or the single
token ``identity``, which stands for I_K and requires N == K. Entries are
space-separated decimals and are reduced mod q, with a warning if out of
range. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import logging

import numpy as np

from .gf import FieldSpec
from .linalg import DegenerateInputError, MatrixGF, ZeroColumnError, rank
from .scheme import AggregationSpec

logger = logging.getLogger(__name__)


class ProblemError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _content_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            out.append((i, s))
    return out


def _ints(lineno: int, s: str, n: int, what: str) -> list[int]:
    try:
        vals = [int(t) for t in s.split()]
    except ValueError:
        raise ProblemError(f"{what}: expected integers, got {s!r}", lineno) from None
    if len(vals) != n:
        raise ProblemError(f"{what}: expected {n} entries, got {len(vals)}", lineno)
    return vals


def _reduce(lineno: int, row: list[int], q: int) -> list[int]:
    if any(not 0 <= v < q for v in row):
        logger.warning("line %d: entries reduced mod %d", lineno, q)
    return [v % q for v in row]


def parse_problem(text: str) -> AggregationSpec:
    lines = _content_lines(text)
    if not lines:
        raise ProblemError("empty problem file")
    ln, head = lines[0]
    toks = head.split()
    if len(toks) not in (4, 5):
        raise ProblemError(f"header must be 'q K M N [L]', got {head!r}", ln)
    try:
        q, K, M, N, *rest = (int(t) for t in toks)
    except ValueError:
        raise ProblemError(f"header must be integers, got {head!r}", ln) from None
    L = rest[0] if rest else 1
    try:
        field = FieldSpec(q)
    except ValueError as exc:
        raise ProblemError(str(exc), ln) from None
    if K < 1 or M < 1 or N < 0 or L < 1:
        raise ProblemError(f"need K >= 1, M >= 1, N >= 0, L >= 1; got K={K} M={M} N={N} L={L}", ln)

    body = lines[1:]
    if len(body) < M:
        raise ProblemError(f"expected {M} rows of F, found {len(body)}", body[-1][0] if body else ln)
    F_rows = [_reduce(n, _ints(n, s, K, f"F row {i + 1}"), q) for i, (n, s) in enumerate(body[:M])]
    rest_lines = body[M:]
    if len(rest_lines) == 1 and rest_lines[0][1].lower() == "identity":
        if N != K:
            raise ProblemError(f"'identity' needs N == K, header says N={N}, K={K}", rest_lines[0][0])
        G = MatrixGF.identity(field, K)
    else:
        if len(rest_lines) != N:
            where = rest_lines[-1][0] if rest_lines else body[M - 1][0]
            raise ProblemError(f"expected {N} rows of G, found {len(rest_lines)}", where)
        G_rows = [_reduce(n, _ints(n, s, K, f"G row {i + 1}"), q) for i, (n, s) in enumerate(rest_lines)]
        G = MatrixGF(field, np.array(G_rows, dtype=np.int64).reshape(N, K))
    F = MatrixGF(field, np.array(F_rows, dtype=np.int64).reshape(M, K))

    zero = [c + 1 for c in range(K) if not F.array[:, c].any()]
    if zero:
        raise ProblemError(
            f"F column(s) {zero} are zero; matrix F does not have zero columns by assumption "
            "(remove those users)",
            body[0][0],
        )
    if rank(F) != M:
        raise ProblemError(f"F has rank {rank(F)} < M={M}; remove dependent rows", body[0][0])
    if N and rank(G) != N:
        raise ProblemError(f"G has rank {rank(G)} < N={N}; remove dependent rows", body[M][0])
    try:
        return AggregationSpec(field, K, F, G, L)
    except (ZeroColumnError, DegenerateInputError, ValueError) as exc:
        raise ProblemError(str(exc)) from None


def format_problem(spec: AggregationSpec) -> str:
    lines = [f"{spec.q} {spec.K} {spec.M} {spec.N}" + (f" {spec.L}" if spec.L != 1 else "")]
    lines += [" ".join(map(str, row)) for row in spec.F.tolist()]
    lines += [" ".join(map(str, row)) for row in spec.G.tolist()]
    return "\n".join(lines) + "\n"
