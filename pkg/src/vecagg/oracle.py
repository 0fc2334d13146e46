"""Exhaustive, exact verification of masked linear aggregation schemes.

Every realization of the inputs W and the source key S is enumerated.
Inputs and keys are uniform and independent, so each realization has the same
probability. Probabilities are therefore integer counts over the
``q ** ((K + n_keys) * L)`` realizations, and no floating point is used.

A realization is a mixed-radix integer. The base-q digits are W[k, l] for
k, l in row-major order, followed by S[i, l] in row-major order. The last
digit is the least significant.

Count tables are keyed the same way. The digits of a key are the
concatenated realizations of the named variables (f = F W, g = G W, x = X,
w = W, s = S, z = all user keys). The key is read most significant digit
first.

Two routes are provided:

* :func:`enumerate_joint` materializes :class:`TranscriptCounts`, sparse
  tables for every variable combination the checks need. It runs in
  W-major order and can split the state range across worker processes.
* :func:`scan` streams in x-major order. For each message vector x it
  visits every key S together with the unique W that yields x. Every table
  keyed by x is then complete inside a chunk and is checked there and
  dropped. This route handles state spaces too large to tabulate.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .gf import matmul_mod
from .linalg import conditional_rank
from .scheme import LinearScheme, rate_report

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10**8
CHUNK_STATES = 1 << 18
# Above this many states verify() switches from tables to the streaming scan.
TABLE_LIMIT = 1 << 24
_INT63 = 2**63 - 1


class BudgetExceededError(RuntimeError):
    """The exhaustive state space is larger than the allowed budget."""


class KeyWidthError(RuntimeError):
    """A count-table key does not fit in 63 bits."""


class NonUniformError(ValueError):
    """Entropy requested for a distribution that is not uniform on its support."""


# ---------------------------------------------------------------------------
# Mixed-radix helpers
# ---------------------------------------------------------------------------


def state_count(scheme: LinearScheme) -> int:
    return scheme.q ** ((scheme.K + scheme.n_keys) * scheme.L)


def _require_budget(scheme: LinearScheme, budget: int) -> int:
    total = state_count(scheme)
    if total > budget:
        raise BudgetExceededError(
            f"exhaustive check needs {total} states (q={scheme.q}, K={scheme.K}, "
            f"key symbols={scheme.key_symbols}, L={scheme.L}); budget is {budget}. "
            f"Rerun with --budget {total} or larger."
        )
    return total


def to_digits(codes: np.ndarray, q: int, width: int) -> np.ndarray:
    """Integer codes -> (n, width) base-q digits, most significant first."""
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty((codes.size, width), dtype=np.int64)
    c = codes.copy()
    for j in range(width - 1, -1, -1):
        c, out[:, j] = np.divmod(c, q)
    return out


def pack(digits: np.ndarray, q: int) -> np.ndarray:
    """(n, width) base-q digits -> int64 codes (Horner, most significant first)."""
    digits = np.asarray(digits, dtype=np.int64)
    width = digits.shape[1]
    if q**width > _INT63:
        raise KeyWidthError(f"{width} base-{q} digits overflow a 63-bit key")
    code = np.zeros(digits.shape[0], dtype=np.int64)
    for j in range(width):
        code = code * q + digits[:, j]
    return code


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0], -1)


def _unique_counts(codes: np.ndarray, weights: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    if weights is None:
        u, c = np.unique(codes, return_counts=True)
        return u, c.astype(np.int64)
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    if sc.size == 0:
        return sc, np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
    return sc[starts], np.add.reduceat(weights[order].astype(np.int64), starts)


def _fmt_digits(d: Iterable[int]) -> str:
    return "[" + " ".join(str(int(v)) for v in d) + "]"


# ---------------------------------------------------------------------------
# Count tables
# ---------------------------------------------------------------------------


@dataclass
class CountTable:
    """Sparse integer histogram over base-q keys of ``width`` digits."""

    q: int
    width: int
    codes: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_parts(cls, q: int, width: int, parts: list[tuple[np.ndarray, np.ndarray]]) -> CountTable:
        if not parts:
            return cls(q, width, np.zeros(0, np.int64), np.zeros(0, np.int64))
        codes = np.concatenate([p[0] for p in parts])
        counts = np.concatenate([p[1] for p in parts])
        u, c = _unique_counts(codes, counts)
        return cls(q, width, u, c)

    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> int:
        return int(self.codes.size)

    def is_uniform(self) -> bool:
        return self.codes.size > 0 and bool((self.counts == self.counts[0]).all())

    def entropy(self) -> Fraction:
        """Entropy in q-ary units; only defined here for uniform tables."""
        return _uniform_entropy(self.q, self.support(), self.is_uniform())

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if self.codes.size == 0:
            return np.zeros(codes.shape, dtype=np.int64)
        idx = np.searchsorted(self.codes, codes)
        idx_c = np.minimum(idx, self.codes.size - 1)
        hit = self.codes[idx_c] == codes
        return np.where(hit, self.counts[idx_c], 0)

    def digits(self, code: int) -> list[int]:
        return [int(v) for v in to_digits(np.array([code]), self.q, self.width)[0]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountTable):
            return NotImplemented
        return (
            self.q == other.q
            and self.width == other.width
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.counts, other.counts)
        )


def _uniform_entropy(q: int, support: int, uniform: bool) -> Fraction:
    if not uniform:
        raise NonUniformError("distribution is not uniform on its support")
    t, s = 0, support
    while s > 1 and s % q == 0:
        s //= q
        t += 1
    if s != 1:
        raise NonUniformError(f"support size {support} is not a power of {q}")
    return Fraction(t)


@dataclass
class TranscriptCounts:
    """All count tables from one exhaustive enumeration of a scheme."""

    scheme: LinearScheme
    total: int
    tables: dict[str, CountTable]
    decode_failures: int = 0
    first_failure: int | None = None

    @property
    def q(self) -> int:
        return self.scheme.q

    def __getitem__(self, name: str) -> CountTable:
        return self.tables[name]

    def H(self, name: str) -> Fraction:
        return self.tables[name].entropy()

    def realization(self, state: int) -> tuple[list[int], list[int]]:
        """Split a state index into (W digits, S digits)."""
        s = self.scheme
        kl, nl = s.K * s.L, s.key_symbols
        d = to_digits(np.array([state]), self.q, kl + nl)[0]
        return [int(v) for v in d[:kl]], [int(v) for v in d[kl:]]


def _table_layout(scheme: LinearScheme) -> dict[str, tuple[str, ...]]:
    layout: dict[str, tuple[str, ...]] = {
        "f": ("f",),
        "fg": ("f", "g"),
        "x": ("x",),
        "fx": ("f", "x"),
        "fgx": ("f", "g", "x"),
        "w": ("w",),
        "wx": ("w", "x"),
        "s": ("s",),
        "z": ("z",),
    }
    for u in range(scheme.K):
        layout[f"ctx{u}"] = (f"wm{u}", f"zm{u}")
        layout[f"xctx{u}"] = (f"xu{u}", f"wm{u}", f"zm{u}")
    return layout


def _widths(scheme: LinearScheme) -> dict[str, int]:
    K, L, M, N = scheme.K, scheme.L, scheme.M, scheme.spec.N
    w = {"f": M * L, "g": N * L, "x": K * L, "w": K * L, "s": scheme.key_symbols, "z": K * L}
    for u in range(scheme.K):
        w[f"wm{u}"] = (K - 1) * L
        w[f"zm{u}"] = (K - 1) * L
        w[f"xu{u}"] = L
    return w


def _require_G(scheme: LinearScheme) -> None:
    if scheme.spec.G is None:
        raise ValueError("verification needs the protection matrix G")


def _variables(scheme: LinearScheme, W: np.ndarray, S: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Per-state variable digits for a batch, plus the per-state decode-failure mask."""
    q = scheme.q
    spec = scheme.spec
    Z = scheme.key_streams(S)
    X = scheme.encode_batch(W, S)
    f = matmul_mod(spec.F.array, W, q)
    g = matmul_mod(spec.G.array, W, q)
    bad = (scheme.decode_batch(X) != f).reshape(W.shape[0], -1).any(axis=1)
    v = {"f": _flat(f), "g": _flat(g), "x": _flat(X), "w": _flat(W), "s": _flat(S), "z": _flat(Z)}
    for u in range(scheme.K):
        others = [k for k in range(scheme.K) if k != u]
        v[f"wm{u}"] = _flat(W[:, others, :])
        v[f"zm{u}"] = _flat(Z[:, others, :])
        v[f"xu{u}"] = _flat(X[:, u, :])
    return v, bad


def _enumerate_range(scheme: LinearScheme, start: int, stop: int, chunk: int):
    q = scheme.q
    kl, nl = scheme.K * scheme.L, scheme.key_symbols
    layout = _table_layout(scheme)
    parts: dict[str, list] = {name: [] for name in layout}
    failures, first = 0, None
    for a in range(start, stop, chunk):
        b = min(stop, a + chunk)
        d = to_digits(np.arange(a, b, dtype=np.int64), q, kl + nl)
        W = d[:, :kl].reshape(len(d), scheme.K, scheme.L)
        S = d[:, kl:].reshape(len(d), scheme.n_keys, scheme.L)
        v, bad = _variables(scheme, W, S)
        nbad = int(bad.sum())
        if nbad:
            failures += nbad
            if first is None:
                first = a + int(np.argmax(bad))
        for name, comps in layout.items():
            codes = pack(np.hstack([v[c] for c in comps]), q)
            parts[name].append(_unique_counts(codes))
        # Compact so memory tracks table support, not states visited.
        for name in layout:
            if len(parts[name]) >= 16:
                t = CountTable.from_parts(q, 0, parts[name])
                parts[name] = [(t.codes, t.counts)]
    return parts, failures, first


def enumerate_joint(
    scheme: LinearScheme,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    chunk: int = CHUNK_STATES,
) -> TranscriptCounts:
    """Visit every (W, S) once and tabulate all joint counts.

    With ``workers > 1`` the state range is cut into contiguous slices (whole
    blocks of W values) handled by separate processes; the merged tables are
    identical to a single pass.
    """
    _require_G(scheme)
    total = _require_budget(scheme, budget)
    q = scheme.q
    widths = _widths(scheme)
    layout = _table_layout(scheme)
    for name, comps in layout.items():
        w = sum(widths[c] for c in comps)
        if q**w > _INT63:
            raise KeyWidthError(f"table {name} needs {w} base-{q} digits; exceeds 63-bit keys")

    workers = max(1, int(workers))
    if workers == 1:
        results = [_enumerate_range(scheme, 0, total, chunk)]
    else:
        align = q**scheme.key_symbols
        n_w = total // align
        cuts = [align * (n_w * i // workers) for i in range(workers + 1)]
        ranges = [(cuts[i], cuts[i + 1]) for i in range(workers) if cuts[i] < cuts[i + 1]]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_enumerate_range, scheme, a, b, chunk) for a, b in ranges]
            results = [f.result() for f in futs]

    tables = {}
    for name, comps in layout.items():
        w = sum(widths[c] for c in comps)
        tables[name] = CountTable.from_parts(q, w, [p for r in results for p in r[0][name]])
    failures = sum(r[1] for r in results)
    firsts = [r[2] for r in results if r[2] is not None]
    counts = TranscriptCounts(
        scheme=scheme,
        total=total,
        tables=tables,
        decode_failures=failures,
        first_failure=min(firsts) if firsts else None,
    )
    for name, t in tables.items():
        if t.total() != total:
            raise AssertionError(f"table {name} sums to {t.total()}, expected {total}")
    return counts


# ---------------------------------------------------------------------------
# Check results and report
# ---------------------------------------------------------------------------


def _fmt_val(v) -> str:
    if isinstance(v, Fraction) and v.denominator == 1:
        return str(v.numerator)
    return str(v)


@dataclass
class CheckResult:
    name: str
    status: str
    values: dict = field(default_factory=dict)
    witness: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def line(self) -> str:
        parts = [self.name]
        parts += [f"{k}={_fmt_val(v)}" for k, v in self.values.items()]
        parts.append(self.status)
        return " ".join(parts)

    def lines(self) -> list[str]:
        out = [self.line()]
        if self.witness:
            out.append("witness:")
            out += ["  " + w for w in self.witness]
        return out


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _state_witness(scheme: LinearScheme, state: int) -> list[str]:
    kl = scheme.K * scheme.L
    d = to_digits(np.array([state]), scheme.q, kl + scheme.key_symbols)[0]
    return [f"W={_fmt_digits(d[:kl])} S={_fmt_digits(d[kl:])}"]


def check_correctness(source) -> CheckResult:
    """Decoded output equals F W on every realization.

    ``source`` is a :class:`TranscriptCounts` or a scheme (enumerated here).
    """
    if isinstance(source, TranscriptCounts):
        failures, first, scheme = source.decode_failures, source.first_failure, source.scheme
    else:
        scheme = source
        _, failures, first = _correctness_pass(scheme)
    res = CheckResult("correctness", _status(failures == 0))
    if failures:
        res.witness = _state_witness(scheme, first) + [f"failing realizations: {failures}"]
    return res


def _correctness_pass(scheme: LinearScheme, budget: int = DEFAULT_BUDGET, chunk: int = CHUNK_STATES):
    total = _require_budget(scheme, budget)
    q = scheme.q
    kl, nl = scheme.K * scheme.L, scheme.key_symbols
    failures, first = 0, None
    for a in range(0, total, chunk):
        b = min(total, a + chunk)
        d = to_digits(np.arange(a, b, dtype=np.int64), q, kl + nl)
        W = d[:, :kl].reshape(len(d), scheme.K, scheme.L)
        S = d[:, kl:].reshape(len(d), scheme.n_keys, scheme.L)
        X = scheme.encode_batch(W, S)
        bad = (scheme.decode_batch(X) != matmul_mod(scheme.spec.F.array, W, q)).reshape(len(d), -1).any(axis=1)
        if bad.any():
            failures += int(bad.sum())
            if first is None:
                first = a + int(np.argmax(bad))
    return total, failures, first


def check_security(counts: TranscriptCounts) -> CheckResult:
    """Perfect security as the exact identity N(f,g,x) N(f) == N(f,g) N(f,x).

    Only keys in the support of (f, g, x) are compared. Summed over g, both
    sides equal N(f) N(f,x), so once every supported term agrees the
    unsupported terms have N(f,g) N(f,x) == 0 as well.
    """
    s = counts.scheme
    q, L = s.q, s.L
    wg, wx = s.spec.N * L, s.K * L
    t = counts["fgx"]
    codes = t.codes
    f_code = codes // q ** (wg + wx)
    fg_code = codes // q**wx
    x_code = codes % q**wx
    fx_code = f_code * q**wx + x_code
    lhs = t.counts * counts["f"].lookup(f_code)
    rhs = counts["fg"].lookup(fg_code) * counts["fx"].lookup(fx_code)
    bad = np.flatnonzero(lhs != rhs)
    res = CheckResult("security", _status(bad.size == 0))
    if bad.size:
        i = int(bad[0])
        d = t.digits(int(codes[i]))
        wf = s.M * L
        res.witness = [
            f"f={_fmt_digits(d[:wf])} g={_fmt_digits(d[wf:wf + wg])} x={_fmt_digits(d[wf + wg:])}",
            f"N(f,g,x)*N(f)={int(lhs[i])} N(f,g)*N(f,x)={int(rhs[i])}",
            f"violating triples: {bad.size}",
        ]
    return res


def conditional_mutual_information(counts: TranscriptCounts) -> Fraction:
    """I(G; X | F) = H(F,G) + H(F,X) - H(F) - H(F,G,X), from support sizes."""
    return counts.H("fg") + counts.H("fx") - counts.H("f") - counts.H("fgx")


def check_leakage_bound(counts: TranscriptCounts) -> CheckResult:
    s = counts.scheme
    r = conditional_rank(s.spec.F, s.spec.G)
    bound = (s.K - r) * s.L
    try:
        leak = counts.H("x") + counts.H("w") - counts.H("wx")
    except NonUniformError as exc:
        return CheckResult("leakage", "REVIEW", {"bound": bound}, [f"manual review: {exc}"])
    return CheckResult("leakage", _status(leak <= bound), {"I(X;W)": leak, "bound": bound})


def check_per_user_bound(counts: TranscriptCounts) -> list[CheckResult]:
    s = counts.scheme
    out = []
    for u in range(s.K):
        try:
            h = counts.H(f"xctx{u}") - counts.H(f"ctx{u}")
        except NonUniformError as exc:
            out.append(CheckResult("per-user", "REVIEW", {"u": u + 1}, [f"manual review: {exc}"]))
            continue
        out.append(CheckResult("per-user", _status(h >= s.L), {"u": u + 1, "H": h}))
    return out


def check_total_key_bound(counts: TranscriptCounts) -> CheckResult:
    """Full-entropy keys and the chain L_ZS >= H(S) >= H(Z) >= H(X|W) >= rank(G|F) L."""
    s = counts.scheme
    r = conditional_rank(s.spec.F, s.spec.G)
    hS = counts.H("s")
    hZ = counts.H("z")
    hXW = counts.H("wx") - counts.H("w")
    chain = s.key_symbols >= hS >= hZ >= hXW
    ok = hS == s.key_symbols and chain and s.key_symbols >= r * s.L
    res = CheckResult("total-key", _status(ok), {"H(S)": hS, "rank(G|F)": r})
    if not ok:
        res.witness = [f"L_ZS={s.key_symbols} H(S)={hS} H(Z)={hZ} H(X|W)={_fmt_val(hXW)} needed={r * s.L}"]
    return res


# ---------------------------------------------------------------------------
# Streaming route
# ---------------------------------------------------------------------------


def _w_only_tables(scheme: LinearScheme, chunk: int) -> tuple[CountTable, CountTable]:
    """N(f) and N(f,g) over all (W, S).

    f and g depend on W alone, so each W count is scaled by the number of keys.
    """
    q, K, L = scheme.q, scheme.K, scheme.L
    F, G = scheme.spec.F.array, scheme.spec.G.array
    mult = q**scheme.key_symbols
    nW = q ** (K * L)
    fp, fgp = [], []
    for a in range(0, nW, chunk):
        W = to_digits(np.arange(a, min(nW, a + chunk), dtype=np.int64), q, K * L).reshape(-1, K, L)
        f = _flat(matmul_mod(F, W, q))
        g = _flat(matmul_mod(G, W, q))
        fp.append(_unique_counts(pack(f, q)))
        fgp.append(_unique_counts(pack(np.hstack([f, g]), q)))
    ft = CountTable.from_parts(q, scheme.M * L, fp)
    fgt = CountTable.from_parts(q, (scheme.M + scheme.spec.N) * L, fgp)
    ft.counts *= mult
    fgt.counts *= mult
    return ft, fgt


class _Support:
    """Support size and multiplicities of a table built from chunk-complete pieces."""

    def __init__(self) -> None:
        self.size = 0
        self.mults: set[int] = set()
        self.total = 0

    def add(self, counts: np.ndarray) -> None:
        self.size += counts.size
        self.total += int(counts.sum())
        self.mults.update(int(c) for c in np.unique(counts))

    def entropy(self, q: int) -> Fraction:
        return _uniform_entropy(q, self.size, len(self.mults) == 1)


@dataclass
class ScanResult:
    scheme: LinearScheme
    total: int
    correctness: CheckResult
    security: CheckResult
    leakage: CheckResult
    total_key: CheckResult

    def checks(self) -> list[CheckResult]:
        return [self.correctness, self.security, self.leakage, self.total_key]


def scan(scheme: LinearScheme, budget: int = DEFAULT_BUDGET, chunk: int = CHUNK_STATES) -> ScanResult:
    """x-major streaming pass: correctness, security, leakage and key entropy.

    State (x, S) stands for the realization (W, S) with W = x - Z(S). For a
    fixed S this map is a bijection, so each (W, S) is visited exactly once.
    """
    _require_G(scheme)
    total = _require_budget(scheme, budget)
    q, K, L, M, N = scheme.q, scheme.K, scheme.L, scheme.M, scheme.spec.N
    nl = scheme.key_symbols
    F, G = scheme.spec.F.array, scheme.spec.G.array
    Qf, Qg, Qx = q ** (M * L), q ** (N * L), q ** (K * L)
    if Qf * Qg > _INT63 // max(1, chunk) or Qx > _INT63 // max(1, chunk):
        raise KeyWidthError("instance too wide for the streaming scan keys")

    ns = q**nl
    S_all = to_digits(np.arange(ns, dtype=np.int64), q, nl).reshape(ns, scheme.n_keys, L)
    Z_all = scheme.key_streams(S_all)
    f_tab, fg_tab = _w_only_tables(scheme, chunk)

    cx = max(1, chunk // ns)
    failures, first_fail = 0, None
    sec_bad, sec_witness = 0, []
    fg_seen: list[tuple[np.ndarray, np.ndarray]] = []
    x_sup, wx_sup = _Support(), _Support()
    s_counts = np.zeros(ns, dtype=np.int64)

    for a in range(0, Qx, cx):
        xs = np.arange(a, min(Qx, a + cx), dtype=np.int64)
        m = xs.size
        X = to_digits(xs, q, K * L).reshape(m, K, L)
        W = ((X[:, None] - Z_all[None]) % q).reshape(m * ns, K, L)
        f = matmul_mod(F, W, q)
        fcode = pack(_flat(f), q)
        gcode = pack(_flat(matmul_mod(G, W, q)), q)
        wcode = pack(_flat(W), q)
        xl = np.repeat(np.arange(m, dtype=np.int64), ns)

        dec = scheme.decode_batch(X)
        bad = (np.repeat(dec, ns, axis=0) != f).reshape(m * ns, -1).any(axis=1)
        if bad.any():
            failures += int(bad.sum())
            if first_fail is None:
                j = int(np.argmax(bad))
                first_fail = (W[j], S_all[j % ns])

        s_counts += m
        x_sup.add(np.bincount(xl, minlength=m))
        wx_sup.add(_unique_counts(xl * Qx + wcode)[1])

        u_fgx, c_fgx = _unique_counts((xl * Qf + fcode) * Qg + gcode)
        u_fx, c_fx = _unique_counts(xl * Qf + fcode)
        fg_local = u_fgx % (Qf * Qg)
        fg_seen.append(_unique_counts(fg_local, c_fgx))
        fc = fg_local // Qg
        xloc = u_fgx // (Qf * Qg)
        nfx = CountTable(q, 0, u_fx, c_fx).lookup(xloc * Qf + fc)
        lhs = c_fgx * f_tab.lookup(fc)
        rhs = fg_tab.lookup(fg_local) * nfx
        viol = np.flatnonzero(lhs != rhs)
        if viol.size:
            sec_bad += viol.size
            if not sec_witness:
                i = int(viol[0])
                fd = to_digits(np.array([fc[i]]), q, M * L)[0]
                gd = to_digits(np.array([fg_local[i] % Qg]), q, N * L)[0]
                xd = to_digits(np.array([xs[xloc[i]]]), q, K * L)[0]
                sec_witness = [
                    f"f={_fmt_digits(fd)} g={_fmt_digits(gd)} x={_fmt_digits(xd)}",
                    f"N(f,g,x)*N(f)={int(lhs[i])} N(f,g)*N(f,x)={int(rhs[i])}",
                ]

    fg_total = CountTable.from_parts(q, (M + N) * L, fg_seen)
    if fg_total != fg_tab:
        raise AssertionError("streamed N(f,g) disagrees with the W-only tabulation")
    if x_sup.total != total or wx_sup.total != total:
        raise AssertionError("count conservation failed in streaming scan")

    corr = CheckResult("correctness", _status(failures == 0))
    if failures:
        Wf, Sf = first_fail
        corr.witness = [f"W={_fmt_digits(Wf.ravel())} S={_fmt_digits(Sf.ravel())}", f"failing realizations: {failures}"]
    sec = CheckResult("security", _status(sec_bad == 0))
    if sec_bad:
        sec.witness = sec_witness + [f"violating triples: {sec_bad}"]

    r = conditional_rank(scheme.spec.F, scheme.spec.G)
    bound = (K - r) * L
    hW = Fraction(K * L)  # every W occurs exactly ns times by construction of the pass
    try:
        hX = x_sup.entropy(q)
        hWX = wx_sup.entropy(q)
        leak = hX + hW - hWX
        leakage = CheckResult("leakage", _status(leak <= bound), {"I(X;W)": leak, "bound": bound})
    except NonUniformError as exc:
        hWX = None
        leakage = CheckResult("leakage", "REVIEW", {"bound": bound}, [f"manual review: {exc}"])

    s_sup = _Support()
    s_sup.add(s_counts)
    hS = s_sup.entropy(q)
    z_sup = _Support()
    z_sup.add(_unique_counts(pack(_flat(Z_all), q))[1] * Qx)
    hZ = z_sup.entropy(q)
    hXW = None if hWX is None else hWX - hW
    chain = nl >= hS >= hZ and (hXW is None or hZ >= hXW)
    ok = hS == nl and chain and nl >= r * L
    tk = CheckResult("total-key", _status(ok), {"H(S)": hS, "rank(G|F)": r})
    if not ok:
        tk.witness = [f"L_ZS={nl} H(S)={hS} H(Z)={hZ} H(X|W)={hXW} needed={r * L}"]
    return ScanResult(scheme, total, corr, sec, leakage, tk)


def scan_per_user(scheme: LinearScheme) -> list[CheckResult]:
    """H(X_u | (W_k, Z_k) for k != u) for every user, by counting.

    The realization space is the product of W_{-u} with (W_u, S), and for
    each fixed W_{-u} the counts over (W_u, S) repeat exactly. The counts
    over (W_u, S) are therefore taken once and scaled by q^((K-1) L).
    """
    q, K, L = scheme.q, scheme.K, scheme.L
    nl = scheme.key_symbols
    ns = q**nl
    S_all = to_digits(np.arange(ns, dtype=np.int64), q, nl).reshape(ns, scheme.n_keys, L)
    Z_all = scheme.key_streams(S_all)
    Wu = to_digits(np.arange(q**L, dtype=np.int64), q, L)
    mult = q ** ((K - 1) * L)
    out = []
    for u in range(K):
        others = [k for k in range(K) if k != u]
        zm = np.tile(pack(_flat(Z_all[:, others, :]), q), q**L)
        xu = pack(((Wu[:, None, :] + Z_all[None, :, u, :]) % q).reshape(-1, L), q)
        ctx, xctx = _Support(), _Support()
        ctx.add(_unique_counts(zm)[1])
        xctx.add(_unique_counts(xu * q ** ((K - 1) * L) + zm)[1])
        # Each W_{-u} value prefixes its own copy of the inner support.
        for sup in (ctx, xctx):
            sup.size *= mult
            sup.total *= mult
        try:
            h = xctx.entropy(q) - ctx.entropy(q)
            out.append(CheckResult("per-user", _status(h >= L), {"u": u + 1, "H": h}))
        except NonUniformError as exc:
            out.append(CheckResult("per-user", "REVIEW", {"u": u + 1}, [f"manual review: {exc}"]))
    return out


# ---------------------------------------------------------------------------
# Full verification
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    scheme: LinearScheme
    checks: list[CheckResult]
    route: str

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def text(self) -> str:
        lines = []
        for c in self.checks:
            lines += c.lines()
        return "\n".join(lines) + "\n"


def default_workers() -> int:
    return os.cpu_count() or 1


def verify(
    scheme: LinearScheme,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    table_limit: int = TABLE_LIMIT,
) -> VerificationReport:
    """Run the five checks; tables when they fit in memory, the streaming scan otherwise."""
    _require_G(scheme)
    total = _require_budget(scheme, budget)
    if total <= table_limit:
        counts = enumerate_joint(scheme, budget=budget, workers=workers)
        checks = [
            check_correctness(counts),
            check_security(counts),
            check_leakage_bound(counts),
            *check_per_user_bound(counts),
            check_total_key_bound(counts),
        ]
        return VerificationReport(scheme, checks, "tables")
    sr = scan(scheme, budget=budget)
    checks = [sr.correctness, sr.security, sr.leakage, *scan_per_user(scheme), sr.total_key]
    return VerificationReport(scheme, checks, "scan")


def rates_line(scheme: LinearScheme) -> str:
    rr = rate_report(scheme)
    per = " ".join(_fmt_val(r) for r in rr.R_Z)
    return f"rates R={_fmt_val(rr.R)} R_Z={_fmt_val(rr.R_Z_max)} R_ZSigma={_fmt_val(rr.R_ZSigma)} R_Z_per_user=[{per}]"
