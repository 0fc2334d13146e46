"""Prime-field arithmetic.

Scalars are :class:`FieldElement` values tied to a :class:`FieldSpec`.
Bulk work (matrices, exhaustive enumeration) goes through numpy int64
arrays instead; the helpers at the bottom of this module do the modular
matrix product for those without overflowing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# q*q must fit in a signed 64-bit accumulator.
MAX_MODULUS = 2**31


class FieldMismatchError(ValueError):
    """Operands belong to different fields."""


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


@dataclass(frozen=True)
class FieldSpec:
    """The prime field F_q."""

    q: int

    def __post_init__(self) -> None:
        if not isinstance(self.q, (int, np.integer)) or isinstance(self.q, bool):
            raise TypeError(f"modulus must be an integer, got {self.q!r}")
        if not is_prime(int(self.q)):
            raise ValueError(f"q={self.q} is not prime; only prime fields are supported")
        if self.q >= MAX_MODULUS:
            raise ValueError(f"q={self.q} too large (must be < 2^31)")
        object.__setattr__(self, "q", int(self.q))

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self)

    def elements(self) -> list[FieldElement]:
        return [FieldElement(v, self) for v in range(self.q)]

    def __str__(self) -> str:
        return f"GF({self.q})"


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldSpec

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.field.q:
            raise ValueError(f"{self.value} is not a canonical residue mod {self.field.q}")

    def _check(self, other: FieldElement) -> None:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.field != self.field:
            raise FieldMismatchError(f"cannot combine elements of {self.field} and {other.field}")

    def __add__(self, other: FieldElement) -> FieldElement:
        return add(self, other)

    def __sub__(self, other: FieldElement) -> FieldElement:
        return add(self, neg(other))

    def __mul__(self, other: FieldElement) -> FieldElement:
        return mul(self, other)

    def __truediv__(self, other: FieldElement) -> FieldElement:
        return mul(self, inv(other))

    def __neg__(self) -> FieldElement:
        return neg(self)

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"{self.value} (mod {self.field.q})"


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    a._check(b)
    return FieldElement((a.value + b.value) % a.field.q, a.field)


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    a._check(b)
    return FieldElement((a.value * b.value) % a.field.q, a.field)


def neg(a: FieldElement) -> FieldElement:
    return FieldElement((a.field.q - a.value) % a.field.q, a.field)


def inv(a: FieldElement) -> FieldElement:
    if a.value == 0:
        raise ZeroDivisionError(f"0 has no inverse in {a.field}")
    return FieldElement(pow(a.value, -1, a.field.q), a.field)


def matmul_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """``(a @ b) % q`` for int64 arrays with entries in [0, q).

    Works on stacked operands as ``np.matmul`` does. The inner dimension is
    split so partial sums never exceed 2^63.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    inner = a.shape[-1]
    step = max(1, (2**63 - 1) // ((q - 1) ** 2 or 1) - 1)
    if inner <= step:
        return np.matmul(a, b) % q
    out = None
    for lo in range(0, inner, step):
        part = np.matmul(a[..., lo : lo + step], b[..., lo : lo + step, :]) % q
        out = part if out is None else (out + part) % q
    return out
