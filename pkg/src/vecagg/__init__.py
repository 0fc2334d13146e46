"""Key-optimal vector linear secure aggregation over prime fields."""

from .gf import FieldElement, FieldSpec
from .linalg import MatrixGF, Normalization, conditional_rank, find_V, make_Vperp, normalize_F, rank, rref
from .scheme import (
    AggregationSpec,
    ConstructedScheme,
    KeyMaterial,
    LinearScheme,
    RateReport,
    build_section6_symmetrized,
    construct,
    rate_report,
)

__all__ = [
    "AggregationSpec",
    "ConstructedScheme",
    "FieldElement",
    "FieldSpec",
    "KeyMaterial",
    "LinearScheme",
    "MatrixGF",
    "Normalization",
    "RateReport",
    "build_section6_symmetrized",
    "conditional_rank",
    "construct",
    "find_V",
    "make_Vperp",
    "normalize_F",
    "rank",
    "rate_report",
    "rref",
]

__version__ = "0.1.0"
