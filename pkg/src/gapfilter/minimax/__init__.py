"""Least-favorable densities and minimax-robust filters over admissible classes."""

from .cells import CellMap, cell_map
from .classes import KINDS, AdmissibleClass, BoundClass, fixed_class
from .relations import RelationReport, RelationResult, check_optimality_relations
from .saddle import SaddleReport, verify_saddle
from .search import (
    MinimaxSolution,
    SearchConfig,
    corollary_mode,
    evaluate_delta_cross,
    pair_id,
    search_least_favorable,
    solution_at,
)

__all__ = [
    "AdmissibleClass",
    "BoundClass",
    "CellMap",
    "KINDS",
    "MinimaxSolution",
    "RelationReport",
    "RelationResult",
    "SaddleReport",
    "SearchConfig",
    "cell_map",
    "check_optimality_relations",
    "corollary_mode",
    "evaluate_delta_cross",
    "fixed_class",
    "pair_id",
    "search_least_favorable",
    "solution_at",
    "verify_saddle",
]
