"""Decoding, evaluation, reporting and persistence."""

from .decoding import Hypothesis, Prediction, beam_decode, beam_search, decode, greedy_decode
from .evaluation import (
    ComparisonReport,
    EvalResult,
    bundled_table,
    compare_report,
    evaluate,
    evaluate_treebanks,
    read_score_table,
    relative_error_reduction,
)
from .persistence import load_model, save_model

__all__ = [
    "ComparisonReport",
    "EvalResult",
    "Hypothesis",
    "Prediction",
    "beam_decode",
    "beam_search",
    "bundled_table",
    "compare_report",
    "decode",
    "evaluate",
    "evaluate_treebanks",
    "greedy_decode",
    "load_model",
    "read_score_table",
    "relative_error_reduction",
    "save_model",
]
