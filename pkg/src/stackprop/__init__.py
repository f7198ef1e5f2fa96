"""Character-LSTM dependency parser with stack-propagation training and beam decoding."""

from .conllu import (
    Sentence,
    Token,
    Vocabulary,
    build_vocabularies,
    is_projective,
    parse_conllu,
    read_conllu,
    to_char_sequence,
    write_conllu,
)
from .estimator import DependencyParser
from .network import ModelConfig, ParserModel
from .numerics import OptimizerConfig
from .runtime import beam_decode, compare_report, evaluate, greedy_decode, load_model, save_model
from .training import TrainPlan, train

__version__ = "0.1.0"

__all__ = [
    "DependencyParser",
    "ModelConfig",
    "OptimizerConfig",
    "ParserModel",
    "Sentence",
    "Token",
    "TrainPlan",
    "Vocabulary",
    "beam_decode",
    "build_vocabularies",
    "compare_report",
    "evaluate",
    "greedy_decode",
    "is_projective",
    "load_model",
    "parse_conllu",
    "read_conllu",
    "save_model",
    "to_char_sequence",
    "train",
    "write_conllu",
]
