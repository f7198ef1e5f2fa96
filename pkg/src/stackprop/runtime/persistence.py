"""Model checkpoints: parameters in the binary container, config and vocabularies in its header."""

from __future__ import annotations

from ..conllu import Vocabulary
from ..network import ModelConfig, ParserModel
from ..numerics.serialize import CheckpointFormatError, read_parameters, write_parameters


def save_model(model: ParserModel, path) -> None:
    header = {"config": model.config.to_dict(), "vocab": model.vocab.to_dict()}
    with open(path, "wb") as f:
        write_parameters(f, model.parameters(), header)


def load_model(path) -> ParserModel:
    with open(path, "rb") as f:
        params, header = read_parameters(f)
    try:
        config = ModelConfig.from_dict(header["config"])
        vocab = Vocabulary.from_dict(header["vocab"])
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"checkpoint header is incomplete: {e}") from None
    model = ParserModel(config, vocab, seed=0)
    expected = {name: p.shape for name, p in model.params.items()}
    found = {p.name: p.shape for p in params}
    if expected != found:
        raise CheckpointFormatError("checkpoint parameters do not match its configuration")
    by_name = {p.name: p for p in params}
    model.params = {name: by_name[name] for name in model.params}
    return model
