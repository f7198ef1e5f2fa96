import os

os.environ.setdefault("STACKPROP_CHECK_FINITE", "1")

from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from stackprop.conllu import Sentence, Token, build_vocabularies, read_conllu  # noqa: E402
from stackprop.network import ModelConfig, ParserModel  # noqa: E402
from stackprop.numerics import OptimizerConfig  # noqa: E402

DATA = Path(__file__).parent / "data"
TOY = Path(__file__).parents[1] / "src" / "stackprop" / "data" / "toy_train.conllu"


def make_sentence(heads, labels=None, forms=None, upos=None) -> Sentence:
    n = len(heads)
    labels = labels or ["dep"] * n
    forms = forms or [f"w{i}" for i in range(1, n + 1)]
    upos = upos or ["X"] * n
    return Sentence(tuple(
        Token(id=i, form=f, upos=u, head=h, deprel=lab)
        for i, (h, lab, f, u) in enumerate(zip(heads, labels, forms, upos), start=1)
    ))


def tiny_config(**kw) -> ModelConfig:
    opt = kw.pop("optimizer", OptimizerConfig(dropout_keep=1.0))
    base = dict(char_embedding_dim=4, lstm_hidden_dim=8, link_dim=4, label_embedding_dim=4,
                parser_hidden_dim=8)
    base.update(kw)
    return ModelConfig(optimizer=opt, **base)


@pytest.fixture(scope="session")
def toy_treebank():
    return read_conllu(TOY)


@pytest.fixture
def tiny_model(toy_treebank):
    return ParserModel(tiny_config(), build_vocabularies(toy_treebank), seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
