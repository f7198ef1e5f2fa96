"""scikit-learn style front end: ``DependencyParser().fit(train).predict(test)``."""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .conllu import Sentence, build_vocabularies, parse_conllu, read_conllu
from .network import ModelConfig, ParserModel
from .numerics import OptimizerConfig
from .runtime import decode, evaluate, load_model, save_model
from .training import TrainPlan, train


def check_sentences(X, name: str = "X") -> list[Sentence]:
    """Accept a list of Sentences, CoNLL-U text, or a path to a CoNLL-U file."""
    if isinstance(X, str):
        X = parse_conllu(X) if "\t" in X else read_conllu(X)
    elif hasattr(X, "__fspath__"):
        X = read_conllu(X)
    X = list(X)
    if not X:
        raise ValueError(f"{name} contains no sentences")
    for k, s in enumerate(X):
        if not isinstance(s, Sentence):
            raise TypeError(f"{name}[{k}] is {type(s).__name__}, expected Sentence")
    return X


class DependencyParser(BaseEstimator):
    """Character-LSTM transition parser trained with stack-propagation.

    Hyperparameters mirror :class:`ModelConfig`, :class:`OptimizerConfig` and
    :class:`TrainPlan`. ``predict`` returns one ``(heads, labels)`` pair per
    sentence and ``score`` returns LAS in percent.
    """

    def __init__(
        self,
        char_embedding_dim: int = 16,
        lstm_hidden_dim: int = 256,
        link_dim: int = 64,
        label_embedding_dim: int = 16,
        parser_hidden_dim: int = 256,
        beam_size: int = 8,
        self_norm_alpha: float = 0.01,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.9,
        epsilon: float = 1e-4,
        ema_decay: float = 0.999,
        dropout_keep: float = 0.8,
        pretrain_steps: int = 10000,
        parser_per_tagger: int = 8,
        minibatch_size: int = 4,
        max_steps: int = 200000,
        max_parser_updates: int | None = None,
        patience: int = 10,
        dev_eval_interval: int = 1000,
        workers: int = 1,
        decoding: str = "beam",
        random_state: int = 1,
    ):
        self.char_embedding_dim = char_embedding_dim
        self.lstm_hidden_dim = lstm_hidden_dim
        self.link_dim = link_dim
        self.label_embedding_dim = label_embedding_dim
        self.parser_hidden_dim = parser_hidden_dim
        self.beam_size = beam_size
        self.self_norm_alpha = self_norm_alpha
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.ema_decay = ema_decay
        self.dropout_keep = dropout_keep
        self.pretrain_steps = pretrain_steps
        self.parser_per_tagger = parser_per_tagger
        self.minibatch_size = minibatch_size
        self.max_steps = max_steps
        self.max_parser_updates = max_parser_updates
        self.patience = patience
        self.dev_eval_interval = dev_eval_interval
        self.workers = workers
        self.decoding = decoding
        self.random_state = random_state

    def _configs(self) -> tuple[ModelConfig, TrainPlan]:
        opt = OptimizerConfig(
            beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            learning_rate=self.learning_rate, ema_decay=self.ema_decay,
            dropout_keep=self.dropout_keep, seed=self.random_state,
        )
        config = ModelConfig(
            char_embedding_dim=self.char_embedding_dim, lstm_hidden_dim=self.lstm_hidden_dim,
            link_dim=self.link_dim, label_embedding_dim=self.label_embedding_dim,
            parser_hidden_dim=self.parser_hidden_dim, beam_size=self.beam_size,
            self_norm_alpha=self.self_norm_alpha, optimizer=opt,
        )
        plan = TrainPlan(
            pretrain_steps=self.pretrain_steps, parser_per_tagger=self.parser_per_tagger,
            minibatch_size=self.minibatch_size, max_steps=self.max_steps,
            max_parser_updates=self.max_parser_updates, patience=self.patience,
            dev_eval_interval=self.dev_eval_interval, workers=self.workers,
        )
        return config, plan

    def fit(self, X, y=None, dev=None):
        """Train on sentences ``X``; gold trees are read from the sentences, ``y`` is ignored."""
        if self.decoding not in ("beam", "greedy"):
            raise ValueError(f"decoding must be 'beam' or 'greedy', got {self.decoding!r}")
        X = check_sentences(X)
        dev = check_sentences(dev, "dev") if dev is not None else None
        config, plan = self._configs()
        self.model_ = ParserModel(config, build_vocabularies(X))
        self.train_log_ = train(X, dev, self.model_, plan)
        return self

    def predict(self, X) -> list[tuple[list[int], list[str]]]:
        check_is_fitted(self, "model_")
        X = check_sentences(X)
        beam = self.beam_size if self.decoding == "beam" else None
        return [(p.heads, p.labels) for p in decode(X, self.model_, beam_size=beam)]

    def transform(self, X) -> list[Sentence]:
        """Copies of ``X`` with predicted HEAD and DEPREL columns."""
        X = check_sentences(X)
        return [s.with_predictions(h, lab) for s, (h, lab) in zip(X, self.predict(X))]

    def score(self, X, y=None) -> float:
        X = check_sentences(X)
        return evaluate(X, self.predict(X)).las

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_model(self.model_, path)

    @classmethod
    def load(cls, path) -> DependencyParser:
        model = load_model(path)
        c, o = model.config, model.config.optimizer
        est = cls(
            char_embedding_dim=c.char_embedding_dim, lstm_hidden_dim=c.lstm_hidden_dim,
            link_dim=c.link_dim, label_embedding_dim=c.label_embedding_dim,
            parser_hidden_dim=c.parser_hidden_dim, beam_size=c.beam_size,
            self_norm_alpha=c.self_norm_alpha, learning_rate=o.learning_rate, beta1=o.beta1,
            beta2=o.beta2, epsilon=o.epsilon, ema_decay=o.ema_decay, dropout_keep=o.dropout_keep,
            random_state=o.seed,
        )
        est.model_ = model
        return est

    def _more_tags(self):
        return {"requires_y": False, "X_types": ["string"]}
