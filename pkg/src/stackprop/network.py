"""The parser network: character LSTM, lookahead LSTM, tagger LSTM and the recurrent parser cell.

All forward functions read parameters through a :class:`~stackprop.numerics.Tape`,
so one code path serves training (raw values, recorded) and inference
(moving averages, not recorded).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

from .conllu import CharSequence, Sentence, Vocabulary, to_char_sequence
from .numerics import LSTMWeights, OptimizerConfig, Parameter, Tape, Tensor, dropout_mask
from .numerics.autodiff import concat, linear, mask_illegal, mul, reshape, row
from .numerics.cells import feedforward_cell, lstm_sequence
from .transitions import ROOT, ParserState, legal_action_mask, n_actions, recurrent_link_steps

N_LABEL_FEATURES = 12
N_LINKED_INPUTS = 6


@dataclass
class ModelConfig:
    char_embedding_dim: int = 16
    lstm_hidden_dim: int = 256
    link_dim: int = 64
    label_embedding_dim: int = 16
    parser_hidden_dim: int = 256
    beam_size: int = 8
    self_norm_alpha: float = 0.01
    left_to_right_tagger: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        for name in ("char_embedding_dim", "lstm_hidden_dim", "link_dim",
                     "label_embedding_dim", "parser_hidden_dim", "beam_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.self_norm_alpha < 0:
            raise ValueError("self_norm_alpha must be non-negative")

    @property
    def dropout_keep(self) -> float:
        return self.optimizer.dropout_keep

    @property
    def parser_input_dim(self) -> int:
        return N_LINKED_INPUTS * self.link_dim + N_LABEL_FEATURES * self.label_embedding_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class SentenceEncoding(NamedTuple):
    word_reps: Tensor  # (n, lstm_hidden)
    lookahead: Tensor  # (n, lstm_hidden)
    tagger_hidden: Tensor  # (n, lstm_hidden)
    tag_logits: Tensor | None  # (n, n_tags)

    @property
    def n(self) -> int:
        return self.word_reps.shape[0]


class StepActivation:
    """Parser-cell output of one step, with lazily projected recurrent links."""

    __slots__ = ("hidden", "logits", "_links")

    def __init__(self, hidden: Tensor, logits: Tensor):
        self.hidden = hidden
        self.logits = logits
        self._links: list[Tensor | None] = [None, None]

    def link(self, slot: int, w: Tensor, b: Tensor) -> Tensor:
        if self._links[slot] is None:
            self._links[slot] = linear(self.hidden, w, b)
        return self._links[slot]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParserModel:
    """Parameter store plus the configuration and vocabularies it was built for."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int | None = None):
        self.config = config
        self.vocab = vocab
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(config.optimizer.seed if seed is None else seed)
        self._init_params(rng)

    @property
    def n_labels(self) -> int:
        return len(self.vocab.labels)

    @property
    def n_tags(self) -> int:
        return len(self.vocab.tags)

    @property
    def n_actions(self) -> int:
        return n_actions(self.n_labels)

    def _add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        self.params[name] = Parameter(name, value)

    def _add_matrix(self, rng, name, rows, cols):
        self._add(name, _uniform(rng, (rows, cols), cols))

    def _add_lstm(self, rng, prefix: str, d_in: int, hidden: int) -> None:
        self._add_matrix(rng, f"{prefix}/w_x", 4 * hidden, d_in)
        self._add_matrix(rng, f"{prefix}/w_h", 4 * hidden, hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden: 2 * hidden] = 1.0  # forget gate
        self._add(f"{prefix}/bias", bias)
        for which in ("x", "h"):
            self._add(f"{prefix}/ln_{which}_gain", np.ones(4 * hidden))
            self._add(f"{prefix}/ln_{which}_bias", np.zeros(4 * hidden))

    def _add_linear(self, rng, prefix: str, d_in: int, d_out: int) -> None:
        self._add_matrix(rng, f"{prefix}/w", d_out, d_in)
        self._add(f"{prefix}/b", np.zeros(d_out))

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        hid, link, ph = c.lstm_hidden_dim, c.link_dim, c.parser_hidden_dim
        # tagger stages
        self._add("char/embedding", _uniform(rng, (self.vocab.n_chars, c.char_embedding_dim),
                                             c.char_embedding_dim))
        self._add_lstm(rng, "char/lstm", c.char_embedding_dim, hid)
        self._add_linear(rng, "lookahead/input_proj", hid, link)
        self._add_lstm(rng, "lookahead/lstm", link, hid)
        self._add_linear(rng, "tagger/input_proj", hid, link)
        self._add_lstm(rng, "tagger/lstm", link, hid)
        self._add_linear(rng, "tagger/softmax", hid, max(self.n_tags, 1))
        # parser
        for slot in ("s0", "s1"):
            self._add_linear(rng, f"parser/link_{slot}", ph, link)
            self._add(f"parser/link_{slot}_initial", _uniform(rng, ph, ph))
        for slot in ("tagger_s0", "tagger_s1", "tagger_i", "lookahead_i"):
            self._add_linear(rng, f"parser/{slot}", hid, link)
            self._add(f"parser/{slot}_missing", _uniform(rng, hid, hid))
        self._add("parser/label_embedding", _uniform(rng, (self.n_labels + 1, c.label_embedding_dim),
                                                     c.label_embedding_dim))
        self._add_linear(rng, "parser/hidden", c.parser_input_dim, ph)
        self._add("parser/hidden_ln_gain", np.ones(ph))
        self._add("parser/hidden_ln_bias", np.zeros(ph))
        self._add_linear(rng, "parser/softmax", ph, self.n_actions)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def tagger_parameters(self) -> list[Parameter]:
        return [p for name, p in self.params.items() if not name.startswith("parser/")]

    def parser_parameters(self) -> list[Parameter]:
        return [p for name, p in self.params.items() if name.startswith("parser/")]

    def weights(self, tape: Tape) -> Weights:
        return Weights(self, tape)


class Weights:
    """Name-indexed view of a model's parameters on one tape."""

    def __init__(self, model: ParserModel, tape: Tape):
        self.model = model
        self.tape = tape

    def __getitem__(self, name: str) -> Tensor:
        return self.tape.param(self.model.params[name])

    def lstm(self, prefix: str) -> LSTMWeights:
        return LSTMWeights(*(self[f"{prefix}/{n}"] for n in
                             ("w_x", "w_h", "bias", "ln_x_gain", "ln_x_bias", "ln_h_gain", "ln_h_bias")))

    def linear(self, prefix: str, x: Tensor) -> Tensor:
        return linear(x, self[f"{prefix}/w"], self[f"{prefix}/b"])


class Dropout:
    """Source of inverted-dropout masks; a keep probability of 1 or no rng disables it."""

    def __init__(self, keep: float, rng: np.random.Generator | None):
        self.active = rng is not None and keep < 1.0
        self.keep = keep
        self.rng = rng

    def mask(self, shape) -> np.ndarray | None:
        if not self.active:
            return None
        return dropout_mask(shape, self.keep, self.rng)


NO_DROPOUT = Dropout(1.0, None)


# ---------------------------------------------------------------- encoder stages

def encode_characters(chars: CharSequence, w: Weights, dropout: Dropout = NO_DROPOUT) -> Tensor:
    """Left-to-right LSTM over all codepoints; returns the hidden state at each word end."""
    ids = w.model.vocab.char_ids(chars)
    if not ids:
        raise ValueError("empty character sequence")
    emb = row(w["char/embedding"], np.asarray(ids))
    hid = w.model.config.lstm_hidden_dim
    states = lstm_sequence(emb, w.lstm("char/lstm"),
                           input_mask=dropout.mask(emb.shape),
                           recurrent_mask=dropout.mask(hid))
    return row(states, np.asarray(chars.word_final))


def _word_lstm(prefix: str, inputs: Tensor, w: Weights, dropout: Dropout, reverse: bool) -> Tensor:
    x = w.linear(f"{prefix}/input_proj", inputs)
    return lstm_sequence(x, w.lstm(f"{prefix}/lstm"), reverse=reverse,
                         input_mask=dropout.mask(x.shape),
                         recurrent_mask=dropout.mask(w.model.config.lstm_hidden_dim))


def run_lookahead(word_reps: Tensor, w: Weights, dropout: Dropout = NO_DROPOUT) -> Tensor:
    """Right-to-left LSTM over word representations; row i is the state emitted at word i."""
    return _word_lstm("lookahead", word_reps, w, dropout, reverse=True)


def run_tagger(lookahead: Tensor, w: Weights, dropout: Dropout = NO_DROPOUT,
               with_logits: bool = True) -> tuple[Tensor, Tensor | None]:
    reverse = not w.model.config.left_to_right_tagger
    hidden = _word_lstm("tagger", lookahead, w, dropout, reverse=reverse)
    logits = w.linear("tagger/softmax", hidden) if with_logits else None
    return hidden, logits


def encode_sentence(sentence: Sentence | CharSequence, w: Weights, dropout: Dropout = NO_DROPOUT,
                    with_tag_logits: bool = True) -> SentenceEncoding:
    chars = sentence if isinstance(sentence, CharSequence) else to_char_sequence(sentence)
    word_reps = encode_characters(chars, w, dropout)
    lookahead = run_lookahead(word_reps, w, dropout)
    tagger_hidden, tag_logits = run_tagger(lookahead, w, dropout, with_tag_logits)
    return SentenceEncoding(word_reps, lookahead, tagger_hidden, tag_logits)


# ---------------------------------------------------------------- parser features

def _nth(items: list[int], k: int) -> int | None:
    return items[k] if -len(items) <= k < len(items) else None


def discrete_label_features(state: ParserState, n_labels: int) -> list[int]:
    """Twelve label ids of already-built arcs around s0 and s1; ``n_labels`` marks a missing slot.

    Per stack item: leftmost, second leftmost, rightmost and second rightmost
    dependents. Then, per stack item, the leftmost dependent of its leftmost
    dependent and the rightmost dependent of its rightmost dependent.
    """
    missing = n_labels
    children: dict[int, list[int]] = {}
    for d in range(1, state.n + 1):
        h = state.heads[d]
        if h >= 0:
            children.setdefault(h, []).append(d)

    def lab(tok: int | None) -> int:
        return missing if tok is None else state.labels[tok]

    kids = []
    for tok in (state.s0, state.s1):
        kids.append(children.get(tok, []) if tok is not None else [])
    feats = []
    for ks in kids:
        feats += [lab(_nth(ks, 0)), lab(_nth(ks, 1)), lab(_nth(ks, -1)), lab(_nth(ks, -2))]
    for ks in kids:
        left = _nth(ks, 0)
        right = _nth(ks, -1)
        ll = _nth(children.get(left, []), 0) if left is not None else None
        rr = _nth(children.get(right, []), -1) if right is not None else None
        feats += [lab(ll), lab(rr)]
    return feats


class ParserInputs:
    """Per-sentence projections of the tagger and lookahead layers into link space.

    Row ``t - 1`` of each table belongs to token ``t``; the last row holds the
    projected learned vector used for ROOT or an exhausted buffer.
    """

    def __init__(self, encoding: SentenceEncoding, w: Weights):
        self.w = w
        self.n = encoding.n
        self.tables = {}
        for slot, source in (("tagger_s0", encoding.tagger_hidden), ("tagger_s1", encoding.tagger_hidden),
                             ("tagger_i", encoding.tagger_hidden), ("lookahead_i", encoding.lookahead)):
            missing = reshape(w[f"parser/{slot}_missing"], (1, -1))
            self.tables[slot] = w.linear(f"parser/{slot}", concat([source, missing], axis=0))
        self.initial_links = [w.linear(f"parser/link_{slot}", w[f"parser/link_{slot}_initial"])
                              for slot in ("s0", "s1")]

    def token_row(self, slot: str, token: int | None) -> Tensor:
        index = self.n if token is None or token == ROOT else token - 1
        return row(self.tables[slot], index)

    def link(self, slot: int, step: int, activations: Sequence[StepActivation]) -> Tensor:
        if step < 0:
            return self.initial_links[slot]
        name = ("s0", "s1")[slot]
        return activations[step].link(slot, self.w[f"parser/link_{name}/w"], self.w[f"parser/link_{name}/b"])


def parser_step_input(state: ParserState, inputs: ParserInputs,
                      activations: Sequence[StepActivation]) -> Tensor:
    """Concatenate the six projected linked inputs and the twelve label embeddings."""
    w = inputs.w
    k0, k1 = recurrent_link_steps(state)
    i = state.next_token
    feats = discrete_label_features(state, w.model.n_labels)
    labels = reshape(row(w["parser/label_embedding"], np.asarray(feats)), (-1,))
    return concat([
        inputs.link(0, k0, activations),
        inputs.link(1, k1, activations),
        inputs.token_row("tagger_s0", state.s0),
        inputs.token_row("tagger_s1", state.s1),
        inputs.token_row("tagger_i", i),
        inputs.token_row("lookahead_i", i),
        labels,
    ])


def score_transitions(state: ParserState, inputs: ParserInputs, activations: Sequence[StepActivation],
                      dropout: Dropout = NO_DROPOUT) -> StepActivation:
    """Run the parser cell at ``state``; illegal actions get a logit of -inf.

    The caller appends the returned activation to its history.
    """
    w = inputs.w
    x = parser_step_input(state, inputs, activations)
    m = dropout.mask(x.shape)
    if m is not None:
        x = mul(x, m)
    hidden = feedforward_cell(x, w["parser/hidden/w"], w["parser/hidden/b"],
                              w["parser/hidden_ln_gain"], w["parser/hidden_ln_bias"])
    logits = w.linear("parser/softmax", hidden)
    legal = np.asarray(legal_action_mask(state, w.model.n_labels))
    return StepActivation(hidden, mask_illegal(logits, legal))
