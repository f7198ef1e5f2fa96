"""Stack-propagation training.

Tagger updates unroll the character, lookahead and tagger LSTMs and learn from
gold POS tags. Parser updates unroll everything along the oracle derivation,
so the parser loss also trains the shared layers below it. After a tagger
pretraining phase the two alternate, one tagger update per ``ratio`` parser
updates.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from .conllu import CharSequence, Sentence, is_projective, to_char_sequence
from .network import (
    Dropout,
    NO_DROPOUT,
    ParserInputs,
    ParserModel,
    encode_sentence,
    score_transitions,
)
from .numerics import Tape, Tensor, backward, ema_update, softmax_with_logz, unit_norm_then_adam, warmup_decay
from .numerics.autodiff import add, scale, self_normalized_nll, stack
from .transitions import ParserState, Transition, oracle_states

logger = logging.getLogger(__name__)

TAGGER = "T"
PARSER = "P"


@dataclass
class TrainPlan:
    pretrain_steps: int = 10000
    parser_per_tagger: int = 8
    minibatch_size: int = 4
    max_steps: int = 200000
    max_parser_updates: int | None = None
    patience: int = 10
    dev_eval_interval: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.pretrain_steps < 0:
            raise ValueError("pretrain_steps must be non-negative")
        for name in ("parser_per_tagger", "minibatch_size", "max_steps", "patience",
                     "dev_eval_interval", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def kind(self, step: int) -> str:
        """Update kind of 0-based update number ``step``."""
        if step < self.pretrain_steps:
            return TAGGER
        return TAGGER if (step - self.pretrain_steps) % (self.parser_per_tagger + 1) == 0 else PARSER

    def schedule(self) -> Iterator[str]:
        for step in itertools.count():
            yield self.kind(step)


@dataclass
class PreparedSentence:
    """A gold sentence turned into model ids, with its oracle derivation when projective."""

    sentence: Sentence
    chars: CharSequence
    tags: np.ndarray
    oracle: list[tuple[ParserState, Transition]] | None
    actions: np.ndarray | None

    @property
    def projective(self) -> bool:
        return self.oracle is not None


def prepare(sentence: Sentence, model: ParserModel) -> PreparedSentence:
    vocab = model.vocab
    tags = np.asarray([vocab.tag_id(t.upos) for t in sentence.tokens])
    oracle = actions = None
    if is_projective(sentence):
        labels = [vocab.label_id(t.deprel) for t in sentence.tokens]
        oracle = oracle_states(sentence.heads, labels)
        actions = np.asarray([t.action_id(model.n_labels) for _, t in oracle])
    return PreparedSentence(sentence, to_char_sequence(sentence), tags, oracle, actions)


# ---------------------------------------------------------------- losses

def self_normalized_loss(logits, gold_index: int, alpha: float) -> float:
    """``-(logits[gold] - log_z) + alpha * log_z**2`` for one score vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits[gold_index]):
        raise ValueError("gold action is masked as illegal")
    _, log_z = softmax_with_logz(logits)
    return float(-(logits[gold_index] - log_z) + alpha * log_z * log_z)


def tagger_sentence_loss(prep: PreparedSentence, model: ParserModel, tape: Tape,
                         dropout: Dropout = NO_DROPOUT) -> Tensor:
    enc = encode_sentence(prep.chars, model.weights(tape), dropout)
    loss, _ = self_normalized_nll(enc.tag_logits, prep.tags, model.config.self_norm_alpha)
    return loss


def parser_sentence_loss(prep: PreparedSentence, model: ParserModel, tape: Tape,
                         dropout: Dropout = NO_DROPOUT) -> tuple[Tensor, np.ndarray]:
    """Teacher-forced loss over the 2n oracle states; also returns each state's log partition."""
    if prep.oracle is None:
        raise ValueError("parser loss needs a projective sentence")
    w = model.weights(tape)
    enc = encode_sentence(prep.chars, w, dropout, with_tag_logits=False)
    inputs = ParserInputs(enc, w)
    acts = []
    for state, _ in prep.oracle:
        acts.append(score_transitions(state, inputs, acts, dropout))
    logits = stack([a.logits for a in acts])
    return self_normalized_nll(logits, prep.actions, model.config.self_norm_alpha)


def batch_loss(kind: str, batch: Sequence[PreparedSentence], model: ParserModel, tape: Tape,
               dropout: Dropout = NO_DROPOUT) -> Tensor:
    """Per-sentence summed losses, averaged over the batch."""
    if not batch:
        raise ValueError("empty batch")
    losses = []
    for prep in batch:
        if kind == TAGGER:
            losses.append(tagger_sentence_loss(prep, model, tape, dropout))
        else:
            losses.append(parser_sentence_loss(prep, model, tape, dropout)[0])
    total = losses[0]
    for extra in losses[1:]:
        total = add(total, extra)
    return scale(total, 1.0 / len(batch))


class Updater:
    """Applies tagger and parser updates to a model and counts optimizer steps."""

    def __init__(self, model: ParserModel, rng: np.random.Generator | None = None):
        self.model = model
        self.opt = model.config.optimizer
        self.rng = rng if rng is not None else np.random.default_rng(self.opt.seed)
        self.num_updates = 0
        self._lock = threading.Lock()

    def dropout(self, rng: np.random.Generator | None = None) -> Dropout:
        return Dropout(self.opt.dropout_keep, rng if rng is not None else self.rng)

    def update(self, kind: str, batch: Sequence[PreparedSentence], loss_scale: float = 1.0,
               rng: np.random.Generator | None = None, exclusive: bool = True) -> float:
        model = self.model
        tape = Tape()
        loss = batch_loss(kind, batch, model, tape, self.dropout(rng))
        if loss_scale != 1.0:
            loss = scale(loss, loss_scale)
        params = model.tagger_parameters() if kind == TAGGER else model.parameters()
        with self._lock:
            self.num_updates += 1
            step = self.num_updates
        if exclusive:
            backward(tape, loss)
            unit_norm_then_adam(params, self.opt, step)
        else:
            grads = backward(tape, loss, accumulate=False)
            unit_norm_then_adam(params, self.opt, step, grads=grads)
        ema_update(params, warmup_decay(self.opt.ema_decay, step))
        return float(loss.value) / loss_scale

    def tagger_update(self, batch, **kw) -> float:
        return self.update(TAGGER, batch, **kw)

    def parser_update(self, batch, **kw) -> float:
        return self.update(PARSER, batch, **kw)


def tagger_update(batch: Sequence[PreparedSentence], updater: Updater) -> float:
    return updater.tagger_update(batch)


def parser_update(batch: Sequence[PreparedSentence], updater: Updater) -> float:
    return updater.parser_update(batch)


# ---------------------------------------------------------------- training loop

@dataclass
class TrainRecord:
    step: int
    kind: str
    loss: float
    wall: float

    def line(self) -> str:
        return f"{self.step}\t{self.kind}\t{self.loss:.6f}\t{self.wall:.3f}"


@dataclass
class DevRecord:
    step: int
    uas: float
    las: float
    wall: float

    def line(self) -> str:
        return f"{self.step}\tdev\tUAS {self.uas:.2f}\tLAS {self.las:.2f}\t{self.wall:.3f}"


@dataclass
class TrainLog:
    updates: list[TrainRecord] = field(default_factory=list)
    dev: list[DevRecord] = field(default_factory=list)
    skipped_nonprojective: int = 0
    sink: TextIO | None = None

    def add(self, record) -> None:
        (self.dev if isinstance(record, DevRecord) else self.updates).append(record)
        if self.sink is not None:
            self.sink.write(record.line() + "\n")
            self.sink.flush()

    @property
    def kinds(self) -> str:
        return "".join(r.kind for r in self.updates)

    @property
    def parser_updates(self) -> int:
        return sum(r.kind == PARSER for r in self.updates)


def _batches(items: Sequence[PreparedSentence], size: int, rng: np.random.Generator) -> Iterator[list]:
    while True:
        order = rng.permutation(len(items))
        for start in range(0, len(order), size):
            yield [items[i] for i in order[start:start + size]]


def _snapshot(model: ParserModel) -> dict:
    return {name: (p.value.copy(), p.ema.copy()) for name, p in model.params.items()}


def _restore(model: ParserModel, snap: dict) -> None:
    for name, (value, ema) in snap.items():
        p = model.params[name]
        p.value[...] = value
        p.ema[...] = ema


DevEvaluator = Callable[[ParserModel], tuple[float, float]]


def default_dev_evaluator(dev: Sequence[Sentence]) -> DevEvaluator:
    from .runtime import evaluate, greedy_decode

    def run(model: ParserModel) -> tuple[float, float]:
        preds = [greedy_decode(s, model) for s in dev]
        res = evaluate(dev, preds)
        return res.uas, res.las

    return run


def train(
    treebank: Sequence[Sentence],
    dev: Sequence[Sentence] | None,
    model: ParserModel,
    plan: TrainPlan,
    log_file: TextIO | None = None,
    dev_evaluator: DevEvaluator | None = None,
) -> TrainLog:
    """Train ``model`` in place and return the log.

    With dev data the model is evaluated (moving-average weights, greedy
    decoding) every ``plan.dev_eval_interval`` updates; training stops after
    ``plan.patience`` evaluations without a LAS gain and the best checkpoint
    is restored.
    """
    if not treebank:
        raise ValueError("empty training treebank")
    prepared = [prepare(s, model) for s in treebank]
    projective = [p for p in prepared if p.projective]
    log = TrainLog(sink=log_file)
    log.skipped_nonprojective = len(prepared) - len(projective)
    if not projective:
        raise ValueError("training treebank has no projective sentence")
    if log.skipped_nonprojective:
        logger.info("skipping %d non-projective sentences for parser updates", log.skipped_nonprojective)
    if dev_evaluator is None and dev:
        dev_evaluator = default_dev_evaluator(dev)

    seed = model.config.optimizer.seed
    updater = Updater(model, np.random.default_rng(seed))
    state = _LoopState(plan, dev_evaluator, model, log)
    if plan.workers == 1:
        _worker(0, updater, prepared, projective, plan, state, np.random.default_rng([seed, 0]), True)
    else:
        threads = [
            threading.Thread(target=_worker,
                             args=(k, updater, prepared, projective, plan, state,
                                   np.random.default_rng([seed, k]), False))
            for k in range(plan.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if state.evaluator is not None and state.best is None:
        state.evaluate(len(log.updates))
    if state.best is not None:
        _restore(model, state.best)
    return log


class _LoopState:
    def __init__(self, plan: TrainPlan, evaluator: DevEvaluator | None, model: ParserModel, log: TrainLog):
        self.plan = plan
        self.evaluator = evaluator
        self.model = model
        self.log = log
        self.counter = itertools.count()
        self.parser_count = 0
        self.best_las = -1.0
        self.best = None
        self.stale = 0
        self.stop = False
        self.start = time.perf_counter()
        self.lock = threading.Lock()

    def claim(self) -> tuple[int, str] | None:
        with self.lock:
            if self.stop:
                return None
            step = next(self.counter)
            kind = self.plan.kind(step)
            limit = self.plan.max_parser_updates
            if step >= self.plan.max_steps or (kind == PARSER and limit is not None and self.parser_count >= limit):
                self.stop = True
                return None
            if kind == PARSER:
                self.parser_count += 1
            return step, kind

    def evaluate(self, step: int) -> None:
        uas, las = self.evaluator(self.model)
        with self.lock:
            self.log.add(DevRecord(step, uas, las, time.perf_counter() - self.start))
            if las > self.best_las:
                self.best_las = las
                self.best = _snapshot(self.model)
                self.stale = 0
            else:
                self.stale += 1
                if self.stale >= self.plan.patience:
                    self.stop = True


def _worker(worker_id: int, updater: Updater, prepared, projective, plan: TrainPlan,
            state: _LoopState, rng: np.random.Generator, exclusive: bool) -> None:
    tagger_batches = _batches(prepared, plan.minibatch_size, rng)
    parser_batches = _batches(projective, plan.minibatch_size, rng)
    while True:
        claimed = state.claim()
        if claimed is None:
            break
        step, kind = claimed
        batch = next(tagger_batches if kind == TAGGER else parser_batches)
        loss = updater.update(kind, batch, rng=rng, exclusive=exclusive)
        with state.lock:
            state.log.add(TrainRecord(step, kind, loss, time.perf_counter() - state.start))
        if state.evaluator is not None and (step + 1) % plan.dev_eval_interval == 0:
            state.evaluate(step + 1)


def mean_squared_log_z(sentences: Sequence[Sentence], model: ParserModel) -> float:
    """Mean ``log_z**2`` of parser decisions along gold derivations, with moving-average weights."""
    total, count = 0.0, 0
    for sent in sentences:
        prep = prepare(sent, model)
        if not prep.projective:
            continue
        _, log_z = parser_sentence_loss(prep, model, Tape(record=False, use_ema=True))
        total += float(np.sum(log_z * log_z))
        count += len(log_z)
    return total / max(count, 1)
