"""Greedy and beam decoding with raw (unnormalized) transition scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..conllu import Sentence, to_char_sequence
from ..network import ParserInputs, ParserModel, StepActivation, encode_sentence, score_transitions
from ..numerics import Tape
from ..transitions import ParserState, Transition, apply, initial_state, is_terminal


class Prediction(NamedTuple):
    heads: list[int]
    labels: list[str]
    score: float
    actions: tuple[int, ...]


@dataclass(frozen=True)
class Hypothesis:
    state: ParserState
    score: float
    actions: tuple[int, ...]
    activations: tuple[StepActivation, ...]


def _inputs(sentence: Sentence, model: ParserModel, use_ema: bool) -> ParserInputs:
    w = model.weights(Tape(record=False, use_ema=use_ema))
    enc = encode_sentence(to_char_sequence(sentence), w, with_tag_logits=False)
    return ParserInputs(enc, w)


def _prediction(state: ParserState, score: float, actions: tuple[int, ...], model: ParserModel) -> Prediction:
    names = model.vocab.label_names
    heads = list(state.heads[1:])
    labels = [names[lab] for lab in state.labels[1:]]
    return Prediction(heads, labels, float(score), actions)


def greedy_decode(sentence: Sentence, model: ParserModel, use_ema: bool = True) -> Prediction:
    """Follow the highest raw logit at every step (lowest action id on ties)."""
    inputs = _inputs(sentence, model, use_ema)
    state = initial_state(len(sentence))
    acts: list[StepActivation] = []
    score, actions = 0.0, []
    while not is_terminal(state):
        act = score_transitions(state, inputs, acts)
        acts.append(act)
        logits = act.logits.value
        best = int(np.argmax(logits))
        score += logits[best]
        actions.append(best)
        state = apply(state, Transition.from_action_id(best, model.n_labels))
    return _prediction(state, score, tuple(actions), model)


def beam_search(sentence: Sentence, model: ParserModel, beam_size: int | None = None,
                use_ema: bool = True, protect_greedy: bool = True) -> list[Hypothesis]:
    """Breadth-synchronous beam search; returns the final beam, best first.

    Hypotheses are ranked by cumulative raw logit, ties broken by the
    lexicographic order of their action-id sequences. With ``protect_greedy``
    the greedy path is never pruned (it takes the last slot if it falls off),
    so the result scores at least as well as :func:`greedy_decode`.
    """
    k = model.config.beam_size if beam_size is None else beam_size
    if k < 1:
        raise ValueError("beam size must be at least 1")
    inputs = _inputs(sentence, model, use_ema)
    beam = [Hypothesis(initial_state(len(sentence)), 0.0, (), ())]
    greedy: tuple[int, ...] | None = () if protect_greedy else None
    while not all(is_terminal(h.state) for h in beam):
        candidates = []
        for h in beam:
            act = score_transitions(h.state, inputs, h.activations)
            logits = act.logits.value
            legal = np.flatnonzero(np.isfinite(logits))
            for a in legal:
                candidates.append((h.score + logits[a], h.actions + (int(a),), h, act))
            if h.actions == greedy:
                greedy = h.actions + (int(np.argmax(logits)),)
        candidates.sort(key=lambda c: (-c[0], c[1]))
        kept = candidates[:k]
        if greedy is not None and all(c[1] != greedy for c in kept):
            kept[-1] = next(c for c in candidates if c[1] == greedy)
            kept.sort(key=lambda c: (-c[0], c[1]))
        beam = [
            Hypothesis(apply(h.state, Transition.from_action_id(seq[-1], model.n_labels)),
                       score, seq, h.activations + (act,))
            for score, seq, h, act in kept
        ]
    return beam


def beam_decode(sentence: Sentence, model: ParserModel, beam_size: int | None = None,
                use_ema: bool = True, protect_greedy: bool = True) -> Prediction:
    best = beam_search(sentence, model, beam_size, use_ema, protect_greedy)[0]
    return _prediction(best.state, best.score, best.actions, model)


def decode(sentences: Sequence[Sentence], model: ParserModel, beam_size: int | None = None) -> list[Prediction]:
    """Greedy decoding when ``beam_size`` is None, beam decoding otherwise."""
    if beam_size is None:
        return [greedy_decode(s, model) for s in sentences]
    return [beam_decode(s, model, beam_size) for s in sentences]
