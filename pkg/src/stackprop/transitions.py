"""Arc-standard transition system with a static oracle.

Tokens are numbered 1..n and 0 is the artificial ROOT, which sits at the
bottom of the stack for the whole derivation. Every stack entry carries the
step at which it last changed (its ``creation_step``), which is where the
parser's recurrent links point.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

ROOT = 0
NO_STEP = -1


class Kind(IntEnum):
    SHIFT = 0
    LEFT_ARC = 1
    RIGHT_ARC = 2


class IllegalTransition(ValueError):
    pass


class OracleError(ValueError):
    """No gold-consistent move exists (non-projective gold or an unreachable state)."""


@dataclass(frozen=True)
class Transition:
    kind: Kind
    label: int | None = None

    def __post_init__(self):
        if (self.kind == Kind.SHIFT) != (self.label is None):
            raise ValueError("only arc transitions carry a label")

    def action_id(self, n_labels: int) -> int:
        if self.kind == Kind.SHIFT:
            return 0
        if self.kind == Kind.LEFT_ARC:
            return 1 + self.label
        return 1 + n_labels + self.label

    @classmethod
    def from_action_id(cls, action: int, n_labels: int) -> Transition:
        if action == 0:
            return cls(Kind.SHIFT)
        if 1 <= action <= n_labels:
            return cls(Kind.LEFT_ARC, action - 1)
        if n_labels < action <= 2 * n_labels:
            return cls(Kind.RIGHT_ARC, action - 1 - n_labels)
        raise ValueError(f"action id {action} out of range for {n_labels} labels")

    def __str__(self) -> str:
        return self.kind.name if self.label is None else f"{self.kind.name}({self.label})"


SHIFT = Transition(Kind.SHIFT)


def n_actions(n_labels: int) -> int:
    return 2 * n_labels + 1


@dataclass(frozen=True)
class ParserState:
    n: int
    stack: tuple[tuple[int, int], ...]  # (token, creation_step), bottom first
    buffer_index: int
    heads: tuple[int, ...]  # heads[d] for d in 0..n; -1 while unattached
    labels: tuple[int, ...]
    step: int

    @property
    def s0(self) -> int | None:
        return self.stack[-1][0] if self.stack else None

    @property
    def s1(self) -> int | None:
        return self.stack[-2][0] if len(self.stack) >= 2 else None

    @property
    def next_token(self) -> int | None:
        """Token index at the front of the buffer, or None when it is exhausted."""
        return self.buffer_index + 1 if self.buffer_index < self.n else None

    @property
    def arcs(self) -> dict[int, tuple[int, int]]:
        return {d: (self.heads[d], self.labels[d]) for d in range(1, self.n + 1) if self.heads[d] >= 0}

    def dependents(self, token: int) -> list[int]:
        return [d for d in range(1, self.n + 1) if self.heads[d] == token]


def initial_state(n: int) -> ParserState:
    if n < 1:
        raise ValueError("sentence length must be at least 1")
    return ParserState(
        n=n,
        stack=((ROOT, NO_STEP),),
        buffer_index=0,
        heads=(-1,) * (n + 1),
        labels=(-1,) * (n + 1),
        step=0,
    )


def legal_kinds(state: ParserState) -> set[Kind]:
    kinds = set()
    if state.buffer_index < state.n:
        kinds.add(Kind.SHIFT)
    if len(state.stack) >= 2:
        if state.stack[-2][0] != ROOT:
            kinds.add(Kind.LEFT_ARC)
            kinds.add(Kind.RIGHT_ARC)
        elif state.buffer_index == state.n:
            # attaching to ROOT only at the very end keeps a single root
            kinds.add(Kind.RIGHT_ARC)
    return kinds


legal_transitions = legal_kinds


def legal_action_mask(state: ParserState, n_labels: int) -> list[bool]:
    kinds = legal_kinds(state)
    return ([Kind.SHIFT in kinds]
            + [Kind.LEFT_ARC in kinds] * n_labels
            + [Kind.RIGHT_ARC in kinds] * n_labels)


def is_terminal(state: ParserState) -> bool:
    return state.buffer_index == state.n and len(state.stack) == 1


def apply(state: ParserState, t: Transition) -> ParserState:
    step = state.step
    if t.kind == Kind.SHIFT:
        if state.buffer_index >= state.n:
            raise IllegalTransition("SHIFT requires a nonempty buffer")
        return ParserState(
            n=state.n,
            stack=state.stack + ((state.buffer_index + 1, step),),
            buffer_index=state.buffer_index + 1,
            heads=state.heads,
            labels=state.labels,
            step=step + 1,
        )
    if len(state.stack) < 2:
        raise IllegalTransition(f"{t.kind.name} requires at least two stack entries")
    (s1, _), (s0, _) = state.stack[-2], state.stack[-1]
    heads, labels = list(state.heads), list(state.labels)
    if t.kind == Kind.LEFT_ARC:
        if s1 == ROOT:
            raise IllegalTransition("LEFT_ARC cannot make ROOT a dependent")
        heads[s1], labels[s1] = s0, t.label
        stack = state.stack[:-2] + ((s0, step),)
    else:
        if s1 == ROOT and state.buffer_index < state.n:
            raise IllegalTransition("RIGHT_ARC to ROOT requires an empty buffer")
        heads[s0], labels[s0] = s1, t.label
        stack = state.stack[:-2] + ((s1, step),)
    return ParserState(
        n=state.n,
        stack=stack,
        buffer_index=state.buffer_index,
        heads=tuple(heads),
        labels=tuple(labels),
        step=step + 1,
    )


def oracle_next(state: ParserState, gold_heads: Sequence[int], gold_labels: Sequence[int]) -> Transition:
    """Static arc-standard oracle; ``gold_heads[i]``/``gold_labels[i]`` describe token i+1."""
    if len(state.stack) >= 2:
        (s1, _), (s0, _) = state.stack[-2], state.stack[-1]
        if s1 != ROOT and gold_heads[s1 - 1] == s0:
            return Transition(Kind.LEFT_ARC, gold_labels[s1 - 1])
        if gold_heads[s0 - 1] == s1:
            complete = all(
                state.heads[d] == s0
                for d in range(1, state.n + 1)
                if gold_heads[d - 1] == s0
            )
            if complete:
                return Transition(Kind.RIGHT_ARC, gold_labels[s0 - 1])
    if state.buffer_index < state.n:
        return SHIFT
    raise OracleError(f"no gold-consistent transition at step {state.step} (gold not projective?)")


def derivation(gold_heads: Sequence[int], gold_labels: Sequence[int]) -> list[Transition]:
    """Oracle transition sequence (length 2n) for a projective gold tree."""
    state = initial_state(len(gold_heads))
    out = []
    while not is_terminal(state):
        t = oracle_next(state, gold_heads, gold_labels)
        out.append(t)
        state = apply(state, t)
    return out


def oracle_states(gold_heads: Sequence[int], gold_labels: Sequence[int]) -> list[tuple[ParserState, Transition]]:
    """Every (state, oracle transition) pair visited along the gold derivation."""
    state = initial_state(len(gold_heads))
    pairs = []
    while not is_terminal(state):
        t = oracle_next(state, gold_heads, gold_labels)
        pairs.append((state, t))
        state = apply(state, t)
    return pairs


def recurrent_link_steps(state: ParserState) -> tuple[int, int]:
    """Steps that last modified s0 and s1; -1 for ROOT's initial entry or a missing slot."""
    s0 = state.stack[-1][1] if state.stack else NO_STEP
    s1 = state.stack[-2][1] if len(state.stack) >= 2 else NO_STEP
    return s0, s1
