"""Attachment scores and side-by-side comparison against baseline numbers."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

from ..conllu import Sentence


@dataclass
class EvalResult:
    uas: float
    las: float
    token_count: int
    per_treebank: dict[str, EvalResult] = field(default_factory=dict)

    def __str__(self) -> str:
        return f"UAS {self.uas:.2f} LAS {self.las:.2f}"


def _pred_columns(pred) -> tuple[Sequence[int], Sequence[str]]:
    if isinstance(pred, Sentence):
        return pred.heads, pred.deprels
    return pred[0], pred[1]


def evaluate(gold: Sequence[Sentence], pred: Sequence) -> EvalResult:
    """UAS and LAS in percent over every token, punctuation included.

    ``pred`` items may be Sentences or anything whose first two entries are
    the head list and the label list.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    tokens = heads_ok = both_ok = 0
    for k, (g, p) in enumerate(zip(gold, pred)):
        heads, labels = _pred_columns(p)
        if len(heads) != len(g) or len(labels) != len(g):
            raise ValueError(f"sentence {k + 1}: prediction length differs from gold")
        for tok, h, lab in zip(g.tokens, heads, labels):
            tokens += 1
            if tok.head == h:
                heads_ok += 1
                if tok.deprel == lab:
                    both_ok += 1
    if tokens == 0:
        return EvalResult(0.0, 0.0, 0)
    return EvalResult(100.0 * heads_ok / tokens, 100.0 * both_ok / tokens, tokens)


def evaluate_treebanks(results: Mapping[str, tuple[Sequence[Sentence], Sequence]]) -> EvalResult:
    """Token-weighted overall scores plus one entry per named treebank."""
    per = {name: evaluate(g, p) for name, (g, p) in results.items()}
    tokens = sum(r.token_count for r in per.values())
    if not tokens:
        return EvalResult(0.0, 0.0, 0, per)
    uas = sum(r.uas * r.token_count for r in per.values()) / tokens
    las = sum(r.las * r.token_count for r in per.values()) / tokens
    return EvalResult(uas, las, tokens, per)


def parse_score_table(text: str) -> dict[str, tuple[float, float]]:
    """Rows of ``treebank<TAB>uas<TAB>las``; blank lines and ``#`` comments are skipped."""
    table = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected treebank, uas, las separated by tabs")
        table[parts[0].strip()] = (float(parts[1]), float(parts[2]))
    return table


def read_score_table(path) -> dict[str, tuple[float, float]]:
    with open(path, encoding="utf-8") as f:
        return parse_score_table(f.read())


def bundled_table(name: str) -> dict[str, tuple[float, float]]:
    """Score tables shipped with the package: ``parsey_cousins_ud13`` and ``parseysaurus_ud13``."""
    text = resources.files("stackprop.data").joinpath(f"{name}.tsv").read_text(encoding="utf-8")
    return parse_score_table(text)


def relative_error_reduction(old_las: float, new_las: float) -> float:
    return 100.0 * (new_las - old_las) / (100.0 - old_las)


@dataclass
class ComparisonRow:
    treebank: str
    old_uas: float
    old_las: float
    new_uas: float
    new_las: float

    @property
    def uas_delta(self) -> float:
        return self.new_uas - self.old_uas

    @property
    def las_delta(self) -> float:
        return self.new_las - self.old_las

    @property
    def rrie(self) -> float:
        return relative_error_reduction(self.old_las, self.new_las)


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    unmatched_ours: list[str]
    unmatched_baseline: list[str]

    def _mean(self, attr: str) -> float:
        if not self.rows:
            return 0.0
        return sum(getattr(r, attr) for r in self.rows) / len(self.rows)

    @property
    def mean_las_delta(self) -> float:
        return self._mean("las_delta")

    @property
    def mean_uas_delta(self) -> float:
        return self._mean("uas_delta")

    @property
    def mean_rrie(self) -> float:
        return self._mean("rrie")

    def render(self) -> str:
        width = max([len("Treebank"), len("Average")] + [len(r.treebank) for r in self.rows])
        head = (f"{'Treebank':<{width}}  {'base UAS':>8}  {'base LAS':>8}  {'UAS':>6}  {'LAS':>6}"
                f"  {'dUAS':>6}  {'dLAS':>6}  {'RRIE':>6}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.treebank:<{width}}  {r.old_uas:8.2f}  {r.old_las:8.2f}  {r.new_uas:6.2f}  {r.new_las:6.2f}"
                f"  {r.uas_delta:+6.2f}  {r.las_delta:+6.2f}  {r.rrie:6.2f}"
            )
        lines.append("-" * len(head))
        avg = [self._mean(a) for a in ("old_uas", "old_las", "new_uas", "new_las")]
        lines.append(
            f"{'Average':<{width}}  {avg[0]:8.2f}  {avg[1]:8.2f}  {avg[2]:6.2f}  {avg[3]:6.2f}"
            f"  {self.mean_uas_delta:+6.2f}  {self.mean_las_delta:+6.2f}  {self.mean_rrie:6.2f}"
        )
        for label, names in (("only in ours", self.unmatched_ours), ("only in baseline", self.unmatched_baseline)):
            if names:
                lines.append(f"unmatched ({label}): {', '.join(names)}")
        return "\n".join(lines) + "\n"

    __str__ = render


def compare_report(ours: Mapping[str, EvalResult | tuple[float, float]],
                   baseline: Mapping[str, tuple[float, float]]) -> ComparisonReport:
    """Per-treebank and macro-averaged deltas plus relative error reduction in LAS."""
    rows = []
    for name in sorted(set(ours) & set(baseline)):
        new = ours[name]
        new_uas, new_las = (new.uas, new.las) if isinstance(new, EvalResult) else new
        old_uas, old_las = baseline[name]
        rows.append(ComparisonRow(name, old_uas, old_las, new_uas, new_las))
    return ComparisonReport(
        rows,
        sorted(set(ours) - set(baseline)),
        sorted(set(baseline) - set(ours)),
    )
