"""CoNLL-U reading, writing and validation, plus the character view of a sentence.

Only columns ID, FORM, UPOS, HEAD and DEPREL are interpreted. Everything else
(comments, multiword-token ranges, empty nodes, the opaque columns) is kept
verbatim so that ``write_conllu(parse_conllu(text)) == text``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

UNKNOWN_CHAR = 0
DEFAULT_SEPARATOR = " "


class ConlluFormatError(ValueError):
    """A line that does not follow the 10-column layout."""


class TreeValidationError(ValueError):
    """A sentence whose heads do not form a tree rooted at 0."""


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    head: int = 0
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"

    def to_line(self) -> str:
        return "\t".join(
            (str(self.id), self.form, self.lemma, self.upos, self.xpos,
             self.feats, str(self.head), self.deprel, self.deps, self.misc)
        )


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    comments: tuple[str, ...] = ()
    # (number of syntactic tokens preceding the line, raw line) for i-j and i.j rows
    extra_lines: tuple[tuple[int, str], ...] = field(default=())

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def with_predictions(self, heads: Sequence[int], labels: Sequence[str]) -> Sentence:
        """Return a copy whose HEAD/DEPREL columns hold ``heads`` and ``labels``."""
        if len(heads) != len(self.tokens) or len(labels) != len(self.tokens):
            raise ValueError("prediction length does not match sentence length")
        tokens = tuple(
            replace(tok, head=int(h), deprel=lab)
            for tok, h, lab in zip(self.tokens, heads, labels)
        )
        return replace(self, tokens=tokens)


@dataclass(frozen=True)
class CharSequence:
    codepoints: tuple[str, ...]
    word_final: tuple[int, ...]


@dataclass(frozen=True)
class Vocabulary:
    chars: dict[str, int]
    tags: dict[str, int]
    labels: dict[str, int]

    @property
    def n_chars(self) -> int:
        return len(self.chars) + 1

    def char_ids(self, chars: CharSequence) -> list[int]:
        return [self.chars.get(c, UNKNOWN_CHAR) for c in chars.codepoints]

    def tag_id(self, tag: str) -> int:
        return self.tags[tag]

    def label_id(self, label: str) -> int:
        return self.labels[label]

    @property
    def label_names(self) -> list[str]:
        return sorted(self.labels, key=self.labels.__getitem__)

    @property
    def tag_names(self) -> list[str]:
        return sorted(self.tags, key=self.tags.__getitem__)

    def to_dict(self) -> dict:
        return {"chars": self.chars, "tags": self.tags, "labels": self.labels}

    @classmethod
    def from_dict(cls, data: dict) -> Vocabulary:
        return cls(
            chars={k: int(v) for k, v in data["chars"].items()},
            tags={k: int(v) for k, v in data["tags"].items()},
            labels={k: int(v) for k, v in data["labels"].items()},
        )


def _parse_int(value: str, what: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConlluFormatError(f"line {lineno}: non-integer {what} {value!r}") from None


def validate_tree(sentence: Sentence, name: str = "sentence") -> None:
    """Raise TreeValidationError unless ids are 1..n and heads form a tree rooted at 0."""
    n = len(sentence.tokens)
    for i, tok in enumerate(sentence.tokens, start=1):
        if tok.id != i:
            raise TreeValidationError(f"{name}: token ids are not contiguous at {tok.id}")
        if not 0 <= tok.head <= n:
            raise TreeValidationError(f"{name}: head {tok.head} of token {i} out of range")
        if tok.head == i:
            raise TreeValidationError(f"{name}: token {i} is its own head")
    heads = [0] + sentence.heads
    for start in range(1, n + 1):
        node, hops = start, 0
        while node != 0:
            node = heads[node]
            hops += 1
            if hops > n:
                raise TreeValidationError(f"{name}: head cycle through token {start}")


def _finish_block(block: list[tuple[int, str]], index: int) -> Sentence:
    comments: list[str] = []
    extras: list[tuple[int, str]] = []
    tokens: list[Token] = []
    for lineno, line in block:
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluFormatError(
                f"line {lineno}: expected 10 tab-separated fields, found {len(cols)}"
            )
        if "-" in cols[0] or "." in cols[0]:
            extras.append((len(tokens), line))
            continue
        tokens.append(
            Token(
                id=_parse_int(cols[0], "id", lineno),
                form=cols[1], lemma=cols[2], upos=cols[3], xpos=cols[4], feats=cols[5],
                head=_parse_int(cols[6], "head", lineno),
                deprel=cols[7], deps=cols[8], misc=cols[9],
            )
        )
    if not tokens:
        raise ConlluFormatError(f"line {block[0][0]}: sentence without tokens")
    sent = Sentence(tuple(tokens), tuple(comments), tuple(extras))
    first = block[0][0]
    validate_tree(sent, name=f"sentence {index} (line {first})")
    return sent


def parse_conllu(text: str) -> list[Sentence]:
    """Parse CoNLL-U text into validated sentences."""
    sentences: list[Sentence] = []
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line.endswith("\r"):
            line = line[:-1]
        if line.strip():
            block.append((lineno, line))
        elif block:
            sentences.append(_finish_block(block, len(sentences) + 1))
            block = []
    if block:
        sentences.append(_finish_block(block, len(sentences) + 1))
    return sentences


def read_conllu(path) -> list[Sentence]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f.read())


def write_conllu(sentences: Iterable[Sentence]) -> str:
    out: list[str] = []
    for sent in sentences:
        out.extend(sent.comments)
        extras = list(sent.extra_lines)
        k = 0
        for i, tok in enumerate(sent.tokens):
            while k < len(extras) and extras[k][0] <= i:
                out.append(extras[k][1])
                k += 1
            out.append(tok.to_line())
        out.extend(line for _, line in extras[k:])
        out.append("")
    return "".join(line + "\n" for line in out)


def save_conllu(sentences: Iterable[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(write_conllu(sentences))


def arcs_cross(h1: int, d1: int, h2: int, d2: int) -> bool:
    a, b = sorted((h1, d1))
    c, d = sorted((h2, d2))
    return a < c < b < d or c < a < d < b


def is_projective(sentence: Sentence | Sequence[int]) -> bool:
    """True iff no two arcs (root arc included as (0, d)) cross.

    Accepts a Sentence or a plain list of 1-based heads.
    """
    heads = sentence.heads if isinstance(sentence, Sentence) else list(sentence)
    arcs = [(h, d) for d, h in enumerate(heads, start=1)]
    for (h1, d1), (h2, d2) in itertools.combinations(arcs, 2):
        if arcs_cross(h1, d1, h2, d2):
            return False
    return True


def to_char_sequence(sentence: Sentence | Sequence[str], separator: str = DEFAULT_SEPARATOR) -> CharSequence:
    """Join token forms with one separator between them and record word-final positions."""
    forms = sentence.forms if isinstance(sentence, Sentence) else list(sentence)
    codepoints: list[str] = []
    word_final: list[int] = []
    for i, form in enumerate(forms):
        if not form:
            raise ValueError(f"token {i + 1} has an empty form")
        if i:
            codepoints.append(separator)
        codepoints.extend(form)
        word_final.append(len(codepoints) - 1)
    return CharSequence(tuple(codepoints), tuple(word_final))


def build_vocabularies(train: Sequence[Sentence], separator: str = DEFAULT_SEPARATOR) -> Vocabulary:
    if not train:
        raise ValueError("cannot build vocabularies from an empty treebank")
    chars: set[str] = set()
    tags: set[str] = set()
    labels: set[str] = set()
    for sent in train:
        chars.update(to_char_sequence(sent, separator).codepoints)
        tags.update(t.upos for t in sent.tokens)
        labels.update(t.deprel for t in sent.tokens)
    return Vocabulary(
        chars={c: i for i, c in enumerate(sorted(chars), start=1)},
        tags={t: i for i, t in enumerate(sorted(tags))},
        labels={lab: i for i, lab in enumerate(sorted(labels))},
    )
