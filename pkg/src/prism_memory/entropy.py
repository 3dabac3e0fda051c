"""Unigram token model: information content, joint entropy and redundancy.

Information content of a memory is the sum of per-token surprisals in bits
under a Laplace-smoothed unigram model. The model is immutable after
:func:`fit`; alternative scorers only need the ``prob`` method.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .errors import CorruptIndex, EmptyContent, EmptyCorpus

Content = Union[str, Sequence[str]]

_STRIP = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Whitespace split, lowercase, ASCII punctuation removed; empty tokens dropped."""
    out = []
    for raw in text.split():
        tok = raw.lower().translate(_STRIP)
        if tok:
            out.append(tok)
    return out


def as_tokens(content: Content) -> list[str]:
    if isinstance(content, str):
        return tokenize(content)
    return [t for t in content]


@dataclass(frozen=True)
class TokenModel:
    counts: Mapping[str, int]
    smoothing_alpha: float
    token_count: int
    _denominator: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_denominator", self.token_count + self.smoothing_alpha * len(self.counts)
        )

    @property
    def vocabulary(self) -> dict[str, float]:
        return {tok: self.prob(tok) for tok in sorted(self.counts)}

    def prob(self, token: str) -> float:
        # Out-of-vocabulary tokens get the pseudo-count of a zero-count entry.
        return (self.counts.get(token, 0) + self.smoothing_alpha) / self._denominator

    def surprisal(self, token: str) -> float:
        return -math.log2(self.prob(token))

    def dumps(self) -> str:
        lines = [f"# smoothing_alpha={self.smoothing_alpha!r} token_count={self.token_count}"]
        lines.extend(f"{tok}\t{self.counts[tok]}" for tok in sorted(self.counts))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TokenModel":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise CorruptIndex("token model: missing header line")
        header = dict(part.split("=", 1) for part in lines[0][2:].split())
        counts: dict[str, int] = {}
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                tok, cnt = line.split("\t")
                counts[tok] = int(cnt)
            except ValueError as exc:
                raise CorruptIndex(f"token model line {lineno}: {line!r}") from exc
        return cls(counts, float(header["smoothing_alpha"]), int(header["token_count"]))

    def save(self, path: Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "TokenModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def fit(corpus: Iterable[Content], smoothing_alpha: float = 1.0) -> TokenModel:
    """Fit a Laplace-smoothed unigram model over a corpus of documents."""
    if smoothing_alpha <= 0:
        raise ValueError("smoothing_alpha must be > 0")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(as_tokens(doc))
    total = sum(counts.values())
    if total == 0:
        raise EmptyCorpus("corpus contains no tokens")
    return TokenModel(dict(counts), smoothing_alpha, total)


def entropy(content: Content, model: TokenModel) -> float:
    """Information content in bits: sum of -log2 p(w) over the tokens."""
    toks = as_tokens(content)
    if not toks:
        raise EmptyContent("entropy of empty content")
    return sum(model.surprisal(t) for t in toks)


def set_entropy(content: Content, model: TokenModel) -> float:
    """Entropy of the deduplicated token set."""
    toks = set(as_tokens(content))
    if not toks:
        raise EmptyContent("entropy of empty content")
    return sum(model.surprisal(t) for t in toks)


def joint_entropy(a: Content, b: Content, model: TokenModel) -> float:
    union = set(as_tokens(a)) | set(as_tokens(b))
    if not union:
        raise EmptyContent("joint entropy of empty content")
    return sum(model.surprisal(t) for t in union)


def mutual_information(a: Content, b: Content, model: TokenModel) -> float:
    """H(a) + H(b) - H(a, b) with the joint taken over the token union.

    Both marginals are computed on deduplicated token sets so that
    I(a; a) == H(a) holds exactly even when tokens repeat.
    """
    ha = set_entropy(a, model)
    hb = set_entropy(b, model)
    return max(0.0, ha + hb - joint_entropy(a, b, model))


def redundancy_ratio(a: Content, b: Content, model: TokenModel) -> float:
    """I(a; b) / H(a); 1.0 means ``a`` is fully contained in ``b``."""
    ha = set_entropy(a, model)
    if ha == 0.0:
        return 1.0
    return mutual_information(a, b, model) / ha
