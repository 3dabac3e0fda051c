"""Boundary for all language-model shaped work.

Every place where a model would read text and decide something goes through
an :class:`Extractor`. The shipped :class:`RuleExtractor` is a deterministic
rule set; a model-backed implementation only has to honour the same methods.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .entropy import tokenize
from .memory import OpKind, UpdateOp

TRIGGERS = ("score=", "improved", "failed", "because", "do(")

_SENTENCE = re.compile(r"(?<=[.!?])\s+|\n+")
_SCORE = re.compile(r"score=\s*(-?\d+(?:\.\d+)?)")
_DO = re.compile(r"do\(\s*([\w.\-]+)\s*=\s*([\w.\-]+)\s*\)\s*(?:=>|⇒|->)\s*([\w.\-]+)")
_REL = re.compile(r"([\w.\-]+)\s*--([\w.\-]+)-->\s*([\w.\-]+)")


@dataclass(frozen=True)
class Candidate:
    text: str
    kind: str  # "attempt" or "note"


@dataclass(frozen=True)
class EntityProposal:
    label: str
    kind: str = "concept"


@dataclass(frozen=True)
class EdgeProposal:
    src: str
    dst: str
    label: str
    causal: bool
    strength: float = 1.0


@dataclass
class GraphProposal:
    entities: list[EntityProposal] = field(default_factory=list)
    edges: list[EdgeProposal] = field(default_factory=list)


class Extractor(Protocol):
    tag: str
    seed: int

    def extract(self, user_turn: str, agent_turn: str, summary: str, recent: Sequence[str]) -> list[Candidate]: ...

    def decide(self, candidate: str, neighbors: Sequence[tuple[str, str, float]]) -> UpdateOp: ...

    def reflect(self, recent_turns: Sequence[str]) -> str: ...

    def propose_graph(self, content: str) -> GraphProposal: ...

    def summarize(self, contents: Sequence[str]) -> str: ...

    def contradicts(self, a: str, b: str) -> bool: ...


def _negated(toks: list[str]) -> bool:
    if "not" in toks:
        return True
    return any(a == "no" and b == "longer" for a, b in zip(toks, toks[1:]))


@dataclass
class RuleExtractor:
    """Deterministic pattern-matching stand-in for an LLM."""

    tag: str = "rule"
    seed: int = 0
    noop_threshold: float = 0.95
    update_threshold: float = 0.80

    def extract(self, user_turn: str, agent_turn: str, summary: str = "", recent: Sequence[str] = ()) -> list[Candidate]:
        out = []
        for turn in (user_turn, agent_turn):
            for sent in _SENTENCE.split(turn):
                sent = sent.strip()
                if not sent or not any(t in sent for t in TRIGGERS):
                    continue
                kind = "attempt" if ("score=" in sent or "failed" in sent) else "note"
                out.append(Candidate(sent, kind))
        return out

    def decide(self, candidate: str, neighbors: Sequence[tuple[str, str, float]]) -> UpdateOp:
        """``neighbors`` holds (record id, content, cosine), nearest first."""
        if not neighbors:
            return UpdateOp(OpKind.ADD, new_content=candidate)
        rid, content, cos = neighbors[0]
        if cos >= self.noop_threshold:
            return UpdateOp(OpKind.NOOP)
        cand_toks, near_toks = tokenize(candidate), tokenize(content)
        same_subject = bool(cand_toks) and bool(near_toks) and cand_toks[0] == near_toks[0]
        if same_subject and _negated(cand_toks) != _negated(near_toks):
            # caller follows a contradiction delete with an add of the candidate
            return UpdateOp(OpKind.DELETE, target_id=rid)
        if same_subject and cos >= self.update_threshold:
            return UpdateOp(OpKind.UPDATE, target_id=rid, new_content=candidate)
        return UpdateOp(OpKind.ADD, new_content=candidate)

    def reflect(self, recent_turns: Sequence[str]) -> str:
        best: Optional[str] = None
        best_text = "none"
        last = "none"
        seen: set[str] = set()
        for turn in recent_turns:
            for m in _SCORE.finditer(turn):
                if best is None or float(m.group(1)) < float(best):
                    best, best_text = m.group(1), m.group(0)
            cands = self.extract(turn, "")
            if cands:
                last = cands[-1].kind
            for trig in TRIGGERS:
                if trig in turn:
                    seen.add(trig.strip("=("))
        triggers = " ".join(sorted(seen)) if seen else "none"
        return f"reflection best {best_text} last {last} triggers {triggers}"

    def propose_graph(self, content: str) -> GraphProposal:
        prop = GraphProposal()
        for x, val, y in _DO.findall(content):
            prop.entities += [EntityProposal(x, "decision"), EntityProposal(y, "outcome")]
            prop.edges.append(EdgeProposal(x, y, f"do({x}={val}) ⇒ {y}", causal=True))
        for a, label, b in _REL.findall(content):
            prop.entities += [EntityProposal(a), EntityProposal(b)]
            prop.edges.append(EdgeProposal(a, b, label, causal=False))
        return prop

    def summarize(self, contents: Sequence[str]) -> str:
        """Tokens shared by every member, in first-seen order; the union if none are shared."""
        if not contents:
            return ""
        token_lists = [tokenize(c) for c in contents]
        common = set(token_lists[0]).intersection(*map(set, token_lists[1:]))
        ordered: list[str] = []
        for toks in token_lists:
            for t in toks:
                if t not in ordered and (not common or t in common):
                    ordered.append(t)
        return " ".join(ordered)

    def contradicts(self, a: str, b: str) -> bool:
        ta, tb = tokenize(a), tokenize(b)
        return bool(ta) and bool(tb) and ta[0] == tb[0] and _negated(ta) != _negated(tb)
