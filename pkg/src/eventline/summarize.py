"""Composite reward for concise event summaries and best-of-n selection.

The reward multiplies a length term by a quality term. Length is an
asymmetric Gaussian: flat at 1.0 inside [l_min, l_max], decaying faster
below the band than above it, so dropping facts costs more than rambling.
Quality is a recall-weighted F-score over character-level precision/recall
against a reference summary.

Training a generation policy against this reward is out of scope here;
instead ``select_summary`` scores candidate texts from pluggable
generators and returns the argmax, which exercises the same reward
surface deterministically. An externally tuned model can still plug in as
a generator.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from . import config
from .core import Document, char_length

GENERATOR_SOURCES = ("Truncate", "ExtractiveHeuristic", "External")

# generator(doc, reference, n, params) -> candidate texts
Generator = Callable[[Document, "str | None", int, "RewardParams"], "list[SummaryCandidate]"]


@dataclass(frozen=True)
class RewardParams:
    l_min: int = config.LEN_MIN
    l_max: int = config.LEN_MAX
    lambda_short: float = config.LAMBDA_SHORT
    lambda_long: float = config.LAMBDA_LONG
    alpha: float = config.ALPHA

    def __post_init__(self):
        if not 0 < self.l_min <= self.l_max:
            raise ValueError("need 0 < l_min <= l_max")
        if self.lambda_short <= 0 or self.lambda_long <= 0:
            raise ValueError("penalty coefficients must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class RewardBreakdown:
    r_len: float
    r_qual: float
    r_total: float
    length: int
    precision: float
    recall: float


@dataclass(frozen=True)
class SummaryCandidate:
    text: str
    source: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("candidate text must be non-empty")
        if self.source not in GENERATOR_SOURCES:
            raise ValueError(f"unknown candidate source: {self.source!r}")


def length_reward(length: int, params: RewardParams = RewardParams()) -> float:
    """1.0 on [l_min, l_max]; Gaussian decay outside, steeper when short."""
    if length < 0:
        raise ValueError("length must be non-negative")
    if length < params.l_min:
        return math.exp(-params.lambda_short * (params.l_min - length) ** 2)
    if length > params.l_max:
        return math.exp(-params.lambda_long * (length - params.l_max) ** 2)
    return 1.0


def char_prf(candidate: str, reference: str,
             mode: str = config.CHAR_COUNT_MODE) -> tuple[float, float]:
    """Character-level (precision, recall) via multiset character overlap.

    Whitespace never counts toward the overlap (unspaced CJK text should
    not be rewarded for padding), but internal whitespace still counts
    toward the precision denominator through ``char_length``.
    """
    if not reference.strip():
        raise ValueError("reference must be non-empty")
    cand_counts = Counter(c for c in candidate.strip() if not c.isspace())
    ref_counts = Counter(c for c in reference.strip() if not c.isspace())
    overlap = sum((cand_counts & ref_counts).values())
    cand_len = char_length(candidate, mode)
    ref_len = char_length(reference, mode)
    precision = overlap / cand_len if cand_len else 0.0
    recall = overlap / ref_len if ref_len else 0.0
    return precision, recall


def quality_reward(precision: float, recall: float,
                   params: RewardParams = RewardParams()) -> float:
    """Recall-weighted F-score: (1 + a^2)PR / (a^2 P + R); 0 at P = R = 0."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    a2 = params.alpha ** 2
    denom = a2 * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + a2) * precision * recall / denom


def composite_reward(candidate: str, reference: str,
                     params: RewardParams = RewardParams()) -> RewardBreakdown:
    """Length reward times quality reward, with all components reported."""
    length = char_length(candidate)
    r_len = length_reward(length, params)
    precision, recall = char_prf(candidate, reference)
    r_qual = quality_reward(precision, recall, params)
    return RewardBreakdown(
        r_len=r_len,
        r_qual=r_qual,
        r_total=r_len * r_qual,
        length=length,
        precision=precision,
        recall=recall,
    )


def doc_title(doc: Document) -> str:
    """First non-empty line of the document content."""
    for line in doc.content.splitlines():
        line = line.strip()
        if line:
            return line
    return doc.content.strip()


def first_sentence(text: str) -> str:
    text = text.strip()
    for i, ch in enumerate(text):
        if ch in "。！？．.!?":
            return text[: i + 1]
    return text


def truncate_generator(doc: Document, reference: str | None, n: int,
                       params: RewardParams) -> list[SummaryCandidate]:
    """The title clipped to l_max characters: the no-model baseline."""
    title = doc_title(doc)
    clipped = title[: params.l_max].strip()
    if not clipped:
        return []
    return [SummaryCandidate(text=clipped, source="Truncate")]


def extractive_generator(doc: Document, reference: str | None, n: int,
                         params: RewardParams) -> list[SummaryCandidate]:
    """Highest-recall in-band substrings of the title.

    Scores every contiguous substring of the title with length in
    [l_min, l_max] by character recall against the reference (the title
    itself when no reference is given); brute force over O(len^2)
    substrings is fine at title scale.
    """
    title = doc_title(doc)
    target = reference if reference else title
    if not title:
        return []
    if len(title) < params.l_min:
        pool = [title]
    else:
        pool = []
        for width in range(params.l_min, min(params.l_max, len(title)) + 1):
            for start in range(len(title) - width + 1):
                sub = title[start:start + width].strip()
                if sub:
                    pool.append(sub)
    seen = set()
    scored = []
    for sub in pool:
        if sub in seen:
            continue
        seen.add(sub)
        _, recall = char_prf(sub, target)
        scored.append((-recall, len(sub), sub))
    scored.sort()
    return [SummaryCandidate(text=s, source="ExtractiveHeuristic")
            for _, _, s in scored[:n]]


def _representative(event_docs: Sequence[Document]) -> Document:
    return min(event_docs, key=lambda d: (d.timestamp, d.id))


def select_summary(event_docs: Sequence[Document], reference: str | None,
                   generators: Sequence[Generator], n: int = 8,
                   params: RewardParams = RewardParams()) -> tuple[str, RewardBreakdown]:
    """Best candidate under the composite reward; deterministic ties.

    Candidates come from the representative (earliest) document. With a
    reference the score is the full composite reward; without one the
    quality term is proxied by character recall against the document
    title. Ties break toward shorter then lexicographically smaller text,
    so the result is invariant to generator order.
    """
    if not event_docs:
        raise ValueError("event_docs must be non-empty")
    if not generators:
        raise ValueError("need at least one generator")
    if n <= 0:
        raise ValueError("n must be positive")
    doc = _representative(event_docs)
    title = doc_title(doc)

    pool: list[SummaryCandidate] = []
    for gen in generators:
        pool.extend(gen(doc, reference, n, params)[:n])
    if not pool:
        raise ValueError(f"all generators returned empty for document {doc.id}")

    best: tuple[float, int, str] | None = None
    best_breakdown: RewardBreakdown | None = None
    for cand in pool:
        if reference is not None:
            breakdown = composite_reward(cand.text, reference, params)
        else:
            length = char_length(cand.text)
            r_len = length_reward(length, params)
            precision, recall = char_prf(cand.text, title)
            breakdown = RewardBreakdown(
                r_len=r_len, r_qual=recall, r_total=r_len * recall,
                length=length, precision=precision, recall=recall,
            )
        key = (-breakdown.r_total, len(cand.text), cand.text)
        if best is None or key < best:
            best = key
            best_breakdown = breakdown
    assert best is not None and best_breakdown is not None
    return best[2], best_breakdown
