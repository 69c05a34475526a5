"""Offline timeline metrics: selection P/R/F1, Kendall's tau, alignment-based
ROUGE-1, and summary length compliance.

Matching between predicted and reference events is either by event id
(shared id space) or by text (greedy token-F1 above a threshold). The
alignment score pairs events one-to-one by minimizing a blend of semantic
and temporal distance, solved optimally with the Hungarian method; pairs
costlier than a cutoff stay unaligned. Tokens are whitespace words when
spaces exist, otherwise single characters, which covers both CJK and
spaced fixtures.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import config
from .core import Timeline, char_length


@dataclass(frozen=True)
class TimelineScore:
    precision: float
    recall: float
    f1: float
    ar1: float
    tau: float | None
    matched_count: int


@dataclass(frozen=True)
class ComplianceReport:
    total: int
    in_range: int

    @property
    def rate(self) -> float:
        return self.in_range / self.total


def _tokens(text: str, word_mode: bool) -> list[str]:
    text = text.strip()
    if word_mode:
        return text.split()
    return [c for c in text if not c.isspace()]


def token_f1(a: str, b: str) -> float:
    """Unigram overlap F1; word tokens if either side has whitespace."""
    word_mode = any(c.isspace() for c in a.strip()) or any(c.isspace() for c in b.strip())
    ta, tb = _tokens(a, word_mode), _tokens(b, word_mode)
    if not ta or not tb:
        return 0.0
    overlap = sum((Counter(ta) & Counter(tb)).values())
    if overlap == 0:
        return 0.0
    p = overlap / len(ta)
    r = overlap / len(tb)
    return 2 * p * r / (p + r)


def rouge1_f(candidate: str, reference: str) -> float:
    return token_f1(candidate, reference)


def match_events(predicted: Timeline, reference: Timeline, match_mode: str = "id",
                 threshold: float = config.TEXT_MATCH_THRESHOLD) -> list[tuple[int, int]]:
    """(predicted index, reference index) pairs under the active match mode.

    Id mode pairs first occurrences of shared ids. Text mode greedily pairs
    unused events by descending summary token-F1 (>= threshold), ties by
    predicted then reference id.
    """
    if match_mode == "id":
        ref_pos = {}
        for j, e in enumerate(reference.events):
            ref_pos.setdefault(e.id, j)
        pairs = []
        seen = set()
        for i, e in enumerate(predicted.events):
            if e.id in ref_pos and e.id not in seen:
                pairs.append((i, ref_pos[e.id]))
                seen.add(e.id)
        return pairs
    if match_mode == "text":
        scored = []
        for i, p in enumerate(predicted.events):
            for j, r in enumerate(reference.events):
                score = token_f1(p.summary, r.summary)
                if score >= threshold:
                    scored.append((-score, p.id, r.id, i, j))
        scored.sort()
        used_p: set[int] = set()
        used_r: set[int] = set()
        pairs = []
        for _, _, _, i, j in scored:
            if i in used_p or j in used_r:
                continue
            pairs.append((i, j))
            used_p.add(i)
            used_r.add(j)
        pairs.sort()
        return pairs
    raise ValueError(f"unknown match mode: {match_mode!r}")


def selection_prf(predicted: Timeline, reference: Timeline,
                  match_mode: str = "id") -> tuple[float, float, float]:
    """Event selection precision, recall, and F1."""
    if not reference.events:
        raise ValueError("reference timeline must be non-empty")
    if not predicted.events:
        return 0.0, 0.0, 0.0
    matches = len(match_events(predicted, reference, match_mode))
    p = matches / len(predicted.events)
    r = matches / len(reference.events)
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return p, r, f1


def kendall_tau(predicted: Timeline, reference: Timeline,
                match_mode: str = "id") -> float | None:
    """Pairwise order agreement over shared events; None when fewer than 2.

    tau = (concordant - discordant) / (n(n-1)/2), comparing the predicted
    ordering of shared events against the reference ordering. List
    positions are distinct, so ties cannot occur.
    """
    pairs = match_events(predicted, reference, match_mode)
    n = len(pairs)
    if n < 2:
        return None
    concordant = 0
    discordant = 0
    for a in range(n):
        for b in range(a + 1, n):
            s = (pairs[a][0] - pairs[b][0]) * (pairs[a][1] - pairs[b][1])
            if s > 0:
                concordant += 1
            elif s < 0:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


def alignment_cost_matrix(predicted: Timeline, reference: Timeline,
                          w_sem: float = config.AR1_SEMANTIC_WEIGHT,
                          w_time: float = config.AR1_TIME_WEIGHT) -> np.ndarray:
    """cost[i, j] = w_sem*(1 - tokenF1) + w_time*|t_p - t_r|/span."""
    ref_ts = [e.timestamp for e in reference.events]
    span = max(ref_ts) - min(ref_ts)
    if span == 0:
        span = 1
    cost = np.zeros((len(predicted.events), len(reference.events)))
    for i, p in enumerate(predicted.events):
        for j, r in enumerate(reference.events):
            sem = 1.0 - token_f1(p.summary, r.summary)
            time = abs(p.timestamp - r.timestamp) / span
            cost[i, j] = w_sem * sem + w_time * time
    return cost


def optimal_assignment(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Minimum-total-cost one-to-one assignment (Hungarian method).

    Polynomial for any size, so no greedy fallback is needed in practice;
    ``greedy_assignment`` exists as the documented cheaper alternative and
    as a comparison point in tests.
    """
    if cost.size == 0:
        return [], 0.0
    rows, cols = linear_sum_assignment(cost)
    pairs = sorted(zip(rows.tolist(), cols.tolist()))
    return pairs, float(cost[rows, cols].sum())


def greedy_assignment(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Repeatedly take the cheapest unused (row, col); ties row then col."""
    if cost.size == 0:
        return [], 0.0
    n_rows, n_cols = cost.shape
    cells = sorted(
        ((float(cost[i, j]), i, j) for i in range(n_rows) for j in range(n_cols))
    )
    used_r: set[int] = set()
    used_c: set[int] = set()
    pairs = []
    total = 0.0
    for value, i, j in cells:
        if i in used_r or j in used_c:
            continue
        pairs.append((i, j))
        total += value
        used_r.add(i)
        used_c.add(j)
        if len(pairs) == min(n_rows, n_cols):
            break
    return sorted(pairs), total


def ar1(predicted: Timeline, reference: Timeline,
        weights: tuple[float, float] = (config.AR1_SEMANTIC_WEIGHT, config.AR1_TIME_WEIGHT),
        unaligned_cutoff: float = config.AR1_UNALIGNED_CUTOFF) -> float:
    """Alignment-based ROUGE-1 over (predicted, reference) event pairs.

    Events are paired by the minimum-cost assignment over combined semantic
    and temporal distance; pairs with cost above the cutoff are dropped.
    The score is the mean over reference events of unigram F between
    aligned summaries, with unaligned reference events scoring 0.
    """
    if not reference.events:
        raise ValueError("reference timeline must be non-empty")
    if not predicted.events:
        return 0.0
    w_sem, w_time = weights
    cost = alignment_cost_matrix(predicted, reference, w_sem, w_time)
    pairs, _ = optimal_assignment(cost)
    total = 0.0
    for i, j in pairs:
        if cost[i, j] > unaligned_cutoff:
            continue
        total += rouge1_f(predicted.events[i].summary, reference.events[j].summary)
    return total / len(reference.events)


def length_compliance(summaries: Sequence[str], l_min: int = config.LEN_MIN,
                      l_max: int = config.LEN_MAX) -> ComplianceReport:
    """Fraction of summaries whose character count falls in [l_min, l_max]."""
    if not summaries:
        raise ValueError("summary list must be non-empty")
    in_range = sum(1 for s in summaries if l_min <= char_length(s) <= l_max)
    return ComplianceReport(total=len(summaries), in_range=in_range)


def score_timeline(predicted: Timeline, reference: Timeline,
                   match_mode: str = "id") -> TimelineScore:
    p, r, f1 = selection_prf(predicted, reference, match_mode)
    return TimelineScore(
        precision=p,
        recall=r,
        f1=f1,
        ar1=ar1(predicted, reference),
        tau=kendall_tau(predicted, reference, match_mode),
        matched_count=len(match_events(predicted, reference, match_mode)),
    )


def corpus_means(scores: Sequence[TimelineScore]) -> dict:
    """Mean of each metric; tau averaged over timelines where it is defined."""
    if not scores:
        raise ValueError("no scores to aggregate")
    taus = [s.tau for s in scores if s.tau is not None]
    return {
        "precision": sum(s.precision for s in scores) / len(scores),
        "recall": sum(s.recall for s in scores) / len(scores),
        "f1": sum(s.f1 for s in scores) / len(scores),
        "ar1": sum(s.ar1 for s in scores) / len(scores),
        "tau": sum(taus) / len(taus) if taus else None,
        "tau_defined": len(taus),
        "timelines": len(scores),
    }
