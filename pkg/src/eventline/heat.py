"""Intra-timeline heat: quintile labels from page views, a recency
baseline predictor, and the Acc / Macro-F1 / MAE evaluation.

Levels run H1 (lowest attention) to H5 (highest); ``invert_levels`` flips
the orientation for datasets labeled the other way round. An event's level
is its percentile within its own timeline's page-view distribution, using
average ranks for ties so equal views always land on equal levels, and
exact rational arithmetic so quintile boundaries are deterministic.
Upstream label construction aggregates page views over a fixed window;
this module consumes the already-aggregated counts on Event.page_views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Sequence

from .core import Timeline

QUERY_MIN_LEVEL = 4  # baseline floor for the query event's level


class HeatLevel(IntEnum):
    H1 = 1
    H2 = 2
    H3 = 3
    H4 = 4
    H5 = 5


@dataclass(frozen=True)
class HeatLabeledTimeline:
    timeline: Timeline
    labels: tuple[HeatLevel, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(HeatLevel(v) for v in self.labels))
        if len(self.labels) != len(self.timeline.events):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.timeline.events)} events")

    def to_dict(self) -> dict:
        return {
            "timeline": self.timeline.to_dict(),
            "labels": [int(v) for v in self.labels],
        }

    @classmethod
    def from_dict(cls, data) -> "HeatLabeledTimeline":
        return cls(
            timeline=Timeline.from_dict(data["timeline"]),
            labels=tuple(HeatLevel(v) for v in data["labels"]),
        )


def _average_ranks(values: Sequence[int]) -> list[Fraction]:
    """1-based ascending ranks; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks: list[Fraction] = [Fraction(0)] * len(values)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and values[order[end + 1]] == values[order[pos]]:
            end += 1
        # positions pos..end (0-based) -> ranks pos+1..end+1
        avg = Fraction((pos + 1) + (end + 1), 2)
        for k in range(pos, end + 1):
            ranks[order[k]] = avg
        pos = end + 1
    return ranks


def quintile_label(page_views: Sequence[int]) -> list[HeatLevel]:
    """Quintile level of each view count within the list.

    percentile p = average_rank / n, level = ceil(5p), computed with exact
    rationals. Rank-only, so any order-preserving transform of the views
    gives identical labels, and equal views always share a level.
    """
    if not page_views:
        raise ValueError("page view list must be non-empty")
    if any(v < 0 for v in page_views):
        raise ValueError("page views must be non-negative")
    n = len(page_views)
    levels = []
    for rank in _average_ranks(page_views):
        q = 5 * rank / n  # Fraction in (0, 5]
        levels.append(HeatLevel(math.ceil(q)))
    return levels


def baseline_predict(timeline: Timeline) -> list[HeatLevel]:
    """Recency heuristic: later events hotter; query floored at H4.

    Quintile-labels the event timestamps directly (rank-invariance makes
    this identical to labeling temporal ranks) and lifts the query event
    to at least H4.
    """
    if not timeline.events:
        raise ValueError("timeline must be non-empty")
    levels = quintile_label([e.timestamp for e in timeline.events])
    query_positions = [i for i, e in enumerate(timeline.events)
                       if e.id == timeline.query_event_id]
    if not query_positions:
        raise ValueError(f"query event {timeline.query_event_id!r} not in timeline")
    for i in query_positions:
        levels[i] = HeatLevel(max(int(levels[i]), QUERY_MIN_LEVEL))
    return levels


def label_timeline(timeline: Timeline) -> HeatLabeledTimeline:
    """Quintile labels from each event's aggregated page views."""
    views = []
    for e in timeline.events:
        if e.page_views is None:
            raise ValueError(f"event {e.id} has no page_views to label from")
        views.append(e.page_views)
    return HeatLabeledTimeline(timeline=timeline, labels=tuple(quintile_label(views)))


def invert_levels(labels: Sequence[HeatLevel]) -> list[HeatLevel]:
    """Flip orientation (H1 <-> H5) for datasets labeled hottest-first."""
    return [HeatLevel(6 - int(v)) for v in labels]


def heat_metrics(predicted: Sequence[HeatLevel],
                 gold: Sequence[HeatLevel]) -> tuple[float, float, float]:
    """(accuracy, macro_f1, mae) for two equal-length label sequences.

    Macro-F1 averages per-class F1 over the classes present in either
    sequence; classes absent from both sides are excluded so short
    timelines are not dominated by structural zeros.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"length mismatch: {len(predicted)} vs {len(gold)}")
    if not predicted:
        raise ValueError("label sequences must be non-empty")
    pred = [int(v) for v in predicted]
    true = [int(v) for v in gold]

    accuracy = sum(p == g for p, g in zip(pred, true)) / len(pred)
    mae = sum(abs(p - g) for p, g in zip(pred, true)) / len(pred)

    classes = sorted(set(pred) | set(true))
    f1s = []
    for c in classes:
        tp = sum(1 for p, g in zip(pred, true) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred, true) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred, true) if p != c and g == c)
        f1s.append(2 * tp / (2 * tp + fp + fn))  # denom > 0: c occurs somewhere
    macro_f1 = sum(f1s) / len(f1s)
    return accuracy, macro_f1, mae
