"""Core domain types: documents, events, timelines, and validity rules.

A document is a timestamped text unit from the input stream. An event is a
cluster of documents reporting one real-world occurrence, carrying a concise
summary and the timestamp of its representative (earliest) document. A
timeline is an ordered event sequence anchored on a query event.

All types are immutable value objects, safe to share across threads, and
serialize to line-delimited JSON:

    Document {"id", "content", "timestamp"}
    Event    {"id", "summary", "timestamp", "representative_doc_id",
              "supporting_doc_ids", "page_views"?}
    Timeline {"query_event_id", "events": [Event, ...]}

Timeline objects do not enforce ordering at construction; generated or
parsed sequences may be invalid and are checked explicitly with
``validate_timeline``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from . import config


def char_length(text: str, mode: str = config.CHAR_COUNT_MODE) -> int:
    """Character count of ``text`` after trimming leading/trailing whitespace.

    Internal whitespace counts. "scalar" counts Unicode scalar values,
    "utf8" counts encoded bytes (sensitivity checks only).
    """
    trimmed = text.strip()
    if mode == "scalar":
        return len(trimmed)
    if mode == "utf8":
        return len(trimmed.encode("utf-8"))
    raise ValueError(f"unknown char count mode: {mode!r}")


@dataclass(frozen=True)
class Document:
    id: str
    content: str
    timestamp: int

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.content.strip():
            raise ValueError(f"document {self.id}: content empty after trim")
        if not isinstance(self.timestamp, int) or self.timestamp < 0:
            raise ValueError(f"document {self.id}: timestamp must be a non-negative integer")

    def to_dict(self) -> dict:
        return {"id": self.id, "content": self.content, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Document":
        return cls(id=data["id"], content=data["content"], timestamp=int(data["timestamp"]))


@dataclass(frozen=True)
class Event:
    id: str
    summary: str
    timestamp: int
    representative_doc_id: str
    supporting_doc_ids: frozenset[str]
    page_views: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "supporting_doc_ids", frozenset(self.supporting_doc_ids))
        if not self.id:
            raise ValueError("event id must be non-empty")
        if not self.supporting_doc_ids:
            raise ValueError(f"event {self.id}: supporting document set empty")
        if self.representative_doc_id not in self.supporting_doc_ids:
            raise ValueError(
                f"event {self.id}: representative document "
                f"{self.representative_doc_id!r} not among supporting documents"
            )
        if not isinstance(self.timestamp, int) or self.timestamp < 0:
            raise ValueError(f"event {self.id}: timestamp must be a non-negative integer")
        if self.page_views is not None and self.page_views < 0:
            raise ValueError(f"event {self.id}: page_views must be non-negative")

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "summary": self.summary,
            "timestamp": self.timestamp,
            "representative_doc_id": self.representative_doc_id,
            "supporting_doc_ids": sorted(self.supporting_doc_ids),
        }
        if self.page_views is not None:
            out["page_views"] = self.page_views
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "Event":
        views = data.get("page_views")
        return cls(
            id=data["id"],
            summary=data["summary"],
            timestamp=int(data["timestamp"]),
            representative_doc_id=data["representative_doc_id"],
            supporting_doc_ids=frozenset(data["supporting_doc_ids"]),
            page_views=None if views is None else int(views),
        )


@dataclass(frozen=True)
class QueryEvent:
    """The event a user asks about; the timeline's focal anchor."""

    event: Event

    @property
    def id(self) -> str:
        return self.event.id


@dataclass(frozen=True)
class Timeline:
    events: tuple[Event, ...]
    query_event_id: str

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def event_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.events)

    def to_dict(self) -> dict:
        return {
            "query_event_id": self.query_event_id,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Timeline":
        return cls(
            events=tuple(Event.from_dict(e) for e in data["events"]),
            query_event_id=data["query_event_id"],
        )


class ViolationKind(Enum):
    NOT_SORTED = "NotSorted"
    QUERY_MISSING = "QueryMissing"
    QUERY_DUPLICATED = "QueryDuplicated"
    NOT_FROM_CANDIDATES = "NotFromCandidates"
    DUPLICATE_EVENT = "DuplicateEvent"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


def validate_timeline(events: Sequence[Event], query: QueryEvent,
                      candidates: Iterable[Event]) -> list[Violation]:
    """Check the four timeline validity rules; empty list means valid.

    Rules: (a) timestamps non-decreasing, (b) the query event appears
    exactly once (position-free), (c) every event comes from the candidate
    set, (d) no duplicate event ids. One Violation per failed rule.
    """
    candidate_ids = {c.id for c in candidates}
    if not candidate_ids:
        raise ValueError("candidate set must be non-empty")
    if query.id not in candidate_ids:
        raise ValueError(f"query event {query.id!r} not in candidate set")

    violations: list[Violation] = []

    for prev, cur in zip(events, events[1:]):
        if prev.timestamp > cur.timestamp:
            violations.append(Violation(
                ViolationKind.NOT_SORTED,
                f"event {cur.id} at t={cur.timestamp} follows {prev.id} at t={prev.timestamp}",
            ))
            break

    query_count = sum(1 for e in events if e.id == query.id)
    if query_count == 0:
        violations.append(Violation(
            ViolationKind.QUERY_MISSING, f"query event {query.id} absent"))
    elif query_count > 1:
        violations.append(Violation(
            ViolationKind.QUERY_DUPLICATED,
            f"query event {query.id} appears {query_count} times"))

    foreign = [e.id for e in events if e.id not in candidate_ids]
    if foreign:
        violations.append(Violation(
            ViolationKind.NOT_FROM_CANDIDATES,
            f"events not in candidate set: {foreign}"))

    seen: set[str] = set()
    dupes: list[str] = []
    for e in events:
        if e.id in seen and e.id not in dupes:
            dupes.append(e.id)
        seen.add(e.id)
    if dupes:
        violations.append(Violation(
            ViolationKind.DUPLICATE_EVENT, f"duplicate event ids: {dupes}"))

    return violations


def canonical_json(data: Mapping) -> str:
    """Stable single-line JSON used for all on-disk records."""
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def read_jsonl(path) -> Iterable[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path, records: Iterable[Mapping]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(canonical_json(rec) + "\n")
            count += 1
    return count
