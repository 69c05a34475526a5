"""Query-driven timeline generation and training-data synthesis.

A generator receives a candidate set (the retrieval output, query event
included) and returns an ordered event selection. Two routes exist:

* ``oracle_generate`` — a deterministic filter/dedup/sort pipeline used
  for testing and as the always-valid fallback;
* ``external_generate`` — renders the main prompt, calls any text
  generation callable, parses the reply, and falls back to the oracle
  when the reply cannot be parsed into a valid timeline.

The module also renders the fixed prompt templates for the main task and
the three auxiliary tasks (temporal ordering, causal judgment, timeline
completion) and synthesizes their training samples from gold timelines.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Sequence

from . import config
from .core import Event, QueryEvent, Timeline, validate_timeline
from .embed import Embedding, HashingEmbedder, cosine

TASK_MAIN = "main"
TASK_TEMPORAL = "temporal_ordering"
TASK_CAUSAL = "causal_judgment"
TASK_COMPLETION = "timeline_completion"
TASKS = (TASK_MAIN, TASK_TEMPORAL, TASK_CAUSAL, TASK_COMPLETION)

MASK_TOKEN = "[MASK]"

_TEMPORAL_TEMPLATE = "Sort the following events in chronological order.\nEvents: {{{events}}}"
_CAUSAL_TEMPLATE = (
    "Classify the relationship between the query event and the candidate event "
    "as cause, result, or irrelevant.\nQuery event: {{{query}}}\nCandidate event: {{{candidate}}}"
)
_COMPLETION_TEMPLATE = (
    "Infer the missing event that completes the event timeline leading to the "
    "query event.\nTimeline: ⟨{slots}⟩"
)
_MAIN_TEMPLATE = (
    "Build the event timeline that explains how the query event came about.\n"
    "Query event: {query}\n"
    "Candidate events:\n{candidates}\n"
    "Select the candidate events that directly contribute to understanding the "
    "query event and answer with their numbers in chronological order, "
    "separated by commas."
)


class ParseError(ValueError):
    """No event selection could be recovered from a generator reply."""


class CausalLabel(Enum):
    CAUSE = "cause"
    RESULT = "result"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class CandidateSet:
    query: QueryEvent
    candidates: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique")
        if self.query.id not in set(ids):
            raise ValueError(f"query event {self.query.id!r} missing from candidates")

    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidates)


@dataclass(frozen=True)
class GeneratorOutput:
    selected_event_ids: tuple[str, ...]
    raw_text: str | None = None
    warnings: int = 0

    def __post_init__(self):
        ids = tuple(self.selected_event_ids)
        object.__setattr__(self, "selected_event_ids", ids)
        if len(set(ids)) != len(ids):
            raise ValueError("selected event ids must be unique")


@dataclass(frozen=True)
class TrainingSample:
    task: str
    prompt: str
    target: str
    provenance: str

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task: {self.task!r}")

    def to_dict(self) -> dict:
        return {"task": self.task, "prompt": self.prompt,
                "target": self.target, "provenance": self.provenance}


@dataclass(frozen=True)
class OracleParams:
    relevance_threshold: float = config.RELEVANCE_THRESHOLD
    dedup_threshold: float = config.DEDUP_THRESHOLD
    max_events: int = config.MAX_TIMELINE_EVENTS

    def __post_init__(self):
        if not 0.0 < self.relevance_threshold < self.dedup_threshold <= 1.0:
            raise ValueError("need 0 < relevance_threshold < dedup_threshold <= 1")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")


def _date(timestamp: int) -> str:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y-%m-%d")


def render_event(event: Event) -> str:
    return f"[{event.id}] {event.summary} ({_date(event.timestamp)})"


def render_sequence(events: Sequence[Event]) -> str:
    return "⟨" + ", ".join(render_event(e) for e in events) + "⟩"


def render_prompt(task: str, payload) -> str:
    """Fixed prompt template for a task.

    Payload shapes: temporal_ordering takes an event sequence;
    causal_judgment a (query Event, candidate Event) pair;
    timeline_completion an event sequence with None marking masked slots;
    main a CandidateSet. Anything else raises ValueError.
    """
    if task == TASK_TEMPORAL:
        events = _event_sequence(payload, task)
        return _TEMPORAL_TEMPLATE.format(
            events=", ".join(render_event(e) for e in events))
    if task == TASK_CAUSAL:
        if (not isinstance(payload, tuple) or len(payload) != 2
                or not all(isinstance(e, Event) for e in payload)):
            raise ValueError("causal_judgment payload must be (query, candidate) Events")
        query, candidate = payload
        return _CAUSAL_TEMPLATE.format(
            query=render_event(query), candidate=render_event(candidate))
    if task == TASK_COMPLETION:
        if not isinstance(payload, (list, tuple)) or not payload:
            raise ValueError("timeline_completion payload must be a non-empty sequence")
        slots = []
        for item in payload:
            if item is None:
                slots.append(MASK_TOKEN)
            elif isinstance(item, Event):
                slots.append(render_event(item))
            else:
                raise ValueError("timeline_completion payload items must be Event or None")
        if MASK_TOKEN not in slots:
            raise ValueError("timeline_completion payload has no masked slot")
        return _COMPLETION_TEMPLATE.format(slots=", ".join(slots))
    if task == TASK_MAIN:
        if not isinstance(payload, CandidateSet):
            raise ValueError("main payload must be a CandidateSet")
        numbered = "\n".join(
            f"{i}. {render_event(e)}" for i, e in enumerate(payload.candidates, start=1))
        return _MAIN_TEMPLATE.format(
            query=render_event(payload.query.event), candidates=numbered)
    raise ValueError(f"unknown task: {task!r}")


def _event_sequence(payload, task) -> tuple[Event, ...]:
    if (not isinstance(payload, (list, tuple)) or not payload
            or not all(isinstance(e, Event) for e in payload)):
        raise ValueError(f"{task} payload must be a non-empty Event sequence")
    return tuple(payload)


# -- oracle generation -----------------------------------------------------

def oracle_generate(cs: CandidateSet, params: OracleParams = OracleParams(),
                    embedder: Callable[[str], Embedding] | None = None) -> Timeline:
    """Deterministic timeline: relevance filter, dedup, chronological sort.

    Candidates whose summary similarity to the query falls below the
    relevance threshold are dropped; near-duplicates (pairwise similarity
    at or above the dedup threshold) collapse to the earliest member, with
    the query always winning its own duplicate group; survivors are sorted
    by (timestamp, id) and truncated to max_events keeping the query plus
    the most recent others. The result always validates.
    """
    embedder = embedder or HashingEmbedder(config.RETRIEVAL_DIM, config.RETRIEVAL_SEED)
    query_event = next(c for c in cs.candidates if c.id == cs.query.id)
    embs = {c.id: embedder(c.summary) for c in cs.candidates}
    qv = embs[query_event.id]

    relevant = [c for c in cs.candidates
                if c.id == query_event.id
                or cosine(embs[c.id], qv) >= params.relevance_threshold]

    # Query first so it absorbs its duplicates; then earliest-first greedy.
    kept: list[Event] = [query_event]
    for cand in sorted((c for c in relevant if c.id != query_event.id),
                       key=lambda e: (e.timestamp, e.id)):
        if all(cosine(embs[cand.id], embs[k.id]) < params.dedup_threshold for k in kept):
            kept.append(cand)

    if len(kept) > params.max_events:
        others = sorted((e for e in kept if e.id != query_event.id),
                        key=lambda e: (-e.timestamp, e.id))
        kept = [query_event] + others[: params.max_events - 1]

    kept.sort(key=lambda e: (e.timestamp, e.id))
    return Timeline(events=tuple(kept), query_event_id=query_event.id)


# -- external generation ---------------------------------------------------

_NUMBERED_LINE = re.compile(r"^\s*(\d+)\s*[.):]", re.MULTILINE)
_INDEX_ONLY = re.compile(r"^\d+(?:\s*[,，]\s*\d+)*$")


def parse_generator_output(raw: str, cs: CandidateSet) -> GeneratorOutput:
    """Recover an ordered selection from free-form generator text.

    Accepts numbered list lines ("2. ..."), a bare comma-separated index
    list ("1, 3, 2"), or candidate ids cited verbatim. Indices are 1-based
    positions into the candidate list. Unknown indices or ids are dropped
    and counted as warnings; duplicates keep the first occurrence.
    """
    ids = cs.ids()
    picked: list[str] = []
    warnings = 0

    numbers = [int(m.group(1)) for m in _NUMBERED_LINE.finditer(raw)]
    if not numbers:
        stripped = raw.strip()
        if _INDEX_ONLY.match(stripped):
            numbers = [int(tok) for tok in
                       stripped.replace("，", ",").split(",")]

    if numbers:
        for num in numbers:
            if 1 <= num <= len(ids):
                eid = ids[num - 1]
                if eid not in picked:
                    picked.append(eid)
            else:
                warnings += 1
    else:
        hits = [(raw.index(eid), eid) for eid in ids if eid in raw]
        hits.sort()
        picked = [eid for _, eid in hits]

    if not picked:
        raise ParseError(f"no candidate selection found in reply: {raw[:80]!r}")
    return GeneratorOutput(selected_event_ids=tuple(picked),
                           raw_text=raw, warnings=warnings)


def timeline_from_output(output: GeneratorOutput, cs: CandidateSet) -> Timeline:
    by_id = {c.id: c for c in cs.candidates}
    events = tuple(by_id[eid] for eid in output.selected_event_ids)
    return Timeline(events=events, query_event_id=cs.query.id)


def external_generate(cs: CandidateSet, generate_fn: Callable[[str], str],
                      params: OracleParams = OracleParams(),
                      embedder: Callable[[str], Embedding] | None = None,
                      ) -> tuple[Timeline, dict]:
    """Prompt an external backend; fall back to the oracle when it misbehaves.

    The reply must parse into a selection that passes validation; any
    parse or validity failure swaps in ``oracle_generate`` output and the
    returned metadata marks the response as a fallback. Transport errors
    are the caller's concern and should be raised by ``generate_fn``.
    """
    prompt = render_prompt(TASK_MAIN, cs)
    raw = generate_fn(prompt)
    meta: dict = {"generator": "external", "fallback": False, "warnings": 0}
    try:
        output = parse_generator_output(raw, cs)
        candidate = timeline_from_output(output, cs)
        violations = validate_timeline(candidate.events, cs.query, cs.candidates)
        if violations:
            raise ParseError(
                "reply produced an invalid timeline: "
                + ", ".join(v.kind.value for v in violations))
        meta["warnings"] = output.warnings
        return candidate, meta
    except ParseError as exc:
        meta.update(generator="oracle", fallback=True, reason=str(exc))
        return oracle_generate(cs, params, embedder), meta


# -- training-data synthesis ------------------------------------------------

def _rng(seed: int, salt: str, timeline: Timeline) -> random.Random:
    return random.Random(f"{salt}:{seed}:{timeline.query_event_id}")


def _provenance(timeline: Timeline, seed: int) -> str:
    return f"timeline={timeline.query_event_id} seed={seed}"


def gen_temporal_samples(timeline: Timeline, seed: int) -> TrainingSample:
    """One ordering sample: shuffled events in, chronological sequence out.

    The seeded shuffle is guaranteed not to be the identity.
    """
    events = list(timeline.events)
    if len(events) < 2:
        raise ValueError("temporal ordering needs at least 2 events")
    rng = _rng(seed, "temporal", timeline)
    shuffled = events[:]
    while True:
        rng.shuffle(shuffled)
        if shuffled != events:
            break
    return TrainingSample(
        task=TASK_TEMPORAL,
        prompt=render_prompt(TASK_TEMPORAL, shuffled),
        target=render_sequence(events),
        provenance=_provenance(timeline, seed),
    )


def gen_causal_samples(timeline: Timeline, other_timelines: Sequence[Timeline],
                       seed: int, quota: int = 6) -> list[TrainingSample]:
    """Query-candidate pairs labeled by position in the gold timeline.

    An event before the query is a cause, after it a result; events drawn
    from other timelines are irrelevant. The class mix is as balanced as
    availability allows, up to ``quota`` samples.
    """
    if quota < 1:
        raise ValueError("quota must be >= 1")
    events = list(timeline.events)
    qpos = [i for i, e in enumerate(events) if e.id == timeline.query_event_id]
    if not qpos:
        raise ValueError(f"query event {timeline.query_event_id!r} not in timeline")
    qi = qpos[0]
    query = events[qi]

    own_ids = {e.id for e in events}
    pools = {
        CausalLabel.CAUSE: events[:qi],
        CausalLabel.RESULT: events[qi + 1:],
        CausalLabel.IRRELEVANT: [e for t in other_timelines for e in t.events
                                 if e.id not in own_ids],
    }
    base, extra = divmod(quota, 3)
    shares = {
        CausalLabel.CAUSE: base + (1 if extra > 0 else 0),
        CausalLabel.RESULT: base + (1 if extra > 1 else 0),
        CausalLabel.IRRELEVANT: base,
    }
    rng = _rng(seed, "causal", timeline)
    samples = []
    for label in (CausalLabel.CAUSE, CausalLabel.RESULT, CausalLabel.IRRELEVANT):
        pool = pools[label]
        take = min(shares[label], len(pool))
        for cand in (rng.sample(pool, take) if take else []):
            samples.append(TrainingSample(
                task=TASK_CAUSAL,
                prompt=render_prompt(TASK_CAUSAL, (query, cand)),
                target=label.value,
                provenance=_provenance(timeline, seed),
            ))
    return samples


def gen_completion_samples(timeline: Timeline, seed: int) -> TrainingSample:
    """Mask 1-2 intermediate events; the target is the masked events in order.

    Neither the first event, the last event, nor the query event is ever
    masked, so the timeline keeps its anchors.
    """
    events = list(timeline.events)
    if len(events) < 4:
        raise ValueError("timeline completion needs at least 4 events")
    qpos = [i for i, e in enumerate(events) if e.id == timeline.query_event_id]
    if not qpos:
        raise ValueError(f"query event {timeline.query_event_id!r} not in timeline")
    eligible = [i for i in range(1, len(events) - 1) if i != qpos[0]]
    rng = _rng(seed, "completion", timeline)
    count = min(rng.randint(1, 2), len(eligible))
    masked = sorted(rng.sample(eligible, count))
    slots = [None if i in masked else e for i, e in enumerate(events)]
    return TrainingSample(
        task=TASK_COMPLETION,
        prompt=render_prompt(TASK_COMPLETION, slots),
        target=", ".join(render_event(events[i]) for i in masked),
        provenance=_provenance(timeline, seed),
    )


def gen_main_sample(timeline: Timeline, other_timelines: Sequence[Timeline],
                    seed: int, total_candidates: int = config.TOP_K + 1) -> TrainingSample:
    """Main-task sample: gold events plus distractors as the candidate set.

    The target is the gold events' candidate numbers in chronological
    order, matching the machine-parseable format the main prompt requests.
    """
    events = list(timeline.events)
    if timeline.query_event_id not in {e.id for e in events}:
        raise ValueError(f"query event {timeline.query_event_id!r} not in timeline")
    own_ids = {e.id for e in events}
    distractor_pool = [e for t in other_timelines for e in t.events
                       if e.id not in own_ids]
    seen: set[str] = set()
    distractors = []
    for e in distractor_pool:
        if e.id not in seen:
            distractors.append(e)
            seen.add(e.id)
    rng = _rng(seed, "main", timeline)
    need = max(0, total_candidates - len(events))
    take = min(need, len(distractors))
    candidates = events + (rng.sample(distractors, take) if take else [])
    rng.shuffle(candidates)

    cs = CandidateSet(
        query=QueryEvent(event=next(e for e in events
                                    if e.id == timeline.query_event_id)),
        candidates=tuple(candidates),
    )
    index_of = {c.id: i + 1 for i, c in enumerate(cs.candidates)}
    return TrainingSample(
        task=TASK_MAIN,
        prompt=render_prompt(TASK_MAIN, cs),
        target=", ".join(str(index_of[e.id]) for e in events),
        provenance=_provenance(timeline, seed),
    )
