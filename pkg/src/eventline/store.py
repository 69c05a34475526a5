"""Persistent event database with windowed top-k retrieval.

Layout of a store directory:

    events.jsonl       append-only log, one canonical Event JSON per line
    summary_index.bin  vector index snapshot (see ``eventline.embed``)
    manifest.json      {"dim", "count", "window_days", ...}

The log is the source of truth; in-memory maps and the summary-embedding
index are rebuilt on open (the snapshot, when consistent, skips
re-embedding). Writes become visible to retrieval at ``commit()``;
readers always see a consistent committed snapshot. One writer, many
readers.

Retrieval returns the top-k most similar events within the time window
[t_q - window, t_q] (both endpoints inclusive), ranked by cosine over
summary embeddings with ties broken by id. No similarity threshold is
applied: recall stays high and precision filtering is left to the
downstream timeline generator. The query event itself is excluded from
the ranking and re-appended as the final element, so generators always
see it in their candidate set.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from . import config
from .core import Event, QueryEvent, canonical_json
from .embed import HashingEmbedder, VectorIndex

MANIFEST_NAME = "manifest.json"
EVENTS_NAME = "events.jsonl"
INDEX_NAME = "summary_index.bin"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = config.TOP_K
    window_days: int = config.WINDOW_DAYS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")


class EventStore:
    """Append-only event log plus a summary-embedding index."""

    def __init__(self, path, embedder=None,
                 window_days: int = config.WINDOW_DAYS,
                 id_prefix: str = "ev"):
        self.path = Path(path)
        self.embedder = embedder or HashingEmbedder(config.RETRIEVAL_DIM,
                                                    config.RETRIEVAL_SEED)
        self.window_days = window_days
        self.id_prefix = id_prefix
        self._lock = threading.RLock()
        self._events: dict[str, Event] = {}        # committed
        self._pending: dict[str, Event] = {}
        self._by_time: list[tuple[int, str]] = []  # committed, sorted (ts, id)
        self._by_time_dirty = False
        self._next_event_id = 0
        self._index = VectorIndex(dim=self.embedder.dim,
                                  seed=getattr(self.embedder, "seed", 0))

        self.path.mkdir(parents=True, exist_ok=True)
        self._load_existing()
        self._log = open(self.path / EVENTS_NAME, "a", encoding="utf-8")

    # -- lifecycle ---------------------------------------------------------

    def _load_existing(self):
        events_path = self.path / EVENTS_NAME
        if events_path.exists():
            with open(events_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = Event.from_dict(json.loads(line))
                    if event.id in self._events:
                        raise ValueError(f"corrupt log: duplicate event id {event.id!r}")
                    self._events[event.id] = event
            self._by_time = sorted((e.timestamp, e.id) for e in self._events.values())

        manifest_path = self.path / MANIFEST_NAME
        if manifest_path.exists():
            with open(manifest_path, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest.get("dim") != self.embedder.dim:
                raise ValueError(
                    f"store dim {manifest.get('dim')} != embedder dim {self.embedder.dim}")
            self._next_event_id = int(manifest.get("next_event_id", 0))
            self.window_days = int(manifest.get("window_days", self.window_days))
            self.id_prefix = manifest.get("id_prefix", self.id_prefix)
        else:
            self._next_event_id = self._derive_counter()

        if not self._events:
            return
        index_path = self.path / INDEX_NAME
        if index_path.exists():
            try:
                loaded = VectorIndex.load(index_path)
            except ValueError:
                loaded = None
            if (loaded is not None and loaded.dim == self.embedder.dim
                    and set(loaded.keys()) == set(self._events)):
                self._index = loaded
                return
        for event in self._events.values():
            self._index.add(event.id, self.embedder(event.summary), event.timestamp)
        self._index.commit()

    def _derive_counter(self) -> int:
        prefix = self.id_prefix + "-"
        best = 0
        for eid in self._events:
            if eid.startswith(prefix):
                suffix = eid[len(prefix):]
                if suffix.isdigit():
                    best = max(best, int(suffix) + 1)
        return best

    def close(self) -> None:
        with self._lock:
            self.commit()
            self.flush_snapshot()
            self._log.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- writes ------------------------------------------------------------

    def new_event_id(self) -> str:
        """Monotone counter + shard prefix; persisted via the manifest."""
        with self._lock:
            eid = f"{self.id_prefix}-{self._next_event_id:08d}"
            self._next_event_id += 1
            return eid

    def put_event(self, event: Event) -> str:
        """Append one event; it becomes retrievable after commit()."""
        if not event.summary.strip():
            raise ValueError(f"event {event.id}: summary must be non-empty")
        with self._lock:
            if event.id in self._events or event.id in self._pending:
                raise ValueError(f"duplicate event id: {event.id!r}")
            self._index.add(event.id, self.embedder(event.summary), event.timestamp)
            self._log.write(canonical_json(event.to_dict()) + "\n")
            self._pending[event.id] = event
        return event.id

    def commit(self) -> None:
        """Flush the log and make pending events visible to readers."""
        with self._lock:
            self._log.flush()
            os.fsync(self._log.fileno())
            self._index.commit()
            if self._pending:
                self._events.update(self._pending)
                self._by_time.extend(
                    (e.timestamp, e.id) for e in self._pending.values())
                self._by_time_dirty = True
                self._pending = {}
            self._write_manifest()

    def flush_snapshot(self) -> None:
        """Write summary_index.bin for bit-exact reopen without re-embedding."""
        with self._lock:
            self._index.save(self.path / INDEX_NAME)

    def _write_manifest(self) -> None:
        manifest = {
            "dim": self.embedder.dim,
            "count": len(self._events),
            "window_days": self.window_days,
            "next_event_id": self._next_event_id,
            "id_prefix": self.id_prefix,
        }
        tmp = self.path / (MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")
        os.replace(tmp, self.path / MANIFEST_NAME)

    # -- reads -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._events)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._events or event_id in self._pending

    def get(self, event_id: str) -> Event:
        event = self._events.get(event_id) or self._pending.get(event_id)
        if event is None:
            raise KeyError(f"unknown event id: {event_id!r}")
        return event

    def all_events(self) -> list[Event]:
        """Committed events in (timestamp, id) order."""
        return [self._events[eid] for _, eid in self._sorted_by_time()]

    def events_in_range(self, t_lo: int, t_hi: int) -> list[Event]:
        """Committed events with timestamp in [t_lo, t_hi], (ts, id) order."""
        import bisect
        by_time = self._sorted_by_time()
        lo = bisect.bisect_left(by_time, (t_lo, ""))
        out = []
        for ts, eid in by_time[lo:]:
            if ts > t_hi:
                break
            out.append(self._events[eid])
        return out

    def _sorted_by_time(self) -> list[tuple[int, str]]:
        with self._lock:
            if self._by_time_dirty:
                self._by_time.sort()
                self._by_time_dirty = False
            return self._by_time

    def retrieve(self, query: QueryEvent, cfg: RetrievalConfig | None = None) -> list[Event]:
        """Candidate set for a query event: top-k in-window plus the query.

        Ranking is cosine similarity of summary embeddings, descending,
        ties by id ascending; the window is [t_q - window_days, t_q]
        inclusive. The query event is never among the ranked candidates
        and is always the final element of the returned list.
        """
        cfg = cfg or RetrievalConfig(k=config.TOP_K, window_days=self.window_days)
        qe = query.event
        if not qe.summary.strip():
            raise ValueError(f"query event {qe.id}: summary must be non-empty")
        window = (qe.timestamp - cfg.window_days * config.SECONDS_PER_DAY, qe.timestamp)
        hits = self._index.search(self.embedder(qe.summary), cfg.k + 1, window)
        keys = [key for key, _ in hits if key != qe.id][: cfg.k]
        return [self._events[key] for key in keys] + [qe]
