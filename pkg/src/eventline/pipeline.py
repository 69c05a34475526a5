"""End-to-end ingestion: documents in, summarized events in a store out.

Stages run in stream order: each document is embedded and clustered; when
a cluster ages out of the sliding window it is sealed, its earliest
member becomes the representative, a concise summary is selected under
the composite reward, and the finished event is appended to the store.
The whole run is deterministic: identical config and input produce a
byte-identical events log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable

from .cluster import ClusterState, StreamOrderError
from .config import Config
from .core import Document, canonical_json
from .embed import HashingEmbedder
from .store import EventStore
from .summarize import RewardParams, extractive_generator, select_summary, truncate_generator

RUN_MANIFEST_NAME = "run_manifest.json"


@dataclass
class RunReport:
    store_dir: str
    config_hash: str
    documents_read: int = 0
    documents_accepted: int = 0
    parse_errors: list[str] = field(default_factory=list)
    order_errors: list[str] = field(default_factory=list)
    events_created: int = 0

    @property
    def data_error_count(self) -> int:
        return len(self.parse_errors) + len(self.order_errors)

    def to_dict(self) -> dict:
        return {
            "store_dir": self.store_dir,
            "config_hash": self.config_hash,
            "documents_read": self.documents_read,
            "documents_accepted": self.documents_accepted,
            "parse_errors": self.parse_errors,
            "order_errors": self.order_errors,
            "events_created": self.events_created,
        }


class PipelineWorker:
    """Shared per-document machinery for the batch pipeline and the service."""

    def __init__(self, config: Config, store: EventStore):
        self.config = config
        self.store = store
        self.cluster_embedder = HashingEmbedder(config.clustering_dim,
                                                config.clustering_seed)
        self.state = ClusterState(
            dim=config.clustering_dim,
            window_days=config.window_days,
            assign_threshold=config.assign_threshold,
        )
        self.reward_params = RewardParams(
            l_min=config.l_min, l_max=config.l_max,
            lambda_short=config.lambda_short, lambda_long=config.lambda_long,
            alpha=config.alpha,
        )
        self.generators = (truncate_generator, extractive_generator)
        self._docs: dict[str, Document] = {}

    def ingest_document(self, doc: Document):
        """Cluster one document; seal and store anything that aged out."""
        assignment = self.state.ingest(doc, self.cluster_embedder(doc.content))
        self._docs[doc.id] = doc
        sealed = [self._store_cluster(cid)
                  for cid in self.state.evict_expired(doc.timestamp)]
        return assignment, sealed

    def drain(self) -> list[str]:
        """Seal every remaining cluster at end of stream."""
        return [self._store_cluster(cid) for cid in self.state.seal_all()]

    def _store_cluster(self, cluster_id: int) -> str:
        draft = self.state.finalize_event(cluster_id)
        docs = [self._docs[did] for did in draft.supporting_doc_ids]
        summary, _ = select_summary(
            docs, None, self.generators,
            n=self.config.candidates_per_generator, params=self.reward_params)
        event = replace(draft, id=self.store.new_event_id(), summary=summary)
        self.store.put_event(event)
        self.state.discard_sealed(cluster_id)
        for did in draft.supporting_doc_ids:
            self._docs.pop(did, None)
        return event.id


def run_pipeline(config: Config, documents_path, store_dir,
                 assignments_out: IO[str] | None = None) -> RunReport:
    """Ingest a line-delimited Document file into a fresh event store.

    Malformed lines are reported with their line number and skipped; the
    run continues. Out-of-window-order documents are likewise recorded
    and skipped. The report carries counts plus the config hash, and is
    also written as run_manifest.json inside the store directory.
    """
    store_dir = Path(store_dir)
    report = RunReport(store_dir=str(store_dir), config_hash=config.config_hash())

    store = EventStore(
        store_dir,
        embedder=HashingEmbedder(config.retrieval_dim, config.retrieval_seed),
        window_days=config.window_days,
        id_prefix=config.event_id_prefix,
    )
    worker = PipelineWorker(config, store)

    with open(documents_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            report.documents_read += 1
            try:
                doc = Document.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                report.parse_errors.append(f"line {line_no}: {exc}")
                continue
            try:
                assignment, _ = worker.ingest_document(doc)
            except StreamOrderError as exc:
                report.order_errors.append(f"line {line_no}: {exc}")
                continue
            report.documents_accepted += 1
            if assignments_out is not None:
                assignments_out.write(canonical_json(assignment.to_dict()) + "\n")

    worker.drain()
    store.commit()
    report.events_created = len(store)
    store.close()

    with open(store_dir / RUN_MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return report
