"""Incremental sliding-window clustering of the document stream.

Documents arrive in (near) chronological order and are assigned online to
the best-matching active cluster by centroid cosine similarity, provided
the cluster was touched within the time window and the similarity clears
the assignment threshold; otherwise a new cluster opens. Clustering is
strictly single pass: no re-clustering, and no merging across window
boundaries (long-running stories deliberately split).

Centroids are the L2-normalized mean of member embeddings. All tie-breaks
go to the lowest cluster id, so identical streams produce identical
partitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import config
from .core import Document, Event
from .embed import Embedding


class StreamOrderError(ValueError):
    """Document older than the stream head by more than the window."""


@dataclass(frozen=True)
class ClusterAssignment:
    doc_id: str
    cluster_id: int
    similarity_at_assignment: float | None
    created_new: bool

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "cluster_id": self.cluster_id,
            "similarity_at_assignment": self.similarity_at_assignment,
            "created_new": self.created_new,
        }


@dataclass
class _Cluster:
    row: int
    doc_ids: list[str]
    sum_vec: np.ndarray
    earliest_doc_id: str
    earliest_timestamp: int
    latest_timestamp: int

    def size(self) -> int:
        return len(self.doc_ids)


class ClusterState:
    """Single-writer online clustering state.

    Active clusters are matchable; sealed clusters have aged out of the
    window and only await finalization into events. Readers must not touch
    an instance while its writer is ingesting.
    """

    def __init__(self, dim: int = config.CLUSTERING_DIM,
                 window_days: int = config.WINDOW_DAYS,
                 assign_threshold: float = config.ASSIGN_THRESHOLD):
        if window_days <= 0:
            raise ValueError("window_days must be positive")
        if not 0.0 < assign_threshold < 1.0:
            raise ValueError("assign_threshold must lie in (0, 1)")
        self.dim = dim
        self.window_days = window_days
        self.assign_threshold = assign_threshold
        self.head_timestamp: int | None = None
        self.accepted_count = 0
        self._next_cluster_id = 0
        self._active: dict[int, _Cluster] = {}
        self._sealed: dict[int, _Cluster] = {}
        self._seen_doc_ids: set[str] = set()
        # Row-aligned views over active clusters, in cluster-id order.
        self._capacity = 64
        self._centroids = np.zeros((self._capacity, dim), dtype=np.float64)
        self._latest = np.zeros(self._capacity, dtype=np.int64)
        self._row_active = np.zeros(self._capacity, dtype=bool)
        self._row_cluster: list[int] = []

    @property
    def window_seconds(self) -> int:
        return self.window_days * config.SECONDS_PER_DAY

    def active_cluster_ids(self) -> list[int]:
        return sorted(self._active)

    def sealed_cluster_ids(self) -> list[int]:
        return sorted(self._sealed)

    def cluster_doc_ids(self, cluster_id: int) -> list[str]:
        return list(self._lookup(cluster_id).doc_ids)

    def centroid(self, cluster_id: int) -> np.ndarray:
        c = self._lookup(cluster_id)
        return _unit(c.sum_vec)

    def _lookup(self, cluster_id: int) -> _Cluster:
        cluster = self._active.get(cluster_id) or self._sealed.get(cluster_id)
        if cluster is None:
            raise KeyError(f"unknown cluster id: {cluster_id}")
        return cluster

    def _grow(self):
        self._capacity *= 2
        for name, fill in (("_centroids", 0.0), ("_latest", 0), ("_row_active", False)):
            old = getattr(self, name)
            shape = (self._capacity,) + old.shape[1:]
            new = np.full(shape, fill, dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def ingest(self, doc: Document, embedding: Embedding) -> ClusterAssignment:
        """Assign one document; join the best in-window cluster or open one."""
        if embedding.dim != self.dim:
            raise ValueError(f"dimension mismatch: state {self.dim}, embedding {embedding.dim}")
        if doc.id in self._seen_doc_ids:
            raise ValueError(f"document id already ingested: {doc.id!r}")
        if (self.head_timestamp is not None
                and doc.timestamp < self.head_timestamp - self.window_seconds):
            raise StreamOrderError(
                f"document {doc.id} at t={doc.timestamp} is older than the "
                f"stream head {self.head_timestamp} by more than the window")

        head = doc.timestamp if self.head_timestamp is None else max(
            self.head_timestamp, doc.timestamp)
        emb = embedding.values.astype(np.float64)

        best_id: int | None = None
        best_sim: float | None = None
        n_rows = len(self._row_cluster)
        if n_rows:
            cutoff = doc.timestamp - self.window_seconds
            eligible = np.nonzero(
                self._row_active[:n_rows] & (self._latest[:n_rows] >= cutoff))[0]
            if eligible.size:
                sims = self._centroids[eligible] @ emb
                pos = int(np.argmax(sims))  # first max = lowest cluster id
                best_id = self._row_cluster[int(eligible[pos])]
                best_sim = float(sims[pos])

        if best_sim is not None and best_sim >= self.assign_threshold:
            assert best_id is not None
            cluster = self._active[best_id]
            cluster.doc_ids.append(doc.id)
            cluster.sum_vec += emb
            cluster.latest_timestamp = max(cluster.latest_timestamp, doc.timestamp)
            if (doc.timestamp, doc.id) < (cluster.earliest_timestamp, cluster.earliest_doc_id):
                cluster.earliest_doc_id = doc.id
                cluster.earliest_timestamp = doc.timestamp
            self._centroids[cluster.row] = _unit(cluster.sum_vec)
            self._latest[cluster.row] = cluster.latest_timestamp
            assignment = ClusterAssignment(
                doc_id=doc.id, cluster_id=best_id,
                similarity_at_assignment=best_sim, created_new=False)
        else:
            cid = self._next_cluster_id
            self._next_cluster_id += 1
            row = len(self._row_cluster)
            if row >= self._capacity:
                self._grow()
            cluster = _Cluster(
                row=row, doc_ids=[doc.id], sum_vec=emb.copy(),
                earliest_doc_id=doc.id, earliest_timestamp=doc.timestamp,
                latest_timestamp=doc.timestamp)
            self._active[cid] = cluster
            self._row_cluster.append(cid)
            self._centroids[row] = _unit(cluster.sum_vec)
            self._latest[row] = doc.timestamp
            self._row_active[row] = True
            assignment = ClusterAssignment(
                doc_id=doc.id, cluster_id=cid,
                similarity_at_assignment=best_sim, created_new=True)

        self.head_timestamp = head
        self._seen_doc_ids.add(doc.id)
        self.accepted_count += 1
        return assignment

    def finalize_event(self, cluster_id: int, event_id: str | None = None) -> Event:
        """Event (without summary) for a cluster: earliest member represents it.

        The provisional id is cluster-scoped; the store re-ids events when
        it admits them.
        """
        cluster = self._lookup(cluster_id)
        return Event(
            id=event_id or f"cluster-{cluster_id}",
            summary="",
            timestamp=cluster.earliest_timestamp,
            representative_doc_id=cluster.earliest_doc_id,
            supporting_doc_ids=frozenset(cluster.doc_ids),
        )

    def evict_expired(self, now: int) -> list[int]:
        """Seal clusters last touched before now - window; returns their ids.

        A cluster touched exactly at now - window is still in-window and
        stays active.
        """
        cutoff = now - self.window_seconds
        expired = sorted(cid for cid, c in self._active.items()
                         if c.latest_timestamp < cutoff)
        for cid in expired:
            self._seal(cid)
        return expired

    def seal_all(self) -> list[int]:
        """End-of-stream flush: seal every active cluster."""
        remaining = sorted(self._active)
        for cid in remaining:
            self._seal(cid)
        return remaining

    def _seal(self, cluster_id: int) -> None:
        cluster = self._active.pop(cluster_id)
        self._row_active[cluster.row] = False
        self._sealed[cluster_id] = cluster

    def discard_sealed(self, cluster_id: int) -> None:
        """Drop a sealed cluster once its event has been stored."""
        del self._sealed[cluster_id]

    def partition(self) -> dict[int, list[str]]:
        """cluster id -> member doc ids, over active and sealed clusters."""
        out = {cid: list(c.doc_ids) for cid, c in self._active.items()}
        out.update({cid: list(c.doc_ids) for cid, c in self._sealed.items()})
        return out


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm else vec
