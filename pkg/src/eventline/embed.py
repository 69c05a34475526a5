"""Deterministic text embeddings and a cosine vector index.

``embed_text`` hashes character 2-/3-grams into signed buckets (seeded
64-bit blake2b) and L2-normalizes, so identical (text, dim, seed) inputs
yield bitwise-identical unit vectors with no model weights involved. Any
external provider mapping text to a unit-norm vector of a declared ``dim``
can replace it behind the same callable contract.

``VectorIndex`` is an exact scan over committed entries; it is the
reference implementation of the search contract. An approximate backend
may substitute for it if its recall@k against the exact index is at least
0.95 on the acceptance benchmark (see ``recall_at_k``).

Snapshot byte layout (little-endian throughout):

    magic   b"EVIDX001"
    uint32  dim
    uint64  count
    int64   seed
    then per entry:
    uint16  key byte length | key utf-8 bytes | int64 timestamp |
    dim * float32 vector values

Vectors are stored as float32 both in memory and on disk, so snapshots
round-trip bit-exactly and search results are identical before and after a
save/load cycle.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_MAGIC = b"EVIDX001"
_NORM_TOL = 1e-6

# blake2b(gram, key=seed) is deterministic but not free; n-grams repeat
# heavily across a corpus, so memoize raw 64-bit values per (seed, gram).
_HASH_CACHE: dict[tuple[int, str], int] = {}
_HASH_CACHE_MAX = 1_000_000


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    dim: int

    def __post_init__(self):
        if self.values.shape != (self.dim,):
            raise ValueError(f"embedding has {self.values.shape} values, declared dim {self.dim}")
        norm = float(np.linalg.norm(self.values.astype(np.float64)))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"embedding norm {norm} outside unit tolerance")


@dataclass(frozen=True, eq=False)
class IndexEntry:
    key: str
    embedding: Embedding
    timestamp: int


def _gram_value(gram: str, seed: int) -> int:
    cached = _HASH_CACHE.get((seed, gram))
    if cached is not None:
        return cached
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    value = int.from_bytes(
        hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest(),
        "little",
    )
    if len(_HASH_CACHE) < _HASH_CACHE_MAX:
        _HASH_CACHE[(seed, gram)] = value
    return value


def embed_text(text: str, dim: int, seed: int) -> Embedding:
    """Signed feature-hash of character 2- and 3-grams, L2-normalized.

    Texts shorter than two characters fall back to single characters so the
    feature set is never empty.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    s = text.strip()
    if not s:
        raise ValueError("cannot embed empty text")

    grams = [s[i:i + 2] for i in range(len(s) - 1)]
    grams += [s[i:i + 3] for i in range(len(s) - 2)]
    if not grams:
        grams = list(s)

    vec = np.zeros(dim, dtype=np.float64)
    for gram in grams:
        value = _gram_value(gram, seed)
        bucket = (value >> 1) % dim
        vec[bucket] += 1.0 if value & 1 else -1.0

    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Signed collisions cancelled everything; rescue with the whole string.
        vec[(_gram_value(s, seed) >> 1) % dim] = 1.0
        norm = 1.0
    return Embedding(values=(vec / norm).astype(np.float32), dim=dim)


class HashingEmbedder:
    """Callable text -> Embedding with a fixed (dim, seed)."""

    def __init__(self, dim: int, seed: int):
        self.dim = dim
        self.seed = seed

    def __call__(self, text: str) -> Embedding:
        return embed_text(text, self.dim, self.seed)


def cosine(a: Embedding, b: Embedding) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    value = float(np.dot(a.values.astype(np.float64), b.values.astype(np.float64)))
    return max(-1.0, min(1.0, value))


class VectorIndex:
    """Exact cosine scan with window filtering and deterministic ties.

    Writes accumulate in a pending buffer and become searchable only after
    ``commit()``; searches read an immutable committed snapshot, so one
    writer and many readers can proceed concurrently.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self._lock = threading.Lock()
        self._pending: list[tuple[str, np.ndarray, int]] = []
        self._key_set: set[str] = set()
        # Searches read this tuple without locking; commit() swaps it whole.
        self._snapshot: tuple[list[str], np.ndarray, np.ndarray] = (
            [], np.empty((0, dim), dtype=np.float32), np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self._snapshot[0])

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def keys(self) -> list[str]:
        return list(self._snapshot[0])

    def add(self, key: str, embedding: Embedding, timestamp: int) -> None:
        if embedding.dim != self.dim:
            raise ValueError(f"dimension mismatch: index {self.dim}, entry {embedding.dim}")
        with self._lock:
            if key in self._key_set:
                raise ValueError(f"duplicate index key: {key!r}")
            self._key_set.add(key)
            self._pending.append((key, embedding.values, int(timestamp)))

    def add_entry(self, entry: IndexEntry) -> None:
        self.add(entry.key, entry.embedding, entry.timestamp)

    def commit(self) -> None:
        """Make pending entries visible to subsequent searches."""
        with self._lock:
            if not self._pending:
                return
            keys, matrix, timestamps = self._snapshot
            new_vecs = np.stack([vec for _, vec, _ in self._pending]).astype(np.float32)
            new_ts = np.array([ts for _, _, ts in self._pending], dtype=np.int64)
            self._snapshot = (
                keys + [k for k, _, _ in self._pending],
                np.concatenate([matrix, new_vecs]),
                np.concatenate([timestamps, new_ts]),
            )
            self._pending = []

    def search(self, query: Embedding, k: int,
               window: tuple[int, int] | None = None) -> list[tuple[str, float]]:
        """Top-k committed entries by similarity desc, ties by key asc.

        ``window`` restricts candidates to timestamps in [t_lo, t_hi],
        both endpoints inclusive.
        """
        if query.dim != self.dim:
            raise ValueError(f"dimension mismatch: index {self.dim}, query {query.dim}")
        if k <= 0:
            raise ValueError("k must be positive")
        keys, matrix, timestamps = self._snapshot
        if not keys:
            return []

        if window is not None:
            t_lo, t_hi = window
            mask = (timestamps >= t_lo) & (timestamps <= t_hi)
            rows = np.nonzero(mask)[0]
        else:
            rows = np.arange(len(keys))
        if rows.size == 0:
            return []

        sims = matrix[rows].astype(np.float64) @ query.values.astype(np.float64)
        np.clip(sims, -1.0, 1.0, out=sims)
        key_arr = np.array([keys[i] for i in rows])
        order = np.lexsort((key_arr, -sims))[:k]
        return [(str(key_arr[i]), float(sims[i])) for i in order]

    def entries(self) -> list[tuple[str, np.ndarray, int]]:
        """Committed (key, vector, timestamp) triples in insertion order."""
        keys, matrix, timestamps = self._snapshot
        return [(k, matrix[i].copy(), int(timestamps[i])) for i, k in enumerate(keys)]

    def save(self, path) -> None:
        """Write the committed entries in the documented snapshot layout."""
        if self._pending:
            raise ValueError("commit before saving: pending entries present")
        keys, matrix, timestamps = self._snapshot
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQq", self.dim, len(keys), self.seed))
            for i, key in enumerate(keys):
                raw = key.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise ValueError(f"key too long to snapshot: {key[:32]!r}...")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<q", int(timestamps[i])))
                fh.write(matrix[i].astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "VectorIndex":
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"not an index snapshot: bad magic {magic!r}")
            dim, count, seed = struct.unpack("<IQq", fh.read(20))
            index = cls(dim=dim, seed=seed)
            row_bytes = 4 * dim
            for _ in range(count):
                (key_len,) = struct.unpack("<H", fh.read(2))
                key = fh.read(key_len).decode("utf-8")
                (ts,) = struct.unpack("<q", fh.read(8))
                values = np.frombuffer(fh.read(row_bytes), dtype="<f4").copy()
                norm = float(np.linalg.norm(values.astype(np.float64)))
                if abs(norm - 1.0) > _NORM_TOL:
                    raise ValueError(f"snapshot row {key!r} is not unit norm")
                index.add(key, Embedding(values=values, dim=dim), ts)
        index.commit()
        return index


def recall_at_k(candidate: VectorIndex, reference: VectorIndex,
                queries: Sequence[Embedding], k: int,
                window: tuple[int, int] | None = None) -> float:
    """Mean fraction of the reference top-k keys a candidate backend returns.

    The acceptance contract for any approximate backend is >= 0.95 at k=20;
    the exact index scores 1.0 by construction.
    """
    if not queries:
        raise ValueError("need at least one query")
    total = 0.0
    for q in queries:
        truth = {key for key, _ in reference.search(q, k, window)}
        if not truth:
            total += 1.0
            continue
        got = {key for key, _ in candidate.search(q, k, window)}
        total += len(truth & got) / len(truth)
    return total / len(queries)
