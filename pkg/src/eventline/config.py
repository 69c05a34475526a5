"""Run configuration. Every tunable constant lives here and nowhere else.

All other modules import their defaults from this module, so changing a
value in one Config (or via a ``QDET_``-prefixed environment variable)
changes it everywhere. A constants-audit test enforces that no stage
hard-codes its own copy.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, fields
from typing import Mapping

# Sliding-window span shared by clustering and retrieval.
WINDOW_DAYS = 30
# Retrieval depth of the candidate set.
TOP_K = 20

# Clustering: minimum centroid similarity to join an existing cluster.
ASSIGN_THRESHOLD = 0.65

# Concise-summary length band (Unicode scalar values) and reward shape.
LEN_MIN = 5
LEN_MAX = 15
LAMBDA_SHORT = 0.5
LAMBDA_LONG = 0.3
ALPHA = 1.5

# Deterministic oracle timeline generator.
RELEVANCE_THRESHOLD = 0.35
DEDUP_THRESHOLD = 0.9
MAX_TIMELINE_EVENTS = 10

# Embedders: one wide space for document clustering, one narrow for
# summary retrieval.
CLUSTERING_DIM = 1024
RETRIEVAL_DIM = 256
CLUSTERING_SEED = 101
RETRIEVAL_SEED = 202

# How character counts are taken: "scalar" = Unicode scalar values after
# trimming, "utf8" = encoded byte length (sensitivity checks only).
CHAR_COUNT_MODE = "scalar"

# Evaluation knobs: text-mode match threshold, alignment weights and the
# cost above which an assignment pair is treated as unaligned.
TEXT_MATCH_THRESHOLD = 0.6
AR1_SEMANTIC_WEIGHT = 0.5
AR1_TIME_WEIGHT = 0.5
AR1_UNALIGNED_CUTOFF = 0.9

ENV_PREFIX = "QDET_"

SECONDS_PER_DAY = 86400


@dataclass
class Config:
    """Bag of every pipeline constant, JSON round-trippable."""

    window_days: int = WINDOW_DAYS
    k: int = TOP_K
    assign_threshold: float = ASSIGN_THRESHOLD

    l_min: int = LEN_MIN
    l_max: int = LEN_MAX
    lambda_short: float = LAMBDA_SHORT
    lambda_long: float = LAMBDA_LONG
    alpha: float = ALPHA
    candidates_per_generator: int = 8

    relevance_threshold: float = RELEVANCE_THRESHOLD
    dedup_threshold: float = DEDUP_THRESHOLD
    max_timeline_events: int = MAX_TIMELINE_EVENTS

    clustering_dim: int = CLUSTERING_DIM
    retrieval_dim: int = RETRIEVAL_DIM
    clustering_seed: int = CLUSTERING_SEED
    retrieval_seed: int = RETRIEVAL_SEED
    datagen_seed: int = 7

    char_count_mode: str = CHAR_COUNT_MODE

    text_match_threshold: float = TEXT_MATCH_THRESHOLD
    ar1_semantic_weight: float = AR1_SEMANTIC_WEIGHT
    ar1_time_weight: float = AR1_TIME_WEIGHT
    ar1_unaligned_cutoff: float = AR1_UNALIGNED_CUTOFF

    heat_invert: bool = False

    event_id_prefix: str = "ev"

    # External text-generation endpoint (chat-completions shaped).
    external_base_url: str = ""
    external_model: str = "default"
    external_timeout_s: float = 10.0
    external_retries: int = 2
    external_backoff_s: float = 0.5
    external_max_in_flight: int = 4

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_file(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "Config":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_env_overrides(self, env: Mapping[str, str] | None = None) -> "Config":
        """Apply QDET_<FIELD> environment overrides, coerced to field types."""
        env = os.environ if env is None else env
        updates = {}
        for f in fields(self):
            raw = env.get(ENV_PREFIX + f.name.upper())
            if raw is None:
                continue
            updates[f.name] = _coerce(raw, f.type, f.name)
        return dataclasses.replace(self, **updates) if updates else self

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _coerce(raw: str, type_name: str, field_name: str):
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    if type_name == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean for {field_name}: {raw!r}")
    return raw


def load_config(path: str | os.PathLike | None = None,
                env: Mapping[str, str] | None = None) -> Config:
    """File values (when given) + environment overrides on top of defaults."""
    cfg = Config.from_file(path) if path else Config()
    return cfg.with_env_overrides(env)
