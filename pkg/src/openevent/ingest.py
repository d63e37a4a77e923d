"""Corpus ingestion: message records, block streams, and initial node features.

The corpus format is UTF-8 JSON lines, one message per line, with fields
id, tokens, author, mentioned_users, hashtags, entities, timestamp
(ISO-8601), event_id (optional / null for unlabeled messages).

Initial node features concatenate a semantic part (mean of pre-trained
word embeddings) with a 2-d temporal part derived from the OLE date
(whole days and day-fraction since 1899-12-30T00:00Z), min-max scaled
to [0, 1] over the corpus.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

OLE_EPOCH = datetime(1899, 12, 30, tzinfo=timezone.utc)

_REQUIRED_FIELDS = (
    "id",
    "tokens",
    "author",
    "mentioned_users",
    "hashtags",
    "entities",
    "timestamp",
)


class CorpusFormatError(ValueError):
    """Raised for malformed corpus input; carries the offending line number."""


@dataclass(frozen=True)
class MessageRecord:
    """One social message."""

    id: str
    tokens: tuple[str, ...]
    author: str
    mentioned_users: tuple[str, ...]
    hashtags: tuple[str, ...]
    entities: tuple[str, ...]
    timestamp: datetime
    event_id: int | None = None


@dataclass
class BlockStream:
    """Chronological partition of a corpus into message blocks M_0..M_i."""

    blocks: list[list[MessageRecord]]
    boundaries: list[datetime]  # len(blocks) + 1 half-open interval edges

    def __len__(self) -> int:
        return len(self.blocks)


def _parse_timestamp(raw: str) -> datetime:
    # Python 3.10 fromisoformat does not accept a trailing 'Z'.
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _str_list(value, field: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValueError(f"field '{field}' must be a list of strings")
    return tuple(value)


def record_from_dict(data: Mapping) -> MessageRecord:
    """Build a MessageRecord from a parsed JSON object. Extra keys are ignored."""
    for field in _REQUIRED_FIELDS:
        if field not in data:
            raise ValueError(f"missing field '{field}'")
    msg_id = data["id"]
    if not isinstance(msg_id, str) or not msg_id:
        raise ValueError("field 'id' must be a non-empty string")
    event_id = data.get("event_id")
    if event_id is not None and not isinstance(event_id, int):
        raise ValueError("field 'event_id' must be an integer or null")
    return MessageRecord(
        id=msg_id,
        tokens=_str_list(data["tokens"], "tokens"),
        author=str(data["author"]),
        mentioned_users=_str_list(data["mentioned_users"], "mentioned_users"),
        hashtags=_str_list(data["hashtags"], "hashtags"),
        entities=_str_list(data["entities"], "entities"),
        timestamp=_parse_timestamp(data["timestamp"]),
        event_id=event_id,
    )


def record_to_dict(record: MessageRecord) -> dict:
    iso = record.timestamp.astimezone(timezone.utc).isoformat()
    return {
        "id": record.id,
        "tokens": list(record.tokens),
        "author": record.author,
        "mentioned_users": list(record.mentioned_users),
        "hashtags": list(record.hashtags),
        "entities": list(record.entities),
        "timestamp": iso.replace("+00:00", "Z"),
        "event_id": record.event_id,
    }


def parse_messages(lines: Iterable[str]) -> list[MessageRecord]:
    """Parse JSON-lines messages, preserving input order.

    Raises CorpusFormatError naming the line number for malformed lines
    and the id for duplicates. Whitespace-only lines are skipped.
    """
    records: list[MessageRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            record = record_from_dict(data)
        except (ValueError, TypeError) as exc:
            raise CorpusFormatError(f"line {lineno}: {exc}") from exc
        if record.id in seen:
            raise CorpusFormatError(f"line {lineno}: duplicate id '{record.id}'")
        seen.add(record.id)
        records.append(record)
    return records


def serialize_messages(records: Sequence[MessageRecord]) -> list[str]:
    """Inverse of parse_messages: one JSON line per record, input order kept."""
    return [json.dumps(record_to_dict(r)) for r in records]


def load_corpus(path: str | Path) -> list[MessageRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_messages(fh)


def save_corpus(path: str | Path, records: Sequence[MessageRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record)) + "\n")


def split_blocks(
    records: Sequence[MessageRecord],
    initial_days: int = 7,
    block_days: int = 1,
) -> BlockStream:
    """Partition records into an initial block plus fixed-width later blocks.

    M_0 covers the first `initial_days` from the earliest timestamp; each
    later block covers `block_days`. Records within a block are ordered
    chronologically (stable by input position). Empty trailing blocks are
    dropped; interior empty blocks are kept so block indices stay aligned
    with calendar windows.
    """
    if not records:
        raise ValueError("cannot split an empty corpus into blocks")
    if initial_days < 1 or block_days < 1:
        raise ValueError("initial_days and block_days must be >= 1")

    t0 = min(r.timestamp for r in records)
    t_last = max(r.timestamp for r in records)
    first_edge = t0 + timedelta(days=initial_days)
    block_width = timedelta(days=block_days)

    n_later = 0
    if t_last >= first_edge:
        n_later = int((t_last - first_edge) / block_width) + 1

    blocks: list[list[tuple[datetime, int, MessageRecord]]] = [
        [] for _ in range(1 + n_later)
    ]
    for pos, record in enumerate(records):
        ts = record.timestamp
        if ts < first_edge:
            idx = 0
        else:
            idx = 1 + int((ts - first_edge) / block_width)
        blocks[idx].append((ts, pos, record))

    ordered = [[r for _, _, r in sorted(block)] for block in blocks]
    while ordered and not ordered[-1]:
        ordered.pop()

    boundaries = [t0, first_edge]
    for i in range(len(ordered) - 1):
        boundaries.append(first_edge + (i + 1) * block_width)
    return BlockStream(blocks=ordered, boundaries=boundaries)


def temporal_feature(timestamp: datetime) -> np.ndarray:
    """Unscaled 2-d temporal feature: (whole days, day fraction) since the OLE epoch."""
    if timestamp.tzinfo is None:
        timestamp = timestamp.replace(tzinfo=timezone.utc)
    delta = timestamp.astimezone(timezone.utc) - OLE_EPOCH
    if delta < timedelta(0):
        raise ValueError(f"timestamp {timestamp.isoformat()} precedes the OLE epoch")
    frac = (delta.seconds + delta.microseconds / 1e6) / 86400.0
    return np.array([float(delta.days), frac])


def semantic_feature(
    tokens: Sequence[str],
    table: Mapping[str, np.ndarray],
    d_sem: int,
    fallback_seed: int = 0,
) -> np.ndarray:
    """Mean embedding of in-vocabulary tokens.

    Out-of-vocabulary tokens are skipped. When nothing is in vocabulary the
    message gets a deterministic pseudo-random unit vector keyed by its
    sorted token multiset, so distinct messages stay distinguishable.
    """
    vectors = [table[t] for t in tokens if t in table]
    if vectors:
        return np.mean(np.asarray(vectors, dtype=np.float64), axis=0)
    material = "\x1f".join(sorted(tokens)) + f"\x1e{fallback_seed}"
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    vec = rng.standard_normal(d_sem)
    norm = np.linalg.norm(vec)
    if norm == 0.0:  # unreachable in practice, keeps the contract total
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


@dataclass
class CorpusFeatures:
    """Per-record initial features with the corpus temporal scaling attached.

    matrix rows follow record order; the last 2 columns are the scaled
    temporal components.
    """

    matrix: np.ndarray
    d_sem: int
    temporal_min: np.ndarray
    temporal_max: np.ndarray


def temporal_scaling(records: Sequence[MessageRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Min/max of the unscaled temporal features over a record collection.

    Fit once per corpus and pass to build_features so every block shares one
    scale; otherwise each block would be re-normalized to [0, 1] and the
    temporal drift between blocks would be erased.
    """
    if not records:
        raise ValueError("cannot fit temporal scaling on an empty corpus")
    temporal = np.stack([temporal_feature(r.timestamp) for r in records])
    return temporal.min(axis=0), temporal.max(axis=0)


def build_features(
    records: Sequence[MessageRecord],
    table: Mapping[str, np.ndarray],
    d_sem: int,
    fallback_seed: int = 0,
    scaling: tuple[np.ndarray, np.ndarray] | None = None,
) -> CorpusFeatures:
    """Semantic + temporal features for every record, temporal part min-max scaled.

    ``scaling`` supplies stored (min, max) parameters, e.g. fitted on the whole
    corpus via temporal_scaling; by default the parameters are fitted on
    ``records`` itself.  With stored parameters, records outside the fitted
    range scale beyond [0, 1] rather than being clamped.
    """
    n = len(records)
    semantic = np.zeros((n, d_sem))
    temporal = np.zeros((n, 2))
    for i, record in enumerate(records):
        semantic[i] = semantic_feature(record.tokens, table, d_sem, fallback_seed)
        temporal[i] = temporal_feature(record.timestamp)
    if scaling is None:
        t_min = temporal.min(axis=0)
        t_max = temporal.max(axis=0)
    else:
        t_min = np.asarray(scaling[0], dtype=np.float64)
        t_max = np.asarray(scaling[1], dtype=np.float64)
    span = t_max - t_min
    scaled = np.zeros_like(temporal)
    nonconst = span > 0
    scaled[:, nonconst] = (temporal[:, nonconst] - t_min[nonconst]) / span[nonconst]
    return CorpusFeatures(
        matrix=np.hstack([semantic, scaled]),
        d_sem=d_sem,
        temporal_min=t_min,
        temporal_max=t_max,
    )


def load_embedding_table(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    """Read a word2vec-style text table: header 'count dim', then 'token v1 .. v_d'."""
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusFormatError("embedding table header must be 'count dim'")
        count, dim = int(header[0]), int(header[1])
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise CorpusFormatError(
                    f"line {lineno}: expected {dim} components, got {len(parts) - 1}"
                )
            table[parts[0]] = np.array([float(v) for v in parts[1:]])
    if len(table) != count:
        raise CorpusFormatError(
            f"embedding table header promised {count} tokens, found {len(table)}"
        )
    return table, dim


def save_embedding_table(path: str | Path, table: Mapping[str, np.ndarray]) -> None:
    dims = {len(v) for v in table.values()}
    if len(dims) != 1:
        raise ValueError("all embedding vectors must share one dimension")
    dim = dims.pop()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {dim}\n")
        for token, vec in table.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")
