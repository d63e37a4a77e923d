"""Per-block homogeneous message graph.

Two messages are linked when they share at least one user (author or
mentioned), hashtag, or entity. Keys are compared exactly after
lowercasing and trimming; keys that are empty after trimming never link
anything. Construction uses an inverted index (key -> message indices)
so cost scales with clique sizes rather than all pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import MessageRecord


@dataclass
class MessageGraph:
    """Undirected message graph over one block.

    adjacency holds per-node sorted neighbor index lists with no
    duplicates and no self entries; self-inclusion is the encoder's job.
    """

    node_ids: list[str]
    features: np.ndarray
    adjacency: list[np.ndarray]

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2


def _norm_key(raw: str) -> str:
    return raw.strip().lower()


def link_keys(record: MessageRecord) -> set[str]:
    """Namespaced linkage keys for one message."""
    keys: set[str] = set()
    for user in (record.author, *record.mentioned_users):
        k = _norm_key(user)
        if k:
            keys.add("u:" + k)
    for tag in record.hashtags:
        k = _norm_key(tag)
        if k:
            keys.add("h:" + k)
    for ent in record.entities:
        k = _norm_key(ent)
        if k:
            keys.add("e:" + k)
    return keys


def build_graph(block: Sequence[MessageRecord], features: np.ndarray) -> MessageGraph:
    """Link messages sharing any user, hashtag, or entity."""
    n = len(block)
    if features.shape[0] != n:
        raise ValueError(
            f"features rows ({features.shape[0]}) must match block size ({n})"
        )
    index: dict[str, list[int]] = {}
    for i, record in enumerate(block):
        for key in link_keys(record):
            index.setdefault(key, []).append(i)

    neighbor_sets: list[set[int]] = [set() for _ in range(n)]
    for members in index.values():
        if len(members) < 2:
            continue
        for a in members:
            neighbor_sets[a].update(members)
    adjacency = []
    for i, nbrs in enumerate(neighbor_sets):
        nbrs.discard(i)
        adjacency.append(np.array(sorted(nbrs), dtype=np.int64))
    return MessageGraph(
        node_ids=[r.id for r in block],
        features=np.asarray(features, dtype=np.float64),
        adjacency=adjacency,
    )


def degree_stats(graph: MessageGraph) -> tuple[int, int, float, int]:
    """(min degree, max degree, mean degree, isolated-node count)."""
    if graph.n_nodes == 0:
        return (0, 0, 0.0, 0)
    degrees = [len(a) for a in graph.adjacency]
    return (
        min(degrees),
        max(degrees),
        sum(degrees) / len(degrees),
        sum(1 for d in degrees if d == 0),
    )


def edge_list(graph: MessageGraph) -> Iterable[tuple[int, int]]:
    """Each undirected edge once, as (i, j) with i < j, in index order."""
    for i, nbrs in enumerate(graph.adjacency):
        for j in nbrs:
            if i < j:
                yield (i, int(j))


def dump_edges(graph: MessageGraph, path: str | Path) -> None:
    """Write the edge list as 'id_i<TAB>id_j' lines for external inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in edge_list(graph):
            fh.write(f"{graph.node_ids[i]}\t{graph.node_ids[j]}\n")
