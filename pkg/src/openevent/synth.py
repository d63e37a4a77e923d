"""Deterministic synthetic corpus with planted events.

Each event owns a topic-word slice of the vocabulary, a primary hashtag
(always attached, so events stay internally connected), extra hashtags,
a user pool, and entities. Messages contaminate each element kind with
probability noise_rate by borrowing from shared pools, which creates
cross-event edges and lexical overlap. Word vectors cluster around
per-event anchor directions (orthonormal by construction), so semantic
features carry real signal. Block 0 holds only the known events; each
later block adds fresh novel event ids alongside the known ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .ingest import MessageRecord
from .seeds import rng_for

STREAM_START = datetime(2012, 10, 1, tzinfo=timezone.utc)


@dataclass
class SynthConfig:
    n_known_events: int = 5
    n_novel_events_per_block: int = 2
    msgs_per_event_per_block: int = 100
    vocab_size: int = 240
    topic_words_per_event: int = 8
    users_per_event: int = 12
    shared_user_pool: int = 30
    hashtags_per_event: int = 3
    shared_hashtag_pool: int = 12
    entities_per_event: int = 3
    shared_entity_pool: int = 12
    noise_rate: float = 0.1
    block_noise_growth: float = 0.0
    primary_hashtag_prob: float = 1.0
    novel_anchor_mix: float = 0.0
    noise_words_off_anchor: bool = False
    event_drift: float = 0.0
    jitter_growth: float = 0.0
    event_confusion: float = 0.0
    hot_event_factor: float = 1.0
    n_blocks: int = 1  # total blocks including block 0
    initial_days: int = 7
    block_days: int = 1
    tokens_per_message: int = 5
    d_sem: int = 16
    word_jitter: float = 0.3
    seed: int = 7

    def validate(self) -> None:
        counts = (
            self.n_known_events,
            self.msgs_per_event_per_block,
            self.vocab_size,
            self.topic_words_per_event,
            self.users_per_event,
            self.hashtags_per_event,
            self.entities_per_event,
            self.n_blocks,
            self.initial_days,
            self.block_days,
            self.tokens_per_message,
            self.d_sem,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all counts must be >= 1")
        if self.n_novel_events_per_block < 0:
            raise ValueError("n_novel_events_per_block must be >= 0")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.block_noise_growth < 0.0:
            raise ValueError("block_noise_growth must be >= 0")
        if not 0.0 <= self.primary_hashtag_prob <= 1.0:
            raise ValueError("primary_hashtag_prob must lie in [0, 1]")
        if not 0.0 <= self.novel_anchor_mix <= 1.0:
            raise ValueError("novel_anchor_mix must lie in [0, 1]")
        if not 0.0 <= self.event_drift < 1.0:
            raise ValueError("event_drift must lie in [0, 1)")
        if self.event_drift > 0.0 and self.d_sem <= self.total_events():
            raise ValueError(
                "event_drift requires d_sem > total_events() so drift can move "
                "anchors within the off-anchor subspace"
            )
        if self.jitter_growth < 0.0:
            raise ValueError("jitter_growth must be >= 0")
        if not 0.0 <= self.event_confusion <= 0.45:
            raise ValueError(
                "event_confusion must lie in [0, 0.45]; past 0.45 a drifted "
                "event is closer to its neighbour's topic than its own"
            )
        if self.event_confusion > 0.0 and self.n_known_events < 2:
            raise ValueError("event_confusion needs at least 2 known events")
        if self.hot_event_factor < 1.0:
            raise ValueError("hot_event_factor must be >= 1")
        if self.total_events() * self.topic_words_per_event > self.vocab_size:
            raise ValueError("vocab too small for the per-event topic slices")

    def total_events(self) -> int:
        return self.n_known_events + self.n_novel_events_per_block * max(
            0, self.n_blocks - 1
        )

    def known_event_ids(self) -> list[int]:
        return list(range(self.n_known_events))


def _event_message_count(config: SynthConfig, event: int, block: int) -> int:
    """Messages event ``event`` emits in ``block``.

    Blocks after the initial window are size-skewed when
    ``hot_event_factor > 1``: one known event per block — rotating as
    ``(block - 1) % n_known_events`` — flares up and emits ``factor``
    times the base count.  Block 0 stays balanced, so supervised
    pre-training sees even classes while later clustering faces the
    heavy-tailed sizes typical of live streams.
    """
    base = config.msgs_per_event_per_block
    if (
        config.hot_event_factor > 1.0
        and block > 0
        and event == (block - 1) % config.n_known_events
    ):
        return round(base * config.hot_event_factor)
    return base


def _drifts(config: SynthConfig, event: int, block: int) -> bool:
    """Whether this event's vocabulary evolves in this block.

    Only known events evolve: a novel event exists for a single block, so
    it has nothing to drift from.  Evolution means fresh per-block word
    tokens, whose vectors move (event_drift) and/or scatter more
    (jitter_growth) relative to block 0.
    """
    evolving = (
        config.event_drift > 0.0
        or config.jitter_growth > 0.0
        or config.event_confusion > 0.0
    )
    return evolving and block > 0 and event < config.n_known_events


def _event_elements(config: SynthConfig, event: int, block: int = 0) -> dict:
    """Deterministic pools owned by one event id.

    With ``event_drift`` active, a known event's topic words are fresh
    tokens in every block ≥ 1 (embedded around a rotated anchor by
    generate_embedding_table); identity glue — hashtags, users, entities —
    stays fixed so the graph keeps tying the event together while its
    vocabulary moves.
    """
    w0 = event * config.topic_words_per_event
    if _drifts(config, event, block):
        words = [
            f"w_e{event}_b{block}_{i}" for i in range(config.topic_words_per_event)
        ]
    else:
        words = [f"w{w0 + i:04d}" for i in range(config.topic_words_per_event)]
    return {
        "words": words,
        "hashtags": [f"#e{event}t{i}" for i in range(config.hashtags_per_event)],
        "users": [f"user_e{event}_{i}" for i in range(config.users_per_event)],
        "entities": [f"ent_e{event}_{i}" for i in range(config.entities_per_event)],
    }


def _shared_pools(config: SynthConfig) -> dict:
    n_topic = config.total_events() * config.topic_words_per_event
    return {
        "words": [f"w{i:04d}" for i in range(n_topic, config.vocab_size)],
        "hashtags": [f"#shared{i}" for i in range(config.shared_hashtag_pool)],
        "users": [f"user_shared_{i}" for i in range(config.shared_user_pool)],
        "entities": [f"ent_shared_{i}" for i in range(config.shared_entity_pool)],
    }


def _block_events(config: SynthConfig, block: int) -> list[int]:
    events = config.known_event_ids()
    if block > 0:
        first = config.n_known_events + (block - 1) * config.n_novel_events_per_block
        events += [first + i for i in range(config.n_novel_events_per_block)]
    return events


def _block_window(config: SynthConfig, block: int) -> tuple[datetime, float]:
    if block == 0:
        return STREAM_START, config.initial_days * 86400.0
    start = STREAM_START + timedelta(
        days=config.initial_days + (block - 1) * config.block_days
    )
    return start, config.block_days * 86400.0


def generate_corpus(config: SynthConfig) -> list[MessageRecord]:
    """Planted-event message stream; every record carries its event_id."""
    config.validate()
    shared = _shared_pools(config)
    records: list[MessageRecord] = []
    for block in range(config.n_blocks):
        start, width = _block_window(config, block)
        rng = rng_for(config.seed, "corpus-block", block)
        block_noise = min(1.0, config.noise_rate + block * config.block_noise_growth)
        for event in _block_events(config, block):
            pools = _event_elements(config, event, block)
            for m in range(_event_message_count(config, event, block)):
                noisy = lambda: rng.random() < block_noise

                tokens = []
                for _ in range(config.tokens_per_message):
                    pool = (
                        shared["words"]
                        if noisy() and shared["words"]
                        else pools["words"]
                    )
                    tokens.append(pool[int(rng.integers(len(pool)))])

                if rng.random() < config.primary_hashtag_prob:
                    hashtags = [pools["hashtags"][0]]  # primary: intra-event clique
                else:
                    hashtags = [
                        pools["hashtags"][int(rng.integers(config.hashtags_per_event))]
                    ]
                if rng.random() < 0.5 and config.hashtags_per_event > 1:
                    extra = 1 + int(rng.integers(config.hashtags_per_event - 1))
                    hashtags.append(pools["hashtags"][extra])
                if noisy() and shared["hashtags"]:
                    hashtags.append(
                        shared["hashtags"][int(rng.integers(len(shared["hashtags"])))]
                    )

                if noisy() and shared["users"]:
                    author = shared["users"][int(rng.integers(len(shared["users"])))]
                else:
                    author = pools["users"][int(rng.integers(len(pools["users"])))]
                mentions = []
                for _ in range(int(rng.integers(3))):
                    pool = (
                        shared["users"]
                        if noisy() and shared["users"]
                        else pools["users"]
                    )
                    mentions.append(pool[int(rng.integers(len(pool)))])

                entities = []
                pool = (
                    shared["entities"]
                    if noisy() and shared["entities"]
                    else pools["entities"]
                )
                entities.append(pool[int(rng.integers(len(pool)))])

                if block == 0 and event == config.known_event_ids()[0] and m == 0:
                    offset = 0.0  # pin the stream start so block splits anchor here
                else:
                    offset = float(rng.uniform(0.0, width))
                ts = start + timedelta(seconds=int(offset))

                records.append(
                    MessageRecord(
                        id=f"b{block}e{event}m{m}",
                        tokens=tuple(tokens),
                        author=author,
                        mentioned_users=tuple(mentions),
                        hashtags=tuple(hashtags),
                        entities=tuple(entities),
                        timestamp=ts,
                        event_id=event,
                    )
                )
    return records


def _semantic_basis(config: SynthConfig) -> np.ndarray:
    """Seeded orthonormal basis of the semantic space (d_sem rows).

    The first total_events() rows seed the event anchors; the remaining rows
    span the off-anchor subspace used for unclustered filler vocabulary when
    ``noise_words_off_anchor`` is set.
    """
    if config.total_events() > config.d_sem:
        raise ValueError(
            "d_sem must be >= total number of events for orthonormal anchors"
        )
    rng = rng_for(config.seed, "embed-anchors")
    basis, _ = np.linalg.qr(rng.standard_normal((config.d_sem, config.d_sem)))
    return basis.T.copy()


def event_anchors(config: SynthConfig) -> np.ndarray:
    """Unit anchor directions, one per event.

    Known-event anchors are mutually orthonormal.  A novel event's anchor
    interpolates between a fresh orthonormal direction and the normalized mean
    of all known anchors, controlled by ``novel_anchor_mix``: at 0.0 novel
    events are as separable as known ones; as the mix grows, novel messages
    drift toward known topics collectively while still matching none of them
    individually — the hard open-set regime.
    """
    config.validate()
    n_events = config.total_events()
    anchors = _semantic_basis(config)[:n_events]
    k = config.n_known_events
    centroid = anchors[:k].mean(axis=0)
    centroid /= np.linalg.norm(centroid)
    for ev in range(k, n_events):
        mixed = config.novel_anchor_mix * centroid + (
            1.0 - config.novel_anchor_mix
        ) * anchors[ev]
        anchors[ev] = mixed / np.linalg.norm(mixed)
    return anchors


def drifted_anchors(config: SynthConfig) -> np.ndarray:
    """Per-block anchors for known events, shape (n_known, n_blocks, d_sem).

    Block 0 holds the base anchors.  Two kinds of evolution move them in
    later blocks:

    * ``event_drift`` rotates each anchor toward a fresh seeded direction
      drawn from the subspace orthogonal to all base anchors:
      ``a[e, b] = normalize((1 - drift) * a[e, b-1] + drift * u[e, b])`` —
      evolving vocabulary that stays equally far from every other topic.
    * ``event_confusion`` mixes each anchor toward the *next* known
      event's base anchor with weight ``min(0.45, confusion * b)`` —
      stories bleeding into a neighbouring topic, which compresses the
      angles between event clusters while each anchor still stays closest
      to its own origin.
    """
    config.validate()
    base = event_anchors(config)
    span = _semantic_basis(config)[: config.total_events()]
    k = config.n_known_events
    out = np.zeros((k, config.n_blocks, config.d_sem))
    out[:, 0] = base[:k]
    chained = base[:k].copy()  # event_drift accumulates block to block
    for block in range(1, config.n_blocks):
        for event in range(k):
            if config.event_drift > 0.0:
                rng = rng_for(config.seed, "drift", event, block)
                u = rng.standard_normal(config.d_sem)
                u -= span.T @ (span @ u)  # keep drift off every base anchor
                u /= np.linalg.norm(u)
                mixed = (1.0 - config.event_drift) * chained[event]
                mixed = mixed + config.event_drift * u
                chained[event] = mixed / np.linalg.norm(mixed)
            anchor = chained[event]
            c = min(0.45, config.event_confusion * block)
            if c > 0.0:
                toward = base[(event + 1) % k]
                anchor = (1.0 - c) * anchor + c * toward
                anchor = anchor / np.linalg.norm(anchor)
            out[event, block] = anchor
    return out


def generate_embedding_table(config: SynthConfig) -> dict[str, np.ndarray]:
    """Unit word vectors clustered around per-event anchor directions.

    Shared-pool words get unclustered unit vectors: isotropic by default, or
    confined to the subspace orthogonal to every event anchor when
    ``noise_words_off_anchor`` is set (filler chatter unrelated to any topic).
    With ``event_drift`` active, each known event's per-block word pools
    cluster around that block's drifted anchor.
    """
    config.validate()
    n_events = config.total_events()
    anchors = event_anchors(config)

    def _around(anchor: np.ndarray, w: str, jitter: float) -> np.ndarray:
        wrng = rng_for(config.seed, "embed-word", w)
        vec = anchor + jitter * wrng.standard_normal(config.d_sem)
        return vec / np.linalg.norm(vec)

    table: dict[str, np.ndarray] = {}
    for event in range(n_events):
        for w in _event_elements(config, event)["words"]:
            table[w] = _around(anchors[event], w, config.word_jitter)
    evolving = (
        config.event_drift > 0.0
        or config.jitter_growth > 0.0
        or config.event_confusion > 0.0
    )
    if evolving:
        per_block = drifted_anchors(config)
        for event in range(config.n_known_events):
            for block in range(1, config.n_blocks):
                jitter = config.word_jitter * (1.0 + config.jitter_growth * block)
                for w in _event_elements(config, event, block)["words"]:
                    table[w] = _around(per_block[event, block], w, jitter)
    off_basis = _semantic_basis(config)[n_events:]
    for w in _shared_pools(config)["words"]:
        wrng = rng_for(config.seed, "embed-word", w)
        if config.noise_words_off_anchor:
            if not len(off_basis):
                raise ValueError(
                    "noise_words_off_anchor requires d_sem > total_events()"
                )
            vec = wrng.standard_normal(len(off_basis)) @ off_basis
        else:
            vec = wrng.standard_normal(config.d_sem)
        table[w] = vec / np.linalg.norm(vec)
    return table
