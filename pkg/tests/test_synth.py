"""Tests for the planted-event corpus generator."""

from collections import Counter
from datetime import timedelta
from itertools import combinations

import numpy as np
import pytest

from openevent.ingest import serialize_messages, split_blocks
from openevent.synth import (
    STREAM_START,
    SynthConfig,
    generate_corpus,
    generate_embedding_table,
)


def block_of(record, config):
    """Independent block assignment from the timestamp alone."""
    days = (record.timestamp - STREAM_START).total_seconds() / 86400.0
    if days < config.initial_days:
        return 0
    return 1 + int((days - config.initial_days) / config.block_days)


class TestCorpusShape:
    def test_block0_counts_exact(self):
        config = SynthConfig()
        records = generate_corpus(config)
        assert len(records) == 5 * 100
        counts = Counter(r.event_id for r in records)
        assert counts == {e: 100 for e in range(5)}

    def test_block_event_composition(self):
        config = SynthConfig(n_blocks=4, msgs_per_event_per_block=20)
        records = generate_corpus(config)
        per_block = {}
        for r in records:
            per_block.setdefault(block_of(r, config), Counter())[r.event_id] += 1
        assert set(per_block) == {0, 1, 2, 3}
        assert per_block[0] == {e: 20 for e in range(5)}
        for b in (1, 2, 3):
            novel = {5 + (b - 1) * 2, 5 + (b - 1) * 2 + 1}
            expected = {e: 20 for e in set(range(5)) | novel}
            assert per_block[b] == expected

    def test_novel_ids_never_in_block0(self):
        config = SynthConfig(n_blocks=4, msgs_per_event_per_block=15)
        for r in generate_corpus(config):
            if block_of(r, config) == 0:
                assert r.event_id < config.n_known_events

    def test_label_set_constant_without_novel_events(self):
        config = SynthConfig(
            n_blocks=3, n_novel_events_per_block=0, msgs_per_event_per_block=10
        )
        records = generate_corpus(config)
        per_block = {}
        for r in records:
            per_block.setdefault(block_of(r, config), set()).add(r.event_id)
        assert per_block == {b: set(range(5)) for b in range(3)}

    def test_ids_unique(self):
        records = generate_corpus(SynthConfig(n_blocks=2))
        ids = [r.id for r in records]
        assert len(ids) == len(set(ids))

    def test_vocab_too_small_rejected(self):
        config = SynthConfig(vocab_size=30, topic_words_per_event=8)
        with pytest.raises(ValueError):
            generate_corpus(config)


class TestDeterminism:
    def test_bit_identical_regeneration(self):
        config = SynthConfig(n_blocks=3, msgs_per_event_per_block=12)
        first = serialize_messages(generate_corpus(config))
        second = serialize_messages(generate_corpus(config))
        assert first == second

    def test_seed_changes_corpus(self):
        a = serialize_messages(generate_corpus(SynthConfig(seed=7)))
        b = serialize_messages(generate_corpus(SynthConfig(seed=8)))
        assert a != b

    def test_embedding_table_deterministic(self):
        config = SynthConfig()
        ta = generate_embedding_table(config)
        tb = generate_embedding_table(config)
        assert set(ta) == set(tb)
        for w in ta:
            assert np.array_equal(ta[w], tb[w])


class TestNoiseFreeGuarantees:
    def test_every_intra_event_pair_shares_a_hashtag(self):
        config = SynthConfig(noise_rate=0.0, msgs_per_event_per_block=25)
        records = generate_corpus(config)
        by_event = {}
        for r in records:
            by_event.setdefault(r.event_id, []).append(r)
        for event, msgs in by_event.items():
            for a, b in combinations(msgs, 2):
                assert set(a.hashtags) & set(b.hashtags), (a.id, b.id)

    def test_no_inter_event_hashtag_collisions(self):
        config = SynthConfig(noise_rate=0.0, msgs_per_event_per_block=25, n_blocks=2)
        records = generate_corpus(config)
        tags_by_event = {}
        for r in records:
            tags_by_event.setdefault(r.event_id, set()).update(r.hashtags)
        for ea, eb in combinations(sorted(tags_by_event), 2):
            assert not (tags_by_event[ea] & tags_by_event[eb])

    def test_all_elements_event_owned(self):
        config = SynthConfig(noise_rate=0.0, msgs_per_event_per_block=10)
        words_per = config.topic_words_per_event
        for r in generate_corpus(config):
            e = r.event_id
            own_words = {f"w{e * words_per + i:04d}" for i in range(words_per)}
            assert set(r.tokens) <= own_words
            assert all(h.startswith(f"#e{e}t") for h in r.hashtags)
            assert r.author.startswith(f"user_e{e}_")
            assert all(u.startswith(f"user_e{e}_") for u in r.mentioned_users)
            assert all(x.startswith(f"ent_e{e}_") for x in r.entities)


class TestSamplerRecipeOracle:
    """Re-derive the documented sampling recipe and check the default corpus."""

    def test_default_corpus_matches_recipe(self):
        config = SynthConfig(n_blocks=3, seed=7)
        records = generate_corpus(config)
        known = set(range(config.n_known_events))
        n_topic_words = config.total_events() * config.topic_words_per_event
        shared_words = {f"w{i:04d}" for i in range(n_topic_words, config.vocab_size)}
        shared_tags = {f"#shared{i}" for i in range(config.shared_hashtag_pool)}
        shared_users = {f"user_shared_{i}" for i in range(config.shared_user_pool)}
        shared_ents = {f"ent_shared_{i}" for i in range(config.shared_entity_pool)}

        per_block_event = Counter()
        noisy_tokens = 0
        total_tokens = 0
        for r in records:
            b = block_of(r, config)
            e = r.event_id
            per_block_event[(b, e)] += 1
            own_words = {
                f"w{e * config.topic_words_per_event + i:04d}"
                for i in range(config.topic_words_per_event)
            }
            own_tags = {f"#e{e}t{i}" for i in range(config.hashtags_per_event)}
            own_users = {f"user_e{e}_{i}" for i in range(config.users_per_event)}
            own_ents = {f"ent_e{e}_{i}" for i in range(config.entities_per_event)}

            assert len(r.tokens) == config.tokens_per_message
            assert set(r.tokens) <= own_words | shared_words
            noisy_tokens += sum(t in shared_words for t in r.tokens)
            total_tokens += len(r.tokens)

            assert r.hashtags[0] == f"#e{e}t0"
            assert set(r.hashtags) <= own_tags | shared_tags
            assert r.author in own_users | shared_users
            assert set(r.mentioned_users) <= own_users | shared_users
            assert set(r.entities) <= own_ents | shared_ents
            assert 1 <= len(r.entities) <= 2

            start = STREAM_START + timedelta(
                days=0 if b == 0 else config.initial_days + (b - 1) * config.block_days
            )
            width = timedelta(days=config.initial_days if b == 0 else config.block_days)
            assert start <= r.timestamp < start + width

        for b in range(3):
            events = known if b == 0 else known | {5 + 2 * (b - 1), 6 + 2 * (b - 1)}
            for e in events:
                assert per_block_event[(b, e)] == config.msgs_per_event_per_block

        # Token contamination should concentrate near noise_rate (binomial, 4 sigma).
        rate = noisy_tokens / total_tokens
        sigma = (config.noise_rate * (1 - config.noise_rate) / total_tokens) ** 0.5
        assert abs(rate - config.noise_rate) < 4 * sigma

    def test_first_timestamp_pinned_to_stream_start(self):
        records = generate_corpus(SynthConfig())
        assert min(r.timestamp for r in records) == STREAM_START

    def test_timestamps_fill_windows(self):
        config = SynthConfig(n_blocks=3, msgs_per_event_per_block=40)
        records = generate_corpus(config)
        spans = {}
        for r in records:
            b = block_of(r, config)
            lo, hi = spans.get(b, (r.timestamp, r.timestamp))
            spans[b] = (min(lo, r.timestamp), max(hi, r.timestamp))
        lo0, hi0 = spans[0]
        assert (hi0 - lo0) > timedelta(days=0.5 * config.initial_days)
        for b in (1, 2):
            lo, hi = spans[b]
            assert (hi - lo) > timedelta(days=0.5 * config.block_days)


class TestSplitAlignment:
    def test_split_blocks_recovers_generation_blocks(self):
        config = SynthConfig(n_blocks=4, msgs_per_event_per_block=15)
        records = generate_corpus(config)
        stream = split_blocks(
            records, initial_days=config.initial_days, block_days=config.block_days
        )
        assert len(stream.blocks) == 4
        for b, block in enumerate(stream.blocks):
            assert len(block) > 0
            for r in block:
                assert r.id.startswith(f"b{b}e")


class TestEmbeddingTable:
    def test_covers_corpus_tokens_with_unit_norm(self):
        config = SynthConfig(n_blocks=2)
        table = generate_embedding_table(config)
        for r in generate_corpus(config):
            for t in r.tokens:
                assert t in table
                assert abs(np.linalg.norm(table[t]) - 1.0) < 1e-12
                assert table[t].shape == (config.d_sem,)

    def test_same_topic_cosine_exceeds_cross_topic(self):
        config = SynthConfig()
        table = generate_embedding_table(config)
        per_event = []
        for e in range(config.total_events()):
            words = [
                f"w{e * config.topic_words_per_event + i:04d}"
                for i in range(config.topic_words_per_event)
            ]
            per_event.append(np.stack([table[w] for w in words]))
        same = []
        for vecs in per_event:
            sims = vecs @ vecs.T
            same.extend(sims[np.triu_indices(len(vecs), 1)].tolist())
        cross = []
        for a, b in combinations(range(len(per_event)), 2):
            cross.extend((per_event[a] @ per_event[b].T).ravel().tolist())
        # Every event's own words cohere more than any pair of topics overlaps
        # on average; word-level jitter makes a min/max comparison too strict.
        assert np.mean(same) > np.mean(cross) + 0.2
        for a, b in combinations(range(len(per_event)), 2):
            cross_ab = float(np.mean(per_event[a] @ per_event[b].T))
            same_a = per_event[a] @ per_event[a].T
            same_b = per_event[b] @ per_event[b].T
            assert float(np.mean(same_a[np.triu_indices(len(same_a), 1)])) > cross_ab
            assert float(np.mean(same_b[np.triu_indices(len(same_b), 1)])) > cross_ab

    def test_anchor_count_limited_by_dimension(self):
        config = SynthConfig(n_blocks=9, d_sem=16, vocab_size=400)
        # 5 known + 8 blocks * 2 novel = 21 events > 16 dims
        with pytest.raises(ValueError):
            generate_embedding_table(config)
