"""Pseudo supervision for unlabeled blocks.

Each message gets a reference similarity distribution (RSD): the softmax
of its normalized embedding dotted with the K frozen known-event
centroids. Pair consistency is the cosine of two RSD vectors; pairs with
consistency above 0.5 become pseudo-positives. RSD entropy flags
messages unlike any known event; those get larger pair-selection quotas.
Quality (consistency for positives, 1 - consistency for negatives)
weights each pair during fine-tuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeds import rng_for

DEFAULT_QUOTAS = ((20, 20), (10, 10))  # (high-entropy half, low half) x (pos, neg)


@dataclass
class ReferenceMatrix:
    """Unit-norm centroids of the known events, ordered by event id."""

    rows: np.ndarray  # (K, d)
    event_ids: list[int]

    @property
    def k(self) -> int:
        return self.rows.shape[0]


@dataclass
class RsdVector:
    p: np.ndarray
    entropy_bits: float


@dataclass(frozen=True)
class PseudoPair:
    i: int
    j: int
    consistency: float
    label: int
    quality: float


def compute_reference_matrix(
    emb: np.ndarray, labels: Sequence[int]
) -> ReferenceMatrix:
    """Per-class mean embedding, L2-normalized; rows ordered by ascending label."""
    labels = np.asarray(labels, dtype=np.int64)
    event_ids = sorted(int(c) for c in np.unique(labels))
    if len(event_ids) < 2:
        raise ValueError("reference matrix needs at least 2 known events")
    rows = []
    for cls in event_ids:
        mean = emb[labels == cls].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise ValueError(f"class {cls} has a zero-norm mean embedding")
        rows.append(mean / norm)
    return ReferenceMatrix(rows=np.asarray(rows), event_ids=event_ids)


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy in bits with the 0*log0 := 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum())


def rsd_matrix(emb: np.ndarray, reference: ReferenceMatrix, scale: float = 1.0) -> np.ndarray:
    """RSD probability rows for every embedding row (n x K).

    ``scale`` multiplies the cosine logits before the softmax (an inverse
    temperature).  At the default 1.0 the logits are plain cosines, which keeps
    every distribution close to uniform because cosines live in [-1, 1]; larger
    scales sharpen the distributions so that messages matching a reference
    profile become distinguishable from messages that match none.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    norms = np.linalg.norm(emb, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"zero-norm embedding row {int(zero[0])}")
    h_bar = emb / norms[:, None]
    logits = scale * (h_bar @ reference.rows.T)
    logits -= logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    return ex / ex.sum(axis=1, keepdims=True)


def rsd(h: np.ndarray, reference: ReferenceMatrix, scale: float = 1.0) -> RsdVector:
    """RSD of one embedding row, with its entropy."""
    p = rsd_matrix(np.asarray(h, dtype=np.float64)[None, :], reference, scale=scale)[0]
    return RsdVector(p=p, entropy_bits=entropy_bits(p))


def _prob(v) -> np.ndarray:
    return v.p if isinstance(v, RsdVector) else np.asarray(v, dtype=np.float64)


def consistency(p_i, p_j) -> float:
    """Cosine similarity of two RSD vectors; in [0, 1] for probability vectors.

    Clipped into [0, 1] so rounding on near-identical vectors cannot push the
    value past 1.
    """
    a, b = _prob(p_i), _prob(p_j)
    raw = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(0.0, raw))


def pseudo_label(consistency_value: float) -> int:
    """1 iff consistency exceeds 0.5 strictly; a tie at 0.5 is negative."""
    return 1 if consistency_value > 0.5 else 0


def quality(consistency_value: float, label: int) -> float:
    """Confidence of a pseudo label: C for positives, 1 - C for negatives."""
    return consistency_value if label == 1 else 1.0 - consistency_value


def consistency_matrix(rsd_rows: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix of RSD rows, clipped into [0, 1]."""
    norms = np.linalg.norm(rsd_rows, axis=1, keepdims=True)
    unit = rsd_rows / norms
    return np.clip(unit @ unit.T, 0.0, 1.0)


def split_by_entropy(entropies: np.ndarray) -> np.ndarray:
    """Boolean mask of the high-entropy half.

    Messages sort by (entropy, index); the top floor(n/2) form the high
    half, so with odd counts the median element lands in the low half.
    """
    n = len(entropies)
    order = np.lexsort((np.arange(n), entropies))
    high = np.zeros(n, dtype=bool)
    high[order[n - n // 2 :]] = True
    return high


def select_pairs(
    rsd_rows: np.ndarray,
    quotas: tuple[tuple[int, int], tuple[int, int]] = DEFAULT_QUOTAS,
    seed: int = 0,
) -> list[PseudoPair]:
    """Entropy-quota pair selection over one block.

    Anchors iterate in index order; each samples up to its half's
    (positive, negative) quota of fresh partners uniformly without
    replacement from the whole block. Unordered pairs never repeat.
    """
    n = rsd_rows.shape[0]
    if n < 2:
        raise ValueError("pair selection needs at least 2 messages")
    ent = np.array([entropy_bits(rsd_rows[i]) for i in range(n)])
    high_half = split_by_entropy(ent)
    consis = consistency_matrix(rsd_rows)
    positive = consis > 0.5
    np.fill_diagonal(positive, False)

    rng = rng_for(seed, "pair-selection")
    taken = np.zeros((n, n), dtype=bool)
    np.fill_diagonal(taken, True)
    out: list[PseudoPair] = []
    for i in range(n):
        q_pos, q_neg = quotas[0] if high_half[i] else quotas[1]
        for is_pos, quota in ((True, q_pos), (False, q_neg)):
            if quota <= 0:
                continue
            mask = (positive[i] == is_pos) & ~taken[i]
            candidates = np.flatnonzero(mask)
            if candidates.size == 0:
                continue
            if candidates.size > quota:
                picks = candidates[rng.permutation(candidates.size)[:quota]]
                picks = np.sort(picks)
            else:
                picks = candidates
            for j in picks:
                j = int(j)
                c = float(consis[i, j])
                label = pseudo_label(c)
                out.append(
                    PseudoPair(
                        i=i, j=j, consistency=c, label=label, quality=quality(c, label)
                    )
                )
                taken[i, j] = taken[j, i] = True
    return out


def pair_is_correct(pair: PseudoPair, true_labels: Sequence[int]) -> bool:
    """Does the pseudo label agree with the ground-truth same-event relation."""
    same = true_labels[pair.i] == true_labels[pair.j]
    return bool(same) == (pair.label == 1)
