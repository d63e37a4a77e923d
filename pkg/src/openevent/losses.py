"""Training objectives and pair sampling.

All losses return (scalar, gradient w.r.t. the embedding matrix); the
hinge subgradient at the kink is 0 and the Euclidean-distance gradient
at coincident points is 0, so gradients are always finite. Pair
sampling is fully determined by its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeds import rng_for

DEFAULT_MARGIN = 10.0


@dataclass
class PairBatch:
    """Matched positive/negative index pairs: pos[t] is compared against neg[t]."""

    pos: list[tuple[int, int]]
    neg: list[tuple[int, int]]

    def __post_init__(self):
        if len(self.pos) != len(self.neg):
            raise ValueError("pos and neg lists must have equal length")

    def __len__(self) -> int:
        return len(self.pos)


def _sample_distinct_pairs(
    rng: np.random.Generator,
    members: np.ndarray,
    count: int,
) -> list[tuple[int, int]]:
    """Uniform unordered distinct pairs within `members`, without replacement."""
    m = len(members)
    total = m * (m - 1) // 2
    if count >= total:
        return [
            (int(members[i]), int(members[j]))
            for i in range(m)
            for j in range(i + 1, m)
        ]
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < count:
        u, v = rng.integers(0, m, size=2)
        if u == v:
            continue
        a, b = (u, v) if u < v else (v, u)
        chosen.add((int(members[a]), int(members[b])))
    return sorted(chosen)


def _sample_inter_pairs(
    rng: np.random.Generator,
    labels: np.ndarray,
    count: int,
    n_inter_total: int,
) -> list[tuple[int, int]]:
    """Uniform inter-class unordered pairs without replacement."""
    n = len(labels)
    if count >= n_inter_total:
        return [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if labels[i] != labels[j]
        ]
    if n_inter_total <= 4 * count:
        universe = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if labels[i] != labels[j]
        ]
        picks = rng.choice(len(universe), size=count, replace=False)
        return [universe[p] for p in sorted(picks)]
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < count:
        u, v = rng.integers(0, n, size=2)
        if u == v or labels[u] == labels[v]:
            continue
        a, b = (u, v) if u < v else (v, u)
        chosen.add((int(a), int(b)))
    return sorted(chosen)


def sample_pairs(
    labels: Sequence[int], seed: int, cap_per_class: int = 1000
) -> PairBatch:
    """All intra-class pairs (capped per class) matched against equally many
    uniformly drawn inter-class pairs; matching order randomized by seed."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    rng = rng_for(seed, "pair-sampling")

    pos: list[tuple[int, int]] = []
    n_intra_total = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        m = len(members)
        n_intra_total += m * (m - 1) // 2
        if m < 2:
            continue
        pos.extend(_sample_distinct_pairs(rng, members, cap_per_class))
    if not pos:
        raise ValueError("degenerate batch: no intra-class pair exists")

    n_inter_total = n * (n - 1) // 2 - n_intra_total
    if n_inter_total == 0:
        raise ValueError("degenerate batch: no inter-class pair exists")
    if len(pos) > n_inter_total:
        order = rng.permutation(len(pos))[:n_inter_total]
        pos = [pos[t] for t in sorted(order)]
    neg = _sample_inter_pairs(rng, labels, len(pos), n_inter_total)
    neg = [neg[t] for t in rng.permutation(len(neg))]
    return PairBatch(pos=pos, neg=neg)


def triplets_from_pairs(batch: PairBatch) -> list[tuple[int, int, int]]:
    """Ablation adapter: matched pair t becomes (anchor, positive, negative)
    with the anchor taken from the positive pair and the negative partner
    from the matched negative pair."""
    return [(p[0], p[1], q[1]) for p, q in zip(batch.pos, batch.neg)]


# ---------------------------------------------------------------------------
# distance helpers


def _pair_distances(emb: np.ndarray, pairs: np.ndarray):
    """(distances, unit difference vectors); unit vector 0 where distance 0."""
    diff = emb[pairs[:, 0]] - emb[pairs[:, 1]]
    dist = np.linalg.norm(diff, axis=1)
    unit = np.zeros_like(diff)
    nz = dist > 0
    unit[nz] = diff[nz] / dist[nz, None]
    return dist, unit


def _accumulate(grad, indices, vectors):
    np.add.at(grad, indices, vectors)


# ---------------------------------------------------------------------------
# losses


def pairwise_loss(
    pairs: PairBatch,
    emb: np.ndarray,
    a: float = DEFAULT_MARGIN,
    pairing: str = "matched",
) -> tuple[float, np.ndarray]:
    """Hinge over matched pairs: sum_t max(D_pos_t - D_neg_t + a, 0).

    pairing="cartesian" instead sums the hinge over every pos x neg
    combination (quadratic cost; intended for small batches).
    """
    grad = np.zeros_like(emb)
    if len(pairs) == 0:
        return 0.0, grad
    pos = np.asarray(pairs.pos, dtype=np.int64)
    neg = np.asarray(pairs.neg, dtype=np.int64)
    d_pos, u_pos = _pair_distances(emb, pos)
    d_neg, u_neg = _pair_distances(emb, neg)

    if pairing == "matched":
        margin_vals = d_pos - d_neg + a
        active = margin_vals > 0
        loss = float(margin_vals[active].sum())
        act = active.astype(np.float64)
        _accumulate(grad, pos[:, 0], act[:, None] * u_pos)
        _accumulate(grad, pos[:, 1], -act[:, None] * u_pos)
        _accumulate(grad, neg[:, 0], -act[:, None] * u_neg)
        _accumulate(grad, neg[:, 1], act[:, None] * u_neg)
        return loss, grad
    if pairing == "cartesian":
        margin_mat = d_pos[:, None] - d_neg[None, :] + a
        active = margin_mat > 0
        loss = float(margin_mat[active].sum())
        pos_counts = active.sum(axis=1).astype(np.float64)
        neg_counts = active.sum(axis=0).astype(np.float64)
        _accumulate(grad, pos[:, 0], pos_counts[:, None] * u_pos)
        _accumulate(grad, pos[:, 1], -pos_counts[:, None] * u_pos)
        _accumulate(grad, neg[:, 0], -neg_counts[:, None] * u_neg)
        _accumulate(grad, neg[:, 1], neg_counts[:, None] * u_neg)
        return loss, grad
    raise ValueError(f"unknown pairing '{pairing}'")


def triplet_loss(
    triplets: Sequence[tuple[int, int, int]],
    emb: np.ndarray,
    a: float = DEFAULT_MARGIN,
) -> tuple[float, np.ndarray]:
    """Shared-anchor hinge: sum max(D(anchor,pos) - D(anchor,neg) + a, 0)."""
    grad = np.zeros_like(emb)
    if len(triplets) == 0:
        return 0.0, grad
    tri = np.asarray(triplets, dtype=np.int64)
    d_ap, u_ap = _pair_distances(emb, tri[:, [0, 1]])
    d_an, u_an = _pair_distances(emb, tri[:, [0, 2]])
    margin_vals = d_ap - d_an + a
    act = (margin_vals > 0).astype(np.float64)
    loss = float(margin_vals[margin_vals > 0].sum())
    _accumulate(grad, tri[:, 0], act[:, None] * (u_ap - u_an))
    _accumulate(grad, tri[:, 1], -act[:, None] * u_ap)
    _accumulate(grad, tri[:, 2], act[:, None] * u_an)
    return loss, grad


def orthogonal_loss(
    emb: np.ndarray, labels: Sequence[int]
) -> tuple[float, np.ndarray]:
    """Squared gap between the cosine-similarity matrix of row-normalized
    embeddings and the 0/1 same-label target matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    norms = np.linalg.norm(emb, axis=1)
    zero_rows = np.flatnonzero(norms == 0)
    if zero_rows.size:
        raise ValueError(f"zero-norm embedding row {int(zero_rows[0])}")
    h_bar = emb / norms[:, None]
    target = (labels[:, None] == labels[None, :]).astype(np.float64)
    sim = h_bar @ h_bar.T
    resid = sim - target
    loss = float((resid**2).sum())
    g_bar = 4.0 * resid @ h_bar
    # through row normalization: g = (g_bar - (g_bar . h_bar) h_bar) / norm
    proj = np.einsum("nd,nd->n", g_bar, h_bar)
    grad = (g_bar - proj[:, None] * h_bar) / norms[:, None]
    return loss, grad


def pretrain_loss(
    pairs: PairBatch,
    emb: np.ndarray,
    labels: Sequence[int],
    a: float = DEFAULT_MARGIN,
    lambda_o: float = 1.0,
    pairing: str = "matched",
) -> tuple[float, np.ndarray]:
    """Pairwise hinge plus lambda_o times the orthogonality constraint."""
    loss_p, grad_p = pairwise_loss(pairs, emb, a, pairing)
    if lambda_o == 0.0:
        return loss_p, grad_p
    loss_o, grad_o = orthogonal_loss(emb, labels)
    return loss_p + lambda_o * loss_o, grad_p + lambda_o * grad_o


def quality_weighted_loss(
    weighted_pairs: Sequence[tuple[tuple[int, int], float, tuple[int, int], float]],
    emb: np.ndarray,
    a: float = DEFAULT_MARGIN,
) -> tuple[float, np.ndarray]:
    """Matched hinge where term t is scaled by C_pos_t + 1 - C_neg_t.

    Weights are constants: no gradient flows through the consistencies.
    """
    grad = np.zeros_like(emb)
    if len(weighted_pairs) == 0:
        return 0.0, grad
    pos = np.asarray([term[0] for term in weighted_pairs], dtype=np.int64)
    c_pos = np.asarray([term[1] for term in weighted_pairs], dtype=np.float64)
    neg = np.asarray([term[2] for term in weighted_pairs], dtype=np.int64)
    c_neg = np.asarray([term[3] for term in weighted_pairs], dtype=np.float64)
    if np.any((c_pos < 0) | (c_pos > 1) | (c_neg < 0) | (c_neg > 1)):
        raise ValueError("consistency weights must lie in [0, 1]")
    weights = c_pos + 1.0 - c_neg
    d_pos, u_pos = _pair_distances(emb, pos)
    d_neg, u_neg = _pair_distances(emb, neg)
    margin_vals = d_pos - d_neg + a
    active = margin_vals > 0
    loss = float((weights * margin_vals)[active].sum())
    w_act = np.where(active, weights, 0.0)
    _accumulate(grad, pos[:, 0], w_act[:, None] * u_pos)
    _accumulate(grad, pos[:, 1], -w_act[:, None] * u_pos)
    _accumulate(grad, neg[:, 0], -w_act[:, None] * u_neg)
    _accumulate(grad, neg[:, 1], w_act[:, None] * u_neg)
    return loss, grad
