"""Event clustering and clustering-quality metrics.

K-means (seeded k-means++ with Lloyd iterations) covers evaluation with
a known class count; DBSCAN covers the unknown-count setting, labeling
unreachable points -1. NMI uses arithmetic-mean normalization with
natural-log internals; AMI subtracts the permutation-model expected
mutual information computed by log-factorial accumulation. Noise labels
(-1) become singleton classes before scoring.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .seeds import rng_for


# ---------------------------------------------------------------------------
# k-means


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest_sq.sum()
        if total == 0.0:  # all points coincide with a chosen center
            for cc in range(c, k):
                centers[cc] = points[int(rng.integers(n))]
            break
        probs = closest_sq / total
        pick = int(rng.choice(n, p=probs))
        centers[c] = points[pick]
        dist_sq = ((points - centers[c]) ** 2).sum(axis=1)
        closest_sq = np.minimum(closest_sq, dist_sq)
    return centers


def kmeans_with_trace(
    emb: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Labels, final centers, and the per-iteration objective trace."""
    points = np.asarray(emb, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    rng = rng_for(seed, "kmeans-init")
    centers = _plus_plus_init(points, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    inertia_trace: list[float] = []
    for _ in range(max_iter):
        dist_sq = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist_sq.argmin(axis=1)
        inertia_trace.append(float(dist_sq[np.arange(n), labels].sum()))
        new_centers = centers.copy()
        assigned_center_dist = dist_sq[np.arange(n), labels].copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = points[members].mean(axis=0)
        for c in range(k):
            if not (labels == c).any():
                far = int(assigned_center_dist.argmax())
                new_centers[c] = points[far]
                assigned_center_dist[far] = -np.inf
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    dist_sq = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = dist_sq.argmin(axis=1)
    inertia_trace.append(float(dist_sq[np.arange(n), labels].sum()))
    return labels, centers, inertia_trace


def kmeans(
    emb: np.ndarray, k: int, seed: int, max_iter: int = 300, tol: float = 1e-4
) -> np.ndarray:
    """Seeded k-means++ labels; empty clusters reseed to the farthest point."""
    return kmeans_with_trace(emb, k, seed, max_iter, tol)[0]


# ---------------------------------------------------------------------------
# dbscan


def dbscan(emb: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; unreachable non-core points are labeled -1.

    The neighborhood count includes the point itself. Expansion scans
    seeds in index order, so results are deterministic given input order.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    points = np.asarray(emb, dtype=np.float64)
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    neighbor_lists = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbor_lists])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        frontier = [i]
        visited[i] = True
        labels[i] = cluster
        while frontier:
            p = frontier.pop(0)
            for q in neighbor_lists[p]:
                q = int(q)
                if labels[q] == -1:
                    labels[q] = cluster
                if not visited[q] and core[q]:
                    visited[q] = True
                    frontier.append(q)
        cluster += 1
    return labels


# ---------------------------------------------------------------------------
# metrics


def _as_label_array(labels: Sequence[int]) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return arr


def _expand_noise(labels: np.ndarray) -> np.ndarray:
    """Each -1 becomes a fresh singleton class id."""
    out = labels.copy()
    noise = np.flatnonzero(labels == -1)
    if noise.size:
        next_id = int(labels.max(initial=-1)) + 1
        out[noise] = next_id + np.arange(noise.size)
    return out


def _contingency(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    _, ui = np.unique(u, return_inverse=True)
    _, vi = np.unique(v, return_inverse=True)
    table = np.zeros((ui.max() + 1, vi.max() + 1), dtype=np.int64)
    np.add.at(table, (ui, vi), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _mutual_information(table: np.ndarray, n: int) -> float:
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij:
                mi += (nij / n) * np.log(n * nij / (row[i] * col[j]))
    return mi


def nmi(u: Sequence[int], v: Sequence[int]) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    ua, va = _as_label_array(u), _as_label_array(v)
    if len(ua) != len(va):
        raise ValueError("label lists must have equal length")
    if len(ua) == 0:
        raise ValueError("labels must be non-empty")
    ua, va = _expand_noise(ua), _expand_noise(va)
    n = len(ua)
    table = _contingency(ua, va)
    hu = _entropy(table.sum(axis=1), n)
    hv = _entropy(table.sum(axis=0), n)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    if hu == 0.0 or hv == 0.0:
        return 0.0
    return _mutual_information(table, n) / ((hu + hv) / 2)


def expected_mutual_information(row: np.ndarray, col: np.ndarray, n: int) -> float:
    """E[MI] under the permutation model, hypergeometric weights via gammaln."""
    emi = 0.0
    log_n_fact = gammaln(n + 1)
    for a in row:
        for b in col:
            lo = max(1, a + b - n)
            hi = min(a, b)
            for nij in range(lo, hi + 1):
                log_prob = (
                    gammaln(a + 1)
                    + gammaln(b + 1)
                    + gammaln(n - a + 1)
                    + gammaln(n - b + 1)
                    - log_n_fact
                    - gammaln(nij + 1)
                    - gammaln(a - nij + 1)
                    - gammaln(b - nij + 1)
                    - gammaln(n - a - b + nij + 1)
                )
                emi += np.exp(log_prob) * (nij / n) * np.log(n * nij / (a * b))
    return float(emi)


def ami(u: Sequence[int], v: Sequence[int]) -> float:
    """Chance-adjusted MI: (MI - E[MI]) / (mean entropy - E[MI])."""
    ua, va = _as_label_array(u), _as_label_array(v)
    if len(ua) != len(va):
        raise ValueError("label lists must have equal length")
    if len(ua) == 0:
        raise ValueError("labels must be non-empty")
    ua, va = _expand_noise(ua), _expand_noise(va)
    n = len(ua)
    table = _contingency(ua, va)
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    hu = _entropy(row, n)
    hv = _entropy(col, n)
    mi = _mutual_information(table, n)
    emi = expected_mutual_information(row, col, n)
    denom = (hu + hv) / 2 - emi
    if abs(denom) < 1e-15:
        return 0.0
    return (mi - emi) / denom
