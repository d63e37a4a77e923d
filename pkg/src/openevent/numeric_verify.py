"""Cross-cutting verification harness.

finite_diff_check compares an analytic gradient against central finite
differences coordinate by coordinate. brute_force_metric recomputes
NMI/AMI from first principles (naive factorial combinatorics) as an
in-repo oracle for the metric implementations. Both are used by the
acceptance suite; neither is needed on the training path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .encoder import (
    EncoderParams,
    attention_preactivations,
    backward_from_cache,
    forward,
    forward_cached,
)
from .graph import MessageGraph


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_coordinate: str
    eps: float
    kink_flagged: bool = False

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def finite_diff_check(
    loss_fn: Callable[[EncoderParams], float],
    params: EncoderParams,
    analytic: EncoderParams,
    eps: float = 1e-4,
) -> GradCheckReport:
    """Central differences per parameter coordinate against `analytic`.

    Relative error per coordinate is |g_fd - g| / max(|g_fd|, |g|, 1e-8).
    """
    worst_err = 0.0
    worst_name = ""
    base = params.flat()
    names: list[str] = []
    for name in params.names():
        names.extend(
            f"{name}[{i}]" for i in range(params.tensors[name].size)
        )
    analytic_flat = analytic.flat()
    for c in range(base.size):
        bump = np.zeros_like(base)
        bump[c] = eps
        up = loss_fn(params.with_flat(base + bump))
        dn = loss_fn(params.with_flat(base - bump))
        g_fd = (up - dn) / (2 * eps)
        g = analytic_flat[c]
        rel = abs(g_fd - g) / max(abs(g_fd), abs(g), 1e-8)
        if rel > worst_err:
            worst_err = rel
            worst_name = names[c]
    return GradCheckReport(max_rel_error=worst_err, worst_coordinate=worst_name, eps=eps)


def kink_proximity(values: Sequence[np.ndarray], threshold: float = 1e-3) -> bool:
    """True when any value sits within `threshold` of a nonlinearity kink.

    Pass hinge margin slacks and/or attention preactivations; a trial this
    close to a kink should be re-sampled rather than graded, because the
    loss is not differentiable there and finite differences straddle the
    corner.
    """
    for arr in values:
        a = np.asarray(arr, dtype=float)
        if a.size and float(np.min(np.abs(a))) < threshold:
            return True
    return False


def encoder_loss_gradcheck(
    graph: MessageGraph,
    params: EncoderParams,
    emb_loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    eps: float = 1e-4,
    kink_threshold: float = 1e-3,
    extra_kink_values: Callable[[np.ndarray], Sequence[np.ndarray]] | None = None,
) -> GradCheckReport:
    """Check the full loss-through-encoder gradient against finite differences.

    `emb_loss_fn` maps embeddings to (scalar loss, gradient wrt embeddings);
    the analytic parameter gradient is that gradient pushed through the
    encoder backward pass. The report flags trials whose attention
    preactivations sit near a LeakyReLU kink; `extra_kink_values` lets the
    caller contribute loss-specific corner quantities (hinge slacks, pair
    distances) to the same screen.
    """
    emb, cache = forward_cached(graph, params)
    _, g_emb = emb_loss_fn(emb)
    analytic = backward_from_cache(cache, np.asarray(g_emb, dtype=float))
    report = finite_diff_check(
        lambda p: float(emb_loss_fn(forward(graph, p))[0]), params, analytic, eps
    )
    values = list(attention_preactivations(graph, params))
    if extra_kink_values is not None:
        values.extend(extra_kink_values(emb))
    report.kink_flagged = kink_proximity(values, kink_threshold)
    return report


def quadratic_self_test(eps: float = 1e-4) -> GradCheckReport:
    """Sanity check of the checker itself on ||theta||^2 (exact for quadratics)."""
    from .encoder import init_params

    params = init_params(0, d_sem=2, d_h=3, heads=2)
    analytic = params.copy()
    for name in analytic.names():
        analytic.tensors[name] = 2.0 * params.tensors[name]
    return finite_diff_check(
        lambda p: float(sum((t**2).sum() for t in p.tensors.values())),
        params,
        analytic,
        eps,
    )


# ---------------------------------------------------------------------------
# metric oracle


def _entropy_nat(counts: Sequence[int], n: int) -> float:
    h = 0.0
    for c in counts:
        if c:
            h -= (c / n) * math.log(c / n)
    return h


def brute_force_metric(u: Sequence[int], v: Sequence[int]) -> tuple[float, float]:
    """(nmi, ami) from a hand-built contingency table; n <= 20 only.

    E[MI] uses exact factorial hypergeometric probabilities. Noise labels
    (-1) become singleton classes, matching the evaluation convention.
    """
    if len(u) != len(v):
        raise ValueError("label lists must have equal length")
    n = len(u)
    if n > 20:
        raise ValueError("brute_force_metric is limited to n <= 20")
    if n == 0:
        raise ValueError("labels must be non-empty")

    def expand(labels):
        out = list(labels)
        nxt = max(out, default=-1) + 1
        for idx, val in enumerate(out):
            if val == -1:
                out[idx] = nxt
                nxt += 1
        return out

    uu, vv = expand(u), expand(v)
    cu = sorted(set(uu))
    cv = sorted(set(vv))
    table = [[0] * len(cv) for _ in cu]
    for a, b in zip(uu, vv):
        table[cu.index(a)][cv.index(b)] += 1
    row = [sum(r) for r in table]
    col = [sum(c) for c in zip(*table)]
    hu = _entropy_nat(row, n)
    hv = _entropy_nat(col, n)

    mi = 0.0
    for i, r in enumerate(table):
        for j, nij in enumerate(r):
            if nij:
                mi += (nij / n) * math.log(n * nij / (row[i] * col[j]))

    if hu == 0.0 and hv == 0.0:
        nmi_val = 1.0
    elif hu == 0.0 or hv == 0.0:
        nmi_val = 0.0
    else:
        nmi_val = mi / ((hu + hv) / 2)

    emi = 0.0
    for a in row:
        for b in col:
            for nij in range(max(1, a + b - n), min(a, b) + 1):
                prob = (
                    math.factorial(a)
                    * math.factorial(b)
                    * math.factorial(n - a)
                    * math.factorial(n - b)
                ) / (
                    math.factorial(n)
                    * math.factorial(nij)
                    * math.factorial(a - nij)
                    * math.factorial(b - nij)
                    * math.factorial(n - a - b + nij)
                )
                emi += prob * (nij / n) * math.log(n * nij / (a * b))
    denom = (hu + hv) / 2 - emi
    ami_val = 0.0 if abs(denom) < 1e-15 else (mi - emi) / denom
    return nmi_val, ami_val
