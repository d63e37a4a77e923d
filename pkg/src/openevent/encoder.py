"""Two-layer multi-head graph-attention encoder with exact hand-derived gradients.

Layer 1 concatenates head outputs and applies ELU; layer 2 averages head
outputs with no final nonlinearity. Attention per head over j in
N(i) ∪ {i}: softmax of LeakyReLU(slope 0.2, aᵀ[W h_i ‖ W h_j]).

Everything is float64 and deterministic: edge reductions run in node-index
order via sorted segment arrays, so repeated calls are bit-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .graph import MessageGraph
from .seeds import rng_for

LEAKY_SLOPE = 0.2
PARAMS_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# parameters


@dataclass
class EncoderParams:
    """Named parameter tensors plus the shape metadata that fixes them.

    Tensor names: W{layer}.{head} of shape (d_in(layer), d_h) and
    a{layer}.{head} of shape (2*d_h,). self_mode selects how a node's own
    representation enters layer outputs: "softmax" includes the node in
    its attention softmax; "add" adds W h_i outside a neighbors-only
    softmax.
    """

    d_sem: int
    d_h: int
    heads: int
    self_mode: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def d_in1(self) -> int:
        return self.d_sem + 2

    def w(self, layer: int, head: int) -> np.ndarray:
        return self.tensors[f"W{layer}.{head}"]

    def att(self, layer: int, head: int) -> np.ndarray:
        return self.tensors[f"a{layer}.{head}"]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            d_sem=self.d_sem,
            d_h=self.d_h,
            heads=self.heads,
            self_mode=self.self_mode,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(
            d_sem=self.d_sem,
            d_h=self.d_h,
            heads=self.heads,
            self_mode=self.self_mode,
            tensors={k: np.zeros_like(v) for k, v in self.tensors.items()},
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in self.names()])

    def with_flat(self, values: np.ndarray) -> "EncoderParams":
        out = self.copy()
        pos = 0
        for k in out.names():
            size = out.tensors[k].size
            out.tensors[k] = values[pos : pos + size].reshape(out.tensors[k].shape)
            pos += size
        if pos != values.size:
            raise ValueError("flat vector size does not match parameter count")
        return out


def init_params(
    seed: int,
    d_sem: int,
    d_h: int = 32,
    heads: int = 4,
    self_mode: str = "softmax",
) -> EncoderParams:
    """Glorot-uniform initialization, deterministic per seed."""
    if self_mode not in ("softmax", "add"):
        raise ValueError(f"unknown self_mode '{self_mode}'")
    rng = rng_for(seed, "encoder-init")
    tensors: dict[str, np.ndarray] = {}
    d_in = {1: d_sem + 2, 2: heads * d_h}
    for layer in (1, 2):
        for head in range(heads):
            lim_w = np.sqrt(6.0 / (d_in[layer] + d_h))
            tensors[f"W{layer}.{head}"] = rng.uniform(
                -lim_w, lim_w, size=(d_in[layer], d_h)
            )
            lim_a = np.sqrt(6.0 / (2 * d_h + 1))
            tensors[f"a{layer}.{head}"] = rng.uniform(-lim_a, lim_a, size=2 * d_h)
    return EncoderParams(
        d_sem=d_sem, d_h=d_h, heads=heads, self_mode=self_mode, tensors=tensors
    )


# ---------------------------------------------------------------------------
# edge segments


@dataclass
class EdgeIndex:
    """Flattened neighborhoods sorted by center node.

    centers[e] is the node whose attention row edge e belongs to,
    sources[e] the attended neighbor. Segments (one per node that owns at
    least one edge) are contiguous; seg_starts/seg_nodes describe them and
    seg_map[e] gives edge e's segment. Fixed ordering keeps every
    reduction bit-stable.
    """

    n_nodes: int
    centers: np.ndarray
    sources: np.ndarray
    seg_starts: np.ndarray
    seg_nodes: np.ndarray
    seg_map: np.ndarray


def build_edge_index(graph: MessageGraph, include_self: bool) -> EdgeIndex:
    n = graph.n_nodes
    centers: list[np.ndarray] = []
    sources: list[np.ndarray] = []
    seg_starts: list[int] = []
    seg_nodes: list[int] = []
    pos = 0
    for i in range(n):
        nbrs = graph.adjacency[i]
        if include_self:
            nbrs = np.sort(np.append(nbrs, i))
        if nbrs.size == 0:
            continue
        seg_starts.append(pos)
        seg_nodes.append(i)
        centers.append(np.full(nbrs.size, i, dtype=np.int64))
        sources.append(nbrs.astype(np.int64))
        pos += nbrs.size
    if not seg_nodes:
        empty = np.zeros(0, dtype=np.int64)
        return EdgeIndex(n, empty, empty, empty, empty, empty)
    starts = np.array(seg_starts, dtype=np.int64)
    lengths = np.diff(np.append(starts, pos))
    return EdgeIndex(
        n_nodes=n,
        centers=np.concatenate(centers),
        sources=np.concatenate(sources),
        seg_starts=starts,
        seg_nodes=np.array(seg_nodes, dtype=np.int64),
        seg_map=np.repeat(np.arange(len(seg_nodes), dtype=np.int64), lengths),
    )


# ---------------------------------------------------------------------------
# one attention head


def _head_forward(
    x: np.ndarray, w: np.ndarray, a: np.ndarray, idx: EdgeIndex, self_mode: str
) -> tuple[np.ndarray, tuple]:
    d_h = w.shape[1]
    z = x @ w
    out = np.zeros((idx.n_nodes, d_h))
    if self_mode == "add":
        out += z
    u = alpha = None
    if idx.centers.size:
        s = z @ a[:d_h]
        t = z @ a[d_h:]
        u = s[idx.centers] + t[idx.sources]
        e = np.where(u > 0, u, LEAKY_SLOPE * u)
        m = np.maximum.reduceat(e, idx.seg_starts)
        ex = np.exp(e - m[idx.seg_map])
        denom = np.add.reduceat(ex, idx.seg_starts)
        alpha = ex / denom[idx.seg_map]
        agg = np.add.reduceat(alpha[:, None] * z[idx.sources], idx.seg_starts, axis=0)
        out[idx.seg_nodes] += agg
    return out, (x, w, a, z, u, alpha, idx)


def _head_backward(
    cache: tuple, g_out: np.ndarray, self_mode: str, need_gx: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    x, w, a, z, u, alpha, idx = cache
    d_h = w.shape[1]
    gz = np.zeros_like(z)
    ga = np.zeros_like(a)
    if self_mode == "add":
        gz += g_out
    if idx.centers.size:
        g_center = g_out[idx.centers]
        z_src = z[idx.sources]
        galpha = np.einsum("ed,ed->e", g_center, z_src)
        np.add.at(gz, idx.sources, alpha[:, None] * g_center)
        segdot = np.add.reduceat(alpha * galpha, idx.seg_starts)
        ge = alpha * (galpha - segdot[idx.seg_map])
        gu = ge * np.where(u > 0, 1.0, LEAKY_SLOPE)
        gs = np.zeros(idx.n_nodes)
        gs[idx.seg_nodes] = np.add.reduceat(gu, idx.seg_starts)
        gt = np.zeros(idx.n_nodes)
        np.add.at(gt, idx.sources, gu)
        ga = np.concatenate([z.T @ gs, z.T @ gt])
        gz += np.outer(gs, a[:d_h]) + np.outer(gt, a[d_h:])
    gw = x.T @ gz
    gx = gz @ w.T if need_gx else None
    return gw, ga, gx


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def _elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(x))


# ---------------------------------------------------------------------------
# full encoder


def forward_cached(
    graph: MessageGraph, params: EncoderParams, edge_index: EdgeIndex | None = None
) -> tuple[np.ndarray, tuple]:
    """Embeddings (n × d_h) plus the cache backward_from_cache consumes."""
    x = graph.features
    if x.shape[1] != params.d_in1:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match d_sem+2={params.d_in1}"
        )
    idx = edge_index or build_edge_index(graph, include_self=params.self_mode == "softmax")

    caches1 = []
    outs1 = []
    for head in range(params.heads):
        out, cache = _head_forward(
            x, params.w(1, head), params.att(1, head), idx, params.self_mode
        )
        outs1.append(out)
        caches1.append(cache)
    pre = np.concatenate(outs1, axis=1)
    h1 = _elu(pre)

    caches2 = []
    acc = np.zeros((idx.n_nodes, params.d_h))
    for head in range(params.heads):
        out, cache = _head_forward(
            h1, params.w(2, head), params.att(2, head), idx, params.self_mode
        )
        acc += out
        caches2.append(cache)
    emb = acc / params.heads
    return emb, (params, pre, caches1, caches2)


def forward(
    graph: MessageGraph, params: EncoderParams, edge_index: EdgeIndex | None = None
) -> np.ndarray:
    return forward_cached(graph, params, edge_index)[0]


def attention_preactivations(
    graph: MessageGraph, params: EncoderParams
) -> list[np.ndarray]:
    """Per-edge LeakyReLU inputs for every (layer, head); diagnostic only.

    Finite-difference harnesses use these to detect trials sitting on a
    nonlinearity kink, where a two-sided difference stops matching the
    one-sided derivative the backward pass computes.
    """
    _, (_, _, caches1, caches2) = forward_cached(graph, params)
    pres = []
    for cache in caches1 + caches2:
        u = cache[4]
        pres.append(np.array([]) if u is None else u)
    return pres


def backward_from_cache(cache: tuple, upstream: np.ndarray) -> EncoderParams:
    """Gradients of <upstream, forward(...)> for every parameter tensor."""
    params, pre, caches1, caches2 = cache
    grads = params.zeros_like()

    g_h1 = np.zeros((upstream.shape[0], params.heads * params.d_h))
    g_per_head = upstream / params.heads
    for head in range(params.heads):
        gw, ga, gx = _head_backward(
            caches2[head], g_per_head, params.self_mode, need_gx=True
        )
        grads.tensors[f"W2.{head}"] = gw
        grads.tensors[f"a2.{head}"] = ga
        g_h1 += gx

    g_pre = g_h1 * _elu_grad(pre)
    for head in range(params.heads):
        sl = slice(head * params.d_h, (head + 1) * params.d_h)
        gw, ga, _ = _head_backward(
            caches1[head], g_pre[:, sl], params.self_mode, need_gx=False
        )
        grads.tensors[f"W1.{head}"] = gw
        grads.tensors[f"a1.{head}"] = ga
    return grads


def backward(
    graph: MessageGraph,
    params: EncoderParams,
    upstream: np.ndarray,
    edge_index: EdgeIndex | None = None,
) -> EncoderParams:
    emb, cache = forward_cached(graph, params, edge_index)
    if upstream.shape != emb.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match output {emb.shape}"
        )
    return backward_from_cache(cache, upstream)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: EncoderParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.tensors.items()},
            v={k: np.zeros_like(t) for k, t in params.tensors.items()},
            step=0,
        )


def adam_step(
    params: EncoderParams,
    grads: EncoderParams,
    state: AdamState,
    lr: float = 0.001,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[EncoderParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    b1, b2 = betas
    t = state.step + 1
    new_params = params.copy()
    new_m, new_v = {}, {}
    for name in params.names():
        g = grads.tensors[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params.tensors[name] = params.tensors[name] - lr * m_hat / (
            np.sqrt(v_hat) + eps
        )
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


# ---------------------------------------------------------------------------
# persistence


def _atomic_write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def params_to_payload(params: EncoderParams, seed: int | None = None) -> dict:
    return {
        "format_version": PARAMS_FORMAT_VERSION,
        "kind": "encoder-params",
        "d_sem": params.d_sem,
        "d_h": params.d_h,
        "heads": params.heads,
        "self_mode": params.self_mode,
        "seed": seed,
        "tensors": {
            name: {"shape": list(t.shape), "values": t.ravel().tolist()}
            for name, t in sorted(params.tensors.items())
        },
    }


def params_from_payload(payload: dict) -> EncoderParams:
    if payload.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ValueError(
            f"unsupported params format version {payload.get('format_version')!r}"
        )
    if payload.get("kind") != "encoder-params":
        raise ValueError(f"unexpected payload kind {payload.get('kind')!r}")
    params = EncoderParams(
        d_sem=int(payload["d_sem"]),
        d_h=int(payload["d_h"]),
        heads=int(payload["heads"]),
        self_mode=str(payload["self_mode"]),
    )
    expected = init_params(0, params.d_sem, params.d_h, params.heads, params.self_mode)
    for name, entry in payload["tensors"].items():
        if name not in expected.tensors:
            raise ValueError(f"unknown tensor '{name}' in checkpoint")
        shape = tuple(entry["shape"])
        if shape != expected.tensors[name].shape:
            raise ValueError(
                f"tensor '{name}' has shape {shape}, "
                f"expected {expected.tensors[name].shape}"
            )
        params.tensors[name] = np.array(entry["values"]).reshape(shape)
    missing = set(expected.tensors) - set(params.tensors)
    if missing:
        raise ValueError(f"checkpoint is missing tensors: {sorted(missing)}")
    return params


def save_params(path: str | Path, params: EncoderParams, seed: int | None = None) -> None:
    _atomic_write_json(path, params_to_payload(params, seed))


def load_params(path: str | Path) -> EncoderParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_payload(json.load(fh))
