"""Two-stage training pipeline over a streaming message corpus.

Stage one pre-trains the graph-attention encoder on the fully labeled
initial block with the pairwise + orthogonality objective, early-stopped
on validation NMI, and freezes the per-event reference matrix. Stage two
walks the later blocks: each one is fine-tuned without labels by scoring
messages against the frozen references, selecting entropy-quota pseudo
pairs, and descending the quality-weighted hinge; the tuned encoder is
then evaluated by clustering. Every step is a pure function of
(inputs, seed), so repeated runs are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .cluster_eval import ami, dbscan, kmeans_with_trace, nmi
from .encoder import (
    AdamState,
    EncoderParams,
    _atomic_write_json,
    adam_step,
    backward_from_cache,
    build_edge_index,
    forward,
    forward_cached,
    init_params,
    params_from_payload,
    params_to_payload,
)
from .graph import MessageGraph, build_graph
from .ingest import (
    MessageRecord,
    build_features,
    load_corpus,
    load_embedding_table,
    split_blocks,
    temporal_scaling,
)
from .losses import (
    PairBatch,
    orthogonal_loss,
    pairwise_loss,
    pretrain_loss,
    quality_weighted_loss,
    sample_pairs,
    triplet_loss,
    triplets_from_pairs,
)
from .pseudo import (
    PseudoPair,
    ReferenceMatrix,
    compute_reference_matrix,
    rsd_matrix,
    select_pairs,
)
from .seeds import derive_seed, rng_for

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    seed: int = 0
    initial_days: int = 7
    block_days: int = 1
    d_sem: int = 16
    d_h: int = 32
    heads: int = 4
    self_mode: str = "softmax"
    lr: float = 0.001
    pretrain_epochs: int = 15
    patience: int = 5
    finetune_rounds: int = 3
    finetune_epochs_per_round: int = 1
    batch_size: int = 2000
    margin: float = 10.0
    lambda_o: float = 1.0
    rsd_scale: float = 4.0
    quota_high_pos: int = 20
    quota_high_neg: int = 20
    quota_low_pos: int = 10
    quota_low_neg: int = 10
    clustering: str = "kmeans"
    kmeans_restarts: int = 10
    dbscan_eps: float = 0.5
    dbscan_min_pts: int = 5
    chain_params: bool = False
    loss_variant: str = "pairwise"
    pairing: str = "matched"
    weighted_finetune: bool = True
    eval_after_finetune: bool = True
    cap_per_class: int = 1000

    def validate(self) -> None:
        positive_counts = (
            self.initial_days,
            self.block_days,
            self.d_sem,
            self.d_h,
            self.heads,
            self.pretrain_epochs,
            self.patience,
            self.finetune_epochs_per_round,
            self.batch_size,
            self.kmeans_restarts,
            self.dbscan_min_pts,
            self.cap_per_class,
        )
        if any(c < 1 for c in positive_counts):
            raise ValueError("all counts must be >= 1")
        if self.finetune_rounds < 0:
            raise ValueError("finetune_rounds must be >= 0")
        if self.lr <= 0 or self.dbscan_eps <= 0:
            raise ValueError("rates must be > 0")
        if self.margin < 0 or self.lambda_o < 0:
            raise ValueError("margin and lambda_o must be >= 0")
        if self.rsd_scale <= 0:
            raise ValueError("rsd_scale must be > 0")
        quotas = (
            self.quota_high_pos,
            self.quota_high_neg,
            self.quota_low_pos,
            self.quota_low_neg,
        )
        if any(q < 0 for q in quotas):
            raise ValueError("quotas must be >= 0")
        if self.self_mode not in ("softmax", "add"):
            raise ValueError(f"unknown self_mode {self.self_mode!r}")
        if self.clustering not in ("kmeans", "dbscan"):
            raise ValueError(f"unknown clustering {self.clustering!r}")
        if self.loss_variant not in ("pairwise", "triplet"):
            raise ValueError(f"unknown loss_variant {self.loss_variant!r}")
        if self.pairing not in ("matched", "cartesian"):
            raise ValueError(f"unknown pairing {self.pairing!r}")

    def quotas(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return (
            (self.quota_high_pos, self.quota_high_neg),
            (self.quota_low_pos, self.quota_low_neg),
        )


def config_to_text(config: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _coerce(name: str, kind: type, raw: str, line_no: int):
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"line {line_no}: {name} expects true/false, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ValueError(
            f"line {line_no}: {name} expects {kind.__name__}, got {raw!r}"
        ) from exc


def config_from_text(text: str) -> PipelineConfig:
    """Parse the flat `key = value` config format (# starts a comment line)."""
    kinds = {f.name: type(getattr(PipelineConfig(), f.name)) for f in fields(PipelineConfig)}
    values: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ValueError(f"line {line_no}: unknown config key {key!r}")
        values[key] = _coerce(key, kinds[key], value.strip(), line_no)
    config = PipelineConfig(**values)
    config.validate()
    return config


def load_config(path: str | Path) -> PipelineConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


def save_config(path: str | Path, config: PipelineConfig) -> None:
    Path(path).write_text(config_to_text(config), encoding="utf-8")


def config_hash(config: PipelineConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# reports


@dataclass
class BlockReport:
    block_index: int
    n_messages: int
    n_clusters: int
    n_noise: int
    n_known: int | None = None
    n_novel: int | None = None
    nmi: float | None = None
    ami: float | None = None
    wall_time_s: float = 0.0


def report_to_dict(report: BlockReport, include_wall_time: bool = True) -> dict:
    """Serializable view; wall time is dropped from persisted reports so
    reruns of the same seed produce byte-identical result files."""
    out = {
        "block_index": report.block_index,
        "n_messages": report.n_messages,
        "n_clusters": report.n_clusters,
        "n_noise": report.n_noise,
        "n_known": report.n_known,
        "n_novel": report.n_novel,
        "nmi": report.nmi,
        "ami": report.ami,
    }
    if include_wall_time:
        out["wall_time_s"] = report.wall_time_s
    return out


# ---------------------------------------------------------------------------
# clustering for evaluation


def best_kmeans(emb: np.ndarray, k: int, seed: int, restarts: int) -> np.ndarray:
    """k-means labels from the lowest-inertia run over seeded restarts.

    Single-init k-means is sensitive to the draw of initial centers, which
    adds evaluation noise when comparing two encoders on the same block;
    keeping the best of several restarts (by final objective) makes the
    reported partition a property of the embedding geometry rather than of
    one lucky or unlucky initialization.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best_labels: np.ndarray | None = None
    best_inertia = np.inf
    for r in range(restarts):
        labels, _, trace = kmeans_with_trace(emb, k, seed=derive_seed(seed, "restart", r))
        if trace[-1] < best_inertia:
            best_inertia = trace[-1]
            best_labels = labels
    assert best_labels is not None
    return best_labels


# ---------------------------------------------------------------------------
# stage one: supervised pre-training


@dataclass
class PretrainResult:
    params: EncoderParams
    reference: ReferenceMatrix
    history: list[dict]
    best_epoch: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


def _labels_or_error(records: Sequence[MessageRecord]) -> np.ndarray:
    unlabeled = [r.id for r in records if r.event_id is None]
    if unlabeled:
        raise ValueError(
            f"pre-training block must be fully labeled; first unlabeled: {unlabeled[0]}"
        )
    return np.array([int(r.event_id) for r in records], dtype=np.int64)


def _batch_objective(
    pairs: PairBatch, emb: np.ndarray, labels: np.ndarray, config: PipelineConfig
) -> tuple[float, np.ndarray]:
    if config.loss_variant == "triplet":
        loss, grad = triplet_loss(triplets_from_pairs(pairs), emb, a=config.margin)
        if config.lambda_o:
            loss_o, grad_o = orthogonal_loss(emb, labels)
            loss, grad = loss + config.lambda_o * loss_o, grad + config.lambda_o * grad_o
        return loss, grad
    return pretrain_loss(
        pairs, emb, labels, a=config.margin, lambda_o=config.lambda_o, pairing=config.pairing
    )


def pretrain(
    records: Sequence[MessageRecord], graph: MessageGraph, config: PipelineConfig
) -> PretrainResult:
    """Supervised stage on the initial block.

    Seeded 70/10/20 node split; node-level mini-batches; early stopping on
    validation NMI (k-means, k = classes present in the validation subset).
    Returns the best-validation parameters and the frozen reference matrix
    computed from them over the whole labeled block.
    """
    config.validate()
    labels = _labels_or_error(records)
    if len(records) != graph.n_nodes:
        raise ValueError("record count does not match graph size")
    _, counts = np.unique(labels, return_counts=True)
    if (counts >= 2).sum() < 2:
        raise ValueError(
            "degenerate label distribution: need >= 2 events with >= 2 members each"
        )

    n = len(records)
    order = rng_for(config.seed, "pretrain-split").permutation(n)
    n_train = int(round(0.7 * n))
    n_val = int(round(0.1 * n))
    if n_train < 2 or n_val < 1 or n - n_train - n_val < 1:
        raise ValueError(f"block of {n} messages is too small for a 70/10/20 split")
    train_idx = np.sort(order[:n_train])
    val_idx = np.sort(order[n_train : n_train + n_val])
    test_idx = np.sort(order[n_train + n_val :])

    params = init_params(
        config.seed, config.d_sem, config.d_h, config.heads, config.self_mode
    )
    state = AdamState.for_params(params)
    edge_index = build_edge_index(graph, include_self=config.self_mode == "softmax")
    val_classes = len(set(labels[val_idx].tolist()))
    val_seed = derive_seed(config.seed, "pretrain-val-kmeans")

    best_params = params.copy()
    best_nmi = -1.0
    best_epoch = -1
    stale = 0
    history: list[dict] = []
    for epoch in range(config.pretrain_epochs):
        shuffled = rng_for(config.seed, "pretrain-batch", epoch).permutation(train_idx)
        epoch_losses = []
        for lo in range(0, len(shuffled), config.batch_size):
            batch = np.sort(shuffled[lo : lo + config.batch_size])
            pairs = sample_pairs(
                labels[batch],
                derive_seed(config.seed, "pretrain-pairs", epoch, lo),
                cap_per_class=config.cap_per_class,
            )
            emb, cache = forward_cached(graph, params, edge_index)
            loss, grad_batch = _batch_objective(pairs, emb[batch], labels[batch], config)
            upstream = np.zeros_like(emb)
            upstream[batch] = grad_batch
            grads = backward_from_cache(cache, upstream)
            params, state = adam_step(params, grads, state, lr=config.lr)
            epoch_losses.append(loss)

        emb = forward(graph, params, edge_index)
        val_pred = best_kmeans(emb[val_idx], val_classes, val_seed, config.kmeans_restarts)
        val_nmi = nmi(labels[val_idx], val_pred)
        # Ties prefer the later epoch: equal validation, more training.
        improved = val_nmi >= best_nmi
        if improved:
            best_nmi = val_nmi
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_nmi": val_nmi,
                "improved": improved,
            }
        )
        logger.info(
            "pretrain epoch %d: loss=%.4f val_nmi=%.4f%s",
            epoch,
            history[-1]["train_loss"],
            val_nmi,
            " *" if improved else "",
        )
        if stale >= config.patience:
            logger.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
            break

    reference = compute_reference_matrix(forward(graph, best_params, edge_index), labels)
    return PretrainResult(
        params=best_params,
        reference=reference,
        history=history,
        best_epoch=best_epoch,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
    )


# ---------------------------------------------------------------------------
# stage two: unsupervised per-block fine-tuning


@dataclass
class RoundAudit:
    round_index: int
    n_selected: int
    n_pos: int
    n_neg: int
    n_terms: int
    mean_quality: float | None
    trained: bool
    pairs: tuple[PseudoPair, ...]


@dataclass
class FinetuneAudit:
    rounds: list[RoundAudit] = field(default_factory=list)


def finetune_block(
    graph: MessageGraph,
    params_in: EncoderParams,
    reference: ReferenceMatrix,
    config: PipelineConfig,
    block_index: int = 0,
) -> tuple[EncoderParams, FinetuneAudit]:
    """Label-free adaptation of one block against the frozen references.

    Each round regenerates pseudo labels from the current embeddings,
    matches positive/negative selections one-to-one, and descends the
    quality-weighted hinge (plain hinge when weighted_finetune=false).
    """
    config.validate()
    if graph.n_nodes == 0:
        raise ValueError("cannot fine-tune an empty block")
    params = params_in.copy()
    audit = FinetuneAudit()
    if config.finetune_rounds == 0:
        return params, audit
    state = AdamState.for_params(params)
    edge_index = build_edge_index(graph, include_self=config.self_mode == "softmax")
    term_cap = max(1, config.batch_size // 2)  # one term couples two pairs

    for rnd in range(config.finetune_rounds):
        emb = forward(graph, params, edge_index)
        rows = rsd_matrix(emb, reference, scale=config.rsd_scale)
        selected = select_pairs(
            rows,
            config.quotas(),
            derive_seed(config.seed, "finetune-select", block_index, rnd),
        )
        pos = [p for p in selected if p.label == 1]
        neg = [p for p in selected if p.label == 0]
        n_terms = min(len(pos), len(neg))
        mean_quality = (
            float(np.mean([p.quality for p in selected])) if selected else None
        )
        audit.rounds.append(
            RoundAudit(
                round_index=rnd,
                n_selected=len(selected),
                n_pos=len(pos),
                n_neg=len(neg),
                n_terms=n_terms,
                mean_quality=mean_quality,
                trained=n_terms > 0,
                pairs=tuple(selected),
            )
        )
        if n_terms == 0:
            logger.warning(
                "block %d round %d: no usable pseudo pairs (pos=%d, neg=%d); skipping",
                block_index,
                rnd,
                len(pos),
                len(neg),
            )
            continue

        match_rng = rng_for(config.seed, "finetune-match", block_index, rnd)
        pos_pick = match_rng.permutation(len(pos))[:n_terms]
        neg_pick = match_rng.permutation(len(neg))[:n_terms]
        terms = [
            (
                (pos[pi].i, pos[pi].j),
                pos[pi].consistency,
                (neg[ni].i, neg[ni].j),
                neg[ni].consistency,
            )
            for pi, ni in zip(pos_pick, neg_pick)
        ]

        for epoch in range(config.finetune_epochs_per_round):
            order = rng_for(
                config.seed, "finetune-batch", block_index, rnd, epoch
            ).permutation(n_terms)
            for lo in range(0, n_terms, term_cap):
                chunk = [terms[t] for t in order[lo : lo + term_cap]]
                emb, cache = forward_cached(graph, params, edge_index)
                if config.weighted_finetune:
                    _, grad = quality_weighted_loss(chunk, emb, a=config.margin)
                else:
                    batch = PairBatch(
                        pos=[c[0] for c in chunk], neg=[c[2] for c in chunk]
                    )
                    _, grad = pairwise_loss(batch, emb, a=config.margin)
                grads = backward_from_cache(cache, grad)
                params, state = adam_step(params, grads, state, lr=config.lr)
    return params, audit


# ---------------------------------------------------------------------------
# evaluation


def evaluate_block(
    graph: MessageGraph,
    params: EncoderParams,
    config: PipelineConfig,
    labels: Sequence[int] | None = None,
    known_ids: frozenset[int] | None = None,
    block_index: int = 0,
) -> BlockReport:
    """Cluster the block's embeddings and score them when labels exist.

    k-means uses k = true class count and therefore requires ground truth;
    DBSCAN runs label-free (metrics omitted unless labels are supplied).
    """
    config.validate()
    started = time.perf_counter()
    emb = forward(graph, params)
    if config.clustering == "kmeans":
        if labels is None:
            raise ValueError(
                "k-means evaluation sets k to the ground-truth class count; "
                "without labels use clustering='dbscan'"
            )
        k = len(set(int(c) for c in labels))
        pred = best_kmeans(
            emb,
            k,
            derive_seed(config.seed, "eval-kmeans", block_index),
            config.kmeans_restarts,
        )
    else:
        pred = dbscan(emb, eps=config.dbscan_eps, min_pts=config.dbscan_min_pts)

    report = BlockReport(
        block_index=block_index,
        n_messages=graph.n_nodes,
        n_clusters=len(set(pred[pred >= 0].tolist())),
        n_noise=int((pred == -1).sum()),
    )
    if labels is not None:
        arr = np.asarray(list(labels), dtype=np.int64)
        report.nmi = nmi(arr, pred)
        report.ami = ami(arr, pred)
        if known_ids is not None:
            report.n_known = int(np.isin(arr, sorted(known_ids)).sum())
            report.n_novel = report.n_messages - report.n_known
    report.wall_time_s = time.perf_counter() - started
    return report


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path: str | Path,
    params: EncoderParams,
    reference: ReferenceMatrix,
    config: PipelineConfig,
    block_index: int,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "pipeline-checkpoint",
        "block_index": block_index,
        "config_hash": config_hash(config),
        "encoder": params_to_payload(params),
        "reference": {
            "event_ids": list(reference.event_ids),
            "rows": [[float(v) for v in row] for row in reference.rows],
        },
    }
    _atomic_write_json(path, payload)


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, ReferenceMatrix, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "pipeline-checkpoint":
        raise ValueError(f"not a pipeline checkpoint: {path}")
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format_version {payload.get('format_version')!r}"
        )
    params = params_from_payload(payload["encoder"])
    ref = payload["reference"]
    rows = np.array(ref["rows"], dtype=np.float64)
    reference = ReferenceMatrix(
        rows=rows, event_ids=tuple(int(e) for e in ref["event_ids"]), k=rows.shape[0]
    )
    meta = {
        "block_index": int(payload["block_index"]),
        "config_hash": payload["config_hash"],
    }
    return params, reference, meta


# ---------------------------------------------------------------------------
# full stream


@dataclass
class StreamResult:
    reports: list[BlockReport]
    checkpoint_paths: list[str]
    pretrain: PretrainResult
    params_by_block: dict[int, EncoderParams]
    reports_path: str | None


def _block_ground_truth(block: Sequence[MessageRecord]) -> np.ndarray | None:
    if any(r.event_id is None for r in block):
        return None
    return np.array([int(r.event_id) for r in block], dtype=np.int64)


def _closed_set_report(
    graph: MessageGraph,
    pre: PretrainResult,
    config: PipelineConfig,
    labels: np.ndarray,
    known_ids: frozenset[int],
) -> BlockReport:
    """Block-0 report: metrics on the held-out 20% test subset."""
    emb = forward(graph, pre.params)
    test = pre.test_idx
    k = len(set(labels[test].tolist()))
    pred = best_kmeans(
        emb[test], k, derive_seed(config.seed, "eval-kmeans", 0), config.kmeans_restarts
    )
    return BlockReport(
        block_index=0,
        n_messages=graph.n_nodes,
        n_clusters=len(set(pred[pred >= 0].tolist())),
        n_noise=0,
        n_known=int(np.isin(labels, sorted(known_ids)).sum()),
        n_novel=int((~np.isin(labels, sorted(known_ids))).sum()),
        nmi=nmi(labels[test], pred),
        ami=ami(labels[test], pred),
    )


def run_stream(
    corpus_path: str | Path,
    embedding_path: str | Path,
    config: PipelineConfig,
    out_dir: str | Path | None = None,
    emit: Callable[[str], None] | None = None,
) -> StreamResult:
    """Ingest, split, pre-train on block 0, then fine-tune + evaluate each
    later block; reports stream out as each block finishes."""
    config.validate()
    records = load_corpus(corpus_path)
    table, table_dim = load_embedding_table(embedding_path)
    if table_dim != config.d_sem:
        raise ValueError(
            f"embedding table dimension {table_dim} does not match d_sem={config.d_sem}"
        )
    stream = split_blocks(records, config.initial_days, config.block_days)
    if not stream.blocks or not stream.blocks[0]:
        raise ValueError("corpus has no messages in the initial block")
    # One temporal scale for the whole corpus, so later blocks keep their
    # drift relative to the pre-training block instead of re-normalizing.
    scaling = temporal_scaling(records)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    reports_path = out / "reports.jsonl" if out is not None else None

    reports: list[BlockReport] = []
    checkpoint_paths: list[str] = []
    params_by_block: dict[int, EncoderParams] = {}

    def publish(report: BlockReport) -> None:
        reports.append(report)
        if emit is not None:
            emit(json.dumps(report_to_dict(report), sort_keys=True))
        if reports_path is not None:
            lines = [
                json.dumps(report_to_dict(r, include_wall_time=False), sort_keys=True)
                for r in reports
            ]
            tmp = reports_path.with_name(reports_path.name + ".tmp")
            tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
            tmp.replace(reports_path)

    def checkpoint(block_index: int, params: EncoderParams, ref: ReferenceMatrix):
        if out is None:
            return
        path = out / f"checkpoint_block_{block_index:04d}.json"
        save_checkpoint(path, params, ref, config, block_index)
        checkpoint_paths.append(str(path))

    block0 = stream.blocks[0]
    started = time.perf_counter()
    try:
        feats0 = build_features(block0, table, config.d_sem, scaling=scaling)
        graph0 = build_graph(block0, feats0.matrix)
        pre = pretrain(block0, graph0, config)
        labels0 = _labels_or_error(block0)
        known_ids = frozenset(int(v) for v in set(labels0.tolist()))
        report0 = _closed_set_report(graph0, pre, config, labels0, known_ids)
    except (ValueError, RuntimeError) as exc:
        raise RuntimeError(f"block 0: {exc}") from exc
    report0.wall_time_s = time.perf_counter() - started
    params_by_block[0] = pre.params
    publish(report0)
    checkpoint(0, pre.params, pre.reference)

    current = pre.params
    for j, block in enumerate(stream.blocks[1:], start=1):
        started = time.perf_counter()
        start_params = current if config.chain_params else pre.params
        try:
            if not block:
                raise ValueError("empty block")
            feats = build_features(block, table, config.d_sem, scaling=scaling)
            graph = build_graph(block, feats.matrix)
            tuned, _ = finetune_block(
                graph, start_params, pre.reference, config, block_index=j
            )
            eval_params = tuned if config.eval_after_finetune else start_params
            report = evaluate_block(
                graph,
                eval_params,
                config,
                labels=_block_ground_truth(block),
                known_ids=known_ids,
                block_index=j,
            )
        except (ValueError, RuntimeError) as exc:
            raise RuntimeError(f"block {j}: {exc}") from exc
        report.wall_time_s = time.perf_counter() - started
        params_by_block[j] = tuned
        current = tuned
        publish(report)
        checkpoint(j, tuned, pre.reference)

    return StreamResult(
        reports=reports,
        checkpoint_paths=checkpoint_paths,
        pretrain=pre,
        params_by_block=params_by_block,
        reports_path=str(reports_path) if reports_path is not None else None,
    )
