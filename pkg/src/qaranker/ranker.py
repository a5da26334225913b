"""Attention-based document ranker for multiple-choice QA.

Per candidate answer, the K_disc x N discriminator score matrix is projected
into a D-dimensional space, a shared single-head attention layer produces a
weight per document (the semantic ranking) and a pooled evidence vector, and
a shared feed-forward head turns that vector into a candidate logit.  The
softmax over candidate logits is the answer distribution.

The same parameters score every candidate, so predictions are equivariant
under candidate permutation, and attention is a set-pooling over documents.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Param, affine_broadcast, relu_map, softmax_row, tanh_map
from .errors import CheckpointError, ConfigError, QaError
from .scores import ScoreMatrix


@dataclass
class RankerConfig:
    k_disc: int = 3
    proj_dim: int = 32       # D: projection space width
    key_dim: int = 16        # M: key space width
    value_dim: int = 16      # Q: value space width
    hidden_dim: int = 32     # H: decision-head hidden width
    n_max: int = 40          # documents per candidate
    epochs: int = 50
    batch_size: int = 128
    restarts: int = 5
    seed: int = 0
    lr: float = 1e-3

    def __post_init__(self):
        for name in ("k_disc", "proj_dim", "key_dim", "value_dim",
                     "hidden_dim", "n_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 1 or self.batch_size < 1 or self.restarts < 1:
            raise ConfigError("epochs, batch_size, and restarts must be >= 1")


# Fixed field order; the checkpoint payload is laid out in this order.
PARAM_FIELDS = (
    "w_proj", "b_proj", "w_k", "b_k", "w_v", "b_v",
    "w_p", "b_p", "w_h1", "b_h1", "w_h2", "b_h2",
)


class RankerParams:
    """All learned tensors, shared across candidate positions."""

    def __init__(self, config: RankerConfig, rng: np.random.Generator | None = None):
        c = config
        self.config = c

        def weight(name, shape):
            if rng is None:
                return Param(name, np.zeros(shape))
            return Param(name, ad.glorot_init(shape, rng))

        self.w_proj = weight("w_proj", (c.proj_dim, c.k_disc))
        self.b_proj = Param("b_proj", np.zeros(c.proj_dim))
        self.w_k = weight("w_k", (c.key_dim, c.proj_dim))
        self.b_k = Param("b_k", np.zeros(c.key_dim))
        self.w_v = weight("w_v", (c.value_dim, c.proj_dim))
        self.b_v = Param("b_v", np.zeros(c.value_dim))
        self.w_p = weight("w_p", (c.key_dim,))
        self.b_p = Param("b_p", np.zeros(()))
        self.w_h1 = weight("w_h1", (c.hidden_dim, c.value_dim))
        self.b_h1 = Param("b_h1", np.zeros(c.hidden_dim))
        self.w_h2 = weight("w_h2", (c.hidden_dim,))
        self.b_h2 = Param("b_h2", np.zeros(()))

    def all(self) -> list[Param]:
        return [getattr(self, name) for name in PARAM_FIELDS]

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).value.copy() for name in PARAM_FIELDS}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name in PARAM_FIELDS:
            param = getattr(self, name)
            if param.value.shape != values[name].shape:
                raise CheckpointError(
                    f"parameter {name}: shape {values[name].shape} does not "
                    f"match {param.value.shape}"
                )
            param.value[...] = values[name]


@dataclass
class AttentionResult:
    weights: np.ndarray      # per-document attention, sums to 1 (empty if no docs)
    pooled: np.ndarray       # attention-weighted value vector, length value_dim
    keys: np.ndarray
    values: np.ndarray
    no_evidence: bool = False


@dataclass
class AnswerPrediction:
    probabilities: np.ndarray
    predicted_index: int
    attention: list[AttentionResult]


@dataclass
class RankingInstance:
    """One question with per-candidate score matrices, ready for the model."""

    question_id: str
    matrices: list[ScoreMatrix]
    answer_index: int | None = None

    def __post_init__(self):
        if len(self.matrices) < 2:
            raise QaError(
                f"question {self.question_id!r}: needs >= 2 candidates"
            )


# ---------------------------------------------------------------------------
# Forward pass (pure numpy; used for inference and evaluation)
# ---------------------------------------------------------------------------


def project_scores(scores: np.ndarray, params: RankerParams) -> np.ndarray:
    """Linear projection of the K_disc x N score matrix into D x N."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != params.config.k_disc:
        raise QaError(
            f"score matrix has {scores.shape[0] if scores.ndim == 2 else '?'} rows, "
            f"model expects {params.config.k_disc}"
        )
    return affine_broadcast(params.w_proj.value, scores, params.b_proj.value)


def attend(projected: np.ndarray, params: RankerParams) -> AttentionResult:
    """Single-head attention over document columns.

    keys = tanh(w_k @ A + b_k); values = relu(w_v @ A + b_v);
    weights = softmax(w_p @ keys + b_p) over the actual documents only
    (the uniform scalar bias cancels inside softmax); pooled = values @ weights.
    Zero documents yields an empty weight vector and a zero pooled vector.
    """
    c = params.config
    if projected.shape[1] == 0:
        return AttentionResult(
            weights=np.zeros(0),
            pooled=np.zeros(c.value_dim),
            keys=np.zeros((c.key_dim, 0)),
            values=np.zeros((c.value_dim, 0)),
            no_evidence=True,
        )
    keys = tanh_map(affine_broadcast(params.w_k.value, projected, params.b_k.value))
    values = relu_map(affine_broadcast(params.w_v.value, projected, params.b_v.value))
    weights = softmax_row(params.w_p.value @ keys)
    pooled = values @ weights
    return AttentionResult(weights=weights, pooled=pooled, keys=keys, values=values)


def score_candidate(pooled: np.ndarray, params: RankerParams) -> float:
    """Shared two-layer decision head: value_dim -> hidden_dim -> 1."""
    hidden = relu_map(
        params.w_h1.value @ np.asarray(pooled, dtype=np.float64)
        + params.b_h1.value
    )
    return float(params.w_h2.value @ hidden + params.b_h2.value)


def predict(instance: RankingInstance, params: RankerParams) -> AnswerPrediction:
    logits = np.empty(len(instance.matrices))
    attention = []
    for i, matrix in enumerate(instance.matrices):
        result = attend(project_scores(matrix.values, params), params)
        attention.append(result)
        logits[i] = score_candidate(result.pooled, params)
    probabilities = softmax_row(logits)
    return AnswerPrediction(
        probabilities=probabilities,
        predicted_index=int(np.argmax(probabilities)),
        attention=attention,
    )


# ---------------------------------------------------------------------------
# Differentiable forward (training path)
# ---------------------------------------------------------------------------


def _candidate_logit_node(matrix: ScoreMatrix, params: RankerParams):
    c = params.config
    w_proj, b_proj = ad.leaf(params.w_proj), ad.leaf(params.b_proj)
    w_k, b_k = ad.leaf(params.w_k), ad.leaf(params.b_k)
    w_v, b_v = ad.leaf(params.w_v), ad.leaf(params.b_v)
    w_p, b_p = ad.leaf(params.w_p), ad.leaf(params.b_p)
    w_h1, b_h1 = ad.leaf(params.w_h1), ad.leaf(params.b_h1)
    w_h2, b_h2 = ad.leaf(params.w_h2), ad.leaf(params.b_h2)

    if matrix.values.shape[0] != c.k_disc:
        raise QaError(
            f"score matrix has {matrix.values.shape[0]} rows, model expects {c.k_disc}"
        )
    if matrix.n_docs == 0:
        pooled = ad.constant(np.zeros(c.value_dim))
    else:
        projected = ad.affine(w_proj, ad.constant(matrix.values), b_proj)
        keys = ad.tanh(ad.affine(w_k, projected, b_k))
        values = ad.relu(ad.affine(w_v, projected, b_v))
        weights = ad.softmax_shifted(ad.matmul(w_p, keys), b_p)
        pooled = ad.matmul(values, weights)
    hidden = ad.relu(ad.affine(w_h1, pooled, b_h1))
    return ad.add(ad.dot(w_h2, hidden), b_h2)


def loss_node(instance: RankingInstance, params: RankerParams):
    """Cross-entropy loss node for one labeled question."""
    if instance.answer_index is None:
        raise QaError(f"question {instance.question_id!r} is unlabeled")
    logits = ad.stack(
        [_candidate_logit_node(m, params) for m in instance.matrices]
    )
    return ad.cross_entropy_node(logits, instance.answer_index)


# ---------------------------------------------------------------------------
# Training with random restarts
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    restart: int
    epoch: int
    train_loss: float
    dev_loss: float
    dev_accuracy: float


@dataclass
class TrainResult:
    params: RankerParams
    config: RankerConfig
    best_restart: int
    best_dev_loss: float
    log: list[EpochRecord] = field(default_factory=list)
    failed_restarts: list[dict] = field(default_factory=list)


def evaluate_loss(instances, params: RankerParams) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) over labeled instances."""
    total_loss = 0.0
    correct = 0
    for inst in instances:
        pred = predict(inst, params)
        logits = np.log(np.maximum(pred.probabilities, 1e-300))
        total_loss += ad.cross_entropy(logits, inst.answer_index)
        if pred.predicted_index == inst.answer_index:
            correct += 1
    n = len(instances)
    return (total_loss / n if n else 0.0, correct / n if n else 0.0)


def train(train_set, dev_set, config: RankerConfig) -> TrainResult:
    """Run `restarts` independent trainings; keep the best-dev-loss snapshot.

    Restart r uses seed config.seed + r for both initialization and the
    per-epoch shuffle, so the whole procedure is deterministic.
    """
    train_set = list(train_set)
    dev_set = list(dev_set)
    if not train_set:
        raise QaError("empty training set")
    for inst in train_set:
        if inst.answer_index is None:
            raise QaError(f"unlabeled training question {inst.question_id!r}")

    best_values = None
    best_dev_loss = np.inf
    best_restart = -1
    log: list[EpochRecord] = []
    failed: list[dict] = []

    for restart in range(config.restarts):
        rng = np.random.default_rng(config.seed + restart)
        params = RankerParams(config, rng=rng)
        optimizer = Adam(params.all(), lr=config.lr)
        try:
            for epoch in range(config.epochs):
                order = rng.permutation(len(train_set))
                epoch_loss = 0.0
                for start in range(0, len(order), config.batch_size):
                    batch = order[start : start + config.batch_size]
                    optimizer.zero_grad()
                    batch_loss = 0.0
                    for idx in batch:
                        loss = loss_node(train_set[idx], params)
                        ad.backward(loss)
                        batch_loss += float(loss.value)
                    if not np.isfinite(batch_loss):
                        raise FloatingPointError(
                            f"non-finite loss at restart {restart}, epoch {epoch}"
                        )
                    scale = 1.0 / len(batch)
                    for p in params.all():
                        p.grad *= scale
                    optimizer.step()
                    epoch_loss += batch_loss
                dev_loss, dev_acc = evaluate_loss(dev_set, params)
                log.append(EpochRecord(
                    restart=restart,
                    epoch=epoch,
                    train_loss=epoch_loss / len(train_set),
                    dev_loss=dev_loss,
                    dev_accuracy=dev_acc,
                ))
                if dev_loss < best_dev_loss:
                    best_dev_loss = dev_loss
                    best_values = params.copy_values()
                    best_restart = restart
        except FloatingPointError as exc:
            failed.append({"restart": restart, "error": str(exc)})
            continue

    if best_values is None:
        raise QaError(f"all {config.restarts} restarts failed: {failed}")
    best_params = RankerParams(config)
    best_params.load_values(best_values)
    return TrainResult(
        params=best_params,
        config=config,
        best_restart=best_restart,
        best_dev_loss=float(best_dev_loss),
        log=log,
        failed_restarts=failed,
    )


# ---------------------------------------------------------------------------
# Ranking export
# ---------------------------------------------------------------------------


def export_rankings(params: RankerParams, instances, top_k: int):
    """Attention-weight document rankings per (question, candidate).

    Documents are sorted by attention weight descending, ties by ascending
    doc_id; raw weights are emitted (no re-normalization after truncation).
    """
    out = []
    for inst in instances:
        for cand_idx, matrix in enumerate(inst.matrices):
            result = attend(project_scores(matrix.values, params), params)
            order = sorted(
                range(matrix.n_docs),
                key=lambda j: (-result.weights[j], matrix.doc_ids[j]),
            )
            out.append({
                "question_id": inst.question_id,
                "candidate_index": cand_idx,
                "ranking": [
                    {"doc_id": matrix.doc_ids[j], "weight": float(result.weights[j])}
                    for j in order[:top_k]
                ],
            })
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_VERSION = 1


def save_params(params: RankerParams, path: str | Path,
                row_order=("tfd", "drd", "avd")) -> None:
    """Versioned checkpoint: JSON header + little-endian float64 payload."""
    header = {
        "version": _CKPT_VERSION,
        "config": asdict(params.config),
        "row_order": list(row_order),
        "fields": list(PARAM_FIELDS),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in PARAM_FIELDS:
            value = getattr(params, name).value
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_params(path: str | Path) -> tuple[RankerParams, RankerConfig, list[str]]:
    with open(path, "rb") as fh:
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CheckpointError(f"{path}: truncated checkpoint header")
        (header_len,) = struct.unpack("<Q", raw_len)
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise CheckpointError(f"{path}: truncated checkpoint header")
        try:
            header = json.loads(header_bytes)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint header") from exc
        if header.get("version") != _CKPT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('version')}"
            )
        config = RankerConfig(**header["config"])
        params = RankerParams(config)
        for name in PARAM_FIELDS:
            shape = getattr(params, name).value.shape
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise CheckpointError(f"{path}: truncated payload at {name}")
            getattr(params, name).value[...] = np.frombuffer(
                data, dtype="<f8"
            ).reshape(shape)
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return params, config, list(header["row_order"])


def check_compatible(params: RankerParams, instances, row_order) -> None:
    """Fail fast when a checkpoint does not match the score matrices."""
    for inst in instances:
        for matrix in inst.matrices:
            if matrix.values.shape[0] != params.config.k_disc:
                raise CheckpointError(
                    f"checkpoint expects {params.config.k_disc} discriminator "
                    f"rows, question {inst.question_id!r} has "
                    f"{matrix.values.shape[0]}"
                )
            if tuple(matrix.row_ids) != tuple(row_order):
                raise CheckpointError(
                    f"checkpoint row order {tuple(row_order)} does not match "
                    f"matrix rows {matrix.row_ids}"
                )
