"""Family-classification training of a linear adapter over frozen embeddings.

The trainable pieces are a square projection applied to every input embedding
(identity at initialization, so training starts from the raw behaviour) and a
per-family softmax classifier head. The loss is mean cross-entropy over the
batch; optionally the projected embedding is L2-normalized before the
classifier, which keeps training consistent with the cosine comparisons used
at evaluation time.

Optimization is plain SGD with momentum, a per-batch learning-rate schedule
(linear warmup, stepped milestone decay, linear cooldown) and global-norm
gradient clipping. Everything is seeded and single-threaded, so a (dataset,
config) pair determines the result bit-exactly.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .calibration import compute_auc
from .embedding_store import DatasetIndex, EmbeddingMatrix
from .errors import (
    BadMagicError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    InvalidConfigError,
    LabelOutOfRangeError,
    NotEnoughFamiliesError,
    ParseError,
    TruncatedFileError,
    UnknownImageIdError,
    ZeroVectorError,
)

KMD1_MAGIC = b"KMD1"
KMD1_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIIIB")


@dataclass
class AdapterModel:
    projection: np.ndarray          # (d_in, d_out)
    classifier_weights: np.ndarray  # (n_families, d_out), one row per family
    classifier_bias: np.ndarray     # (n_families,)
    normalize_embeddings: bool
    family_ids: list[str]

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.classifier_weights = np.asarray(self.classifier_weights, dtype=np.float64)
        self.classifier_bias = np.asarray(self.classifier_bias, dtype=np.float64)
        if self.projection.ndim != 2:
            raise DimensionMismatchError("projection must be 2-D")
        d_out = self.projection.shape[1]
        n = len(self.family_ids)
        if self.classifier_weights.shape != (n, d_out):
            raise DimensionMismatchError(
                f"classifier weights must be ({n}, {d_out}), "
                f"got {self.classifier_weights.shape}"
            )
        if self.classifier_bias.shape != (n,):
            raise DimensionMismatchError(
                f"classifier bias must have {n} entries"
            )
        if len(set(self.family_ids)) != n:
            raise ValueError("family ids must be unique")
        for arr in (self.projection, self.classifier_weights, self.classifier_bias):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.projection.shape[0]

    @property
    def d_out(self) -> int:
        return self.projection.shape[1]

    @property
    def n_families(self) -> int:
        return len(self.family_ids)


@dataclass
class TrainConfig:
    base_lr: float = 0.0001
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 50
    warmup_batches: int = 200
    cooldown_batches: int = 400
    milestone_epochs: tuple[int, ...] = (8, 14, 25, 35, 40)
    milestone_factor: float = 0.75
    clip_norm: float = 1.5
    seed: int = 0
    normalize_embeddings: bool = True

    def validate(self) -> None:
        if self.base_lr <= 0:
            raise InvalidConfigError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be at least 1")
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be at least 1")
        if self.warmup_batches < 0 or self.cooldown_batches < 0:
            raise InvalidConfigError("ramp lengths cannot be negative")
        if self.milestone_factor <= 0:
            raise InvalidConfigError("milestone_factor must be positive")
        if self.clip_norm <= 0:
            raise InvalidConfigError("clip_norm must be positive")


@dataclass
class TrainLog:
    epoch_mean_loss: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    grad_norm_trace: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    batches_per_epoch: int = 0


def _project(projection, normalize, batch):
    z = batch @ projection
    if normalize:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVectorError("projected embedding has zero norm")
        z = z / norms[:, None]
    return z


def forward_logits(model: AdapterModel, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d_in:
        raise DimensionMismatchError(
            f"batch must be (n, {model.d_in}), got {x.shape}"
        )
    z = _project(model.projection, model.normalize_embeddings, x)
    return z @ model.classifier_weights.T + model.classifier_bias


def _check_labels(labels, n_classes, batch_len):
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] != batch_len:
        raise LabelOutOfRangeError("labels must be a vector matching the batch")
    if batch_len == 0:
        raise LabelOutOfRangeError("batch must be nonempty")
    if y.min() < 0 or y.max() >= n_classes:
        raise LabelOutOfRangeError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{y.min()}, {y.max()}]"
        )
    return y


def classification_loss(logits, labels) -> float:
    """Mean negative log softmax probability of the true class."""
    logit_arr = np.asarray(logits, dtype=np.float64)
    y = _check_labels(labels, logit_arr.shape[1], logit_arr.shape[0])
    shifted = logit_arr - logit_arr.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(len(y)), y]
    return float(losses.mean())


def _loss_and_grad_arrays(projection, weights, bias, normalize, batch, labels):
    """Loss plus analytic gradients, including the normalization Jacobian."""
    x = np.asarray(batch, dtype=np.float64)
    y = _check_labels(labels, weights.shape[0], x.shape[0])
    z = x @ projection
    if normalize:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVectorError("projected embedding has zero norm")
        z_hat = z / norms[:, None]
    else:
        z_hat = z
    logits = z_hat @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    log_z = np.log(exp.sum(axis=1))
    loss = float((log_z - shifted[np.arange(len(y)), y]).mean())

    batch_size = x.shape[0]
    g_logits = softmax.copy()
    g_logits[np.arange(len(y)), y] -= 1.0
    g_logits /= batch_size
    grad_bias = g_logits.sum(axis=0)
    grad_weights = g_logits.T @ z_hat
    g_z_hat = g_logits @ weights
    if normalize:
        radial = (z_hat * g_z_hat).sum(axis=1, keepdims=True)
        g_z = (g_z_hat - radial * z_hat) / norms[:, None]
    else:
        g_z = g_z_hat
    grad_projection = x.T @ g_z
    grads = {
        "projection": grad_projection,
        "classifier_weights": grad_weights,
        "classifier_bias": grad_bias,
    }
    return loss, grads


def loss_and_gradients(model: AdapterModel, batch, labels):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d_in:
        raise DimensionMismatchError(
            f"batch must be (n, {model.d_in}), got {x.shape}"
        )
    return _loss_and_grad_arrays(
        model.projection,
        model.classifier_weights,
        model.classifier_bias,
        model.normalize_embeddings,
        x,
        labels,
    )


def clip_gradients(grads: dict, clip_norm: float):
    """Scale all gradients together so their global L2 norm is <= clip_norm."""
    if clip_norm <= 0:
        raise InvalidConfigError("clip_norm must be positive")
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= clip_norm:
        return dict(grads)
    factor = clip_norm / total
    return {name: g * factor for name, g in grads.items()}


def lr_at(config: TrainConfig, global_batch_index: int, total_batches: int, epoch: int) -> float:
    """Learning rate for one batch.

    Milestones are 1-indexed epochs and take effect at the start of the named
    epoch; the warmup/cooldown ramps multiply the milestone-scaled rate.
    """
    if not 0 <= global_batch_index < total_batches:
        raise IndexOutOfRangeError(
            f"batch index {global_batch_index} outside [0, {total_batches})"
        )
    passed = sum(1 for m in config.milestone_epochs if m <= epoch)
    rate = config.base_lr * config.milestone_factor**passed
    if global_batch_index < config.warmup_batches:
        rate *= (global_batch_index + 1) / config.warmup_batches
    elif global_batch_index >= total_batches - config.cooldown_batches:
        rate *= (total_batches - global_batch_index) / config.cooldown_batches
    return rate


def _training_rows(index: DatasetIndex):
    """Rows and class labels for every detected image, in canonical id order."""
    family_ids = []
    rows = []
    labels = []
    for family_id, persons in index.families.items():
        family_rows = [
            index.image_lookup[image_id].row
            for person_images in persons.values()
            for image_id in person_images
            if index.image_lookup[image_id].detected
        ]
        if not family_rows:
            continue
        label = len(family_ids)
        family_ids.append(family_id)
        rows.extend(family_rows)
        labels.extend([label] * len(family_rows))
    return family_ids, np.asarray(rows), np.asarray(labels)


def _pair_rows(validation, index: DatasetIndex):
    rows_a, rows_b, truth = [], [], []
    for pair in validation.pairs:
        for image_id in (pair.image_a, pair.image_b):
            if image_id not in index.image_lookup:
                raise UnknownImageIdError(f"unknown image id {image_id!r}")
        rows_a.append(index.image_lookup[pair.image_a].row)
        rows_b.append(index.image_lookup[pair.image_b].row)
        truth.append(pair.is_kin)
    return np.asarray(rows_a), np.asarray(rows_b), truth


def _pairs_auc(values, projection, normalize, rows_a, rows_b, truth):
    z = values @ projection
    if normalize:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVectorError("projected embedding has zero norm")
        z = z / norms[:, None]
    a = z[rows_a]
    b = z[rows_b]
    sims = (a * b).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return compute_auc(list(zip(sims, truth)))


def train(
    index: DatasetIndex,
    matrix: EmbeddingMatrix,
    config: TrainConfig,
    validation=None,
    select_best: bool = True,
):
    """Fit the adapter and classifier head; returns (AdapterModel, TrainLog).

    With validation pairs supplied, the AUC of the adapted embeddings is
    logged after every epoch and (unless ``select_best`` is off) the returned
    parameters are those of the best-AUC epoch rather than the last one.
    """
    config.validate()
    family_ids, rows, labels = _training_rows(index)
    if len(family_ids) < 2:
        raise NotEnoughFamiliesError(
            f"training needs at least 2 families with detected images, "
            f"got {len(family_ids)}"
        )
    x_train = matrix.values[rows]
    n_train = len(rows)
    n_classes = len(family_ids)
    dim = matrix.dim

    batches_per_epoch = math.ceil(n_train / config.batch_size)
    total_batches = config.epochs * batches_per_epoch
    if config.warmup_batches + config.cooldown_batches > total_batches:
        raise InvalidConfigError(
            f"warmup ({config.warmup_batches}) plus cooldown "
            f"({config.cooldown_batches}) exceed the {total_batches} total batches"
        )

    rng = np.random.Generator(np.random.PCG64(config.seed))
    projection = np.eye(dim)
    weights = 0.01 * rng.standard_normal((n_classes, dim))
    bias = np.zeros(n_classes)
    velocity = {
        "projection": np.zeros_like(projection),
        "classifier_weights": np.zeros_like(weights),
        "classifier_bias": np.zeros_like(bias),
    }

    if validation is not None:
        rows_a, rows_b, truth = _pair_rows(validation, index)

    log = TrainLog(batches_per_epoch=batches_per_epoch)
    best_auc = -np.inf
    best_params = None
    global_batch = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            sel = perm[start : start + config.batch_size]
            loss, grads = _loss_and_grad_arrays(
                projection, weights, bias, config.normalize_embeddings,
                x_train[sel], labels[sel],
            )
            loss_sum += loss * len(sel)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            log.grad_norm_trace.append(norm)
            grads = clip_gradients(grads, config.clip_norm)
            rate = lr_at(config, global_batch, total_batches, epoch)
            log.lr_trace.append(rate)
            params = {
                "projection": projection,
                "classifier_weights": weights,
                "classifier_bias": bias,
            }
            for name, param in params.items():
                velocity[name] = config.momentum * velocity[name] - rate * grads[name]
                param += velocity[name]
            global_batch += 1
        log.epoch_mean_loss.append(loss_sum / n_train)
        if validation is not None:
            auc = _pairs_auc(
                matrix.values, projection, config.normalize_embeddings,
                rows_a, rows_b, truth,
            )
            log.val_auc.append(auc)
            if auc > best_auc:
                best_auc = auc
                best_params = (projection.copy(), weights.copy(), bias.copy())
                log.best_epoch = epoch

    if validation is not None and select_best and best_params is not None:
        projection, weights, bias = best_params
    model = AdapterModel(
        projection=projection,
        classifier_weights=weights,
        classifier_bias=bias,
        normalize_embeddings=config.normalize_embeddings,
        family_ids=family_ids,
    )
    return model, log


def apply_adapter(model: AdapterModel, matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Map every row through the projection, dropping the classifier."""
    if matrix.dim != model.d_in:
        raise DimensionMismatchError(
            f"matrix dimension {matrix.dim} does not match adapter input "
            f"{model.d_in}"
        )
    z = _project(model.projection, model.normalize_embeddings, matrix.values)
    return EmbeddingMatrix(z, dim=model.d_out)


def write_train_log(log: TrainLog, path) -> None:
    """Per-epoch summary CSV: epoch,mean_loss,val_auc,lr_first_batch."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss,val_auc,lr_first_batch\n")
        for i, mean_loss in enumerate(log.epoch_mean_loss):
            auc = f"{log.val_auc[i]!r}" if i < len(log.val_auc) else ""
            first_lr = log.lr_trace[i * log.batches_per_epoch]
            fh.write(f"{i + 1},{mean_loss!r},{auc},{first_lr!r}\n")


# -- model file --------------------------------------------------------------

def write_model(model: AdapterModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _MODEL_HEADER.pack(
                KMD1_MAGIC,
                KMD1_VERSION,
                model.d_in,
                model.d_out,
                model.n_families,
                1 if model.normalize_embeddings else 0,
            )
        )
        fh.write(np.ascontiguousarray(model.projection, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.classifier_weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.classifier_bias, dtype="<f8").tobytes())
        trailer = "".join(json.dumps(fid) + "\n" for fid in model.family_ids)
        fh.write(trailer.encode("utf-8"))


def load_model(path) -> AdapterModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) >= 4 and blob[:4] != KMD1_MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}")
    if len(blob) < _MODEL_HEADER.size:
        raise TruncatedFileError(
            f"header needs {_MODEL_HEADER.size} bytes, file has {len(blob)}"
        )
    _, version, d_in, d_out, n, normalize = _MODEL_HEADER.unpack_from(blob)
    if version != KMD1_VERSION:
        raise BadMagicError(f"unsupported version {version}")
    counts = (d_in * d_out, n * d_out, n)
    payload_bytes = 8 * sum(counts)
    if len(blob) < _MODEL_HEADER.size + payload_bytes:
        raise TruncatedFileError(
            f"expected at least {_MODEL_HEADER.size + payload_bytes} bytes, "
            f"file has {len(blob)}"
        )
    offset = _MODEL_HEADER.size
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset))
        offset += 8 * count
    trailer = blob[offset:].decode("utf-8")
    lines = trailer.splitlines()
    if len(lines) != n:
        raise ParseError(f"expected {n} family id lines, found {len(lines)}")
    family_ids = []
    for lineno, line in enumerate(lines, start=1):
        try:
            fid = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(fid, str):
            raise ParseError("family id must be a JSON string", line=lineno)
        family_ids.append(fid)
    return AdapterModel(
        projection=arrays[0].reshape(d_in, d_out).copy(),
        classifier_weights=arrays[1].reshape(n, d_out).copy(),
        classifier_bias=arrays[2].copy(),
        normalize_embeddings=bool(normalize),
        family_ids=family_ids,
    )
