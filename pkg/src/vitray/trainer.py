"""Loss, Adam, and the train/evaluate/early-stopping loop."""

from __future__ import annotations

import copy
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import rng
from . import tensor as T
from .checkpoint import Checkpoint, save_checkpoint
from .dataio import LabeledDataset, SplitIndices, make_batches
from .errors import ContractError, ShapeError
from .tensor import Tensor
from .vit import ModelConfig, ViTParams, as_tensors, forward, init_params

log = logging.getLogger(__name__)

CSV_HEADER = "epoch,train_loss,train_acc,test_loss,test_acc\n"
LOG_NAME = "train_log.csv"
CKPT_NAME = "best.ckpt"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    split_ratio: float = 0.8
    shuffle: bool = True

    def __post_init__(self):
        # lr == 0 is allowed: it is the documented null-update mode
        if not self.learning_rate >= 0:
            raise ContractError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ContractError("batch_size, max_epochs and patience must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.adam_eps < 0:
            raise ContractError("adam_eps must be >= 0")
        if not 0 < self.split_ratio < 1:
            raise ContractError("split_ratio must lie in (0, 1)")


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: ViTParams) -> "OptimizerState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float


class EvalResult(NamedTuple):
    loss: float
    accuracy: float
    predictions: np.ndarray
    scores: np.ndarray
    labels: np.ndarray


class FitResult(NamedTuple):
    checkpoint: Checkpoint
    history: list


def cross_entropy(probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-probability of the true class (log clamped at 1e-12)."""
    labels = np.asarray(labels, dtype=np.int64)
    b, c = probs.shape
    if labels.shape != (b,):
        raise ShapeError(f"{b} probability rows but {labels.shape} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"label outside [0, {c})")
    picked = probs[np.arange(b), labels]
    return -T.mean(T.log(picked))


def predict(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; exact ties go to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=1)


def adam_step(params: ViTParams, grads: dict, state: OptimizerState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    for name, p in params.items():
        if name not in grads or np.shape(grads[name]) != p.shape:
            raise ShapeError(f"gradient for {name!r} missing or misshapen")
        if state.m[name].shape != p.shape or state.v[name].shape != p.shape:
            raise ShapeError(f"optimizer state for {name!r} does not match the parameter")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    return params, state


def batch_seed(cfg: TrainConfig, epoch: int) -> int | None:
    return rng.derive_seed(cfg.seed, rng.STREAM_BATCHES, epoch) if cfg.shuffle else None


def train_epoch(
    params: ViTParams,
    state: OptimizerState,
    dataset: LabeledDataset,
    indices: Sequence[int],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    epoch: int = 1,
) -> tuple[float, float]:
    """One pass of forward -> loss -> backward -> Adam over shuffled batches.

    Loss and accuracy are sample-weighted and come from the same forward pass
    that produced the gradients (i.e. before each batch's update).
    """
    if len(indices) == 0:
        raise ContractError("training split is empty")
    total_loss = 0.0
    correct = 0
    for batch in make_batches(indices, cfg.batch_size, batch_seed(cfg, epoch)):
        x, y = dataset.images[batch], dataset.labels[batch]
        tparams = as_tensors(params, requires_grad=True)
        probs = forward(x, tparams, model_cfg)
        loss = cross_entropy(probs, y)
        loss.backward()
        adam_step(params, {k: t.grad for k, t in tparams.items()}, state, cfg)
        total_loss += loss.item() * len(batch)
        correct += int((predict(probs.data) == y).sum())
    return total_loss / len(indices), correct / len(indices)


def evaluate(
    params: ViTParams,
    dataset: LabeledDataset,
    indices: Sequence[int],
    model_cfg: ModelConfig,
    batch_size: int = 32,
) -> EvalResult:
    """Inference only: loss, accuracy, argmax predictions and class-1 scores."""
    if len(indices) == 0:
        raise ContractError("evaluation split is empty")
    probs = []
    for batch in make_batches(indices, batch_size):
        probs.append(forward(dataset.images[batch], params, model_cfg).data)
    probs = np.concatenate(probs)
    labels = dataset.labels[list(indices)]
    picked = probs[np.arange(len(labels)), labels]
    loss = float(np.mean(-np.log(np.maximum(picked, T.LOG_CLAMP))))
    preds = predict(probs)
    return EvalResult(loss, float(np.mean(preds == labels)), preds, probs[:, 1].copy(), labels)


def log_epoch(record: EpochRecord, csv_path) -> None:
    """Append one row to the CSV log, writing the header on first use."""
    csv_path = Path(csv_path)
    fresh = not csv_path.exists() or csv_path.stat().st_size == 0
    row = (
        f"{record.epoch},{record.train_loss:.6f},{record.train_accuracy:.6f},"
        f"{record.test_loss:.6f},{record.test_accuracy:.6f}\n"
    )
    with open(csv_path, "a", newline="") as fh:
        if fresh:
            fh.write(CSV_HEADER)
        fh.write(row)


def _check_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")


TrainFn = Callable[..., tuple]
EvalFn = Callable[..., EvalResult]


def fit(
    dataset: LabeledDataset,
    split: SplitIndices,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir=None,
    *,
    params: ViTParams | None = None,
    train_fn: TrainFn = train_epoch,
    eval_fn: EvalFn = evaluate,
) -> FitResult:
    """Train with early stopping on test accuracy and keep the best checkpoint.

    An epoch counts as an improvement only if its test accuracy is strictly
    greater than the best so far; ``patience`` consecutive non-improving
    epochs stop training. With ``out_dir`` set, ``train_log.csv`` is rewritten
    and ``best.ckpt`` is saved on every improvement. ``train_fn``/``eval_fn``
    are injectable for testing the stopping logic.
    """
    if out_dir is not None:
        out_dir = Path(out_dir)
        _check_writable(out_dir)
        log_path = out_dir / LOG_NAME
        if log_path.exists():
            log_path.unlink()
    params = copy.deepcopy(params) if params is not None else init_params(model_cfg, train_cfg.seed)
    state = OptimizerState.zeros(params)
    best = Checkpoint(model_cfg, copy.deepcopy(params), -math.inf, 0)
    history: list[EpochRecord] = []
    misses = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        train_loss, train_acc = train_fn(params, state, dataset, split.train, model_cfg, train_cfg, epoch)
        result = eval_fn(params, dataset, split.test, model_cfg, train_cfg.batch_size)
        record = EpochRecord(epoch, train_loss, train_acc, result.loss, result.accuracy)
        history.append(record)
        if out_dir is not None:
            log_epoch(record, log_path)
        log.info(
            "epoch %d train_loss=%.4f train_acc=%.4f test_loss=%.4f test_acc=%.4f",
            epoch, train_loss, train_acc, result.loss, result.accuracy,
        )
        if result.accuracy > best.best_accuracy:
            best = Checkpoint(model_cfg, copy.deepcopy(params), result.accuracy, epoch)
            if out_dir is not None:
                save_checkpoint(best, out_dir / CKPT_NAME)
            misses = 0
        else:
            misses += 1
        if misses >= train_cfg.patience:
            break
    return FitResult(best, history)
