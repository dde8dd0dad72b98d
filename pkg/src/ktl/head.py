"""Softmax head training on transformed features.

A head is a linear layer with softmax output.  Training runs minibatch SGD
with momentum on the cross-entropy loss plus (l2/2)||W||_F^2 over a grid of
learning rates and l2 strengths, tracks the best test misclassification
error seen at any epoch of any grid cell, and reports the head snapshot
that achieved it.  Everything is a pure function of (data, config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import TrainingError, ValidationError
from .rng import make_rng


@dataclass(frozen=True)
class LogisticHead:
    """Weights (d, C) and bias (C,) of a softmax layer."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] < 2:
            raise ValidationError("weights must be (dim, classes) with classes >= 2")
        if b.shape != (w.shape[1],):
            raise ValidationError("bias length must match the class count")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("head parameters must be finite")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class TrainConfig:
    learning_rates: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    l2_strengths: tuple[float, ...] = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)
    epochs: int = 200
    batch_size: int = 64
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise ValidationError("learning rates must be positive")
        if any(l2 < 0 for l2 in self.l2_strengths):
            raise ValidationError("l2 strengths must be non-negative")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be at least 1")


@dataclass(frozen=True)
class HeadReport:
    mse: float
    test_error: float
    frobenius_norm: float
    lipschitz_constant: float
    learning_rate: float
    l2_strength: float
    best_epoch: int
    diverged_cells: tuple[tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "test_error": self.test_error,
            "frobenius_norm": self.frobenius_norm,
            "lipschitz_constant": self.lipschitz_constant,
            "learning_rate": self.learning_rate,
            "l2_strength": self.l2_strength,
            "best_epoch": self.best_epoch,
            "diverged_cells": [list(cell) for cell in self.diverged_cells],
        }


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature affine map fitted on the training split."""

    low: np.ndarray
    high: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        span = self.high - self.low
        scale = np.where(span > 0.0, 2.0 / np.where(span > 0.0, span, 1.0), 0.0)
        return (points - self.low) * scale - np.where(span > 0.0, 1.0, 0.0)


def normalize_features(
    train: LabeledDataset, test: LabeledDataset
) -> tuple[LabeledDataset, LabeledDataset, NormalizationStats]:
    """Map each training feature to [-1, 1]; constant features map to 0.

    The same affine map is applied to the test split, so test values outside
    the training range land outside [-1, 1].
    """
    stats = NormalizationStats(train.points.min(axis=0), train.points.max(axis=0))
    return (
        LabeledDataset(stats.apply(train.points), train.labels, train.num_classes),
        LabeledDataset(stats.apply(test.points), test.labels, test.num_classes),
        stats,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def head_scores(head: LogisticHead, points: np.ndarray) -> np.ndarray:
    return softmax(points @ head.weights + head.bias)


def head_predict(head: LogisticHead, points: np.ndarray) -> np.ndarray:
    return np.argmax(head_scores(head, points), axis=1)


def mse_test(head: LogisticHead, test: LabeledDataset) -> float:
    """Mean squared distance between the softmax output and the one-hot label.

    This is the multiclass Brier score; it lies in [0, 2] and is 0 only for
    an exactly one-hot-correct output on every test point.
    """
    if test.n < 1:
        raise ValidationError("test set must be non-empty")
    probs = head_scores(head, test.points)
    onehot = np.zeros_like(probs)
    onehot[np.arange(test.n), test.labels] = 1.0
    return float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))


def head_error(head: LogisticHead, test: LabeledDataset) -> float:
    pred = head_predict(head, test.points)
    return float(np.count_nonzero(pred != test.labels)) / test.n


def head_norms(head: LogisticHead) -> tuple[float, float]:
    """(Frobenius norm of W, Lipschitz constant of the head).

    For binary heads the constant is ||w1 - w0||_2 / 4, the exact constant of
    the sigmoid applied to the logit difference; for multiclass heads
    ||W||_F / 4 is reported as the surrogate.  The bias is excluded.
    """
    fro = float(np.linalg.norm(head.weights))
    if head.weights.shape[1] == 2:
        w = head.weights[:, 1] - head.weights[:, 0]
        lip = float(np.linalg.norm(w)) / 4.0
    else:
        lip = fro / 4.0
    return fro, lip


def _cross_entropy_grads(
    points: np.ndarray, labels: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    probs = softmax(points @ w + b)
    n = points.shape[0]
    loss = -float(np.mean(np.log(np.maximum(probs[np.arange(n), labels], 1e-300))))
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    return loss, points.T @ delta, delta.sum(axis=0)


@dataclass(frozen=True)
class CellResult:
    learning_rate: float
    l2_strength: float
    diverged: bool
    best_error: float
    best_epoch: int
    best_weights: np.ndarray | None
    best_bias: np.ndarray | None
    final_weights: np.ndarray | None
    final_bias: np.ndarray | None


def fit_cell(
    train: LabeledDataset,
    test: LabeledDataset,
    lr: float,
    l2: float,
    epochs: int,
    batch_size: int,
    momentum: float,
    rng: np.random.Generator,
) -> CellResult:
    """Train one grid cell; the last partial minibatch is kept."""
    d, c = train.dim, max(train.num_classes, test.num_classes)
    bound = 1.0 / math.sqrt(d)
    w = rng.uniform(-bound, bound, size=(d, c))
    b = np.zeros(c)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    best_error, best_epoch = math.inf, -1
    best_w: np.ndarray | None = None
    best_b: np.ndarray | None = None
    for epoch in range(epochs):
        order = rng.permutation(train.n)
        # overflow to inf/nan is the divergence signal, not an error
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, train.n, batch_size):
                idx = order[start : start + batch_size]
                loss, gw, gb = _cross_entropy_grads(
                    train.points[idx], train.labels[idx], w, b
                )
                if not np.isfinite(loss):
                    return CellResult(
                        lr, l2, True, math.inf, -1, None, None, None, None
                    )
                gw = gw + l2 * w
                vw = momentum * vw + gw
                vb = momentum * vb + gb
                w = w - lr * vw
                b = b - lr * vb
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            return CellResult(lr, l2, True, math.inf, -1, None, None, None, None)
        err = head_error(LogisticHead(w, b), test)
        if err < best_error:
            best_error, best_epoch = err, epoch
            best_w, best_b = w.copy(), b.copy()
    return CellResult(lr, l2, False, best_error, best_epoch, best_w, best_b, w, b)


def train_head(
    train: LabeledDataset, test: LabeledDataset, cfg: TrainConfig
) -> tuple[LogisticHead, HeadReport]:
    """Run the full (lr x l2) grid and return the head with the best achieved
    test misclassification error across all epochs and cells.

    Note the selection is test-set based by design; the reported numbers
    describe the best achievable operating point, not a generalization
    estimate.  Cells whose loss diverges are skipped and recorded.
    """
    if test.dim != train.dim:
        raise ValidationError("test dimension does not match training dimension")
    diverged: list[tuple[float, float]] = []
    best: CellResult | None = None
    cell_index = 0
    for lr in cfg.learning_rates:
        for l2 in cfg.l2_strengths:
            rng = make_rng(cfg.seed, cell_index)
            cell_index += 1
            result = fit_cell(
                train, test, lr, l2, cfg.epochs, cfg.batch_size, cfg.momentum, rng
            )
            if result.diverged:
                diverged.append((lr, l2))
                continue
            if best is None or result.best_error < best.best_error:
                best = result
    if best is None:
        raise TrainingError("every grid cell diverged")
    head = LogisticHead(best.best_weights, best.best_bias)
    fro, lip = head_norms(head)
    report = HeadReport(
        mse=mse_test(head, test),
        test_error=best.best_error,
        frobenius_norm=fro,
        lipschitz_constant=lip,
        learning_rate=best.learning_rate,
        l2_strength=best.l2_strength,
        best_epoch=best.best_epoch,
        diverged_cells=tuple(diverged),
    )
    return head, report


def gradient_check(head: LogisticHead, batch: LabeledDataset) -> float:
    """Max deviation between analytic and central-difference gradients of the
    cross-entropy loss, relative to max(1, |entry|)."""
    if batch.n > 32:
        raise ValidationError("gradient_check expects a batch of at most 32 points")
    w0 = head.weights.copy()
    b0 = head.bias.copy()
    _, gw, gb = _cross_entropy_grads(batch.points, batch.labels, w0, b0)
    step = 1e-6

    def loss_at(w: np.ndarray, b: np.ndarray) -> float:
        return _cross_entropy_grads(batch.points, batch.labels, w, b)[0]

    worst = 0.0
    for (i, j), analytic in np.ndenumerate(gw):
        w0[i, j] += step
        up = loss_at(w0, b0)
        w0[i, j] -= 2 * step
        down = loss_at(w0, b0)
        w0[i, j] += step
        numeric = (up - down) / (2 * step)
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric)))
    for j, analytic in enumerate(gb):
        b0[j] += step
        up = loss_at(w0, b0)
        b0[j] -= 2 * step
        down = loss_at(w0, b0)
        b0[j] += step
        numeric = (up - down) / (2 * step)
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric)))
    return worst
