"""Exact k-nearest-neighbor classification with Euclidean distance.

Neighbor selection uses distance closure: every training point strictly
closer than the k-th smallest distance is a neighbor, and so is every point
exactly tied with it.  This keeps classification permutation invariant and
makes the vote over duplicated support points equal to the local label
frequency instead of a single arbitrary representative.  Vote ties are
broken toward the smallest label.

Queries are evaluated in chunks; set KTL_THREADS to evaluate chunks in a
thread pool (results are chunk-independent integer counts, so the output is
identical for any thread count).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ValidationError
from .rng import make_rng

_CHUNK_ELEMENTS = 8_000_000  # budget for one (chunk, n) distance block


@dataclass(frozen=True)
class KnnConfig:
    """k for the vote; the distance is always Euclidean."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be a positive integer")


def squared_distances(queries: np.ndarray, train_points: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, accumulated dimension by dimension."""
    q = np.asarray(queries, dtype=np.float64)
    t = np.asarray(train_points, dtype=np.float64)
    out = np.zeros((q.shape[0], t.shape[0]), dtype=np.float64)
    for dim in range(q.shape[1]):
        diff = q[:, dim, None] - t[None, :, dim]
        out += diff * diff
    return out


def _threads() -> int:
    raw = os.environ.get("KTL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _counts_chunk(
    train: LabeledDataset, onehot: np.ndarray, queries: np.ndarray, k: int
) -> np.ndarray:
    d2 = squared_distances(queries, train.points)
    if k >= train.n:
        kth = d2.max(axis=1)
    else:
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    mask = d2 <= kth[:, None]
    return mask.astype(np.float64) @ onehot


def _label_counts(train: LabeledDataset, queries: np.ndarray, k: int) -> np.ndarray:
    """Distance-closure neighbor label counts, one row per query."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != train.dim:
        raise ValidationError(
            f"query dimension {queries.shape[-1]} does not match training "
            f"dimension {train.dim}"
        )
    if k > train.n:
        raise ValidationError(f"k={k} exceeds the training size {train.n}")
    onehot = (
        train.labels[:, None] == np.arange(train.num_classes)[None, :]
    ).astype(np.float64)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, train.n))
    starts = range(0, queries.shape[0], chunk)
    blocks = [queries[s : s + chunk] for s in starts]
    workers = min(_threads(), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _counts_chunk(train, onehot, b, k), blocks))
    else:
        parts = [_counts_chunk(train, onehot, b, k) for b in blocks]
    return np.vstack(parts)


def classify_batch(
    train: LabeledDataset, queries: np.ndarray, cfg: KnnConfig
) -> np.ndarray:
    """Predicted label per query row."""
    counts = _label_counts(train, queries, cfg.k)
    return np.argmax(counts, axis=1).astype(np.int64)  # first max = smallest label


def knn_classify(train: LabeledDataset, query: np.ndarray, cfg: KnnConfig) -> int:
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    return int(classify_batch(train, query, cfg)[0])


def knn_posterior(
    train: LabeledDataset, query: np.ndarray, cfg: KnnConfig
) -> np.ndarray:
    """Neighbor vote fractions per label; sums to 1."""
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    counts = _label_counts(train, query, cfg.k)[0]
    return counts / counts.sum()


def error_rate(
    train: LabeledDataset, test: LabeledDataset, cfg: KnnConfig
) -> float:
    """Fraction of misclassified test points."""
    if test.dim != train.dim:
        raise ValidationError(
            f"test dimension {test.dim} does not match training dimension {train.dim}"
        )
    predictions = classify_batch(train, test.points, cfg)
    return float(np.count_nonzero(predictions != test.labels)) / test.n


@dataclass(frozen=True)
class CurvePoint:
    size: int
    mean: float
    sd: float
    ci95: float
    runs: int


@dataclass(frozen=True)
class ConvergenceCurve:
    points: tuple[CurvePoint, ...]

    def __post_init__(self) -> None:
        sizes = [pt.size for pt in self.points]
        if sizes != sorted(set(sizes)):
            raise ValidationError("curve sizes must be strictly increasing")
        if any(pt.ci95 < 0.0 for pt in self.points):
            raise ValidationError("confidence half-widths must be non-negative")


_TIE_GUARD = 1e-9  # relative band around the k-th distance that forces the
                   # exact closure scan; outside it the k-set is unambiguous


def subsample_error(
    data: LabeledDataset, test: LabeledDataset, idx: np.ndarray, k: int
) -> float:
    """Test error of kNN trained on data[idx], via a KD-tree fast path.

    Result-identical to ``error_rate(data.subset(idx), test, cfg)``: queries
    whose k-th and (k+1)-th distances fall within the guard band are re-run
    through the exact distance-closure scan, so boundary ties (including
    duplicated points) vote exactly as in the brute-force reference.
    """
    from scipy.spatial import cKDTree

    sub_points = data.points[idx]
    sub_labels = data.labels[idx]
    m = sub_points.shape[0]
    c = data.num_classes
    if k >= m:
        counts = np.bincount(sub_labels, minlength=c)
        pred = int(np.argmax(counts))
        return float(np.count_nonzero(pred != test.labels)) / test.n
    tree = cKDTree(sub_points)
    dists, nn = tree.query(test.points, k=k + 1)
    labels_k = sub_labels[nn[:, :k]]
    counts = (labels_k[:, :, None] == np.arange(c)[None, None, :]).sum(axis=1)
    boundary = dists[:, k] - dists[:, k - 1] <= _TIE_GUARD * np.maximum(
        dists[:, k], 1e-300
    )
    for row in np.flatnonzero(boundary):
        d2 = squared_distances(test.points[row : row + 1], sub_points)[0]
        kth = np.partition(d2, k - 1)[k - 1]
        counts[row] = np.bincount(sub_labels[d2 <= kth], minlength=c)
    predictions = np.argmax(counts, axis=1)
    return float(np.count_nonzero(predictions != test.labels)) / test.n


def convergence_curve(
    data: LabeledDataset,
    test: LabeledDataset,
    cfg: KnnConfig,
    sizes: list[int],
    runs: int,
    seed: int,
) -> ConvergenceCurve:
    """Mean/sd/95% CI of the test error over seeded subsamples of each size.

    Each (size, run) pair draws a uniform subsample without replacement from
    its own derived generator, so the curve is a pure function of the inputs.
    The interval is the normal approximation mean +- 1.96 sd / sqrt(runs).
    """
    if runs < 1:
        raise ValidationError("runs must be at least 1")
    ordered = sorted(set(int(s) for s in sizes))
    if ordered != [int(s) for s in sizes]:
        raise ValidationError("sizes must be strictly increasing")
    if ordered[0] < cfg.k:
        raise ValidationError("smallest size is below k")
    if ordered[-1] > data.n:
        raise ValidationError(f"size {ordered[-1]} exceeds the data size {data.n}")
    if test.dim != data.dim:
        raise ValidationError("test dimension does not match the data dimension")
    points = []
    for size_idx, m in enumerate(ordered):
        errors = []
        for run in range(runs):
            rng = make_rng(seed, size_idx, run)
            idx = rng.choice(data.n, size=m, replace=False)
            errors.append(subsample_error(data, test, idx, cfg.k))
        mean = math.fsum(errors) / runs
        if runs > 1:
            var = math.fsum((e - mean) ** 2 for e in errors) / (runs - 1)
            sd = math.sqrt(var)
        else:
            sd = 0.0
        ci95 = 1.96 * sd / math.sqrt(runs)
        points.append(CurvePoint(m, mean, sd, ci95, runs))
    return ConvergenceCurve(tuple(points))


def best_k_search(
    train: LabeledDataset, test: LabeledDataset, k_max: int
) -> tuple[int, float]:
    """The k in [1, k_max] with the lowest test error (smallest k on ties)."""
    if k_max < 1 or k_max > train.n:
        raise ValidationError("k_max must lie in [1, n]")
    if test.dim != train.dim:
        raise ValidationError("test dimension does not match training dimension")
    d2 = squared_distances(test.points, train.points)
    d2_sorted = np.sort(d2, axis=1)
    onehot = (
        train.labels[:, None] == np.arange(train.num_classes)[None, :]
    ).astype(np.float64)
    best_k, best_err = 1, math.inf
    for k in range(1, k_max + 1):
        kth = d2_sorted[:, k - 1]
        counts = (d2 <= kth[:, None]).astype(np.float64) @ onehot
        predictions = np.argmax(counts, axis=1)
        err = float(np.count_nonzero(predictions != test.labels)) / test.n
        if err < best_err:
            best_k, best_err = k, err
    return best_k, best_err
