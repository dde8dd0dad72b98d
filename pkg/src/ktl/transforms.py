"""Vector transformations applied to datasets, plus embedding ingestion.

All transformations are immutable; ``apply`` maps the feature matrix and
leaves labels untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LabeledDataset, load_dataset
from .errors import ValidationError


class VectorTransform:
    """Base class; subclasses implement transform() and output_dim()."""

    def transform(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_dim(self, input_dim: int) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(VectorTransform):
    def transform(self, points: np.ndarray) -> np.ndarray:
        return points

    def output_dim(self, input_dim: int) -> int:
        return input_dim


@dataclass(frozen=True)
class LinearProjection(VectorTransform):
    """x -> M (x - c); M has shape (d_out, d_in), c is optional."""

    matrix: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.center is not None:
            c = np.asarray(self.center, dtype=np.float64)
            if c.shape != (m.shape[1],):
                raise ValidationError("center length must match the input dimension")
            c.setflags(write=False)
            object.__setattr__(self, "center", c)

    def transform(self, points: np.ndarray) -> np.ndarray:
        shifted = points - self.center if self.center is not None else points
        return shifted @ self.matrix.T

    def output_dim(self, input_dim: int) -> int:
        if input_dim != self.matrix.shape[1]:
            raise ValidationError(
                f"projection expects dimension {self.matrix.shape[1]}, got {input_dim}"
            )
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CReLU(VectorTransform):
    """x -> (max(x, 0), max(-x, 0)); all positive parts first, then negative."""

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.hstack([np.maximum(points, 0.0), np.maximum(-points, 0.0)])

    def output_dim(self, input_dim: int) -> int:
        return 2 * input_dim


@dataclass(frozen=True)
class AbsValue(VectorTransform):
    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points)

    def output_dim(self, input_dim: int) -> int:
        return input_dim


@dataclass(frozen=True)
class RadialIndicator(VectorTransform):
    """x -> 1 if ||x||^2 >= radius^2 else 0, as a single coordinate."""

    radius: float

    def transform(self, points: np.ndarray) -> np.ndarray:
        inside = np.sum(points**2, axis=1) >= self.radius**2
        return inside.astype(np.float64)[:, None]

    def output_dim(self, input_dim: int) -> int:
        return 1


@dataclass(frozen=True)
class Quantizer(VectorTransform):
    """Per-coordinate quantization to bin centers over [low, high].

    Bins are half-open on the right except the last, which is closed at
    ``high``; values outside the range snap to the nearest edge bin.
    """

    bins: int
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.bins < 1:
            raise ValidationError("bin count must be at least 1")
        if not self.high > self.low:
            raise ValidationError("range must satisfy high > low")

    def transform(self, points: np.ndarray) -> np.ndarray:
        width = (self.high - self.low) / self.bins
        idx = np.floor((points - self.low) / width).astype(np.int64)
        idx = np.clip(idx, 0, self.bins - 1)
        return self.low + (idx + 0.5) * width

    def output_dim(self, input_dim: int) -> int:
        return input_dim


@dataclass(frozen=True)
class Composition(VectorTransform):
    """Applies steps in list order: the first entry runs first."""

    steps: tuple[VectorTransform, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValidationError("composition needs at least one step")

    def transform(self, points: np.ndarray) -> np.ndarray:
        for step in self.steps:
            points = step.transform(points)
        return points

    def output_dim(self, input_dim: int) -> int:
        for step in self.steps:
            input_dim = step.output_dim(input_dim)
        return input_dim


def apply(t: VectorTransform, data: LabeledDataset) -> LabeledDataset:
    """Transform the feature matrix; labels and class count are unchanged."""
    t.output_dim(data.dim)  # dimension check
    return LabeledDataset(t.transform(data.points), data.labels, data.num_classes)


@dataclass(frozen=True)
class PcaModel:
    """Mean, top-d orthonormal principal directions (rows), eigenvalues."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        comp = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        gram = comp @ comp.T
        if not np.allclose(gram, np.eye(comp.shape[0]), atol=1e-8):
            raise ValidationError("components must have orthonormal rows")
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if np.any(ev < -1e-10):
            raise ValidationError("eigenvalues must be non-negative")
        if np.any(np.diff(ev) > 1e-12):
            raise ValidationError("eigenvalues must be non-increasing")
        for name, arr in (("mean", np.asarray(self.mean, dtype=np.float64)),
                          ("components", comp), ("eigenvalues", ev)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def projection(self) -> LinearProjection:
        return LinearProjection(self.components, self.mean)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "PcaModel":
        try:
            return PcaModel(
                np.array(obj["mean"], dtype=np.float64),
                np.array(obj["components"], dtype=np.float64),
                np.array(obj["eigenvalues"], dtype=np.float64),
            )
        except KeyError as exc:
            raise ValidationError(f"PCA model is missing field {exc}") from None


def fit_pca(train: LabeledDataset, d: int) -> PcaModel:
    """Top-d principal directions of the training covariance.

    Sign convention: the largest-magnitude entry of every component is made
    positive, so repeated fits produce identical models.
    """
    if d < 1 or d > min(train.n, train.dim):
        raise ValidationError(f"d must lie in [1, min(n, D)] = [1, {min(train.n, train.dim)}]")
    mean = train.points.mean(axis=0)
    centered = train.points - mean
    cov = centered.T @ centered / train.n
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:d]
    comps = vectors[:, order].T.copy()
    for row in comps:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(mean, comps, np.maximum(eigenvalues[order], 0.0))


def ingest_embeddings(path: str | Path, fmt: str = "auto") -> LabeledDataset:
    """Load externally produced embeddings; rejects non-finite rows with a
    row-indexed error."""
    return load_dataset(path, fmt)
