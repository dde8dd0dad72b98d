"""Labeled real-vector datasets and their file formats.

Two on-disk encodings are supported:

  * CSV: first column an integer label, remaining columns real features,
    optional header row.
  * KTL1 binary: magic bytes "KTL1", then u32 n, u32 d, u32 C (little
    endian), n*d row-major little-endian float64 features, n int32 labels.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError

_MAGIC = b"KTL1"


@dataclass(frozen=True)
class LabeledDataset:
    """n feature vectors of a fixed dimension with class labels 0..C-1."""

    points: np.ndarray
    labels: np.ndarray
    num_classes: int = field(default=0)  # 0: infer as max label + 1

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError("points must be a non-empty 2-d array")
        bad = np.flatnonzero(~np.all(np.isfinite(pts), axis=1))
        if bad.size:
            raise ValidationError(f"non-finite feature in row {int(bad[0])}")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != pts.shape[0]:
            raise ValidationError("labels must be one integer per point")
        if not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if np.any(as_int != labels):
                raise ValidationError("labels must be integers")
            labels = as_int
        labels = labels.astype(np.int64)
        if np.any(labels < 0):
            raise ValidationError("labels must be non-negative")
        c = self.num_classes if self.num_classes else int(labels.max()) + 1
        if c < 1:
            raise ValidationError("num_classes must be positive")
        if np.any(labels >= c):
            raise ValidationError(f"label out of range for {c} classes")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        labels = np.ascontiguousarray(labels)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", c)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices)
        return LabeledDataset(self.points[idx], self.labels[idx], self.num_classes)


def write_csv(data: LabeledDataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label, row in zip(data.labels.tolist(), data.points.tolist()):
            writer.writerow([label] + [repr(v) for v in row])


def read_csv(path: str | Path, num_classes: int = 0) -> LabeledDataset:
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            try:
                values = [float(v) for v in rec]
            except ValueError:
                if lineno == 0:
                    continue  # header row
                raise IngestionError(f"{path}: row {lineno}: non-numeric field")
            if len(values) < 2:
                raise IngestionError(f"{path}: row {lineno}: need label + features")
            if rows and len(values) - 1 != len(rows[0]):
                raise IngestionError(f"{path}: row {lineno}: inconsistent dimension")
            label = values[0]
            if label != int(label):
                raise IngestionError(f"{path}: row {lineno}: non-integer label")
            feats = values[1:]
            if not all(np.isfinite(feats)):
                raise IngestionError(f"{path}: row {lineno}: non-finite feature")
            labels.append(int(label))
            rows.append(feats)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    try:
        return LabeledDataset(np.array(rows), np.array(labels), num_classes)
    except ValidationError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def write_binary(data: LabeledDataset, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", _MAGIC, data.n, data.dim, data.num_classes))
        fh.write(data.points.astype("<f8").tobytes(order="C"))
        fh.write(data.labels.astype("<i4").tobytes())


def read_binary(path: str | Path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sIII")
    if len(raw) < header:
        raise IngestionError(f"{path}: truncated header")
    magic, n, d, c = struct.unpack_from("<4sIII", raw)
    if magic != _MAGIC:
        raise IngestionError(f"{path}: bad magic bytes {magic!r}")
    expected = header + n * d * 8 + n * 4
    if len(raw) != expected:
        raise IngestionError(f"{path}: expected {expected} bytes, found {len(raw)}")
    points = np.frombuffer(raw, dtype="<f8", count=n * d, offset=header)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=header + n * d * 8)
    bad = np.flatnonzero(~np.all(np.isfinite(points.reshape(n, d)), axis=1))
    if bad.size:
        raise IngestionError(f"{path}: non-finite feature in row {int(bad[0])}")
    try:
        return LabeledDataset(points.reshape(n, d).copy(), labels.astype(np.int64), c)
    except ValidationError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def load_dataset(path: str | Path, fmt: str = "auto") -> LabeledDataset:
    """Load a dataset, picking the format from the extension when fmt='auto'."""
    path = Path(path)
    if fmt == "auto":
        fmt = "binary" if path.suffix in {".ktl", ".ktl1", ".bin"} else "csv"
    if fmt == "csv":
        return read_csv(path)
    if fmt in {"binary", "ktl1"}:
        return read_binary(path)
    raise ValidationError(f"unknown dataset format {fmt!r}")


def save_dataset(data: LabeledDataset, path: str | Path, fmt: str = "auto") -> None:
    path = Path(path)
    if fmt == "auto":
        fmt = "binary" if path.suffix in {".ktl", ".ktl1", ".bin"} else "csv"
    if fmt == "csv":
        write_csv(data, path)
    elif fmt in {"binary", "ktl1"}:
        write_binary(data, path)
    else:
        raise ValidationError(f"unknown dataset format {fmt!r}")
