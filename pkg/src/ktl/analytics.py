"""Correlation statistics relating transformation properties to kNN error.

Includes the plain Pearson coefficient, the first canonical correlation
between two views, the computable convergence-bound surrogate
1/sqrt(k) + L * (k/n)^(1/d) + mse^(1/4), and the per-family report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateInputError, ValidationError

_RIDGE = 1e-8


def pearson_r(a, b) -> float:
    """Sample Pearson correlation; exact for affinely related series."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ValidationError("series must have equal length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va <= 0.0 or vb <= 0.0:
        raise DegenerateInputError("a series has zero variance")
    r = float(da @ db) / math.sqrt(va * vb)
    return min(1.0, max(-1.0, r))


def _standardize(view: np.ndarray) -> np.ndarray:
    centered = view - view.mean(axis=0)
    sd = centered.std(axis=0)
    return np.where(sd > 0.0, centered / np.where(sd > 0.0, sd, 1.0), centered)


def _inv_sqrt(cov: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(cov)
    if np.any(values <= 0.0):
        raise DegenerateInputError("covariance block is singular beyond ridge repair")
    return vectors @ np.diag(1.0 / np.sqrt(values)) @ vectors.T


def cca_first_correlation(
    view_a: np.ndarray, view_b: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """First canonical correlation between two views with rows as samples.

    Columns are standardized internally and both covariance blocks receive a
    ridge of 1e-8 before whitening.  The returned correlation is the Pearson
    coefficient of the two projected variates (non-negative by sign choice);
    when view_a is a single column the better of the whitened direction and
    each single view_b column is kept, so single columns never beat the
    result.  Weights refer to the standardized columns.
    """
    a = np.atleast_2d(np.asarray(view_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(view_b, dtype=np.float64))
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValidationError("views must be 2-d with the same number of rows")
    n, p = a.shape
    q = b.shape[1]
    if n <= max(p, q) + 1:
        raise ValidationError(f"need more than max(p, q) + 1 = {max(p, q) + 1} samples")
    az = _standardize(a)
    bz = _standardize(b)
    caa = az.T @ az / n + _RIDGE * np.eye(p)
    cbb = bz.T @ bz / n + _RIDGE * np.eye(q)
    cab = az.T @ bz / n
    isa = _inv_sqrt(caa)
    isb = _inv_sqrt(cbb)
    u, _, vt = np.linalg.svd(isa @ cab @ isb)
    wa = isa @ u[:, 0]
    wb = isb @ vt[0]

    def realized(wa_c: np.ndarray, wb_c: np.ndarray) -> float:
        try:
            return pearson_r(az @ wa_c, bz @ wb_c)
        except DegenerateInputError:
            return math.nan

    best = (realized(wa, wb), wa, wb)
    if math.isnan(best[0]):
        raise DegenerateInputError("projected variates have zero variance")
    if best[0] < 0.0:
        best = (-best[0], -wa, wb)
    if p == 1:
        for j in range(q):
            ej = np.zeros(q)
            ej[j] = 1.0
            r = realized(np.ones(1), ej)
            if not math.isnan(r) and abs(r) > best[0]:
                best = (abs(r), np.ones(1), ej if r >= 0 else -ej)
    return best


def bound_surrogate(
    k: int, n: int, d: int, lipschitz: float, mse: float, mse_exponent: float = 0.25
) -> float:
    """1/sqrt(k) + lipschitz * (k/n)^(1/d) + mse^mse_exponent, constants 1."""
    if k < 1 or n < k:
        raise ValidationError("need 1 <= k <= n")
    if d < 1:
        raise ValidationError("d must be at least 1")
    if mse < 0.0 or lipschitz < 0.0:
        raise ValidationError("mse and lipschitz must be non-negative")
    return 1.0 / math.sqrt(k) + lipschitz * (k / n) ** (1.0 / d) + mse**mse_exponent


@dataclass(frozen=True)
class TransformationRecord:
    """Per-transformation measurements used for the correlation study."""

    name: str
    dim: int
    mse: float
    frobenius_norm: float
    knn_error: Mapping[int, float]
    lipschitz: float | None = None
    train_size: int | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError(f"record {self.name!r}: dim must be >= 1")
        for k, err in self.knn_error.items():
            if not 0.0 <= err <= 1.0:
                raise ValidationError(
                    f"record {self.name!r}: error at k={k} outside [0, 1]"
                )
        object.__setattr__(self, "knn_error", dict(self.knn_error))

    def surrogate(self, k: int, mse_exponent: float = 0.25) -> float | None:
        if self.lipschitz is None or self.train_size is None:
            return None
        return bound_surrogate(
            k, self.train_size, self.dim, self.lipschitz, self.mse, mse_exponent
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "mse": self.mse,
            "frobenius_norm": self.frobenius_norm,
            "knn_error": {str(k): v for k, v in sorted(self.knn_error.items())},
            "lipschitz": self.lipschitz,
            "n": self.train_size,
        }

    @staticmethod
    def from_dict(obj: dict) -> "TransformationRecord":
        try:
            return TransformationRecord(
                name=str(obj["name"]),
                dim=int(obj["dim"]),
                mse=float(obj["mse"]),
                frobenius_norm=float(obj["frobenius_norm"]),
                knn_error={int(k): float(v) for k, v in obj["knn_error"].items()},
                lipschitz=None if obj.get("lipschitz") is None else float(obj["lipschitz"]),
                train_size=None if obj.get("n") is None else int(obj["n"]),
            )
        except KeyError as exc:
            raise ValidationError(f"record is missing field {exc}") from None
        except (TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed record: {exc}") from None


@dataclass(frozen=True)
class CorrelationReport:
    pearson_dim_vs_err: float | None
    pearson_mse_vs_err: float | None
    cca_msenorm_vs_err: float | None
    sample_count: int
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "pearson_dim_vs_err": self.pearson_dim_vs_err,
            "pearson_mse_vs_err": self.pearson_mse_vs_err,
            "cca_msenorm_vs_err": self.cca_msenorm_vs_err,
            "sample_count": self.sample_count,
            "degenerate": list(self.degenerate),
        }


def bound_component_view(
    records: list[TransformationRecord], ks: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Observed errors paired with the three surrogate components, one row
    per (record, k) that has an error at that k.

    The component columns are k^(-1/2), lipschitz * (k/n)^(1/d) and
    mse^(1/4).  This is a feasibility view for canonical-correlation studies
    across several k; no target values are claimed for it.
    """
    errors: list[float] = []
    components: list[list[float]] = []
    for rec in records:
        if rec.lipschitz is None or rec.train_size is None:
            raise ValidationError(
                f"record {rec.name!r} lacks the lipschitz/n metadata"
            )
        for k in ks:
            if k in rec.knn_error:
                errors.append(rec.knn_error[k])
                components.append([
                    1.0 / math.sqrt(k),
                    rec.lipschitz * (k / rec.train_size) ** (1.0 / rec.dim),
                    rec.mse**0.25,
                ])
    if not errors:
        raise ValidationError("no (record, k) pair has an observed error")
    return np.array(errors)[:, None], np.array(components)


def build_correlation_report(
    records: list[TransformationRecord], k: int
) -> CorrelationReport:
    """Correlate dimension and mse with the kNN error at the given k, plus
    the first canonical correlation of the error against [mse, norm].

    Degenerate statistics (zero variance) are flagged by name instead of
    failing the whole report.
    """
    if len(records) < 3:
        raise ValidationError("need at least 3 records")
    for rec in records:
        if k not in rec.knn_error:
            raise ValidationError(f"record {rec.name!r} has no error for k={k}")
    err = np.array([rec.knn_error[k] for rec in records])
    dims = np.array([float(rec.dim) for rec in records])
    mses = np.array([rec.mse for rec in records])
    norms = np.array([rec.frobenius_norm for rec in records])
    degenerate: list[str] = []

    def guarded(name: str, fn):
        # a statistic whose own preconditions fail (zero variance, or too few
        # rows for the canonical pair) is flagged, not fatal
        try:
            return fn()
        except (DegenerateInputError, ValidationError):
            degenerate.append(name)
            return None

    p_dim = guarded("dim", lambda: pearson_r(dims, err))
    p_mse = guarded("mse", lambda: pearson_r(mses, err))
    cca = guarded(
        "cca",
        lambda: cca_first_correlation(err[:, None], np.column_stack([mses, norms]))[0],
    )
    return CorrelationReport(p_dim, p_mse, cca, len(records), tuple(degenerate))
