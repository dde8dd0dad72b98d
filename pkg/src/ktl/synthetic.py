"""Seeded generators for tasks with analytically known posteriors.

The main generator draws X uniformly on [0, 1]^D with the clamped linear
posterior eta(x) = clamp(1/2 + (L/sqrt(D)) * sum(x_i - 1/2), 0, 1), which is
exactly L-Lipschitz and whose Bayes error reduces to a one-dimensional
integral against the density of the coordinate sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .data import LabeledDataset
from .errors import DomainError, GenerationError, ValidationError
from .finite_dist import FiniteJointDistribution, kl_divergence_bits
from .rng import make_rng


def _uniform_sum_pdf(s: float, d: int) -> float:
    """Density of the sum of d iid U[0,1] variables (Irwin-Hall), d <= 12."""
    if s <= 0.0 or s >= d:
        return 0.0
    total = 0.0
    sign = 1.0
    for j in range(int(math.floor(s)) + 1):
        total += sign * math.comb(d, j) * (s - j) ** (d - 1)
        sign = -sign
    return total / math.factorial(d - 1)


def _uniform_sum_grid(d: int, resolution: int = 200_001) -> tuple[np.ndarray, np.ndarray]:
    """Numeric density of the sum of d uniforms by repeated convolution."""
    grid = np.linspace(0.0, d, resolution)
    h = grid[1] - grid[0]
    base_len = int(round(1.0 / h)) + 1
    base = np.ones(base_len)
    density = base.copy()
    for _ in range(d - 1):
        density = np.convolve(density, base) * h
    if density.size < resolution:
        density = np.pad(density, (0, resolution - density.size))
    return grid, density[:resolution]


@dataclass(frozen=True)
class SyntheticTask:
    """A sampling task with a known posterior and closed-form Bayes error."""

    dimension: int
    lipschitz_constant: float
    bayes_error: float
    base_seed: int

    def posterior(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        slope = self.lipschitz_constant / math.sqrt(self.dimension)
        raw = 0.5 + slope * np.sum(points - 0.5, axis=1)
        return np.clip(raw, 0.0, 1.0)

    def sample(self, n: int, run: int = 0) -> LabeledDataset:
        if n < 1:
            raise ValidationError("sample size must be at least 1")
        rng = make_rng(self.base_seed, run)
        points = rng.uniform(0.0, 1.0, size=(n, self.dimension))
        labels = (rng.uniform(size=n) < self.posterior(points)).astype(np.int64)
        return LabeledDataset(points, labels, num_classes=2)


def _lipschitz_bayes_error(lipschitz: float, dimension: int) -> float:
    """E[min(eta, 1 - eta)] via a 1-d integral over the coordinate sum."""
    slope = lipschitz / math.sqrt(dimension)
    mid = dimension / 2.0

    def integrand_factory(pdf):
        def integrand(s: float) -> float:
            eta = min(max(0.5 + slope * (s - mid), 0.0), 1.0)
            return min(eta, 1.0 - eta) * pdf(s)

        return integrand

    # kinks of the integrand: integer knots of the density plus the clamp
    # points of eta
    knots = {float(j) for j in range(dimension + 1)}
    if slope > 0.0:
        for offset in (-0.5 / slope, 0.0, 0.5 / slope):
            point = mid + offset
            if 0.0 < point < dimension:
                knots.add(point)
    if dimension <= 12:
        integrand = integrand_factory(lambda s: _uniform_sum_pdf(s, dimension))
        value, _ = integrate.quad(
            integrand, 0.0, dimension, points=sorted(knots), limit=400
        )
        return value
    grid, density = _uniform_sum_grid(dimension)
    eta = np.clip(0.5 + slope * (grid - mid), 0.0, 1.0)
    return float(np.trapezoid(np.minimum(eta, 1.0 - eta) * density, grid))


def gen_lipschitz_task(lipschitz: float, dimension: int, seed: int) -> SyntheticTask:
    """Uniform X on the cube with the clamped linear posterior."""
    if lipschitz < 0.0:
        raise DomainError("the Lipschitz constant must be non-negative")
    if dimension < 1:
        raise DomainError("dimension must be at least 1")
    if lipschitz == 0.0:
        bayes = 0.5
    else:
        bayes = _lipschitz_bayes_error(lipschitz, dimension)
    return SyntheticTask(dimension, lipschitz, bayes, seed)


def gen_tightness_samples(
    delta: float, n: int, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Samples from the equal-mass two-point distribution with posteriors
    1/2 -+ delta at payloads -1 and +1, plus the same draw with both points
    collapsed to payload 0."""
    if not 0.0 <= delta < 0.5:
        raise DomainError("delta must lie in [0, 0.5)")
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = make_rng(seed)
    x = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    eta = np.where(x < 0, 0.5 - delta, 0.5 + delta)
    labels = (rng.uniform(size=n) < eta).astype(np.int64)
    raw = LabeledDataset(x[:, None], labels, num_classes=2)
    collapsed = LabeledDataset(np.zeros((n, 1)), labels, num_classes=2)
    return raw, collapsed


def gen_random_finite(
    x_size: int,
    y_size: int,
    seed: int,
    payload_dim: int | None = None,
    payload_low: float = 0.0,
    payload_high: float = 1.0,
) -> FiniteJointDistribution:
    """Cell masses from a symmetric Dirichlet (concentration 1) plus optional
    uniform vector payloads."""
    if x_size < 1 or y_size < 2:
        raise ValidationError("need x_size >= 1 and y_size >= 2")
    rng = make_rng(seed)
    mass = rng.dirichlet(np.ones(x_size * y_size)).reshape(x_size, y_size)
    mass = mass / math.fsum(mass.ravel().tolist())
    payloads = None
    if payload_dim is not None:
        payloads = rng.uniform(payload_low, payload_high, size=(x_size, payload_dim))
    return FiniteJointDistribution(
        tuple(f"x{i}" for i in range(x_size)),
        tuple(range(y_size)),
        mass,
        payloads,
    )


def gen_shifted_pair(
    eps: float,
    x_size: int = 8,
    y_size: int = 3,
    seed: int = 0,
) -> tuple[FiniteJointDistribution, FiniteJointDistribution]:
    """A source distribution and a perturbed target whose KL divergence is
    scaled into [0.5, 1.0] * eps^2 / (8 ln 2) by bisecting the perturbation.

    If even the unscaled proposal stays below the window, the pair saturates
    there (the KL precondition still holds).
    """
    if eps <= 0.0:
        raise DomainError("eps must be positive")
    target = eps * eps / (8.0 * math.log(2.0))
    source = gen_random_finite(x_size, y_size, seed)
    rng = make_rng(seed, 1)
    proposal = rng.dirichlet(np.ones(x_size * y_size)).reshape(x_size, y_size)

    def mix(t: float) -> FiniteJointDistribution:
        mass = (1.0 - t) * source.pxy + t * proposal
        mass = mass / math.fsum(mass.ravel().tolist())
        return FiniteJointDistribution(source.x_ids, source.y_ids, mass)

    def kl_at(t: float) -> float:
        return kl_divergence_bits(source, mix(t))

    if kl_at(1.0) <= target:
        return source, mix(1.0)  # saturate at the unscaled proposal
    lo, hi = 0.0, 1.0
    for _ in range(200):
        t = 0.5 * (lo + hi)
        kl = kl_at(t)
        if 0.5 * target <= kl <= target:
            return source, mix(t)
        if kl > target:
            hi = t
        else:
            lo = t
    raise GenerationError("bisection failed to land the KL divergence in its window")
