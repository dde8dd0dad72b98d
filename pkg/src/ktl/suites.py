"""Seeded randomized verification suites for the safety calculus.

Each suite draws its instances from one Philox stream per trial, checks the
advertised guarantee at its stated tolerance and reports counterexamples.
Suite names are stable CLI tokens: lemma2, lemma3, lemma7, lemma8, thm3,
thm4, problip.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import finite_dist as fd
from .errors import InternalConsistencyError, ValidationError
from .rng import make_rng
from .synthetic import gen_random_finite, gen_shifted_pair

_MAX_STORED_FAILURES = 5


@dataclass(frozen=True)
class SuiteReport:
    name: str
    trials: int
    failure_count: int
    failures: tuple[str, ...]
    elapsed_seconds: float

    @property
    def passed(self) -> bool:
        return self.failure_count == 0

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({self.failure_count})"
        return f"{self.name}: {status} over {self.trials} trials in {self.elapsed_seconds:.2f}s"


class _Collector:
    def __init__(self) -> None:
        self.count = 0
        self.stored: list[str] = []

    def add(self, message: str) -> None:
        self.count += 1
        if len(self.stored) < _MAX_STORED_FAILURES:
            self.stored.append(message)


def _random_instance(seed: int, trial: int, payload_dim: int | None = None,
                     payload_low: float = 0.0, payload_high: float = 1.0):
    rng = make_rng(seed, trial)
    x_size = int(rng.integers(2, 21))
    y_size = int(rng.integers(2, 6))
    p = gen_random_finite(
        x_size, y_size, int(rng.integers(0, 2**63)),
        payload_dim=payload_dim, payload_low=payload_low, payload_high=payload_high,
    )
    return rng, p


def random_map(rng: np.random.Generator, p: fd.FiniteJointDistribution,
               injective: bool = False) -> fd.FiniteMap:
    n = p.n_points
    if injective:
        perm = rng.permutation(n)
        return fd.FiniteMap({xid: f"t{perm[i]}" for i, xid in enumerate(p.x_ids)})
    m = int(rng.integers(1, n + 1))
    assignment = rng.integers(0, m, size=n)
    return fd.FiniteMap({xid: f"t{assignment[i]}" for i, xid in enumerate(p.x_ids)})


def table_scorer(rng: np.random.Generator, p: fd.FiniteJointDistribution,
                 f: fd.FiniteMap) -> fd.Scorer:
    """A scorer with an independent uniform score per codomain point."""
    ids = sorted({str(v) for v in f.mapping.values()})
    table = {t: float(rng.uniform()) for t in ids}
    return fd.Scorer(evaluate=lambda xt: table[str(xt)])


def run_safety_sweep(trials: int, seed: int) -> tuple[dict[str, _Collector], float]:
    """Shared sweep behind the lemma2 suite.

    Checks, per random (p, f): non-negative Bayes-error increase, exact zero
    increase for injective maps, the KL-based safety bound, and the equality
    of the conditional KL with the mutual-information loss.
    """
    checks = {name: _Collector() for name in ("nonneg", "injective", "pinsker", "mi")}
    start = time.perf_counter()
    for trial in range(trials):
        rng, p = _random_instance(seed, trial)
        injective = trial % 5 == 0
        f = random_map(rng, p, injective=injective)
        dstar = fd.bayes_error_increase(p, f)
        kl = fd.conditional_kl(p, f)
        if dstar < -1e-12:
            checks["nonneg"].add(f"trial {trial}: increase {dstar!r}")
        if injective and dstar != 0.0:
            checks["injective"].add(f"trial {trial}: injective increase {dstar!r}")
        if dstar > math.sqrt(kl * math.log(2.0) / 2.0) + 1e-9:
            checks["pinsker"].add(f"trial {trial}: {dstar!r} vs kl {kl!r}")
        mi_loss = fd.mutual_information(p) - fd.mutual_information(fd.pushforward(p, f))
        if abs(mi_loss - kl) > 1e-10:
            checks["mi"].add(f"trial {trial}: mi loss {mi_loss!r} vs kl {kl!r}")
    return checks, time.perf_counter() - start


def suite_lemma2(trials: int, seed: int) -> SuiteReport:
    checks, elapsed = run_safety_sweep(trials, seed)
    count = sum(c.count for c in checks.values())
    stored = [f"{name}: {msg}" for name, c in checks.items() for msg in c.stored]
    return SuiteReport("lemma2", trials, count, tuple(stored[:_MAX_STORED_FAILURES]), elapsed)


def suite_lemma3(trials: int, seed: int) -> SuiteReport:
    """Exactness of the two-point collapse: increase equals delta and the KL
    matches its closed form, with the quartic series coefficient in range."""
    fails = _Collector()
    start = time.perf_counter()
    coeff = 4.0 / (3.0 * math.log(2.0))
    for trial in range(trials):
        rng = make_rng(seed, trial)
        delta = float(rng.uniform(0.0, 0.45))
        x_size = int(rng.integers(2, 9))
        xt_size = int(rng.integers(1, x_size))
        p, f = fd.two_point_collapse_instance(delta, x_size, xt_size)
        dstar = fd.bayes_error_increase(p, f)
        if abs(dstar - delta) > 1e-12:
            fails.add(f"trial {trial}: increase {dstar!r} != delta {delta!r}")
        kl = fd.conditional_kl(p, f)
        closed = 0.5 * (
            (1 - 2 * delta) * math.log2(1 - 2 * delta)
            + (1 + 2 * delta) * math.log2(1 + 2 * delta)
        ) if delta > 0.0 else 0.0
        if abs(kl - closed) > 1e-12:
            fails.add(f"trial {trial}: kl {kl!r} != closed form {closed!r}")
        if 0.0 < delta <= 0.1:
            ratio = (kl - fd.pinsker_threshold(delta)) / delta**4
            if not coeff * 0.99 <= ratio <= coeff * 1.5:
                fails.add(f"trial {trial}: series ratio {ratio!r}")
    return SuiteReport("lemma3", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def suite_lemma7(trials: int, seed: int) -> SuiteReport:
    """Join safety: the positive/negative part pair has zero join defect and
    zero increase on continuous payloads, and random tuples respect the
    union bound."""
    fails = _Collector()
    start = time.perf_counter()
    for trial in range(trials):
        rng, p = _random_instance(seed, trial, payload_dim=int(make_rng(seed, trial, 7).integers(1, 4)),
                                  payload_low=-1.0, payload_high=1.0)
        pos = fd.map_from_payloads(p, lambda v: np.maximum(v, 0.0))
        neg = fd.map_from_payloads(p, lambda v: np.maximum(-v, 0.0))
        try:
            defect = fd.join_defect(p, [pos, neg])
        except InternalConsistencyError as exc:
            fails.add(f"trial {trial}: {exc}")
            continue
        if defect > 1e-12:
            fails.add(f"trial {trial}: pos/neg join defect {defect!r}")
        dstar = fd.bayes_error_increase(p, fd.product_map([pos, neg]))
        if abs(dstar) > 1e-12:
            fails.add(f"trial {trial}: pos/neg pair increase {dstar!r}")
        maps = [random_map(rng, p) for _ in range(int(rng.integers(1, 4)))]
        try:
            fd.join_defect(p, maps)  # raises if the union bound fails
        except InternalConsistencyError as exc:
            fails.add(f"trial {trial}: {exc}")
    return SuiteReport("lemma7", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def suite_lemma8(trials: int, seed: int) -> SuiteReport:
    """Collapsing can only lower a scorer's loss: loss_id <= loss_f + 1e-12."""
    fails = _Collector()
    start = time.perf_counter()
    for trial in range(trials):
        rng, p = _random_binary_instance(seed, trial)
        f = random_map(rng, p)
        g = table_scorer(rng, p, f)
        try:
            loss_f, loss_id = fd.scorer_loss_pullback(p, f, g)
        except InternalConsistencyError as exc:
            fails.add(f"trial {trial}: {exc}")
            continue
        if loss_id > loss_f + 1e-12:
            fails.add(f"trial {trial}: {loss_id!r} > {loss_f!r}")
    return SuiteReport("lemma8", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def suite_thm4(trials: int, seed: int) -> SuiteReport:
    """The Bayes-error increase never exceeds twice the root scorer loss."""
    fails = _Collector()
    start = time.perf_counter()
    for trial in range(trials):
        rng, p = _random_binary_instance(seed, trial)
        f = random_map(rng, p)
        g = table_scorer(rng, p, f)
        try:
            report = fd.bias_bound_check(p, f, g)
        except InternalConsistencyError as exc:
            fails.add(f"trial {trial}: {exc}")
            continue
        if report.delta_star > report.bound + 1e-9:
            fails.add(f"trial {trial}: {report.delta_star!r} > {report.bound!r}")
    return SuiteReport("thm4", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def suite_thm3(trials: int, seed: int) -> SuiteReport:
    """Safety transfers between close distributions: the target increase is
    at most the source increase plus the epsilon of the KL budget."""
    fails = _Collector()
    start = time.perf_counter()
    for trial in range(trials):
        rng = make_rng(seed, trial)
        eps = float(rng.uniform(0.05, 0.4))
        x_size = int(rng.integers(2, 13))
        y_size = int(rng.integers(2, 5))
        p_s, p_t = gen_shifted_pair(eps, x_size, y_size, int(rng.integers(0, 2**63)))
        f = random_map(rng, p_s)
        delta_source = fd.bayes_error_increase(p_s, f)
        try:
            report = fd.distribution_shift_bound(p_s, p_t, f, delta_source)
        except InternalConsistencyError as exc:
            fails.add(f"trial {trial}: {exc}")
            continue
        if report.kl_bits > eps * eps / (8.0 * math.log(2.0)) + 1e-12:
            fails.add(f"trial {trial}: generator missed the KL budget")
        if report.delta_star_target > delta_source + eps + 1e-9:
            fails.add(
                f"trial {trial}: target {report.delta_star_target!r} > "
                f"{delta_source!r} + {eps!r}"
            )
    return SuiteReport("thm3", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def suite_problip(trials: int, seed: int) -> SuiteReport:
    """The exact pairwise defect obeys the Markov bound 8 * loss / eps^2 for
    every 1-Lipschitz clipped-linear scorer tested."""
    fails = _Collector()
    start = time.perf_counter()
    eps_grid = (0.05, 0.1, 0.2)
    for trial in range(trials):
        rng = make_rng(seed, trial)
        dim = int(rng.integers(1, 4))
        x_size = int(rng.integers(2, 16))
        p = gen_random_finite(x_size, 2, int(rng.integers(0, 2**63)), payload_dim=dim)
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        offset = float(rng.uniform(-1.0, 1.0))
        g = fd.Scorer(
            evaluate=lambda v, w=direction, b=offset: float(
                np.clip(float(np.dot(w, v)) + b, 0.0, 1.0)
            ),
            lipschitz_constant=1.0,
        )
        loss = fd.scorer_squared_loss(p, fd.identity_map(p), g)
        for eps in eps_grid:
            defect = fd.prob_lipschitz_defect(p, eps, 1.0)
            if defect > 8.0 * loss / (eps * eps) + 1e-12:
                fails.add(f"trial {trial}: eps {eps}: defect {defect!r} loss {loss!r}")
    return SuiteReport("problip", trials, fails.count, tuple(fails.stored),
                       time.perf_counter() - start)


def _random_binary_instance(seed: int, trial: int):
    rng = make_rng(seed, trial)
    x_size = int(rng.integers(2, 21))
    p = gen_random_finite(x_size, 2, int(rng.integers(0, 2**63)))
    return rng, p


SUITES: dict[str, Callable[[int, int], SuiteReport]] = {
    "lemma2": suite_lemma2,
    "lemma3": suite_lemma3,
    "lemma7": suite_lemma7,
    "lemma8": suite_lemma8,
    "thm3": suite_thm3,
    "thm4": suite_thm4,
    "problip": suite_problip,
}


def run_suite(name: str, trials: int, seed: int) -> SuiteReport:
    if name not in SUITES:
        raise ValidationError(
            f"unknown suite {name!r}; choose from {', '.join(sorted(SUITES))}"
        )
    return SUITES[name](trials, seed)
