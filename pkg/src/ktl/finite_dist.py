"""Exact probability calculus on finite joint distributions.

Everything in this module is deterministic, pure, and computed with
correctly-rounded summation (math.fsum), so collapsing a distribution
through an injective map changes the Bayes error by exactly 0.0 and the
theorem checks hold at tight tolerances instead of loose statistical ones.

Conventions:
  * logarithms are base 2; information quantities are in bits,
  * 0 * log(0/q) = 0; a positive-over-zero divergence term is impossible
    by fiber averaging and raises InternalConsistencyError if it ever
    appears numerically,
  * zero-mass support points are allowed and excluded from posteriors,
  * argmax ties over classes are broken by the smallest class identifier
    (the tie never changes any of the values computed here),
  * for binary tasks the scalar posterior eta(x) is the posterior of the
    larger class identifier.

Equality-style guarantees are asserted at 1e-12, inequality-style theorem
guarantees at 1e-9 of slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, InternalConsistencyError, ValidationError

MASS_TOL = 1e-12
EQ_TOL = 1e-12
INEQ_TOL = 1e-9

_LOG2E = 1.0 / math.log(2.0)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiniteJointDistribution:
    """A joint distribution p(x, y) on finite supports.

    ``pxy[i, j]`` is the mass of (x_ids[i], y_ids[j]).  ``x_payloads`` is an
    optional (n_x, D) array of real vectors attached to the x points; it is
    required only by geometric operations (probabilistic Lipschitz defect)
    and by payload-derived maps.
    """

    x_ids: tuple
    y_ids: tuple
    pxy: np.ndarray
    x_payloads: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_ids", tuple(self.x_ids))
        object.__setattr__(self, "y_ids", tuple(self.y_ids))
        if len(set(self.x_ids)) != len(self.x_ids):
            raise ValidationError("x_support contains duplicate identifiers")
        if len(set(self.y_ids)) != len(self.y_ids):
            raise ValidationError("y_support contains duplicate identifiers")
        if len(self.x_ids) < 1:
            raise ValidationError("x_support must be non-empty")
        if len(self.y_ids) < 2:
            raise ValidationError("y_support needs at least two classes")
        mass = np.asarray(self.pxy, dtype=np.float64)
        if mass.shape != (len(self.x_ids), len(self.y_ids)):
            raise ValidationError(
                f"mass table shape {mass.shape} does not match supports "
                f"({len(self.x_ids)}, {len(self.y_ids)})"
            )
        if not np.all(np.isfinite(mass)):
            raise ValidationError("mass table contains non-finite entries")
        if np.any(mass < 0.0):
            raise ValidationError("mass table contains negative entries")
        total = math.fsum(mass.ravel().tolist())
        if abs(total - 1.0) > MASS_TOL:
            raise ValidationError(f"total mass is {total!r}, not 1 within {MASS_TOL}")
        object.__setattr__(self, "pxy", _as_readonly(mass))
        if self.x_payloads is not None:
            pay = np.asarray(self.x_payloads, dtype=np.float64)
            if pay.ndim != 2 or pay.shape[0] != len(self.x_ids):
                raise ValidationError(
                    "x_payloads must be a 2-d array with one row per x point"
                )
            if not np.all(np.isfinite(pay)):
                raise ValidationError("x_payloads contains non-finite entries")
            object.__setattr__(self, "x_payloads", _as_readonly(pay))

    @property
    def n_points(self) -> int:
        return len(self.x_ids)

    @property
    def n_classes(self) -> int:
        return len(self.y_ids)

    @cached_property
    def px(self) -> np.ndarray:
        """Marginal p(x), one correctly-rounded row sum per point."""
        return _as_readonly([math.fsum(row) for row in self.pxy.tolist()])

    @cached_property
    def py(self) -> np.ndarray:
        """Marginal p(y)."""
        return _as_readonly([math.fsum(col) for col in self.pxy.T.tolist()])

    def binary_posterior(self) -> np.ndarray:
        """eta(x) for binary tasks: posterior of the larger class identifier.

        Entries for zero-mass points are NaN; callers must mask by px > 0.
        """
        if self.n_classes != 2:
            raise DomainError("binary posterior requires exactly 2 classes")
        col = max(range(self.n_classes), key=lambda j: _class_order_key(self.y_ids[j]))
        with np.errstate(invalid="ignore", divide="ignore"):
            eta = np.where(self.px > 0.0, self.pxy[:, col] / self.px, np.nan)
        return eta


def _class_order_key(y: Any):
    # Orders class identifiers for deterministic tie-breaking; mixed types
    # fall back to their repr.
    if isinstance(y, (int, float, np.integer, np.floating)):
        return (0, float(y), "")
    return (1, 0.0, repr(y))


@dataclass(frozen=True)
class FiniteMap:
    """A total map between finite supports, with optional codomain payloads."""

    mapping: Mapping[Any, Any]
    codomain_payloads: Mapping[Any, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if not self.mapping:
            raise ValidationError("map must have a non-empty mapping")
        object.__setattr__(self, "mapping", MappingProxyType(dict(self.mapping)))
        if self.codomain_payloads is not None:
            pay = {
                k: _as_readonly(np.atleast_1d(v))
                for k, v in self.codomain_payloads.items()
            }
            dims = {v.shape for v in pay.values()}
            if len(dims) > 1:
                raise ValidationError("codomain payloads have inconsistent shapes")
            object.__setattr__(self, "codomain_payloads", MappingProxyType(pay))


def identity_map(p: FiniteJointDistribution) -> FiniteMap:
    """The identity on p's x support, carrying payloads through if present."""
    payloads = None
    if p.x_payloads is not None:
        payloads = {xid: p.x_payloads[i] for i, xid in enumerate(p.x_ids)}
    return FiniteMap({xid: xid for xid in p.x_ids}, payloads)


def map_from_payloads(
    p: FiniteJointDistribution, fn: Callable[[np.ndarray], np.ndarray]
) -> FiniteMap:
    """Build the map induced by applying ``fn`` to every x payload.

    Codomain points are identified by the exact tuple of output coordinates,
    so two inputs collide exactly when ``fn`` sends them to the same vector.
    """
    if p.x_payloads is None:
        raise ValidationError("map_from_payloads requires x payloads")
    mapping = {}
    payloads = {}
    for i, xid in enumerate(p.x_ids):
        img = np.atleast_1d(np.asarray(fn(p.x_payloads[i]), dtype=np.float64))
        key = tuple(img.tolist())
        mapping[xid] = key
        payloads[key] = img
    return FiniteMap(mapping, payloads)


def product_map(fs: Sequence[FiniteMap]) -> FiniteMap:
    """The tuple map x -> (f_0(x), ..., f_n(x)) on the shared source support."""
    if not fs:
        raise ValidationError("product of an empty map list is undefined")
    sources = set(fs[0].mapping)
    for f in fs[1:]:
        if set(f.mapping) != sources:
            raise ValidationError("maps in a product must share their source support")
    return FiniteMap({x: tuple(f.mapping[x] for f in fs) for x in sources})


def _codomain_index(
    p: FiniteJointDistribution, f: FiniteMap
) -> tuple[tuple, np.ndarray]:
    """Codomain ids in first-appearance order plus the image slot of each x."""
    slots: dict = {}
    xt_ids: list = []
    img = np.empty(p.n_points, dtype=np.intp)
    for i, xid in enumerate(p.x_ids):
        try:
            t = f.mapping[xid]
        except KeyError:
            raise ValidationError(f"map has no image for source point {xid!r}") from None
        j = slots.get(t)
        if j is None:
            j = len(xt_ids)
            slots[t] = j
            xt_ids.append(t)
        img[i] = j
    return tuple(xt_ids), img


def pushforward(p: FiniteJointDistribution, f: FiniteMap) -> FiniteJointDistribution:
    """The induced joint distribution: each fiber's mass summed onto its image."""
    xt_ids, img = _codomain_index(p, f)
    q = np.zeros((len(xt_ids), p.n_classes), dtype=np.float64)
    np.add.at(q, img, p.pxy)
    payloads = None
    if f.codomain_payloads is not None and all(
        t in f.codomain_payloads for t in xt_ids
    ):
        payloads = np.stack([f.codomain_payloads[t] for t in xt_ids])
    return FiniteJointDistribution(xt_ids, p.y_ids, q, payloads)


def bayes_error(p: FiniteJointDistribution) -> float:
    """Lowest achievable misclassification probability: 1 - sum_x max_y p(x, y)."""
    return 1.0 - math.fsum(np.max(p.pxy, axis=1).tolist())


def bayes_error_increase(p: FiniteJointDistribution, f: FiniteMap) -> float:
    """Increase of the Bayes error caused by collapsing p through f.

    Computed as the difference of the two Bayes errors and cross-checked
    against the equivalent expectation form
    E_x[ p(y_x | x) - p_push(y_{f(x)} | f(x)) ]; the two must agree to 1e-12.
    Always >= 0 up to roundoff.
    """
    q = pushforward(p, f)
    diff = bayes_error(q) - bayes_error(p)
    _, img = _codomain_index(p, f)
    max_p = np.max(p.pxy, axis=1)
    max_q = np.max(q.pxy, axis=1)
    qx = q.px
    terms = []
    for i in range(p.n_points):
        pi = p.px[i]
        if pi <= 0.0:
            continue
        j = img[i]
        terms.append(max_p[i] - pi * (max_q[j] / qx[j]))
    expectation = math.fsum(terms)
    if abs(diff - expectation) > EQ_TOL:
        raise InternalConsistencyError(
            f"Bayes-error difference {diff!r} disagrees with its expectation "
            f"form {expectation!r}"
        )
    return diff


def mutual_information(p: FiniteJointDistribution) -> float:
    """I(X; Y) in bits."""
    terms = []
    px, py = p.px, p.py
    for i in range(p.n_points):
        for j in range(p.n_classes):
            m = p.pxy[i, j]
            if m > 0.0:
                terms.append(m * math.log2(m / (px[i] * py[j])))
    value = math.fsum(terms)
    return max(value, 0.0)


def conditional_kl(p: FiniteJointDistribution, f: FiniteMap) -> float:
    """KL divergence, in bits, between p(y|x) and the fiber-averaged posterior.

    Equals the mutual-information loss I(X;Y) - I(f(X);Y).  Positive mass on
    a cell whose fiber-averaged posterior is zero cannot occur (the fiber sum
    dominates each member); a numeric occurrence is an internal error.
    """
    q = pushforward(p, f)
    _, img = _codomain_index(p, f)
    px, qx = p.px, q.px
    terms = []
    for i in range(p.n_points):
        j = img[i]
        for c in range(p.n_classes):
            m = p.pxy[i, c]
            if m <= 0.0:
                continue
            num = m / px[i]
            den_mass = q.pxy[j, c]
            if den_mass <= 0.0:
                raise InternalConsistencyError(
                    "fiber-averaged posterior vanished under positive source mass"
                )
            den = den_mass / qx[j]
            terms.append(m * math.log2(num / den))
    value = math.fsum(terms)
    if value < -1e-10:
        raise InternalConsistencyError(f"conditional KL came out negative: {value!r}")
    return max(value, 0.0)


def pinsker_threshold(delta: float) -> float:
    """The KL budget (bits) that certifies a given safety level: (2/ln 2) delta^2."""
    return 2.0 * _LOG2E * delta * delta


@dataclass(frozen=True)
class PinskerCertificate:
    """Outcome of the KL-based safety check at a requested level delta."""

    delta: float
    conditional_kl_bits: float
    threshold_bits: float
    passed: bool
    delta_star: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "conditional_kl_bits": self.conditional_kl_bits,
            "threshold_bits": self.threshold_bits,
            "passed": self.passed,
            "delta_star": self.delta_star,
        }


def pinsker_safety_certificate(
    p: FiniteJointDistribution, f: FiniteMap, delta: float
) -> PinskerCertificate:
    """Grant the certificate iff conditional_kl(p, f) <= (2/ln 2) delta^2.

    When granted, the Bayes-error increase is guaranteed to be at most delta;
    this is re-checked and a violation raises InternalConsistencyError.
    """
    if delta < 0.0:
        raise DomainError("delta must be non-negative")
    kl = conditional_kl(p, f)
    threshold = pinsker_threshold(delta)
    dstar = bayes_error_increase(p, f)
    passed = kl <= threshold
    if passed and dstar > delta + INEQ_TOL:
        raise InternalConsistencyError(
            f"certified delta={delta} but Bayes-error increase is {dstar!r}"
        )
    return PinskerCertificate(delta, kl, threshold, passed, dstar)


def _greedy_injective_support(
    p: FiniteJointDistribution, f: FiniteMap
) -> list[int]:
    """Indices of the heaviest member of each fiber (first wins on ties).

    Fibers are disjoint, so this support maximizes retained mass among all
    sets on which f is injective.
    """
    _, img = _codomain_index(p, f)
    best: dict[int, int] = {}
    for i in range(p.n_points):
        j = int(img[i])
        if j not in best or p.px[i] > p.px[best[j]]:
            best[j] = i
    return sorted(best.values())


def injectivity_defect(p: FiniteJointDistribution, f: FiniteMap) -> float:
    """Minimal delta such that f is injective on a set of mass >= 1 - delta."""
    keep = _greedy_injective_support(p, f)
    return max(0.0, 1.0 - math.fsum(p.px[i] for i in keep))


def join_defect(p: FiniteJointDistribution, fs: Sequence[FiniteMap]) -> float:
    """Mass missed by the union of the maps' greedy injective supports.

    The tuple map (f_0, ..., f_n) is guaranteed to raise the Bayes error by
    at most this amount; the guarantee is re-checked on every call.
    """
    if not fs:
        raise ValidationError("join_defect requires at least one map")
    union: set[int] = set()
    for f in fs:
        union.update(_greedy_injective_support(p, f))
    covered = math.fsum(p.px[i] for i in sorted(union))
    defect = max(0.0, 1.0 - covered)
    dstar = bayes_error_increase(p, product_map(list(fs)))
    if dstar > defect + EQ_TOL:
        raise InternalConsistencyError(
            f"tuple map increased the Bayes error by {dstar!r}, above the "
            f"join defect {defect!r}"
        )
    return defect


def two_point_collapse_instance(
    delta: float, x_size: int = 2, xt_size: int = 1
) -> tuple[FiniteJointDistribution, FiniteMap]:
    """Worst-case pair: two equally likely points with posteriors 1/2 -+ delta
    merged into one codomain point.

    The Bayes-error increase of the pair is exactly delta, and its
    conditional KL is (1/2)[(1-2d)log2(1-2d) + (1+2d)log2(1+2d)] bits,
    which expands to (2/ln 2) d^2 + (4/(3 ln 2)) d^4 + ...

    Extra support points (x_size > 2) carry zero mass and are spread over
    the remaining codomain points so the codomain has exactly xt_size
    elements.
    """
    if not 0.0 <= delta < 0.5:
        raise DomainError("delta must lie in [0, 0.5)")
    if x_size < 2:
        raise DomainError("x_size must be at least 2")
    if not 1 <= xt_size < x_size:
        raise DomainError("xt_size must satisfy 1 <= xt_size < x_size")
    x_ids = tuple(f"x{i}" for i in range(x_size))
    mass = np.zeros((x_size, 2), dtype=np.float64)
    # eta is the posterior of class 1.
    mass[0, 0] = 0.5 * (0.5 + delta)
    mass[0, 1] = 0.5 * (0.5 - delta)
    mass[1, 0] = 0.5 * (0.5 - delta)
    mass[1, 1] = 0.5 * (0.5 + delta)
    p = FiniteJointDistribution(x_ids, (0, 1), mass)
    mapping = {"x0": "t0", "x1": "t0"}
    for i in range(2, x_size):
        mapping[f"x{i}"] = f"t{min(i - 1, xt_size - 1)}"
    return p, FiniteMap(mapping)


def kl_divergence_bits(
    p: FiniteJointDistribution, q: FiniteJointDistribution
) -> float:
    """KL(p || q) over joint cells, in bits; inf when q misses p's support."""
    if p.x_ids != q.x_ids or p.y_ids != q.y_ids:
        raise ValidationError("distributions must share their supports")
    terms = []
    for i in range(p.n_points):
        for j in range(p.n_classes):
            m = p.pxy[i, j]
            if m <= 0.0:
                continue
            if q.pxy[i, j] <= 0.0:
                return math.inf
            terms.append(m * math.log2(m / q.pxy[i, j]))
    return max(math.fsum(terms), 0.0)


@dataclass(frozen=True)
class ShiftBoundReport:
    """Guarantee transferred from a source to a shifted target distribution."""

    kl_bits: float
    epsilon: float
    delta_source: float
    bound: float
    delta_star_target: float
    vacuous: bool

    def to_dict(self) -> dict:
        return {
            "kl_bits": self.kl_bits,
            "epsilon": self.epsilon,
            "delta_source": self.delta_source,
            "bound": self.bound,
            "delta_star_target": self.delta_star_target,
            "vacuous": self.vacuous,
        }


def distribution_shift_bound(
    p_source: FiniteJointDistribution,
    p_target: FiniteJointDistribution,
    f: FiniteMap,
    delta_source: float,
) -> ShiftBoundReport:
    """Bound the target Bayes-error increase by delta_source + epsilon, where
    epsilon = sqrt(8 ln 2 * KL(p_source || p_target)) in bits.

    When KL is infinite the bound is vacuous and only reported as such.  If
    delta_source really covers the source increase, the exact target increase
    is checked against the bound.
    """
    kl = kl_divergence_bits(p_source, p_target)
    dstar_t = bayes_error_increase(p_target, f)
    if math.isinf(kl):
        return ShiftBoundReport(kl, math.inf, delta_source, math.inf, dstar_t, True)
    eps = math.sqrt(8.0 * math.log(2.0) * kl)
    bound = delta_source + eps
    if delta_source >= bayes_error_increase(p_source, f) - EQ_TOL:
        if dstar_t > bound + INEQ_TOL:
            raise InternalConsistencyError(
                f"target increase {dstar_t!r} exceeded the shift bound {bound!r}"
            )
    return ShiftBoundReport(kl, eps, delta_source, bound, dstar_t, False)


@dataclass(frozen=True)
class Scorer:
    """A score function on a codomain, with a declared Lipschitz constant.

    ``evaluate`` receives the point's vector payload when the codomain
    carries payloads, and the raw point identifier otherwise.  Scores must
    lie in [0, 1].
    """

    evaluate: Callable[[Any], float]
    lipschitz_constant: float = 0.0


def _codomain_scores(q: FiniteJointDistribution, g: Scorer) -> np.ndarray:
    values = np.empty(q.n_points, dtype=np.float64)
    for i, xt in enumerate(q.x_ids):
        arg = q.x_payloads[i] if q.x_payloads is not None else xt
        values[i] = float(g.evaluate(arg))
    if np.any(values < -EQ_TOL) or np.any(values > 1.0 + EQ_TOL):
        raise ValidationError("scorer produced a value outside [0, 1]")
    return np.clip(values, 0.0, 1.0)


def scorer_squared_loss(
    p: FiniteJointDistribution, f: FiniteMap, g: Scorer
) -> float:
    """Expected squared gap between g(f(x)) and the true posterior eta(x)."""
    if p.n_classes != 2:
        raise DomainError("the squared scorer loss is defined for binary tasks")
    q = pushforward(p, f)
    _, img = _codomain_index(p, f)
    scores = _codomain_scores(q, g)
    eta = p.binary_posterior()
    terms = [
        p.px[i] * (scores[img[i]] - eta[i]) ** 2
        for i in range(p.n_points)
        if p.px[i] > 0.0
    ]
    return math.fsum(terms)


def scorer_loss_pullback(
    p: FiniteJointDistribution, f: FiniteMap, g: Scorer
) -> tuple[float, float]:
    """Return (loss of g through f, loss of g on the collapsed distribution).

    The collapsed loss scores each codomain point against its fiber-averaged
    posterior and can never exceed the loss through f (checked to 1e-12).
    """
    loss_f = scorer_squared_loss(p, f, g)
    q = pushforward(p, f)
    scores = _codomain_scores(q, g)
    eta_q = q.binary_posterior()
    loss_id = math.fsum(
        q.px[j] * (scores[j] - eta_q[j]) ** 2
        for j in range(q.n_points)
        if q.px[j] > 0.0
    )
    if loss_id > loss_f + EQ_TOL:
        raise InternalConsistencyError(
            f"collapsed loss {loss_id!r} exceeded the loss through the map {loss_f!r}"
        )
    return loss_f, loss_id


@dataclass(frozen=True)
class BiasBoundReport:
    delta_star: float
    scorer_loss: float
    bound: float

    def to_dict(self) -> dict:
        return {
            "delta_star": self.delta_star,
            "scorer_loss": self.scorer_loss,
            "bound": self.bound,
        }


def bias_bound_check(
    p: FiniteJointDistribution, f: FiniteMap, g: Scorer
) -> BiasBoundReport:
    """Check that the Bayes-error increase is at most 2 sqrt(scorer loss)."""
    dstar = bayes_error_increase(p, f)
    loss = scorer_squared_loss(p, f, g)
    bound = 2.0 * math.sqrt(loss)
    if dstar > bound + INEQ_TOL:
        raise InternalConsistencyError(
            f"Bayes-error increase {dstar!r} exceeded the loss bound {bound!r}"
        )
    return BiasBoundReport(dstar, loss, bound)


def prob_lipschitz_defect(
    p: FiniteJointDistribution, eps: float, lipschitz: float
) -> float:
    """Exact P(|eta(X) - eta(X')| > eps + L ||X - X'||) for iid X, X'.

    Requires vector payloads and a binary task; the summation runs over all
    pairs of positive-mass support points.
    """
    if eps < 0.0 or lipschitz < 0.0:
        raise DomainError("eps and lipschitz must be non-negative")
    if p.x_payloads is None:
        raise ValidationError("probabilistic Lipschitz defect requires x payloads")
    eta = p.binary_posterior()
    active = np.flatnonzero(p.px > 0.0)
    terms = []
    for a in active:
        for b in active:
            gap = abs(eta[a] - eta[b])
            dist = math.dist(p.x_payloads[a], p.x_payloads[b])
            if gap > eps + lipschitz * dist:
                terms.append(p.px[a] * p.px[b])
    return math.fsum(terms)


@dataclass(frozen=True)
class SafetyReport:
    """All safety-relevant quantities of a (distribution, map) pair."""

    bayes_raw: float
    bayes_transformed: float
    delta_star: float
    conditional_kl_bits: float
    pinsker_delta: float
    mi_loss_bits: float

    def to_dict(self) -> dict:
        return {
            "bayes_raw": self.bayes_raw,
            "bayes_transformed": self.bayes_transformed,
            "delta_star": self.delta_star,
            "conditional_kl_bits": self.conditional_kl_bits,
            "pinsker_delta": self.pinsker_delta,
            "mi_loss_bits": self.mi_loss_bits,
        }


def safety_report(p: FiniteJointDistribution, f: FiniteMap) -> SafetyReport:
    """Compute Bayes errors, increase, KL loss and the matching Pinsker level.

    The report's internal guarantees (non-negative increase, increase below
    the Pinsker level, KL equal to the mutual-information loss) are verified
    before returning.
    """
    raw = bayes_error(p)
    q = pushforward(p, f)
    transformed = bayes_error(q)
    dstar = bayes_error_increase(p, f)
    kl = conditional_kl(p, f)
    pinsker_delta = math.sqrt(kl * math.log(2.0) / 2.0)
    mi_loss = mutual_information(p) - mutual_information(q)
    if dstar < -EQ_TOL:
        raise InternalConsistencyError(f"Bayes-error increase is negative: {dstar!r}")
    if dstar > pinsker_delta + INEQ_TOL:
        raise InternalConsistencyError(
            f"Bayes-error increase {dstar!r} exceeded the Pinsker level "
            f"{pinsker_delta!r}"
        )
    if abs(mi_loss - kl) > 1e-10:
        raise InternalConsistencyError(
            f"mutual-information loss {mi_loss!r} does not match the "
            f"conditional KL {kl!r}"
        )
    return SafetyReport(raw, transformed, dstar, kl, pinsker_delta, mi_loss)
