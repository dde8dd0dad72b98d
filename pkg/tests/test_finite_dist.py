"""Oracle and example tests for the exact finite-distribution calculus."""

import itertools
import math

import numpy as np
import pytest

from ktl import finite_dist as fd
from ktl.errors import (
    DomainError,
    InternalConsistencyError,
    ValidationError,
)
from ktl.rng import make_rng
from ktl.synthetic import gen_random_finite


def brute_force_bayes_error(p: fd.FiniteJointDistribution) -> float:
    """Minimum error over every deterministic classifier X -> Y."""
    best = math.inf
    for assignment in itertools.product(range(p.n_classes), repeat=p.n_points):
        err = sum(
            p.pxy[i, j]
            for i in range(p.n_points)
            for j in range(p.n_classes)
            if j != assignment[i]
        )
        best = min(best, err)
    return best


def entropy_bits(weights) -> float:
    return -math.fsum(w * math.log2(w) for w in weights if w > 0.0)


def make_dist(mass, payloads=None) -> fd.FiniteJointDistribution:
    mass = np.asarray(mass, dtype=np.float64)
    return fd.FiniteJointDistribution(
        tuple(f"x{i}" for i in range(mass.shape[0])),
        tuple(range(mass.shape[1])),
        mass,
        payloads,
    )


class TestBayesError:
    def test_deterministic_labels_have_zero_error(self):
        p = make_dist([[0.3, 0.0], [0.0, 0.5], [0.2, 0.0]])
        assert fd.bayes_error(p) == 0.0

    def test_two_point_instance_matches_half_minus_delta(self):
        p, _ = fd.two_point_collapse_instance(0.1)
        assert fd.bayes_error(p) == pytest.approx(0.4, abs=1e-15)

    def test_matches_exhaustive_classifier_enumeration(self):
        for seed in range(20):
            p = gen_random_finite(8, 3, seed)
            assert fd.bayes_error(p) == pytest.approx(
                brute_force_bayes_error(p), abs=1e-12
            )

    def test_rejects_bad_mass(self):
        with pytest.raises(ValidationError):
            make_dist([[0.5, 0.6], [0.0, 0.0]])
        with pytest.raises(ValidationError):
            make_dist([[0.5, -0.1], [0.3, 0.3]])


class TestPushforward:
    def test_identity_returns_equal_distribution(self):
        p = gen_random_finite(6, 3, 0)
        q = fd.pushforward(p, fd.identity_map(p))
        assert q.x_ids == p.x_ids
        assert np.array_equal(q.pxy, p.pxy)

    def test_collapse_pair_splits_mass_evenly(self):
        p, f = fd.two_point_collapse_instance(0.1)
        q = fd.pushforward(p, f)
        assert q.n_points == 1
        assert q.pxy[0, 1] == pytest.approx(0.5, abs=1e-15)

    def test_matches_naive_fiber_summation(self):
        for seed in range(20):
            rng = make_rng(seed)
            p = gen_random_finite(10, 4, seed)
            assignment = rng.integers(0, 4, size=10)
            f = fd.FiniteMap({x: f"t{assignment[i]}" for i, x in enumerate(p.x_ids)})
            q = fd.pushforward(p, f)
            for j, t in enumerate(q.x_ids):
                expected = np.zeros(4)
                for i, x in enumerate(p.x_ids):
                    if f.mapping[x] == t:
                        expected += p.pxy[i]
                assert np.allclose(q.pxy[j], expected, atol=1e-15)

    def test_marginal_on_y_is_preserved(self):
        p = gen_random_finite(12, 3, 5)
        rng = make_rng(5, 1)
        f = fd.FiniteMap({x: f"t{rng.integers(0, 3)}" for x in p.x_ids})
        q = fd.pushforward(p, f)
        assert np.allclose(q.py, p.py, atol=1e-14)

    def test_missing_source_point_is_rejected(self):
        p = gen_random_finite(3, 2, 0)
        with pytest.raises(ValidationError):
            fd.pushforward(p, fd.FiniteMap({"x0": "t0", "x1": "t0"}))


class TestBayesErrorIncrease:
    def test_injective_map_changes_nothing(self):
        for seed in range(30):
            p = gen_random_finite(9, 3, seed)
            rng = make_rng(seed, 3)
            perm = rng.permutation(9)
            f = fd.FiniteMap({x: f"t{perm[i]}" for i, x in enumerate(p.x_ids)})
            assert fd.bayes_error_increase(p, f) == 0.0

    def test_collapse_pair_increase_equals_delta(self):
        p, f = fd.two_point_collapse_instance(0.25)
        assert fd.bayes_error_increase(p, f) == pytest.approx(0.25, abs=1e-15)

    def test_absolute_value_collapse_on_sign_classes(self):
        # uniform on {-1, +1}, label fully determined by the sign, then both
        # points merged: the error jumps from 0 to 1/2
        p = make_dist([[0.5, 0.0], [0.0, 0.5]], payloads=[[-1.0], [1.0]])
        f = fd.map_from_payloads(p, np.abs)
        assert fd.bayes_error_increase(p, f) == pytest.approx(0.5, abs=1e-15)


class TestInformation:
    def test_independent_variables_have_zero_mi(self):
        px = np.array([0.25, 0.75])
        py = np.array([0.4, 0.6])
        p = make_dist(np.outer(px, py))
        assert fd.mutual_information(p) == pytest.approx(0.0, abs=1e-15)

    def test_identical_uniform_variables_give_one_bit(self):
        p = make_dist([[0.5, 0.0], [0.0, 0.5]])
        assert fd.mutual_information(p) == pytest.approx(1.0, abs=1e-15)

    def test_mi_matches_entropy_difference(self):
        for seed in range(20):
            p = gen_random_finite(7, 3, seed)
            h_y = entropy_bits(p.py)
            h_y_given_x = math.fsum(
                p.px[i] * entropy_bits(p.pxy[i] / p.px[i])
                for i in range(p.n_points)
                if p.px[i] > 0
            )
            assert fd.mutual_information(p) == pytest.approx(
                h_y - h_y_given_x, abs=1e-10
            )

    def test_mi_upper_bound(self):
        p = gen_random_finite(5, 4, 9)
        assert fd.mutual_information(p) <= math.log2(4) + 1e-12

    def test_conditional_kl_zero_for_injective(self):
        p = gen_random_finite(6, 2, 1)
        assert fd.conditional_kl(p, fd.identity_map(p)) == pytest.approx(0, abs=1e-14)

    def test_conditional_kl_closed_form_on_collapse_pair(self):
        delta = 0.1
        p, f = fd.two_point_collapse_instance(delta)
        closed = 0.5 * (
            (1 - 2 * delta) * math.log2(1 - 2 * delta)
            + (1 + 2 * delta) * math.log2(1 + 2 * delta)
        )
        kl = fd.conditional_kl(p, f)
        assert kl == pytest.approx(closed, abs=1e-14)
        assert kl == pytest.approx(0.029049, abs=1e-6)

    def test_conditional_kl_equals_mi_loss(self):
        for seed in range(20):
            rng = make_rng(seed, 7)
            p = gen_random_finite(10, 3, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 4)}" for x in p.x_ids})
            mi_loss = fd.mutual_information(p) - fd.mutual_information(
                fd.pushforward(p, f)
            )
            assert fd.conditional_kl(p, f) == pytest.approx(mi_loss, abs=1e-10)


class TestPinskerCertificate:
    def test_injective_passes_at_zero(self):
        p = gen_random_finite(5, 2, 3)
        cert = fd.pinsker_safety_certificate(p, fd.identity_map(p), 0.0)
        assert cert.passed

    def test_collapse_pair_certificate_boundary(self):
        p, f = fd.two_point_collapse_instance(0.1)
        # KL ~ 0.029049 bits sits between the budgets of 0.09 and 0.11
        assert fd.pinsker_threshold(0.11) > 0.029049 > fd.pinsker_threshold(0.09)
        granted = fd.pinsker_safety_certificate(p, f, 0.11)
        assert granted.passed and granted.delta_star <= 0.11 + 1e-9
        assert not fd.pinsker_safety_certificate(p, f, 0.09).passed

    def test_negative_delta_rejected(self):
        p, f = fd.two_point_collapse_instance(0.1)
        with pytest.raises(DomainError):
            fd.pinsker_safety_certificate(p, f, -0.5)


def brute_force_injectivity_defect(p, f) -> float:
    """Try every choice of one representative per fiber."""
    fibers: dict = {}
    for i, x in enumerate(p.x_ids):
        fibers.setdefault(f.mapping[x], []).append(i)
    best = -math.inf
    for combo in itertools.product(*fibers.values()):
        best = max(best, math.fsum(p.px[i] for i in combo))
    return max(0.0, 1.0 - best)


class TestInjectivityDefect:
    def test_injective_map_has_zero_defect(self):
        p = gen_random_finite(6, 2, 0)
        assert fd.injectivity_defect(p, fd.identity_map(p)) == 0.0

    def test_equal_mass_pair_collapse(self):
        p = make_dist([[0.25, 0.25], [0.25, 0.25]])
        f = fd.FiniteMap({"x0": "t", "x1": "t"})
        assert fd.injectivity_defect(p, f) == pytest.approx(0.5, abs=1e-15)

    def test_matches_exhaustive_representative_search(self):
        for seed in range(20):
            rng = make_rng(seed, 11)
            p = gen_random_finite(10, 2, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 4)}" for x in p.x_ids})
            assert fd.injectivity_defect(p, f) == pytest.approx(
                brute_force_injectivity_defect(p, f), abs=1e-12
            )

    def test_defect_dominates_increase(self):
        for seed in range(50):
            rng = make_rng(seed, 13)
            p = gen_random_finite(8, 3, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 3)}" for x in p.x_ids})
            assert fd.bayes_error_increase(p, f) <= fd.injectivity_defect(p, f) + 1e-12


class TestJoinDefect:
    def test_positive_negative_parts_join_safely(self):
        for seed in range(30):
            p = gen_random_finite(8, 2, seed, payload_dim=2,
                                  payload_low=-1.0, payload_high=1.0)
            pos = fd.map_from_payloads(p, lambda v: np.maximum(v, 0.0))
            neg = fd.map_from_payloads(p, lambda v: np.maximum(-v, 0.0))
            assert fd.join_defect(p, [pos, neg]) <= 1e-12

    def test_positive_part_alone_is_half_unsafe(self):
        # uniform on {-1, -2} with opposite deterministic labels
        p = make_dist([[0.5, 0.0], [0.0, 0.5]], payloads=[[-1.0], [-2.0]])
        pos = fd.map_from_payloads(p, lambda v: np.maximum(v, 0.0))
        assert fd.join_defect(p, [pos]) == pytest.approx(0.5, abs=1e-15)
        assert fd.bayes_error_increase(p, pos) == pytest.approx(0.5, abs=1e-15)

    def test_identity_in_the_join_gives_zero(self):
        p = gen_random_finite(6, 3, 2)
        rng = make_rng(2, 17)
        other = fd.FiniteMap({x: f"t{rng.integers(0, 2)}" for x in p.x_ids})
        assert fd.join_defect(p, [fd.identity_map(p), other]) == 0.0

    def test_empty_list_rejected(self):
        p = gen_random_finite(4, 2, 1)
        with pytest.raises(ValidationError):
            fd.join_defect(p, [])


class TestTwoPointCollapse:
    def test_zero_delta_is_exactly_safe(self):
        p, f = fd.two_point_collapse_instance(0.0)
        assert fd.bayes_error_increase(p, f) == 0.0
        assert fd.conditional_kl(p, f) == 0.0

    @pytest.mark.parametrize("delta", [0.01, 0.05, 0.1, 0.25])
    def test_increase_is_exactly_delta(self, delta):
        p, f = fd.two_point_collapse_instance(delta, x_size=5, xt_size=3)
        assert fd.bayes_error_increase(p, f) == pytest.approx(delta, abs=1e-12)

    def test_kl_between_quadratic_and_padded_series(self):
        delta = 0.25
        p, f = fd.two_point_collapse_instance(delta)
        kl = fd.conditional_kl(p, f)
        quadratic = fd.pinsker_threshold(delta)
        quartic = 4.0 / (3.0 * math.log(2.0)) * delta**4
        assert quadratic <= kl <= quadratic + 2.0 * quartic

    def test_domain_checks(self):
        with pytest.raises(DomainError):
            fd.two_point_collapse_instance(0.5)
        with pytest.raises(DomainError):
            fd.two_point_collapse_instance(0.1, x_size=3, xt_size=3)


class TestDistributionShiftBound:
    def test_identical_distributions_give_zero_epsilon(self):
        p, f = fd.two_point_collapse_instance(0.1, x_size=3, xt_size=2)
        report = fd.distribution_shift_bound(p, p, f, 0.1)
        assert report.epsilon == 0.0
        assert report.bound == pytest.approx(0.1)
        assert not report.vacuous

    def test_small_perturbation_keeps_the_bound(self):
        p, f = fd.two_point_collapse_instance(0.1, x_size=3, xt_size=2)
        mass = p.pxy.copy()
        mass += 1e-4
        mass /= mass.sum()
        target = fd.FiniteJointDistribution(p.x_ids, p.y_ids, mass)
        report = fd.distribution_shift_bound(p, target, f, 0.1)
        assert report.delta_star_target <= report.bound + 1e-9

    def test_support_violation_is_vacuous(self):
        p = make_dist([[0.5, 0.0], [0.0, 0.5]])
        q = make_dist([[0.5, 0.5], [0.0, 0.0]])
        f = fd.FiniteMap({"x0": "t", "x1": "t"})
        report = fd.distribution_shift_bound(p, q, f, 0.0)
        assert report.vacuous and math.isinf(report.epsilon)


def _table_scorer(values: dict) -> fd.Scorer:
    return fd.Scorer(evaluate=lambda xt: values[xt])


class TestScorerLoss:
    def test_perfect_scorer_has_zero_loss(self):
        p = gen_random_finite(6, 2, 4)
        eta = p.binary_posterior()
        g = fd.Scorer(evaluate=dict(zip(p.x_ids, eta)).__getitem__)
        assert fd.scorer_squared_loss(p, fd.identity_map(p), g) == pytest.approx(
            0.0, abs=1e-15
        )

    def test_constant_half_on_collapse_pair_gives_delta_squared(self):
        delta = 0.2
        p, f = fd.two_point_collapse_instance(delta)
        g = fd.Scorer(evaluate=lambda _: 0.5)
        assert fd.scorer_squared_loss(p, f, g) == pytest.approx(
            delta * delta, abs=1e-14
        )

    def test_matches_direct_summation_oracle(self):
        for seed in range(20):
            rng = make_rng(seed, 19)
            p = gen_random_finite(9, 2, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 4)}" for x in p.x_ids})
            table = {f"t{j}": float(rng.uniform()) for j in range(4)}
            g = _table_scorer(table)
            eta = p.binary_posterior()
            expected = math.fsum(
                p.px[i] * (table[f.mapping[x]] - eta[i]) ** 2
                for i, x in enumerate(p.x_ids)
                if p.px[i] > 0
            )
            assert fd.scorer_squared_loss(p, f, g) == pytest.approx(
                expected, abs=1e-13
            )

    def test_multiclass_rejected(self):
        p = gen_random_finite(4, 3, 0)
        with pytest.raises(DomainError):
            fd.scorer_squared_loss(p, fd.identity_map(p), fd.Scorer(lambda _: 0.5))


class TestLossPullback:
    def test_injective_map_gives_equal_losses(self):
        p = gen_random_finite(5, 2, 8)
        g = fd.Scorer(evaluate=lambda xt: 0.3)
        loss_f, loss_id = fd.scorer_loss_pullback(p, fd.identity_map(p), g)
        assert loss_f == pytest.approx(loss_id, abs=1e-15)

    def test_collapse_pair_with_constant_half(self):
        delta = 0.2
        p, f = fd.two_point_collapse_instance(delta)
        g = fd.Scorer(evaluate=lambda _: 0.5)
        loss_f, loss_id = fd.scorer_loss_pullback(p, f, g)
        assert loss_f == pytest.approx(delta * delta, abs=1e-14)
        assert loss_id == pytest.approx(0.0, abs=1e-14)

    def test_pullback_inequality_on_random_instances(self):
        for seed in range(200):
            rng = make_rng(seed, 23)
            p = gen_random_finite(int(rng.integers(2, 12)), 2, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 5)}" for x in p.x_ids})
            table = {f"t{j}": float(rng.uniform()) for j in range(5)}
            loss_f, loss_id = fd.scorer_loss_pullback(p, f, _table_scorer(table))
            assert loss_id <= loss_f + 1e-12


class TestBiasBound:
    def test_perfect_scorer_on_safe_map(self):
        p = gen_random_finite(6, 2, 4)
        eta = p.binary_posterior()
        g = fd.Scorer(evaluate=dict(zip(p.x_ids, eta)).__getitem__)
        report = fd.bias_bound_check(p, fd.identity_map(p), g)
        assert report.delta_star == 0.0
        assert report.bound == pytest.approx(0.0, abs=1e-7)

    def test_collapse_pair_with_best_constant(self):
        delta = 0.15
        p, f = fd.two_point_collapse_instance(delta)
        g = fd.Scorer(evaluate=lambda _: 0.5)
        report = fd.bias_bound_check(p, f, g)
        assert report.delta_star == pytest.approx(delta, abs=1e-12)
        assert report.bound == pytest.approx(2.0 * delta, abs=1e-12)

    def test_holds_on_random_instances(self):
        for seed in range(200):
            rng = make_rng(seed, 29)
            p = gen_random_finite(int(rng.integers(2, 12)), 2, seed)
            f = fd.FiniteMap({x: f"t{rng.integers(0, 4)}" for x in p.x_ids})
            table = {f"t{j}": float(rng.uniform()) for j in range(4)}
            report = fd.bias_bound_check(p, f, _table_scorer(table))
            assert report.delta_star <= report.bound + 1e-9


class TestProbLipschitzDefect:
    def test_constant_posterior_has_zero_defect(self):
        p = make_dist(
            [[0.2, 0.2], [0.3, 0.3]], payloads=[[0.0, 0.0], [5.0, 5.0]]
        )
        assert fd.prob_lipschitz_defect(p, 0.0, 0.0) == 0.0

    def test_eps_at_least_one_has_zero_defect(self):
        p = gen_random_finite(8, 2, 3, payload_dim=2)
        assert fd.prob_lipschitz_defect(p, 1.0, 0.0) == 0.0

    def test_markov_bound_for_unit_lipschitz_scorers(self):
        for seed in range(20):
            rng = make_rng(seed, 31)
            p = gen_random_finite(10, 2, seed, payload_dim=2)
            direction = rng.normal(size=2)
            direction /= np.linalg.norm(direction)
            offset = float(rng.uniform(-1, 1))
            g = fd.Scorer(
                evaluate=lambda v, w=direction, b=offset: float(
                    np.clip(np.dot(w, v) + b, 0.0, 1.0)
                ),
                lipschitz_constant=1.0,
            )
            loss = fd.scorer_squared_loss(p, fd.identity_map(p), g)
            for eps in (0.05, 0.1, 0.2):
                defect = fd.prob_lipschitz_defect(p, eps, 1.0)
                assert defect <= 8.0 * loss / eps**2 + 1e-12

    def test_requires_payloads(self):
        p = gen_random_finite(4, 2, 0)
        with pytest.raises(ValidationError):
            fd.prob_lipschitz_defect(p, 0.1, 1.0)


class TestSafetyReport:
    def test_report_fields_are_consistent(self):
        p, f = fd.two_point_collapse_instance(0.1)
        report = fd.safety_report(p, f)
        assert report.bayes_raw == pytest.approx(0.4)
        assert report.bayes_transformed == pytest.approx(0.5)
        assert report.delta_star == pytest.approx(0.1, abs=1e-12)
        assert report.delta_star <= report.pinsker_delta + 1e-9
        assert report.mi_loss_bits == pytest.approx(
            report.conditional_kl_bits, abs=1e-10
        )

    def test_purity_bit_identical_outputs(self):
        p = gen_random_finite(9, 3, 12)
        rng = make_rng(12, 37)
        f = fd.FiniteMap({x: f"t{rng.integers(0, 3)}" for x in p.x_ids})
        first = fd.safety_report(p, f)
        second = fd.safety_report(p, f)
        assert first == second
