import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdlab import harness as H
from fdlab.errors import HypothesisViolated, PreconditionViolated, ShapeMismatch
from fdlab.flow import integrate_fine_tuning, lp_flow, run_lpft
from fdlab.problem import InstanceConfig, SecondMoment, build_instance, build_toy_instance
from fdlab.reports import ResultId
from fdlab.subspace import orthogonal_complement, principal_angle_cos

SMALL = InstanceConfig(d=20, k=3, m=6, n=12)


class TestHeadAlignment:
    def test_equal_heads(self):
        v = np.array([0.3, -2.0])
        assert H.head_alignment_error(v, v) == 0.0

    def test_zero_init(self):
        assert H.head_alignment_error([0.0, 0.0], [1.0, 0.0]) == 1.0

    def test_formula(self):
        assert H.head_alignment_error([1.0, 0.0], [2.0, 0.0]) == 12.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            H.head_alignment_error([1.0], [1.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_nonnegative(self, a, b):
        assert H.head_alignment_error(a, b) >= 0.0


class TestTheorem1Bound:
    def test_lp_head_is_vacuous(self):
        assert H.theorem1_rhs(0.7, 5, 0.0, 1.0, 0.1, sigma_min=4.0) == pytest.approx(-0.2)

    def test_large_eps_negative(self):
        assert H.theorem1_rhs(1.0, 1, 1.0, 1.0, 0.3) < 0

    def test_default_instance_value(self):
        inst = build_instance(InstanceConfig(eps=0.0))
        c_perp = principal_angle_cos(inst.r_init, orthogonal_complement(inst.train.span))
        phi_sq = H.head_alignment_error(inst.v_init, inst.v_star)
        assert phi_sq == pytest.approx(1.0, rel=1e-12)
        expected = c_perp / (4 * math.sqrt(5)) - inst.eps_measured
        assert H.theorem1_bound(inst, phi_sq) == pytest.approx(expected, rel=1e-12)
        assert H.theorem1_bound(inst, phi_sq) > 0

    def test_monotone_on_grid(self):
        eps_grid = np.linspace(0, 0.5, 21)
        c_grid = np.linspace(0, 1, 21)
        for phi_sq in (0.1, 1.0, 3.0):
            for c in c_grid:
                vals = [H.theorem1_rhs(c, 5, phi_sq, 1.3, e) for e in eps_grid]
                assert np.all(np.diff(vals) <= 0)
            for e in eps_grid:
                vals = [H.theorem1_rhs(c, 5, phi_sq, 1.3, e) for c in c_grid]
                assert np.all(np.diff(vals) >= 0)

    def test_sigma_scaling(self):
        base = H.theorem1_rhs(0.5, 2, 1.0, 1.0, 0.01)
        assert H.theorem1_rhs(0.5, 2, 1.0, 1.0, 0.01, sigma_min=9.0) == pytest.approx(3 * base)


class TestVerifyTheorem1:
    def test_perfect_features_zero_head(self):
        inst = build_instance(InstanceConfig(eps=0.0))
        traj = integrate_fine_tuning(inst)
        rep = H.verify_theorem1(inst, traj)
        assert rep.assertable and rep.passed
        assert traj.min_metric("l_ood") > 0
        assert rep.quantities["ratio"] >= 1.0
        assert rep.quantities["rhs_min_angle_conjecture"] >= rep.quantities["rhs"]

    def test_lpft_is_vacuous(self):
        for i in range(3):
            inst = build_instance(InstanceConfig(eps=0.0, index=i))
            rep = H.verify_theorem1(inst, run_lpft(inst))
            assert not rep.assertable
            assert rep.quantities["vacuous"] == 1.0
            assert rep.quantities["rhs"] <= H.VACUOUS_ATOL

    def test_small_battery(self):
        rep, reports = H.theorem1_battery(InstanceConfig(eps=0.0), 5, fixture_min_ratio=1.0)
        assert len(reports) == 5
        assert rep.passed
        assert rep.quantities["ratio_floor"] == 0.5


class TestInvariantReports:
    def test_lp_feature_drift_exactly_zero(self):
        inst = build_instance(SMALL)
        rep = H.verify_feature_invariance(lp_flow(inst), inst.s_perp)
        assert rep.quantities["max_drift"] == 0.0
        assert rep.passed

    def test_toy_drift_directions(self):
        toy = build_toy_instance()
        traj = integrate_fine_tuning(toy)
        rep = H.verify_feature_invariance(traj, toy.s_perp)
        assert rep.quantities["max_drift"] == 0.0
        assert H.feature_drift_perp(traj, toy.train.span) > 1e-3

    def test_default_instance(self):
        inst = build_instance(InstanceConfig())
        traj = integrate_fine_tuning(inst)
        assert H.verify_feature_invariance(traj, inst.s_perp).passed
        bal = H.verify_balancedness(traj)
        assert bal.passed
        assert bal.quantities["tolerance"] == pytest.approx(1e-6 * (1 + 5))

    def test_balancedness_detects_lp(self):
        # LP freezes B, so v v^T - B B^T is not conserved
        inst = build_instance(SMALL)
        assert not H.verify_balancedness(lp_flow(inst)).passed

    def test_merge_keeps_worst(self):
        inst = build_instance(SMALL)
        good = H.verify_balancedness(integrate_fine_tuning(inst))
        bad = H.verify_balancedness(lp_flow(inst))
        merged = H.merge_reports([good, bad], ResultId.LEM_BALANCE)
        assert merged.quantities["n_failed"] == 1 and not merged.passed


class TestLPBound:
    def test_zero_eps(self):
        inst = build_instance(replace(SMALL, n=30, eps=0.0))
        assert H.lp_ood_upper_bound(inst, 0.1) == pytest.approx(0.0, abs=1e-14)
        assert H.lp_limit(inst)[2] <= 1e-12

    def test_linear_in_eps(self):
        inst = build_instance(replace(SMALL, n=30, eps=0.05))
        doubled = replace(inst, eps_measured=2 * inst.eps_measured)
        assert H.lp_ood_upper_bound(doubled, 0.1) == pytest.approx(2 * H.lp_ood_upper_bound(inst, 0.1))

    def test_preconditions(self):
        with pytest.raises(PreconditionViolated):
            H.lp_ood_upper_bound(build_instance(SMALL), 0.1)
        with pytest.raises(PreconditionViolated):
            H.gaussian_eps_threshold(build_instance(SMALL), 0.1)

    def test_shape_report(self):
        rep = H.lp_bound_shape_report(replace(SMALL, n=30), (0.2, 0.1, 0.05), 3)
        assert rep.result_id is ResultId.LEM_LP_UPPER
        assert rep.quantities["max_measured_over_shape"] > 0


class TestRatioSweep:
    def test_requires_decreasing(self):
        with pytest.raises(PreconditionViolated):
            H.ood_ratio_report([], (0.01, 0.1))

    def test_zero_endpoint(self):
        recs = H.run_eps_sweep(SMALL, (0.1, 0.0), 3)
        zero = [r for r in recs if r.eps == 0.0]
        assert all(r.lp_l_ood <= 1e-12 and r.ft_l_ood_min > 0 for r in zero)
        rep = H.ood_ratio_report(recs, (0.1, 0.0))
        assert rep.quantities["final_ratio"] <= 1e-10

    def test_small_sweep(self):
        eps = (0.2, 0.05, 0.01)
        recs = H.run_eps_sweep(SMALL, eps, 4)
        assert len(recs) == 12
        assert H.ood_ratio_report(recs, eps).quantities["strictly_decreasing"] == 1.0

    def test_ood_near_id_control(self):
        # OOD mass concentrated on the training span: outside the hypotheses, recorded only
        inst0 = build_instance(SMALL)
        p = inst0.train.span.projector()
        sigma = SecondMoment(p + 1e-3 * np.eye(20))
        ratios = []
        for i in range(3):
            inst = replace(build_instance(replace(SMALL, eps=0.05, index=i)), sigma_ood=sigma)
            ratios.append(H.lp_limit(inst)[2] / integrate_fine_tuning(inst).min_metric("l_ood"))
        assert all(np.isfinite(ratios))

    def test_loglog_slope(self):
        x = np.array([0.2, 0.1, 0.05])
        assert H.fit_loglog_slope(x, 3 * x ** 1.5) == pytest.approx(1.5)


class TestIdComparison:
    def test_perfect_features_violate_hypothesis(self):
        with pytest.raises(HypothesisViolated):
            H.verify_id_comparison(build_instance(InstanceConfig(eps=0.0)))

    def test_default_eps_01(self):
        rep = H.verify_id_comparison(build_instance(InstanceConfig(eps=0.1)))
        assert rep.passed
        assert rep.quantities["ft_l_id"] <= 1e-10 < 1e-8 <= rep.quantities["lp_l_id"]

    def test_battery_skips_reported(self):
        rep = H.id_comparison_battery(replace(SMALL, eps=0.0), 2)
        assert rep.quantities["n_skipped"] == 2 and not rep.passed


class TestLPFT:
    def test_small(self):
        rep = H.verify_lpft(H.lpft_instances(SMALL, 3))
        assert rep.passed
        assert rep.quantities["min_ft_zero_l_ood"] > 0

    def test_needs_perfect_features(self):
        inst = build_instance(replace(SMALL, head_mode="gaussian"))
        with pytest.raises(HypothesisViolated):
            H.lpft_quantities(inst)

    def test_needs_gaussian_head(self):
        with pytest.raises(PreconditionViolated):
            H.lpft_quantities(build_instance(replace(SMALL, eps=0.0)))

    def test_baseline_floor(self):
        rep = H.verify_lpft(H.lpft_instances(SMALL, 2), baseline=1e6)
        assert not rep.passed

    def test_lp_perfect(self):
        insts = [build_instance(replace(SMALL, eps=0.0, index=i)) for i in range(3)]
        assert H.verify_lp_perfect(insts).passed
        with pytest.raises(HypothesisViolated):
            H.verify_lp_perfect([build_instance(SMALL)])


class TestAnglePerturbation:
    def test_identical(self):
        rng = np.random.default_rng(0)
        rep = H.verify_angle_perturbation(30, rng, eps_values=(0.0,))
        assert rep.passed and rep.quantities["max_lhs_minus_rhs"] <= 1e-12

    def test_rotated_extractor(self):
        from fdlab.subspace import extractor_distance, orthonormalize, random_rotation

        rng = np.random.default_rng(1)
        b = orthonormalize(rng.standard_normal((12, 3))).basis.T
        ub = random_rotation(3, rng) @ b
        t = H.sample_uniform_subspace(12, 5, rng)
        lhs = abs(principal_angle_cos(orthonormalize(ub.T), t) - principal_angle_cos(orthonormalize(b.T), t))
        assert lhs <= 1e-12 and extractor_distance(ub, b)[0] <= 1e-12

    def test_battery(self):
        assert H.verify_angle_perturbation(100, np.random.default_rng(2)).passed


class TestSubspaceAngleConcentration:
    def test_full_space(self):
        rep = H.verify_subspace_angle_concentration(10, 2, 10, 0.1, 20, np.random.default_rng(0))
        assert rep.quantities["min_cangle"] == pytest.approx(1.0)

    def test_precondition(self):
        with pytest.raises(PreconditionViolated):
            H.verify_subspace_angle_concentration(10, 3, 3, 0.1, 5, np.random.default_rng(0))

    def test_threshold_formula(self):
        assert H.binomial_slack(0.1, 500) == pytest.approx(0.1 + 3 * math.sqrt(0.09 / 500))
        assert H.binomial_slack(0.1, 500) <= 0.141

    def test_bound_formula(self):
        expected = (math.sqrt(20) - math.sqrt(5) - math.sqrt(2 * math.log(10))) / math.sqrt(
            100 * math.log(2000))
        assert H.subspace_angle_lower_bound(100, 5, 20, 0.1) == pytest.approx(expected)


class TestHeadAnticoncentration:
    def test_zero_truth(self):
        with pytest.raises(PreconditionViolated):
            H.verify_head_anticoncentration(3, (1.0,), np.zeros(3), 0.1, 100, np.random.default_rng(0))

    def test_small_variance_limit(self):
        v_star = np.array([1.0, -0.5, 2.0])
        rep = H.verify_head_anticoncentration(3, (1e-8,), v_star, 0.1, 10_000,
                                              np.random.default_rng(0), c_test=0.5)
        assert rep.quantities["freq_sigma_sq_1e-08"] == 0.0

    def test_calibrated(self):
        v_star = build_instance(InstanceConfig()).v_star
        rep = H.verify_head_anticoncentration(5, (0.01, 1.0, 100.0), v_star, 0.1, 100_000,
                                              np.random.default_rng(3))
        assert rep.passed and rep.quantities["c_test"] > 0


class TestGaussianNonasymptotic:
    def test_precondition(self):
        with pytest.raises(PreconditionViolated):
            H.verify_gaussian_nonasymptotic(InstanceConfig(), 2)

    def test_perfect_features(self):
        rep = H.verify_gaussian_nonasymptotic(replace(SMALL, n=30, head_mode="gaussian"), 4,
                                              eps_fraction=0.0)
        assert rep.quantities["win_fraction"] == 1.0

    def test_far_above_threshold_recorded(self):
        tmpl = replace(SMALL, n=30, head_mode="gaussian")
        records = []
        for i in range(3):
            inst = build_instance(replace(tmpl, eps=0.4, index=i))
            records.append(H.lp_limit(inst)[2] < integrate_fine_tuning(inst).min_metric("l_ood"))
        assert len(records) == 3


class TestVerificationConfig:
    def test_delta_range(self):
        with pytest.raises(ValueError):
            H.VerificationConfig(delta=1.0)

    def test_subset_of_suites(self):
        cfg = H.VerificationConfig(n_instances=3, suites=("PROP_LP_PERFECT", "LEM_SUBSPACE_ANGLE"))
        reps = H.verify_all(cfg)
        assert [r.result_id for r in reps] == [ResultId.PROP_LP_PERFECT, ResultId.LEM_SUBSPACE_ANGLE]
        assert all(r.passed for r in reps)

    def test_fixtures_only_for_defaults(self):
        assert H._fixtures_apply(H.VerificationConfig(suites=("THM1",)))
        assert not H._fixtures_apply(H.VerificationConfig(seed=1))
