import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postdp.accounting import (
    AlphaOverflowError,
    CompositionOverflowError,
    RdpCurve,
    advanced_composition,
    calibrate_sigma_from_rdp,
    compose_over_epochs,
    full_pipeline_epsilon,
    gaussian_rdp_curve,
    pipeline_table,
    rdp_epsilon,
    rdp_to_dp,
    sigma_total,
    subsampled_rdp,
)
from postdp.calibration import PrivacyBudget, TrainingConfig, empirical_term

FLAGSHIP = TrainingConfig(
    epochs=10, learning_rate=5e-5, clipping_norm=1.0, dataset_size=1000, batch_size=10
)


class TestAdvancedComposition:
    def test_thousandfold_reference_values(self):
        out = advanced_composition(PrivacyBudget(epsilon=1.0, delta=1e-8), 1000)
        assert out.eps_prime == pytest.approx(191.94103648752323, rel=1e-9)
        assert out.delta_prime == pytest.approx(1.001e-5, abs=1e-12)

    def test_unit_log_case(self):
        out = advanced_composition(PrivacyBudget(epsilon=1.0, delta=1 / math.e), 1)
        assert out.eps_prime == pytest.approx(math.sqrt(2.0), rel=1e-14)

    def test_frozen_oracle_value(self):
        out = advanced_composition(PrivacyBudget(epsilon=2.0, delta=1e-4), 5)
        assert out.eps_prime == pytest.approx(19.194103648752325, rel=1e-14)

    def test_delta_overflow_is_error(self):
        with pytest.raises(CompositionOverflowError):
            advanced_composition(PrivacyBudget(epsilon=1.0, delta=0.01), 99)

    def test_k_below_one_rejected(self):
        with pytest.raises(ValueError):
            advanced_composition(PrivacyBudget(epsilon=1.0, delta=1e-8), 0)

    @given(
        eps=st.floats(1e-3, 10.0),
        delta=st.floats(1e-12, 1e-3),
        k=st.integers(1, 100),
    )
    @settings(max_examples=200)
    def test_ratio_and_monotonicity(self, eps, delta, k):
        out = advanced_composition(PrivacyBudget(epsilon=eps, delta=delta), k)
        expected_ratio = math.sqrt(2.0 * k * math.log(1.0 / delta))
        assert out.eps_prime / eps == pytest.approx(expected_ratio, rel=1e-15)
        bigger_k = advanced_composition(PrivacyBudget(epsilon=eps, delta=delta), k + 1)
        assert bigger_k.eps_prime > out.eps_prime
        smaller_delta = advanced_composition(PrivacyBudget(epsilon=eps, delta=delta / 2), k)
        assert smaller_delta.eps_prime > out.eps_prime


class TestRdpEpsilon:
    def test_simple_values(self):
        assert rdp_epsilon(2.0, 1.0, 1.0) == 1.0
        assert rdp_epsilon(2.0, 1.0, 2.0) == 0.25
        assert rdp_epsilon(10.0, 5e-8, 0.01) == pytest.approx(
            10 * (5e-8) ** 2 / 2e-4, rel=1e-14
        )

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            rdp_epsilon(1.0, 1.0, 1.0)

    @given(
        alpha=st.floats(1.001, 512.0),
        dw=st.floats(1e-8, 1e3),
        sigma=st.floats(1e-6, 1e6),
    )
    @settings(max_examples=200)
    def test_algebraic_identities(self, alpha, dw, sigma):
        base = rdp_epsilon(alpha, dw, sigma)
        assert rdp_epsilon(alpha, 2.0 * dw, sigma) == pytest.approx(4.0 * base, rel=1e-15)
        assert rdp_epsilon(alpha, dw, 2.0 * sigma) == pytest.approx(base / 4.0, rel=1e-15)


class TestSubsampledRdp:
    def test_zero_rate_degenerate(self):
        assert subsampled_rdp(2, 0.0, 0.7) == 0.0

    def test_full_rate_collapses_to_base(self):
        for alpha in (2, 3, 17):
            assert subsampled_rdp(alpha, 1.0, 0.37) == 0.37

    def test_frozen_oracle_value(self):
        got = subsampled_rdp(3, 0.01, 0.5)
        assert got == pytest.approx(0.00025767586600955244, rel=1e-13)

    def test_strictly_below_base_in_amplifying_regime(self):
        for alpha, q in [(2, 0.5), (2, 0.99), (3, 0.1), (10, 0.01)]:
            base = 0.8
            assert 0.0 < subsampled_rdp(alpha, q, base) < base

    def test_strict_mode_returns_raw_bound(self):
        # q close to 1 at alpha 3 makes the raw expression exceed the base.
        raw = subsampled_rdp(3, 0.999, 0.8, strict=True)
        assert raw > 0.8
        assert subsampled_rdp(3, 0.999, 0.8) == 0.8

    def test_overflow_raises_with_advice(self):
        with pytest.raises(AlphaOverflowError, match="alpha"):
            subsampled_rdp(200, 0.01, 10.0)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            subsampled_rdp(2.5, 0.1, 0.1)
        with pytest.raises(ValueError):
            subsampled_rdp(2, 1.5, 0.1)
        with pytest.raises(ValueError):
            subsampled_rdp(2, 0.1, -0.1)


class TestCurveOps:
    def test_curve_validation(self):
        with pytest.raises(ValueError):
            RdpCurve.from_points([(2.0, 0.1), (2.0, 0.2)])
        with pytest.raises(ValueError):
            RdpCurve.from_points([(3.0, 0.1), (2.0, 0.2)])
        with pytest.raises(ValueError):
            RdpCurve.from_points([(1.0, 0.1)])
        with pytest.raises(ValueError):
            RdpCurve.from_points([(2.0, -0.1)])

    def test_gaussian_curve_nondecreasing(self):
        curve = gaussian_rdp_curve(0.5, 1.3)
        values = [e for _, e in curve.points]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_compose_identity_and_scaling(self):
        curve = RdpCurve.from_points([(2.0, 0.1), (4.0, 0.5)])
        assert compose_over_epochs(curve, 1) == curve
        scaled = compose_over_epochs(RdpCurve.from_points([(2.0, 0.1)]), 10)
        assert scaled.points == ((2.0, 1.0),)
        tripled = compose_over_epochs(curve, 3)
        assert tripled.points == ((2.0, 0.1 * 3), (4.0, 0.5 * 3))


class TestRdpToDp:
    def test_single_point_unit_log(self):
        eps, alpha = rdp_to_dp(RdpCurve.from_points([(2.0, 0.0)]), 1 / math.e)
        assert eps == pytest.approx(1.0, rel=1e-14)
        assert alpha == 2.0

    def test_two_point_min(self):
        curve = RdpCurve.from_points([(2.0, 1.0), (4.0, 0.5)])
        eps, alpha = rdp_to_dp(curve, 1e-6)
        assert eps == pytest.approx(5.105170185988092, rel=1e-14)
        assert alpha == 4.0

    def test_close_to_classical_gaussian_calibration(self):
        # Brute-force grid oracle: integer alphas up to 512.
        curve = gaussian_rdp_curve(1.0, 4.0, range(2, 513))
        eps, alpha = rdp_to_dp(curve, 1e-5)
        classical = math.sqrt(2.0 * math.log(1.25 / 1e-5)) / 4.0
        assert eps == pytest.approx(1.2309434455247488, rel=1e-13)
        assert alpha == 20
        assert abs(eps - classical) / classical < 0.02

    def test_ties_break_toward_smaller_alpha(self):
        # Penalties are L and L/2; swapping those values into the eps slots
        # makes both conversion sums the same float, so alpha=2 must win.
        log_term = math.log(1.0 / 0.25)
        curve = RdpCurve.from_points([(2.0, log_term / 2.0), (3.0, log_term)])
        value_2 = log_term / 2.0 + log_term / 1.0
        value_3 = log_term + log_term / 2.0
        assert value_2 == value_3
        eps, alpha = rdp_to_dp(curve, 0.25)
        assert eps == value_2
        assert alpha == 2.0

    def test_empty_curve_rejected(self):
        with pytest.raises(ValueError):
            rdp_to_dp(RdpCurve(points=()), 1e-6)

    @given(
        alphas=st.lists(st.floats(1.5, 300.0), min_size=1, max_size=20, unique=True),
        scale=st.floats(1e-4, 10.0),
        delta=st.floats(1e-10, 0.1),
    )
    @settings(max_examples=100)
    def test_argmin_definition(self, alphas, scale, delta):
        points = sorted((a, scale / a) for a in alphas)
        curve = RdpCurve.from_points(points)
        eps, alpha_star = rdp_to_dp(curve, delta)
        lookup = dict(curve.points)
        assert eps >= lookup[alpha_star]
        for a, e in curve.points:
            assert eps <= e + math.log(1.0 / delta) / (a - 1.0) + 1e-12


class TestSigmaTotal:
    def test_unit_values(self):
        assert sigma_total(1.0, 1.0) == pytest.approx(
            math.sqrt(1.0 + 0.009760**2), rel=1e-15
        )

    def test_equal_components(self):
        sigma = 0.009760 * math.sqrt(3.0)
        assert sigma_total(sigma, 1.0) == pytest.approx(0.01952, rel=1e-14)
        assert sigma_total(sigma, 1.0) == pytest.approx(sigma * math.sqrt(4.0 / 3.0), rel=1e-14)

    def test_dominance_limit(self):
        emp = empirical_term(3.0)
        # Relative inflation is about (emp/sigma)^2 / 2.
        assert abs(sigma_total(1e3 * emp, 3.0) / (1e3 * emp) - 1.0) < 6e-7
        assert abs(sigma_total(1e5 * emp, 3.0) / (1e5 * emp) - 1.0) < 1e-9


class TestCalibrateSigma:
    def test_simple_inverses(self):
        assert calibrate_sigma_from_rdp(1.0, 2.0, 1.0) == 1.0
        assert calibrate_sigma_from_rdp(1.0, 8.0, 1.0) == 2.0

    @given(
        dw=st.floats(1e-8, 1e4),
        alpha=st.floats(1.01, 512.0),
        target=st.floats(1e-8, 1e4),
    )
    @settings(max_examples=300, derandomize=True)
    def test_round_trip_within_two_ulp(self, dw, alpha, target):
        sigma = calibrate_sigma_from_rdp(dw, alpha, target)
        back = rdp_epsilon(alpha, dw, sigma)
        assert abs(back - target) <= 2 * math.ulp(target)


class TestFullPipeline:
    def test_full_rate_single_epoch_matches_plain_conversion(self):
        cfg = TrainingConfig(
            epochs=1, learning_rate=0.1, clipping_norm=1.0, dataset_size=50, batch_size=50
        )
        sigma = 0.5
        dw = 1 * 0.1 * 1.0 / (50 * 50)
        grid = range(2, 65)
        expected = rdp_to_dp(gaussian_rdp_curve(dw, sigma, grid), 1e-6)
        got = full_pipeline_epsilon(cfg, sigma, 1e-6, alpha_grid=grid)
        assert got == expected

    def test_huge_sigma_limit_is_conversion_penalty(self):
        got, alpha = full_pipeline_epsilon(FLAGSHIP, 1e9, 1e-6, alpha_grid=range(2, 257))
        assert alpha == 256
        assert got == pytest.approx(math.log(1e6) / 255.0, rel=1e-6)

    def test_monotone_nonincreasing_in_sigma(self):
        sigmas = [0.0005 * 2**i for i in range(20)]
        values = [
            full_pipeline_epsilon(FLAGSHIP, s, 1e-6, alpha_grid=range(2, 129))[0]
            for s in sigmas
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_overflowing_alphas_dropped_with_warning(self):
        cfg = TrainingConfig(
            epochs=1, learning_rate=1.0, clipping_norm=1.0, dataset_size=2, batch_size=1
        )
        # delta_w = 0.5, sigma = 0.05: (alpha-1)*base crosses 700 above alpha 7.
        with pytest.warns(RuntimeWarning, match="dropped"):
            table = pipeline_table(cfg, 0.05, 1e-6, alpha_grid=range(2, 33))
        assert table["dropped_alphas"]
        assert table["rows"]
        assert math.isfinite(table["epsilon"])

    def test_all_alphas_overflow_is_error(self):
        cfg = TrainingConfig(
            epochs=1, learning_rate=1.0, clipping_norm=1.0, dataset_size=2, batch_size=1
        )
        with pytest.raises(AlphaOverflowError), pytest.warns(RuntimeWarning):
            pipeline_table(cfg, 0.005, 1e-6, alpha_grid=range(2, 9))

    def test_empirical_epsilon_inflates_sigma_and_shrinks_epsilon(self):
        plain = pipeline_table(FLAGSHIP, 0.01, 1e-6, alpha_grid=range(2, 65))
        adjusted = pipeline_table(
            FLAGSHIP, 0.01, 1e-6, alpha_grid=range(2, 65), empirical_epsilon=1.0
        )
        assert adjusted["sigma_effective"] > plain["sigma_effective"]
        assert adjusted["epsilon"] <= plain["epsilon"]
