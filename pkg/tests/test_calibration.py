import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postdp.calibration import (
    PrivacyBudget,
    TrainingConfig,
    Variant,
    check_budget,
    default_delta,
    empirical_term,
    epsilon_bound_branches,
    max_supported_epsilon,
    noise_scale,
    sensitivity,
)

FLAGSHIP = TrainingConfig(
    epochs=10, learning_rate=5e-5, clipping_norm=1.0, dataset_size=1000, batch_size=10
)


def cfg(e=1, lr=1.0, c=1.0, n=1, b=1):
    return TrainingConfig(
        epochs=e, learning_rate=lr, clipping_norm=c, dataset_size=n, batch_size=b
    )


class TestTrainingConfig:
    def test_rejects_bad_fields_at_construction(self):
        with pytest.raises(ValueError):
            cfg(e=0)
        with pytest.raises(ValueError):
            cfg(lr=0.0)
        with pytest.raises(ValueError):
            cfg(c=-1.0)
        with pytest.raises(ValueError):
            cfg(n=4, b=5)
        with pytest.raises(ValueError):
            cfg(n=4, b=0)

    def test_sampling_rate(self):
        assert cfg(n=10, b=5).sampling_rate == 0.5
        assert cfg(n=3, b=3).sampling_rate == 1.0


class TestSensitivity:
    def test_all_ones_identity(self):
        assert sensitivity(cfg()).delta_w == 1.0

    def test_flagship_config(self):
        # Oracle: exact rational arithmetic on the double-precision inputs.
        exact = Fraction(10) * Fraction(5e-5) * Fraction(1.0) / (Fraction(1000) * Fraction(10))
        got = sensitivity(FLAGSHIP).delta_w
        assert got == 5e-8
        assert abs(Fraction(got) - exact) <= Fraction(math.ulp(got))

    def test_powers_of_two_exact(self):
        assert sensitivity(cfg(e=2, lr=0.5, c=2.0, n=4, b=2)).delta_w == 0.25

    @given(
        e=st.integers(1, 100),
        lr=st.floats(1e-6, 1.0),
        c=st.floats(1e-3, 10.0),
        n=st.integers(2, 10_000),
    )
    def test_multiplicative_in_epochs_and_dataset(self, e, lr, c, n):
        base = sensitivity(cfg(e=e, lr=lr, c=c, n=n, b=1)).delta_w
        doubled_e = sensitivity(cfg(e=2 * e, lr=lr, c=c, n=n, b=1)).delta_w
        doubled_n = sensitivity(cfg(e=e, lr=lr, c=c, n=2 * n, b=1)).delta_w
        assert abs(doubled_e - 2.0 * base) <= math.ulp(doubled_e)
        assert abs(doubled_n - base / 2.0) <= math.ulp(doubled_n)


class TestDefaultDelta:
    def test_values(self):
        assert default_delta(1000) == 1e-6
        assert default_delta(2) == 0.25
        assert default_delta(10) == 0.01

    def test_rejects_tiny_dataset(self):
        with pytest.raises(ValueError):
            default_delta(1)


class TestEmpiricalTerm:
    def test_unit_epsilon_exact(self):
        assert empirical_term(1.0) == 0.009760

    def test_frozen_oracle_values(self):
        # 50-digit decimal evaluation, rounded to double.
        assert empirical_term(1000.0) == pytest.approx(0.005694109540895065, rel=1e-14)
        assert empirical_term(0.01) == pytest.approx(0.013978668880616725, rel=1e-14)
        assert empirical_term(0.01) > 0.009760

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            empirical_term(0.0)

    def test_strictly_decreasing_and_continuous(self):
        grid = [10**k for k in [x / 4 for x in range(-8, 13)]]
        values = [empirical_term(e) for e in grid]
        assert all(a > b for a, b in zip(values, values[1:]))
        # continuity probe: nearby inputs give nearby outputs
        for e in (0.01, 1.0, 500.0):
            assert empirical_term(e * (1 + 1e-9)) == pytest.approx(empirical_term(e), rel=1e-8)


class TestNoiseScale:
    def test_split_components_unit_epsilon(self):
        ns = noise_scale(cfg(), PrivacyBudget(epsilon=1.0, delta=1e-6), Variant.SPLIT)
        assert ns.sigma2 == 0.009760
        assert ns.sigma == pytest.approx(5.308562526850474, rel=1e-14)
        assert ns.sigma == ns.sigma1 + ns.sigma2

    def test_undersqrt_frozen_oracle(self):
        ns = noise_scale(FLAGSHIP, PrivacyBudget(epsilon=10.0, delta=1e-6), Variant.UNDER_SQRT)
        assert ns.sigma == pytest.approx(0.09030767196793303, rel=1e-14)
        assert ns.sigma == pytest.approx(math.sqrt(ns.sigma1 + ns.sigma2), rel=1e-15)

    def test_default_variant_is_split(self):
        ns = noise_scale(FLAGSHIP, PrivacyBudget(epsilon=1.0, delta=1e-6))
        assert ns.variant is Variant.SPLIT

    def test_split_strictly_decreasing_in_epsilon(self):
        grid = [0.01 * (1000.0 / 0.01) ** (i / 30) for i in range(31)]
        sigmas = [
            noise_scale(FLAGSHIP, PrivacyBudget(epsilon=e, delta=1e-6)).sigma for e in grid
        ]
        assert all(a > b for a, b in zip(sigmas, sigmas[1:]))

    @given(
        eps=st.floats(0.01, 1000.0),
        delta=st.floats(1e-12, 0.5),
        e=st.integers(1, 50),
        n=st.integers(2, 5000),
    )
    @settings(max_examples=200)
    def test_split_dominates_gaussian_part(self, eps, delta, e, n):
        c = cfg(e=e, lr=1e-4, c=1.0, n=n, b=1)
        ns = noise_scale(c, PrivacyBudget(epsilon=eps, delta=delta), Variant.SPLIT)
        floor = math.sqrt(2.0 * math.log(1.25 / delta)) * sensitivity(c).delta_w / eps
        assert ns.sigma >= floor


class TestMaxSupportedEpsilon:
    def test_log_cap_branch_value(self):
        delta = 1.25 / math.e
        branches = epsilon_bound_branches(1.0, delta)
        assert branches["log_cap"] == pytest.approx(4.0, rel=1e-14)

    def test_three_way_min_frozen(self):
        # Oracle: evaluate all three branches at 50 digits, take the min.
        assert max_supported_epsilon(1.0, 1e-6) == pytest.approx(
            0.012630294321265362, rel=1e-13
        )

    def test_branch_selection_by_direct_comparison(self):
        branches = epsilon_bound_branches(5e-8, 1e-6)
        value = max_supported_epsilon(5e-8, 1e-6)
        assert value == min(branches.values())
        assert value == pytest.approx(9.875107472453369e-08, rel=1e-13)
        assert min(branches, key=branches.get) == "cross_term"

    def test_rejects_log_domain(self):
        with pytest.raises(ValueError):
            max_supported_epsilon(1.0, 1.25)
        with pytest.raises(ValueError):
            max_supported_epsilon(1.0, 1.3)

    @given(dw=st.floats(1e-10, 1e3), delta=st.floats(1e-15, 0.999))
    @settings(max_examples=200)
    def test_branches_nonnegative_and_min_returned(self, dw, delta):
        branches = epsilon_bound_branches(dw, delta)
        assert all(v >= 0.0 for v in branches.values())
        assert max_supported_epsilon(dw, delta) == min(branches.values())


class TestCheckBudget:
    def test_tiny_epsilon_within(self):
        ok, diag = check_budget(PrivacyBudget(epsilon=1e-300, delta=1e-6), 1.0)
        assert ok
        assert "within" in diag

    def test_boundary_inclusive(self):
        bound = max_supported_epsilon(1.0, 1e-6)
        ok, _ = check_budget(PrivacyBudget(epsilon=bound, delta=1e-6), 1.0)
        assert ok

    def test_double_the_bound_refused(self):
        bound = max_supported_epsilon(1.0, 1e-6)
        ok, diag = check_budget(PrivacyBudget(epsilon=2.0 * bound, delta=1e-6), 1.0)
        assert not ok
        assert "cross_term" in diag or "log_cap" in diag or "tail_term" in diag
