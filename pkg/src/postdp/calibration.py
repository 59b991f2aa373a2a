"""Noise-scale calibration for post-training weight privatization.

Computes the global sensitivity of the weight update rule from the training
hyperparameters, the Gaussian noise scale in its two published variants, and
the epsilon range over which the calibrated mechanism's guarantee holds.
"""

import math
from dataclasses import dataclass
from enum import Enum

# Empirical taper term constants, fixed (not re-fit here).
EMPIRICAL_COEF = 0.009760
EMPIRICAL_EXP = 0.078008

# Constants of the closed-form epsilon bound, hard-coded as published.
BOUND_CROSS_COEF = 0.0384
BOUND_CROSS_EXP = 0.922
BOUND_TAIL_COEF = 0.000191
BOUND_TAIL_EXP = 1.844


class Variant(str, Enum):
    """How the empirical term combines with the Gaussian term.

    SPLIT adds the empirical term outside the square root (sigma = s1 + s2);
    UNDER_SQRT places both addends under a single square root.
    """

    SPLIT = "split"
    UNDER_SQRT = "undersqrt"


class BudgetError(ValueError):
    """Requested epsilon exceeds what the calibrated mechanism supports."""


@dataclass(frozen=True)
class TrainingConfig:
    """The five training parameters that determine sensitivity and sampling rate."""

    epochs: int
    learning_rate: float
    clipping_norm: float
    dataset_size: int
    batch_size: int

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.dataset_size < 1:
            raise ValueError(f"dataset_size must be >= 1, got {self.dataset_size}")
        if not 1 <= self.batch_size <= self.dataset_size:
            raise ValueError(
                f"batch_size must be in [1, dataset_size], got {self.batch_size} "
                f"with dataset_size {self.dataset_size}"
            )
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.clipping_norm > 0:
            raise ValueError(f"clipping_norm must be positive, got {self.clipping_norm}")

    @property
    def sampling_rate(self) -> float:
        """Batch fraction q = B/N, in (0, 1]."""
        return self.batch_size / self.dataset_size


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class Sensitivity:
    """Maximum post-training change of any single weight, in weight units."""

    delta_w: float

    def __post_init__(self):
        if not self.delta_w > 0:
            raise ValueError(f"delta_w must be positive, got {self.delta_w}")


@dataclass(frozen=True)
class NoiseScale:
    """Calibrated Gaussian standard deviation with its two components.

    For SPLIT, sigma = sigma1 + sigma2. For UNDER_SQRT, sigma1 and sigma2 are
    the two addends under the root, so sigma = sqrt(sigma1 + sigma2).
    """

    sigma: float
    variant: Variant
    sigma1: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def sensitivity(cfg: TrainingConfig) -> Sensitivity:
    """Global sensitivity of the weight update rule: E*lr*C / (N*B)."""
    dw = (cfg.epochs * cfg.learning_rate * cfg.clipping_norm) / (
        cfg.dataset_size * cfg.batch_size
    )
    return Sensitivity(delta_w=dw)


def default_delta(dataset_size: int) -> float:
    """Default failure probability 1/N^2 for a dataset of N records."""
    if dataset_size < 2:
        raise ValueError(
            f"dataset_size must be >= 2 for the 1/N^2 default (delta < 1), got {dataset_size}"
        )
    return 1.0 / (dataset_size * dataset_size)


def empirical_term(epsilon: float) -> float:
    """Empirical taper term 0.009760 / epsilon^0.078008."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return EMPIRICAL_COEF / epsilon**EMPIRICAL_EXP


def noise_scale(
    cfg: TrainingConfig,
    budget: PrivacyBudget,
    variant: Variant = Variant.SPLIT,
) -> NoiseScale:
    """Calibrate the Gaussian noise standard deviation for a training run.

    SPLIT is the default: it is the form the closed-form privacy bound is
    stated for.  UNDER_SQRT evaluates the alternative published form with the
    whole expression under the square root.
    """
    variant = Variant(variant)
    dw = sensitivity(cfg).delta_w
    gauss = 2.0 * math.log(1.25 / budget.delta) * dw / budget.epsilon
    emp = empirical_term(budget.epsilon)
    if variant is Variant.SPLIT:
        s1 = math.sqrt(2.0 * math.log(1.25 / budget.delta)) * dw / budget.epsilon
        return NoiseScale(sigma=s1 + emp, variant=variant, sigma1=s1, sigma2=emp)
    return NoiseScale(
        sigma=math.sqrt(gauss + emp), variant=variant, sigma1=gauss, sigma2=emp
    )


def epsilon_bound_branches(delta_w: float, delta: float) -> dict[str, float]:
    """The three closed-form branches whose minimum bounds the usable epsilon."""
    if not delta_w > 0:
        raise ValueError(f"delta_w must be positive, got {delta_w}")
    if not 0 < delta < 1.25:
        raise ValueError(f"delta must be in (0, 1.25) for log(1.25/delta) > 0, got {delta}")
    log_term = math.log(1.25 / delta)
    cross = delta_w**2 / (
        4.0 * log_term * delta_w**2 + BOUND_CROSS_COEF * delta_w * math.sqrt(log_term)
    )
    return {
        "log_cap": 4.0 * log_term,
        "cross_term": cross ** (1.0 / BOUND_CROSS_EXP),
        "tail_term": (delta_w**2 / BOUND_TAIL_COEF) ** (1.0 / BOUND_TAIL_EXP),
    }


def max_supported_epsilon(delta_w: float, delta: float) -> float:
    """Largest epsilon for which the calibrated mechanism's guarantee holds.

    Minimum of three closed-form expressions in (delta_w, delta).
    """
    return min(epsilon_bound_branches(delta_w, delta).values())


def check_budget(budget: PrivacyBudget, delta_w: float) -> tuple[bool, str]:
    """Whether epsilon is within the supported range, plus a diagnostic.

    The diagnostic names the branch of the bound that is binding.
    """
    branches = epsilon_bound_branches(delta_w, budget.delta)
    branch, bound = min(branches.items(), key=lambda kv: kv[1])
    ok = budget.epsilon <= bound
    verdict = "within" if ok else "exceeds"
    diag = (
        f"epsilon {budget.epsilon:g} {verdict} max supported epsilon {bound:.6g} "
        f"for delta_w {delta_w:g}, delta {budget.delta:g} (binding branch: {branch})"
    )
    return ok, diag
