"""Privacy composition and conversion.

Advanced composition over repeated releases, Renyi-divergence accounting for
the Gaussian mechanism with subsampling amplification, epoch-wise composition,
and conversion back to an (epsilon, delta) guarantee.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .calibration import PrivacyBudget, TrainingConfig, empirical_term, sensitivity

# Largest exponent fed to expm1 before the subsampling bound saturates.
_EXP_LIMIT = 700.0

DEFAULT_ALPHA_MAX = 256


class CompositionOverflowError(ValueError):
    """Composed delta would reach or exceed 1, which is meaningless."""


class AlphaOverflowError(OverflowError):
    """exp((alpha-1)*eps) overflowed; retry with a smaller alpha."""


@dataclass(frozen=True)
class RdpCurve:
    """Ordered (alpha, eps_rdp) points, strictly ascending in alpha."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        prev = None
        for alpha, eps in self.points:
            if not alpha > 1:
                raise ValueError(f"alpha must be > 1, got {alpha}")
            if eps < 0:
                raise ValueError(f"eps_rdp must be nonnegative, got {eps} at alpha {alpha}")
            if prev is not None and alpha <= prev:
                raise ValueError(f"alphas must be strictly ascending, got {alpha} after {prev}")
            prev = alpha

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]]) -> "RdpCurve":
        return cls(points=tuple((float(a), float(e)) for a, e in points))


@dataclass(frozen=True)
class ComposedBudget:
    eps_prime: float
    delta_prime: float
    k: int


def advanced_composition(budget: PrivacyBudget, k: int) -> ComposedBudget:
    """Composed budget after k releases: eps*sqrt(2k*ln(1/delta)), k*delta + delta."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    delta_prime = k * budget.delta + budget.delta
    if delta_prime >= 1.0:
        raise CompositionOverflowError(
            f"composed delta {delta_prime:g} >= 1 for k={k}, delta={budget.delta:g}"
        )
    eps_prime = budget.epsilon * math.sqrt(2.0 * k * math.log(1.0 / budget.delta))
    return ComposedBudget(eps_prime=eps_prime, delta_prime=delta_prime, k=k)


def rdp_epsilon(alpha: float, delta_w: float, sigma: float) -> float:
    """Renyi guarantee of order alpha for the Gaussian mechanism: alpha*dw^2/(2*sigma^2)."""
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if not delta_w > 0:
        raise ValueError(f"delta_w must be positive, got {delta_w}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return alpha * delta_w * delta_w / (2.0 * sigma * sigma)


def subsampled_rdp(alpha: int, q: float, eps_rdp_base: float, strict: bool = False) -> float:
    """Amplified Renyi guarantee under sampling rate q.

    Evaluates ln(1 + q^2 * C(alpha,2) * (e^((alpha-1)*eps) - 1)) / (alpha - 1).
    The bound is only an improvement for small q; by default the result is
    capped at the unamplified base (set strict=True for the raw expression).
    q = 0 is admitted as a degenerate input and yields 0.
    """
    if not (isinstance(alpha, int) and alpha >= 2):
        raise ValueError(f"alpha must be an integer >= 2, got {alpha!r}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if eps_rdp_base < 0:
        raise ValueError(f"eps_rdp_base must be nonnegative, got {eps_rdp_base}")
    if q == 1.0 and not strict:
        # Mathematical identity at alpha=2 and the cap everywhere else.
        return eps_rdp_base
    exponent = (alpha - 1) * eps_rdp_base
    if exponent > _EXP_LIMIT:
        raise AlphaOverflowError(
            f"exp({exponent:g}) overflows at alpha={alpha}; lower alpha or sigma up"
        )
    growth = q * q * math.comb(alpha, 2) * math.expm1(exponent)
    bound = math.log1p(growth) / (alpha - 1)
    if strict:
        return bound
    return min(bound, eps_rdp_base)


def gaussian_rdp_curve(
    delta_w: float, sigma: float, alphas: Iterable[float] = None
) -> RdpCurve:
    """Renyi curve of the plain Gaussian mechanism over an alpha grid."""
    if alphas is None:
        alphas = range(2, DEFAULT_ALPHA_MAX + 1)
    return RdpCurve.from_points((a, rdp_epsilon(a, delta_w, sigma)) for a in alphas)


def compose_over_epochs(curve: RdpCurve, epochs: int) -> RdpCurve:
    """Scale every point's eps_rdp by the epoch count (additive composition)."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    return RdpCurve(points=tuple((a, epochs * e) for a, e in curve.points))


def rdp_to_dp(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """Convert a Renyi curve to (epsilon, delta)-DP.

    Returns the minimum over the grid of eps_rdp(alpha) + ln(1/delta)/(alpha-1)
    and the minimizing alpha; ties break toward smaller alpha.
    """
    if not curve.points:
        raise ValueError("curve must be nonempty")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    log_inv_delta = math.log(1.0 / delta)
    best_eps = math.inf
    best_alpha = None
    for alpha, eps in curve.points:
        candidate = eps + log_inv_delta / (alpha - 1.0)
        if candidate < best_eps:
            best_eps = candidate
            best_alpha = alpha
    return best_eps, best_alpha


def sigma_total(sigma: float, epsilon: float) -> float:
    """Noise scale with the empirical taper folded in, in quadrature."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    emp = empirical_term(epsilon)
    return math.sqrt(sigma * sigma + emp * emp)


def calibrate_sigma_from_rdp(delta_w: float, alpha: float, eps_rdp_target: float) -> float:
    """Sigma achieving a target Renyi guarantee at order alpha (inverse of rdp_epsilon).

    The representable sigma is chosen so the round trip through rdp_epsilon
    lands as close to the target as double precision permits.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if not delta_w > 0:
        raise ValueError(f"delta_w must be positive, got {delta_w}")
    if not eps_rdp_target > 0:
        raise ValueError(f"eps_rdp_target must be positive, got {eps_rdp_target}")
    sigma = math.sqrt(alpha * delta_w * delta_w / (2.0 * eps_rdp_target))
    candidates = (sigma, math.nextafter(sigma, 0.0), math.nextafter(sigma, math.inf))
    return min(candidates, key=lambda s: abs(rdp_epsilon(alpha, delta_w, s) - eps_rdp_target))


def pipeline_table(
    cfg: TrainingConfig,
    sigma: float,
    delta: float,
    alpha_grid: Sequence[int] = None,
    empirical_epsilon: float = None,
) -> dict:
    """Full accounting pass with per-alpha detail.

    For each alpha: plain Gaussian eps_rdp at the effective sigma, subsampling
    amplification at q = B/N, composition over the epoch count, and the
    conversion value eps_total(alpha) + ln(1/delta)/(alpha-1).  Alphas whose
    subsampling bound overflows are dropped with a warning.

    The empirical taper is folded into sigma only when empirical_epsilon is
    given (the adjustment needs an epsilon and the final one is unknown until
    conversion); otherwise sigma is used as passed.
    """
    if alpha_grid is None:
        alpha_grid = range(2, DEFAULT_ALPHA_MAX + 1)
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    sigma_eff = sigma if empirical_epsilon is None else sigma_total(sigma, empirical_epsilon)
    delta_w = sensitivity(cfg).delta_w
    q = cfg.sampling_rate
    log_inv_delta = math.log(1.0 / delta)

    rows = []
    dropped = []
    for alpha in alpha_grid:
        base = rdp_epsilon(alpha, delta_w, sigma_eff)
        try:
            sub = subsampled_rdp(alpha, q, base)
        except AlphaOverflowError:
            dropped.append(alpha)
            continue
        composed = cfg.epochs * sub
        rows.append(
            {
                "alpha": alpha,
                "eps_rdp": base,
                "eps_subsampled": sub,
                "eps_composed": composed,
                "conversion_value": composed + log_inv_delta / (alpha - 1.0),
            }
        )
    if dropped:
        warnings.warn(
            f"dropped {len(dropped)} alpha(s) with overflowing subsampling bound: "
            f"{dropped[0]}..{dropped[-1]}",
            RuntimeWarning,
            stacklevel=2,
        )
    if not rows:
        raise AlphaOverflowError("every alpha in the grid overflowed; lower alpha or raise sigma")

    best = min(rows, key=lambda r: r["conversion_value"])
    return {
        "delta_w": delta_w,
        "sampling_rate": q,
        "sigma": sigma,
        "sigma_effective": sigma_eff,
        "delta": delta,
        "rows": rows,
        "epsilon": best["conversion_value"],
        "alpha_star": best["alpha"],
        "dropped_alphas": dropped,
    }


def full_pipeline_epsilon(
    cfg: TrainingConfig,
    sigma: float,
    delta: float,
    alpha_grid: Sequence[int] = None,
    empirical_epsilon: float = None,
) -> tuple[float, float]:
    """Final (epsilon, alpha_star) from the subsampled, epoch-composed curve."""
    table = pipeline_table(cfg, sigma, delta, alpha_grid, empirical_epsilon)
    return table["epsilon"], table["alpha_star"]
