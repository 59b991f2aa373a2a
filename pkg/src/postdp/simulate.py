"""Monte-Carlo testing of the privacy condition.

Draws noisy outputs of a scalar weight under adjacent inputs (0 and delta_w),
computes the per-sample privacy loss, counts how often it exceeds epsilon,
and reports the loss distribution.  A closed-form Gaussian tail probability
serves as the independent check on the sampled violation rate.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .calibration import (
    PrivacyBudget,
    TrainingConfig,
    Variant,
    default_delta,
    noise_scale,
    sensitivity,
)

HISTOGRAM_BINS = 100
DEFAULT_NUM_SAMPLES = 1_000_000

SWEEP_CSV_COLUMNS = (
    "epsilon",
    "sigma",
    "violation_rate",
    "analytic_rate",
    "max_loss",
    "p999_loss",
    "variant",
)


@dataclass(frozen=True)
class LossSummary:
    min: float
    max: float
    mean: float
    p50: float
    p99: float
    p999: float


@dataclass(frozen=True)
class SimulationReport:
    epsilon: float
    sigma: float
    delta_w: float
    num_samples: int
    violations: int
    violation_rate: float
    loss_summary: LossSummary
    histogram: tuple[tuple[float, int], ...]
    seed: int
    stream_index: int = 0
    variant: str = None
    analytic_rate: float = None

    def to_dict(self) -> dict:
        d = {
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "delta_w": self.delta_w,
            "num_samples": self.num_samples,
            "violations": self.violations,
            "violation_rate": self.violation_rate,
            "analytic_rate": self.analytic_rate,
            "variant": self.variant,
            "seed": self.seed,
            "stream_index": self.stream_index,
            "loss_summary": vars(self.loss_summary).copy(),
            "histogram": [[edge, count] for edge, count in self.histogram],
        }
        return d


def privacy_loss(y: float, x: float, x_prime: float, sigma: float):
    """Absolute log-ratio of the two Gaussian densities at y.

    Closed form of |log N(y; x, sigma) - log N(y; x_prime, sigma)|, evaluated
    as |x - x'| * |2y - x - x'| / (2 sigma^2), the factored equivalent of
    |(y - x')^2 - (y - x)^2| / (2 sigma^2) that stays accurate when the
    centers are much closer together than they are to y.  Accepts scalars or
    arrays.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return np.abs(x - x_prime) * np.abs(2.0 * y - x - x_prime) / (2.0 * sigma * sigma)


def analytic_violation_probability(delta_w: float, sigma: float, epsilon: float) -> float:
    """Exact probability that the sampled privacy loss exceeds epsilon.

    With x=0 and x'=delta_w the loss is delta_w*|2y - delta_w|/(2 sigma^2)
    for y ~ N(0, sigma^2), so a violation means |y - delta_w/2| exceeds
    sigma^2*epsilon/delta_w; both Gaussian tails of that event are summed.
    """
    if not (delta_w > 0 and sigma > 0 and epsilon > 0):
        raise ValueError("delta_w, sigma, and epsilon must all be positive")
    t = sigma * sigma * epsilon / delta_w
    m = delta_w / 2.0
    return float(norm.sf((t + m) / sigma) + norm.sf((t - m) / sigma))


def simulate_privacy_losses(
    delta_w: float,
    sigma: float,
    epsilon: float,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    stream_index: int = 0,
    variant: str = None,
) -> SimulationReport:
    """Sample the privacy loss distribution for given (delta_w, sigma, epsilon)."""
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if seed < 0 or stream_index < 0:
        raise ValueError("seed and stream_index must be nonnegative integers")
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream_index]))
    noise = rng.normal(0.0, sigma, num_samples)
    losses = privacy_loss(noise, 0.0, delta_w, sigma)

    # Exact per-run bound on the loss given the largest draw.
    bound = delta_w * (2.0 * np.abs(noise).max() + delta_w) / (2.0 * sigma * sigma)
    max_loss = float(losses.max())
    if max_loss > bound * (1.0 + 1e-12):
        raise AssertionError(f"observed loss {max_loss} above exact bound {bound}")

    violations = int(np.count_nonzero(losses > epsilon))
    p50, p99, p999 = np.quantile(losses, [0.5, 0.99, 0.999])
    hi = max(epsilon, max_loss)
    counts, edges = np.histogram(losses, bins=HISTOGRAM_BINS, range=(0.0, hi))
    return SimulationReport(
        epsilon=epsilon,
        sigma=sigma,
        delta_w=delta_w,
        num_samples=num_samples,
        violations=violations,
        violation_rate=violations / num_samples,
        loss_summary=LossSummary(
            min=float(losses.min()),
            max=max_loss,
            mean=float(losses.mean()),
            p50=float(p50),
            p99=float(p99),
            p999=float(p999),
        ),
        histogram=tuple(zip((float(e) for e in edges[:-1]), (int(c) for c in counts))),
        seed=seed,
        stream_index=stream_index,
        variant=variant,
        analytic_rate=analytic_violation_probability(delta_w, sigma, epsilon),
    )


def run_simulation(
    cfg: TrainingConfig,
    budget: PrivacyBudget,
    variant: Variant = Variant.SPLIT,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    stream_index: int = 0,
) -> SimulationReport:
    """Simulate the calibrated mechanism for one (cfg, budget, variant)."""
    variant = Variant(variant)
    dw = sensitivity(cfg).delta_w
    sigma = noise_scale(cfg, budget, variant).sigma
    return simulate_privacy_losses(
        dw, sigma, budget.epsilon, num_samples, seed, stream_index, variant.value
    )


def log_spaced_epsilons(eps_min: float, eps_max: float, points: int) -> list[float]:
    if not (eps_min > 0 and eps_max >= eps_min and points >= 1):
        raise ValueError("need 0 < eps_min <= eps_max and points >= 1")
    if points == 1:
        return [eps_min]
    return [float(e) for e in np.logspace(np.log10(eps_min), np.log10(eps_max), points)]


def sweep(
    eps_grid,
    cfg: TrainingConfig,
    delta: float = None,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    variant="split",
) -> list[SimulationReport]:
    """One report per epsilon (and per variant when variant='both').

    Substreams are keyed by (seed, grid index) so results do not depend on
    evaluation order.  delta=None applies the 1/N^2 default.
    """
    eps_grid = list(eps_grid)
    if not eps_grid:
        raise ValueError("epsilon grid must be nonempty")
    if delta is None:
        delta = default_delta(cfg.dataset_size)
    variants = [Variant.SPLIT, Variant.UNDER_SQRT] if variant == "both" else [Variant(variant)]
    reports = []
    for idx, eps in enumerate(eps_grid):
        budget = PrivacyBudget(epsilon=eps, delta=delta)
        for var in variants:
            reports.append(
                run_simulation(cfg, budget, var, num_samples, seed, stream_index=idx)
            )
    return reports


def write_sweep_csv(reports: list[SimulationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    repr(r.epsilon),
                    repr(r.sigma),
                    repr(r.violation_rate),
                    repr(r.analytic_rate),
                    repr(r.loss_summary.max),
                    repr(r.loss_summary.p999),
                    r.variant or "",
                ]
            )


def sweep_to_json(reports: list[SimulationReport]) -> str:
    doc = {"schema_version": 1, "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2)
