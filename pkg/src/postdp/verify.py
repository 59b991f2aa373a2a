"""Checking the pointwise DP condition of the Gaussian mechanism.

Evaluates pdf_w(x) <= exp(eps) * pdf_w'(x) + delta for adjacent weights
w = 0 and w' = delta_w, in two modes: `taylor` reproduces the published
procedure with truncated-series exponentials (and refuses to certify when
the series is numerically unsound); `exact` uses true exponentials and also
covers the tail region where the density ratio keeps growing, so a
"satisfied" verdict is not an artifact of the grid.  The same condition can
be exported as an SMT-LIB script whose `unsat` result certifies it
independently of this code.
"""

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .accounting import ComposedBudget, advanced_composition
from .calibration import PrivacyBudget, TrainingConfig, noise_scale, sensitivity

DEFAULT_TAYLOR_TERMS = 20
DEFAULT_GRID_POINTS = 20001


class VerificationStatus(str, Enum):
    SATISFIED = "satisfied"
    FALSIFIED = "falsified"
    INCONCLUSIVE = "inconclusive"


def taylor_exp(x: float, terms: int) -> float:
    """Partial sum of the exponential series, as in the published loop.

    Overflow yields infinity rather than raising; large negative arguments
    suffer catastrophic cancellation, which the caller must handle.
    """
    if terms < 1:
        raise ValueError(f"terms must be >= 1, got {terms}")
    result = 1.0
    factorial = 1
    power = 1.0
    for i in range(1, terms):
        factorial *= i
        power *= x
        result += power / factorial
    return result


def _taylor_exp_array(u: np.ndarray, terms: int) -> np.ndarray:
    result = np.ones_like(u)
    factorial = 1
    power = np.ones_like(u)
    for i in range(1, terms):
        factorial *= i
        power = power * u
        result += power / factorial
    return result


@dataclass(frozen=True)
class DpConditionSpec:
    """Parameters of one DP-condition check over a finite x window."""

    epsilon: float
    delta: float
    sigma: float
    delta_w: float
    taylor_terms: int = DEFAULT_TAYLOR_TERMS
    x_domain: tuple[float, float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.delta_w < 0:
            raise ValueError(f"delta_w must be nonnegative, got {self.delta_w}")
        if self.taylor_terms < 2:
            raise ValueError(f"taylor_terms must be >= 2, got {self.taylor_terms}")
        if self.x_domain is None:
            object.__setattr__(self, "x_domain", self.default_domain())
        lo, hi = self.x_domain
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("x_domain must be finite")
        if lo > -6.0 * self.sigma or hi < self.delta_w + 6.0 * self.sigma:
            raise ValueError(
                f"x_domain {self.x_domain} must contain "
                f"[{-6.0 * self.sigma}, {self.delta_w + 6.0 * self.sigma}]"
            )

    def default_domain(self) -> tuple[float, float]:
        return (-8.0 * self.sigma, self.delta_w + 8.0 * self.sigma)


@dataclass(frozen=True)
class VerificationOutcome:
    status: VerificationStatus
    margin: float = None
    witness: float = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "margin": self.margin,
            "witness": self.witness,
            "detail": self.detail,
        }


def _density_cutoff(spec: DpConditionSpec) -> float:
    """|x| beyond which pdf_w(x) < delta, making the condition automatic."""
    peak = 1.0 / (spec.sigma * math.sqrt(2.0 * math.pi))
    if peak <= spec.delta:
        return 0.0
    return spec.sigma * math.sqrt(2.0 * math.log(peak / spec.delta))


def _exact_margin(spec: DpConditionSpec, x: np.ndarray) -> np.ndarray:
    two_var = 2.0 * spec.sigma * spec.sigma
    log_norm = -math.log(spec.sigma) - 0.5 * math.log(2.0 * math.pi)
    log_pdf_w = -(x**2) / two_var + log_norm
    log_pdf_wp = -((x - spec.delta_w) ** 2) / two_var + log_norm
    with np.errstate(over="ignore"):
        return np.exp(spec.epsilon + log_pdf_wp) + spec.delta - np.exp(log_pdf_w)


def _check_exact(spec: DpConditionSpec, grid_points: int) -> VerificationOutcome:
    lo, hi = spec.x_domain
    # Extend to where pdf_w drops below delta; beyond that the condition is
    # automatic, and on the right of delta_w/2 the density ratio is below 1.
    cutoff = _density_cutoff(spec)
    lo = min(lo, -cutoff - spec.sigma)
    hi = max(hi, spec.delta_w / 2.0)
    x = np.linspace(lo, hi, grid_points)
    margin = _exact_margin(spec, x)

    negative = np.flatnonzero(margin < 0.0)
    if negative.size:
        i = int(negative[0])
        return VerificationOutcome(
            status=VerificationStatus.FALSIFIED,
            margin=float(margin[i]),
            witness=float(x[i]),
            detail=f"condition violated at x={x[i]!r} with margin {margin[i]!r}",
        )

    i = int(np.argmin(margin))
    bracket = (x[max(i - 1, 0)], x[min(i + 1, grid_points - 1)])
    refined = minimize_scalar(
        lambda t: float(_exact_margin(spec, np.array([t]))[0]),
        bounds=bracket,
        method="bounded",
    )
    if refined.fun < 0.0:
        return VerificationOutcome(
            status=VerificationStatus.FALSIFIED,
            margin=float(refined.fun),
            witness=float(refined.x),
            detail=f"condition violated at refined x={refined.x!r}",
        )
    best = min(float(margin[i]), float(refined.fun))
    return VerificationOutcome(
        status=VerificationStatus.SATISFIED,
        margin=best,
        detail=f"minimum margin {best!r} over [{lo!r}, {hi!r}] and the tail region",
    )


def _texp_fraction(u: Fraction, terms: int) -> Fraction:
    result = Fraction(1)
    factorial = 1
    power = Fraction(1)
    for i in range(1, terms):
        factorial *= i
        power *= u
        result += power / factorial
    return result


def taylor_margin_sign_exact(spec: DpConditionSpec, x: float) -> int:
    """Exact sign of the series-encoded margin at x, via rational arithmetic.

    This is the same polynomial inequality the exported SMT script encodes
    (shared normalizer z with z^2 = two_pi * sigma^2, two_pi the double
    value), so it decides what a sound solver would conclude at this point.
    """
    sigma = Fraction(spec.sigma)
    two_var = 2 * sigma * sigma
    u_w = -Fraction(x) ** 2 / two_var
    u_wp = -((Fraction(x) - Fraction(spec.delta_w)) ** 2) / two_var
    terms = spec.taylor_terms
    # margin * z = texp(eps)*texp(u_wp) - texp(u_w) + delta * z, with z > 0.
    a = _texp_fraction(Fraction(spec.epsilon), terms) * _texp_fraction(u_wp, terms)
    a -= _texp_fraction(u_w, terms)
    if a >= 0:
        return 1
    delta_sq_z_sq = Fraction(spec.delta) ** 2 * Fraction(2.0 * math.pi) * sigma * sigma
    a_sq = a * a
    if delta_sq_z_sq > a_sq:
        return 1
    if delta_sq_z_sq == a_sq:
        return 0
    return -1


def _check_taylor(spec: DpConditionSpec, grid_points: int) -> VerificationOutcome:
    lo, hi = spec.x_domain
    x = np.linspace(lo, hi, grid_points)
    two_var = 2.0 * spec.sigma * spec.sigma
    coeff = 1.0 / math.sqrt(math.pi * two_var)
    with np.errstate(over="ignore", invalid="ignore"):
        sum_w = _taylor_exp_array(-(x**2) / two_var, spec.taylor_terms)
        sum_wp = _taylor_exp_array(-((x - spec.delta_w) ** 2) / two_var, spec.taylor_terms)
        eps_factor = taylor_exp(spec.epsilon, spec.taylor_terms)
        pdf_w = coeff * sum_w
        pdf_wp = coeff * sum_wp
        margin = eps_factor * pdf_wp + spec.delta - pdf_w

    finite = np.isfinite(pdf_w) & np.isfinite(pdf_wp) & math.isfinite(eps_factor)
    sane = finite & (sum_w >= 0.0) & (sum_wp >= 0.0)

    # Falsification must come from a point where the series is trustworthy,
    # and is only reported once rational arithmetic on the same polynomial
    # confirms it; float cancellation noise cannot falsify.
    candidates = np.flatnonzero(sane & (margin < 0.0))
    candidates = candidates[np.argsort(margin[candidates], kind="stable")][:20]
    for i in candidates:
        if taylor_margin_sign_exact(spec, float(x[i])) < 0:
            return VerificationOutcome(
                status=VerificationStatus.FALSIFIED,
                margin=float(margin[i]),
                witness=float(x[i]),
                detail=f"series-encoded condition violated at x={x[i]!r} (rationally confirmed)",
            )

    if not np.all(sane):
        bad = int(np.flatnonzero(~sane)[0])
        return VerificationOutcome(
            status=VerificationStatus.INCONCLUSIVE,
            detail=(
                f"truncated series is unreliable near x={x[bad]!r} "
                f"(negative or non-finite partial sum); cannot certify"
            ),
        )
    best = int(np.argmin(margin))
    if taylor_margin_sign_exact(spec, float(x[best])) < 0:
        return VerificationOutcome(
            status=VerificationStatus.INCONCLUSIVE,
            detail=(
                f"float evaluation and rational evaluation disagree at x={x[best]!r}; "
                f"cannot certify"
            ),
        )
    return VerificationOutcome(
        status=VerificationStatus.SATISFIED,
        margin=float(margin[best]),
        detail=f"minimum series margin {margin[best]!r} over the stated window",
    )


def dp_condition_check(
    spec: DpConditionSpec, mode: str = "exact", grid_points: int = DEFAULT_GRID_POINTS
) -> VerificationOutcome:
    """Decide the DP condition over the spec's window.

    `exact` additionally inspects the tail where the density ratio grows, so
    its verdict holds for all real x, not just the window.
    """
    if grid_points < 10_000:
        raise ValueError(f"grid_points must be >= 10000, got {grid_points}")
    if mode == "exact":
        return _check_exact(spec, grid_points)
    if mode == "taylor":
        return _check_taylor(spec, grid_points)
    raise ValueError(f"mode must be 'taylor' or 'exact', got {mode!r}")


@dataclass(frozen=True)
class ComposedVerification:
    composed: VerificationOutcome
    original: VerificationOutcome
    composed_budget: ComposedBudget
    sigma_composed: float
    sigma_original: float
    delta_w: float


def verify_composed(
    budget: PrivacyBudget,
    cfg: TrainingConfig,
    k: int,
    mode: str = "exact",
    taylor_terms: int = DEFAULT_TAYLOR_TERMS,
) -> ComposedVerification:
    """Check the condition for the k-fold composed budget and the original one.

    Both noise scales use the split calibration at their respective budgets.
    """
    composed = advanced_composition(budget, k)
    dw = sensitivity(cfg).delta_w
    sigma_composed = noise_scale(
        cfg, PrivacyBudget(epsilon=composed.eps_prime, delta=composed.delta_prime)
    ).sigma
    sigma_original = noise_scale(cfg, budget).sigma
    outcome_composed = dp_condition_check(
        DpConditionSpec(
            epsilon=composed.eps_prime,
            delta=composed.delta_prime,
            sigma=sigma_composed,
            delta_w=dw,
            taylor_terms=taylor_terms,
        ),
        mode=mode,
    )
    outcome_original = dp_condition_check(
        DpConditionSpec(
            epsilon=budget.epsilon,
            delta=budget.delta,
            sigma=sigma_original,
            delta_w=dw,
            taylor_terms=taylor_terms,
        ),
        mode=mode,
    )
    return ComposedVerification(
        composed=outcome_composed,
        original=outcome_original,
        composed_budget=composed,
        sigma_composed=sigma_composed,
        sigma_original=sigma_original,
        delta_w=dw,
    )


def _smt_rational(value: float) -> str:
    frac = Fraction(value)
    if frac.denominator == 1:
        body = str(abs(frac.numerator))
    else:
        body = f"(/ {abs(frac.numerator)} {frac.denominator})"
    return body if frac >= 0 else f"(- {body})"


def _smt_taylor_body(terms: int) -> str:
    parts = ["1", "u"]
    factorial = 1
    for i in range(2, terms):
        factorial *= i
        parts.append(f"(* (/ 1 {factorial}) (* {' '.join(['u'] * i)}))")
    return f"(+ {' '.join(parts)})"


def export_smtlib(spec: DpConditionSpec, taylor_terms: int = None) -> str:
    """Render the negated DP condition as a solver-agnostic SMT-LIB 2 script.

    All exponentials are the same truncated series the taylor checker uses;
    numeric constants are exact rationals of their double-precision values.
    An `unsat` answer certifies the condition for x - w within the window.
    """
    terms = spec.taylor_terms if taylor_terms is None else taylor_terms
    if terms < 2:
        raise ValueError(f"taylor_terms must be >= 2, got {terms}")
    lo, hi = spec.x_domain
    lines = [
        "; Gaussian-mechanism pointwise DP condition, asserted in negated form.",
        "; `unsat` certifies pdf_w(x) <= texp(eps) * pdf_wp(x) + delta",
        f"; for x - w in [{lo!r}, {hi!r}], with {terms}-term series exponentials.",
        "(set-logic QF_NRA)",
        f"(define-fun delta_w () Real {_smt_rational(spec.delta_w)})",
        f"(define-fun sigma () Real {_smt_rational(spec.sigma)})",
        f"(define-fun eps () Real {_smt_rational(spec.epsilon)})",
        f"(define-fun delta () Real {_smt_rational(spec.delta)})",
        f"(define-fun two_pi () Real {_smt_rational(2.0 * math.pi)})",
        "(declare-const w Real)",
        "(declare-const wp Real)",
        "(declare-const noisy_w Real)",
        "(declare-const x Real)",
        "; z stands for sqrt(two_pi * sigma^2), the shared pdf normalizer",
        "(declare-const z Real)",
        "(assert (> z 0))",
        "(assert (= (* z z) (* two_pi (* sigma sigma))))",
        f"(define-fun texp ((u Real)) Real {_smt_taylor_body(terms)})",
        "(define-fun pdf_w () Real"
        " (* (/ 1 z) (texp (/ (- 0 (* (- x w) (- x w))) (* 2 (* sigma sigma))))))",
        "(define-fun pdf_wp () Real"
        " (* (/ 1 z) (texp (/ (- 0 (* (- x wp) (- x wp))) (* 2 (* sigma sigma))))))",
        "(assert (= wp (+ w delta_w)))",
        "(assert (= x noisy_w))",
        f"(assert (>= (- x w) {_smt_rational(lo)}))",
        f"(assert (<= (- x w) {_smt_rational(hi)}))",
        "(assert (not (<= pdf_w (+ (* (texp eps) pdf_wp) delta))))",
        "(check-sat)",
    ]
    return "\n".join(lines) + "\n"
