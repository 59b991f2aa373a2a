"""Post-hoc differential privacy for trained model weights.

Calibrates Gaussian noise against the training hyperparameters, applies it
to checkpoint tensors, and backs the guarantee three ways: closed-form
accounting (advanced composition and subsampled Renyi curves), Monte-Carlo
simulation of the privacy-loss distribution, and direct verification of the
pointwise DP condition with optional SMT-LIB export.  A membership-inference
evaluation harness measures the empirical effect.
"""

from .accounting import (
    AlphaOverflowError,
    ComposedBudget,
    CompositionOverflowError,
    RdpCurve,
    advanced_composition,
    calibrate_sigma_from_rdp,
    compose_over_epochs,
    full_pipeline_epsilon,
    gaussian_rdp_curve,
    rdp_epsilon,
    rdp_to_dp,
    sigma_total,
    subsampled_rdp,
)
from .calibration import (
    BudgetError,
    NoiseScale,
    PrivacyBudget,
    Sensitivity,
    TrainingConfig,
    Variant,
    check_budget,
    default_delta,
    empirical_term,
    max_supported_epsilon,
    noise_scale,
    sensitivity,
)
from .evaluation import (
    MiaMetrics,
    PairwiseReport,
    SchemaError,
    ScoreSet,
    batch_report,
    mia_evaluate,
    mia_threshold,
    pairwise_compare,
    wilcoxon_signed_rank,
)
from .mechanism import (
    ContainerFormatError,
    NoiseReceipt,
    WeightSet,
    apply_noise,
    load_weights,
    noise_then_account,
    save_weights,
)
from .simulate import (
    SimulationReport,
    analytic_violation_probability,
    privacy_loss,
    run_simulation,
    simulate_privacy_losses,
    sweep,
)
from .verify import (
    DpConditionSpec,
    VerificationOutcome,
    VerificationStatus,
    dp_condition_check,
    export_smtlib,
    taylor_exp,
    verify_composed,
)

__version__ = "0.1.0"
