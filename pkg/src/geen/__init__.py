"""Latent variable extraction from noisy measurement panels.

A generator network maps k noisy measurements of a hidden variable to one
latent value per observation row. Training minimizes a kernel-density
plug-in estimate of the Kullback-Leibler divergence between the full joint
density of (measurements, generated latent) and its conditionally
independent factorization, plus a penalty anchoring the latent mean to the
first measurement. Ground truth, when present in simulated data, is used
for final testing only.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    ObservationBatch,
    ObservationSet,
    SchemaError,
    bootstrap_observations,
    load_dataset,
    save_dataset,
)
from .density import (
    BandwidthSpec,
    DegenerateScaleError,
    KdeContext,
    context_bandwidths,
    gaussian_kernel,
    log_kde_full_joint,
    log_kde_marginal,
    log_kde_pair,
    silverman_bandwidth,
)
from .scoring import (
    DiagnosticCurve,
    EvalReport,
    RunSummary,
    UndefinedCorrelationError,
    deviation_diagnostic,
    evaluate,
    pearson,
    summarize,
)
from .loss import (
    LossBreakdown,
    kl_hat,
    loss_grad_latents,
    normalization_penalty,
    total_loss,
    total_loss_and_grad,
)
from .network import (
    MlpParams,
    OptState,
    ParamGrads,
    backward,
    forward,
    init_mlp,
    init_opt_state,
    load_model,
    opt_step,
    save_model,
)
from .simulate import (
    EXPERIMENT_NAMES,
    ExperimentSpec,
    SplitSizes,
    error_draw,
    generate,
    get_experiment,
    latent_draw,
    measurement,
)
from .training import (
    EarlyStopper,
    GridSpec,
    TrainConfig,
    TrainHistory,
    TrainingCollapseError,
    multi_run,
    multi_run_experiment,
    train,
    tune,
)

__all__ = [name for name in dir() if not name.startswith("_")]
