"""Masked discrete diffusion sampling with remasking, checked against exact oracles."""

from .analysis import (
    MetricSet,
    NelboResult,
    VerificationReport,
    compute_metrics,
    exact_sample_distribution,
    mdlm_nelbo,
    nelbo,
    run_verification_suite,
    verify_corrector_equivalences,
    verify_marginals,
)
from .denoiser import (
    ExactBayesDenoiser,
    JointDistribution,
    apply_temperature,
    exact_bayes_denoiser,
    figure1_toy,
    load_joint,
    nucleus_filter,
    random_joint,
)
from .exceptions import (
    DegenerateTimeError,
    InconsistentEvidenceError,
    InvalidParameterError,
    JointFormatError,
    OutOfSimplexError,
    RemdmError,
)
from .kernels import MASK
from .sampler import SamplerConfig, SamplerState, confidence_weights, run_sampler, sample_step
from .schedules import (
    LOG_LINEAR,
    GateSpec,
    NoiseSchedule,
    RemaskPolicy,
    alpha_at,
    ddim_sigma,
    gate_active,
    make_time_grid,
    remap_loop_time,
    sigma_for_step,
    sigma_max,
)

__version__ = "0.1.0"
