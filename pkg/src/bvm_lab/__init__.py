"""Numerical laboratory for Gaussian posterior asymptotics of an inverse
medium problem: forward finite-difference solves, exact derivatives,
stability audits, posterior sampling and approximation diagnostics."""

from .forward import (
    Bounds,
    ForwardSolution,
    ForwardSystem,
    GridSpec,
    MediumField,
    ProblemData,
    assemble,
    eigenvalues_of_A,
    max_principle_check,
    solve,
)
from .jacobian import (
    JacobianMatrix,
    SpectralReport,
    jacobian,
    relative_asymmetry,
    sigma_growth_fit,
    spectral_report,
)
from .audit import AuditReport, audit_linearization, audit_stability
from .models import LinearForwardModel, PdeForwardModel
from .posterior import (
    GaussianApprox,
    PosteriorSpec,
    TruncatedNormalPrior,
    UniformPrior,
    ball_radius,
    expansion_gap,
    gaussian_approx,
    log_gaussian_surrogate,
    log_likelihood_ratio,
    log_posterior_unnorm,
    sample_ball,
    synthesize_data,
    synthesize_for_model,
)
from .samplers import ChainConfig, SampleSet, ess, run_independence, run_rwm
from .diagnostics import (
    ContractionResult,
    CoverageResult,
    TVEstimate,
    contraction_probe,
    credible_coverage,
    moment_gap,
    tail_mass_probe,
    tv_grid,
    tv_importance,
)
from .sweep import SweepPlan, SweepRecord, default_truth, delta_n, emit_report, run_sweep

__version__ = "0.1.0"
