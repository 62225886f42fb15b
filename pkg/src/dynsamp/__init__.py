"""Bayesian adaptive sampling for Fourier-domain sensing.

Posterior ensembles are drawn with stochastic gradient Langevin dynamics and
the next k-space locations are those where the ensemble's projections vary
the most.
"""

from .adaptive import (
    AcquisitionState,
    ExhaustionError,
    SelectionPolicy,
    acquire,
    compute_variance_map,
    make_baseline_mask,
    run_adaptive_acquisition,
    select_next,
)
from .analytic_oracle import (
    GaussianProblem,
    greedy_oracle_selection,
    measurement_variance,
    posterior_moments,
)
from .forward_model import (
    CoilSensitivities,
    DimensionError,
    MeasurementSet,
    SamplingMask,
    SensingOperator,
    add_noise,
    apply_adjoint,
    apply_forward,
    make_coil_maps,
    make_operator,
    make_phantom,
    simulate_measurements,
)
from .harness import ExperimentConfig, ExperimentReport, psnr, reconstruct_final, run_experiment, run_pilot_transfer
from .priors import (
    EmpiricalScore,
    RoughnessScore,
    ScoreFunction,
    apply_T,
    eval_score,
    fit_empirical_score,
    score_roughness,
)
from .sgld import (
    PosteriorEnsemble,
    SamplerDivergence,
    SGLDConfig,
    make_schedule,
    run_chain,
    sample_posterior_ensemble,
    sgld_step,
)

__version__ = "0.1.0"
