"""Training restricted Boltzmann machines on samples from a miscalibrated sampler."""

from .calibration import (
    BetaSet,
    BetaTrace,
    TermAverages,
    beta_gradient,
    compensate,
    estimate_beta_step,
    model_term_averages,
    sample_term_averages,
)
from .evaluation import EmpiricalDistribution, EnergyHistogram, energy_histograms, kl_joint, kl_visible
from .rbm import (
    Configuration,
    EnumerationError,
    ExactDistribution,
    RbmParams,
    conditional_hidden,
    conditional_visible,
    energy,
    exact_distribution,
    marginal_visible_log_prob,
    model_expectations,
    scaled_params,
)
from .samplers import (
    NoiseModel,
    NoiseSpec,
    SampleSet,
    block_gibbs_step,
    cd_negative_phase,
    exact_sample,
    gibbs_sample,
    make_noise_model,
    marginal_sample,
    noisy_annealer_sample,
)
from .training import TrainConfig, TrainRecord, TrainResult, rbm_gradient, train

__version__ = "0.1.0"
