"""Lipschitz-constrained empirical risk minimization and the capacity schedule."""

from .envelope import LipschitzFn, empirical_lipschitz, mcshane_eval, mcshane_fit, random_lipschitz_fn
from .io import load_predictor, save_predictor
from .mlp import SpectralMLP, init_mlp, mlp_fit, mlp_loss_and_grad, model_lipschitz_bound
from .schedule import Schedule, schedule_L
from .spectral import power_iteration, project_spectral, spectral_norm, spectral_norm_upper

__all__ = [
    "LipschitzFn",
    "Schedule",
    "SpectralMLP",
    "empirical_lipschitz",
    "init_mlp",
    "load_predictor",
    "mcshane_eval",
    "mcshane_fit",
    "mlp_fit",
    "mlp_loss_and_grad",
    "model_lipschitz_bound",
    "power_iteration",
    "project_spectral",
    "random_lipschitz_fn",
    "save_predictor",
    "schedule_L",
    "spectral_norm",
    "spectral_norm_upper",
]
