"""Articulatory control estimation and resynthesis for vowel sounds."""

from .dsp import AllPoleFilter, AudioBuffer, MelConfig, Spectrum
from .glottal import GlottalParams, LFShape
from .iaif import IaifResult, gfm_iaif
from .tract import AreaFunction, ReflectionModel, SimulationConfig, TractControls
from .transfer import FrequencyGrid, LossGradient, loss_gradient, spectral_loss
from .estimate import (
    EvolutionSettings,
    ExperimentReport,
    GdSettings,
    fit_controls_gd,
    fit_controls_ga,
    fit_controls_pso,
    run_indomain_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AllPoleFilter",
    "AreaFunction",
    "AudioBuffer",
    "EvolutionSettings",
    "ExperimentReport",
    "FrequencyGrid",
    "GdSettings",
    "GlottalParams",
    "IaifResult",
    "LFShape",
    "LossGradient",
    "MelConfig",
    "ReflectionModel",
    "SimulationConfig",
    "Spectrum",
    "TractControls",
    "fit_controls_gd",
    "fit_controls_ga",
    "fit_controls_pso",
    "gfm_iaif",
    "loss_gradient",
    "run_indomain_experiment",
    "spectral_loss",
    "__version__",
]
