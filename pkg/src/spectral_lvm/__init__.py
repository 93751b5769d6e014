"""Spectrally regularised linear latent variable models for single-channel signals."""

from .errors import (
    ComponentFitError,
    DegenerateResidualError,
    ObjectiveEvaluationError,
    PipelineError,
    SchemaError,
    SchemaVersionError,
    SignalError,
    SingularSystemError,
)
from .model import FittedModel, fit
from .objectives import (
    ExplicitObjective,
    NegentropyConfig,
    NegentropyObjective,
    Objective,
    PCAObjective,
    negentropy_objective,
    pca_objective,
)
from .optimiser import OptimConfig, fit_all, fit_component
from .signal_io import DataMatrix, HankelConfig, Signal, center, diagonal_average, hankelise, load_signal, whiten
from .spectral import SpectralState, penalty, power_spectrum, spectral_overlap

__version__ = "0.1.0"

__all__ = [
    "ComponentFitError",
    "DegenerateResidualError",
    "ObjectiveEvaluationError",
    "PipelineError",
    "SchemaError",
    "SchemaVersionError",
    "SignalError",
    "SingularSystemError",
    "FittedModel",
    "fit",
    "ExplicitObjective",
    "NegentropyConfig",
    "NegentropyObjective",
    "Objective",
    "PCAObjective",
    "negentropy_objective",
    "pca_objective",
    "OptimConfig",
    "fit_all",
    "fit_component",
    "DataMatrix",
    "HankelConfig",
    "Signal",
    "center",
    "diagonal_average",
    "hankelise",
    "load_signal",
    "whiten",
    "SpectralState",
    "penalty",
    "power_spectrum",
    "spectral_overlap",
]
