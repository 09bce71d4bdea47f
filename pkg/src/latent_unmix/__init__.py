"""Identifiability checks and unmixing estimators for latent parsing models."""
from .model import Family, ModelFamily, ModelParams, random_params
from .observations import Moments, Observation, ObservationSpec

__version__ = "0.1.0"

__all__ = [
    "Family",
    "ModelFamily",
    "ModelParams",
    "Moments",
    "Observation",
    "ObservationSpec",
    "random_params",
    "__version__",
]
