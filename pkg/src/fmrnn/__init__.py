"""Feature-mapping recurrent forecaster for action anticipation.

A scalar-input LSTM, shared across every coordinate of a frame feature,
forecasts future frame features; a separately trained classifier labels the
observed and forecast frames and the per-frame predictions are pooled.
"""
__version__ = "0.1.0"

from .data import FeatureSequence, SynthSpec, load_dataset, save_dataset, synth_generate
from .engine import TrainConfig, train_classifier, train_forecaster
from .featmap import ForecasterModel, forecast_frame, generate_future, plan_segments
from .models import ClassifierModel, DiscriminatorModel, load_model, save_model
from .pipeline import AnticipationConfig, anticipate, evaluate

__all__ = [
    "AnticipationConfig", "ClassifierModel", "DiscriminatorModel", "FeatureSequence",
    "ForecasterModel", "SynthSpec", "TrainConfig", "anticipate", "evaluate", "forecast_frame",
    "generate_future", "load_dataset", "load_model", "plan_segments", "save_dataset",
    "save_model", "synth_generate", "train_classifier", "train_forecaster",
]
