"""Dynamic-weight segmentation at desk scale: autodiff, model, data, harness."""

from .autodiff import Tensor, backward
from .config import RunConfig, parse_config, read_config, render_config
from .errors import ConfigError, DataError, DFNetError, TrainingDiverged, UsageError
from .harness import RunReport, evaluate, sweep_alpha, sweep_aux, sweep_rfb, train
from .metrics import ConfusionMatrix, MetricsReport, report
from .model import DFNet, ModelConfig, ModelOutput, build_model, forward, training_loss
from .rfb import RFB, RFBSpec, apply_rfb, boundary_effect, build_rfb
from .synthdata import SceneSpec, generate, split
from .weights import (
    ClassHistogram,
    WeightConfig,
    WeightVector,
    dynamic_weights,
    histogram,
    uniform_weights,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "RunConfig",
    "parse_config",
    "read_config",
    "render_config",
    "DFNetError",
    "ConfigError",
    "DataError",
    "UsageError",
    "TrainingDiverged",
    "RunReport",
    "train",
    "evaluate",
    "sweep_alpha",
    "sweep_rfb",
    "sweep_aux",
    "ConfusionMatrix",
    "MetricsReport",
    "report",
    "DFNet",
    "ModelConfig",
    "ModelOutput",
    "build_model",
    "forward",
    "training_loss",
    "RFB",
    "RFBSpec",
    "build_rfb",
    "apply_rfb",
    "boundary_effect",
    "SceneSpec",
    "generate",
    "split",
    "ClassHistogram",
    "WeightConfig",
    "WeightVector",
    "histogram",
    "dynamic_weights",
    "uniform_weights",
    "__version__",
]
