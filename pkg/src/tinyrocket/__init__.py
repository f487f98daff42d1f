"""MiniRocket time-series classification with an overflow-free integer inference path."""

from .bundle import ModelBundle, load_bundle, save_bundle
from .kernels import KernelSet, build_kernels, fit, plan_dilations, transform
from .quantize import Calibration, QuantizedModel, calibrate, predict_q, quantize_model, transform_q
from .ridge import LinearClassifier, predict_float, train_ridge

__version__ = "0.1.0"
