"""Hyperspectral attribute modelling and RGB-to-spectrum reconstruction at desk scale."""

from .chemometrics import PLSRegression, SpectraTable, fit_plsr, random_split, select_lv_loocv
from .explain import LinearShapExplainer, linear_shap, mean_abs_shap
from .ga import GaConfig, GeneticBandSelector, run_ga
from .hypercube import Hypercube, calibrate_reflectance, read_bil, render_rgb, write_bil
from .segmentation import RoiSpectra, band_difference_mask, mean_spectrum
from .training import SpectralReconstructor, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "GaConfig",
    "GeneticBandSelector",
    "Hypercube",
    "LinearShapExplainer",
    "PLSRegression",
    "RoiSpectra",
    "SpectraTable",
    "SpectralReconstructor",
    "TrainConfig",
    "band_difference_mask",
    "calibrate_reflectance",
    "evaluate",
    "fit_plsr",
    "linear_shap",
    "mean_abs_shap",
    "mean_spectrum",
    "random_split",
    "read_bil",
    "render_rgb",
    "run_ga",
    "select_lv_loocv",
    "train",
    "write_bil",
]
