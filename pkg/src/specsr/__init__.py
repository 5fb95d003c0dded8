"""Spectral super-resolution toolkit: a convolutional network mapping
broad-band images to hyperspectral cubes, its training recipe, evaluation
metrics, and an unmixing-based validation chain, on a from-scratch numeric
core."""

from .cube import HsiCube, SpectralResponse, cie1964_srf, load_cube, save_cube, simulate_input
from .metrics import MetricReport, compute_report, rmse_8bit, rmse_rel, sam_degrees
from .network import NetworkSpec, build_network, predict_tiled
from .optim import ParamStore, TrainConfig, grad_check
from .unmixing import AbundanceMaps, Endmembers, fcls_abundances, lmm_reconstruct, pca_project, vca_extract

__version__ = "0.1.0"

__all__ = [
    "HsiCube",
    "SpectralResponse",
    "cie1964_srf",
    "load_cube",
    "save_cube",
    "simulate_input",
    "MetricReport",
    "compute_report",
    "rmse_8bit",
    "rmse_rel",
    "sam_degrees",
    "NetworkSpec",
    "build_network",
    "predict_tiled",
    "ParamStore",
    "TrainConfig",
    "grad_check",
    "AbundanceMaps",
    "Endmembers",
    "fcls_abundances",
    "lmm_reconstruct",
    "pca_project",
    "vca_extract",
    "__version__",
]
