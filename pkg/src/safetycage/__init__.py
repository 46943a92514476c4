"""Anomaly-score acceptance gates ("safety cages") for transit-spectrum regression.

Light curves are encoded into fixed-length samples, a ridge model predicts
transmission spectra, and isolation forests over PCA projections of the
inputs, targets or SHAP values score how far each sample lies from the
training data. Thresholds on those scores trade coverage against error.
"""
__version__ = "0.1.0"

from .dataset import (
    Dataset,
    DriftConfig,
    PlanetSystem,
    generate_synthetic_dataset,
    inject_drift,
    load_dataset,
    save_dataset,
)
from .encode import EncodingConfig, encode_dataset, flux_to_radius
from .explain import linear_shap, median_reduce, reduced_shap
from .harness import (
    SetupKind,
    group_kfold_split,
    run_cross_dataset,
    run_setup,
    spearman,
    tradeoff_curve,
)
from .iforest import IsolationForestModel, iforest_fit
from .linmodel import fit_standardizer, pca_fit, ridge_fit

__all__ = [
    "Dataset", "DriftConfig", "PlanetSystem", "generate_synthetic_dataset", "inject_drift",
    "load_dataset", "save_dataset", "EncodingConfig", "encode_dataset", "flux_to_radius",
    "linear_shap", "median_reduce", "reduced_shap", "SetupKind", "group_kfold_split",
    "run_cross_dataset", "run_setup", "spearman", "tradeoff_curve", "IsolationForestModel",
    "iforest_fit", "fit_standardizer", "pca_fit", "ridge_fit",
]
