"""Histogram gradient-boosted decision trees for binary classification."""
from .binning import BinMapper, fit_bins
from .booster import (
    GBDTConfig,
    GBDTModel,
    log_loss,
    logistic_grad_hess,
    predict_proba,
    predict_raw,
    train,
)
from .grower import Tree, grow_tree, predict_tree_binned
from .histogram import build_histogram, subtract_histogram
from .io import ModelFormatError, dumps_model, load_model, loads_model, save_model
from .splitting import SplitInfo, best_split, leaf_value

__all__ = [
    "BinMapper",
    "fit_bins",
    "GBDTConfig",
    "GBDTModel",
    "log_loss",
    "logistic_grad_hess",
    "predict_proba",
    "predict_raw",
    "train",
    "Tree",
    "grow_tree",
    "predict_tree_binned",
    "build_histogram",
    "subtract_histogram",
    "ModelFormatError",
    "dumps_model",
    "loads_model",
    "load_model",
    "save_model",
    "SplitInfo",
    "best_split",
    "leaf_value",
]
