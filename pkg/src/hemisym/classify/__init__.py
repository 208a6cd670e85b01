"""From-scratch classifiers and their majority-vote ensemble."""
from .data import ASYMMETRIC, SYMMETRIC, Dataset, logistic
from .ensemble import (EnsembleConfig, Prediction, TrainedEnsemble, majority, predict,
                       train_ensemble, train_on_dataset)
from .gbc import GBCConfig, GBCModel, train_gbc
from .mlp import MLPConfig, MLPModel, train_mlp
from .svm import SVMConfig, SVMModel, rbf_kernel, train_svm

__all__ = [
    "ASYMMETRIC", "SYMMETRIC", "Dataset", "logistic",
    "EnsembleConfig", "Prediction", "TrainedEnsemble", "majority", "predict",
    "train_ensemble", "train_on_dataset",
    "GBCConfig", "GBCModel", "train_gbc",
    "MLPConfig", "MLPModel", "train_mlp",
    "SVMConfig", "SVMModel", "rbf_kernel", "train_svm",
]
