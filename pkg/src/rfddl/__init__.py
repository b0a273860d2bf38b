"""Label-consistent dictionary learning with an atom graph and sparse error recovery.

Learns a class-labelled dictionary together with locality-embedded codes, a
linear classifier and column-sparse error terms for both samples and atoms,
then classifies new samples by ridge reconstruction or a learned linear code
extractor.
"""

from .bench import DenoiseReport, ExperimentReport, denoise_report, sweep
from .data import (LabeledDataset, SyntheticSpec, build_indicator_codes, build_label_matrix,
                   inject_noise, pca_reduce, split_per_class, synth_blobs)
from .errors import (DegenerateInputError, FormatError, InputError, NumericalError,
                     RfddlError)
from .graph import AtomGraph, build_atom_graph
from .inference import (CodeExtractor, Prediction, baseline_ridge, classify_e, classify_r,
                        learn_code_extractor, predict_ridge)
from .metrics import accuracy, confusion_matrix, rmse, snr_db
from .solver import Hyperparams, RfddlModel, TrainState, fit, objective, train

__version__ = "0.1.0"

__all__ = [
    "AtomGraph",
    "CodeExtractor",
    "DegenerateInputError",
    "DenoiseReport",
    "ExperimentReport",
    "FormatError",
    "Hyperparams",
    "InputError",
    "LabeledDataset",
    "NumericalError",
    "Prediction",
    "RfddlError",
    "RfddlModel",
    "SyntheticSpec",
    "TrainState",
    "accuracy",
    "baseline_ridge",
    "build_atom_graph",
    "build_indicator_codes",
    "build_label_matrix",
    "classify_e",
    "classify_r",
    "confusion_matrix",
    "denoise_report",
    "fit",
    "inject_noise",
    "learn_code_extractor",
    "objective",
    "pca_reduce",
    "predict_ridge",
    "rmse",
    "snr_db",
    "split_per_class",
    "sweep",
    "synth_blobs",
    "train",
]
