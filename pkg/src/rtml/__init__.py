"""Reverse-thinking meta-classification (RTML) for binary problems."""

from .algorithm import (
    ConfigError,
    ModelFormatError,
    RtmlConfig,
    RtmlModel,
    rtml_load,
    rtml_predict,
    rtml_predict_batch,
    rtml_save,
    rtml_train,
)
from .data import Dataset, DataError, ParseError, generate_two_spirals, load_dataset, parse_libsvm, stratified_kfold
from .model import ClassifierSpec, TrainError, fit
from .reverse import cv_confusion_matrix, reverse_decide, reverse_posteriors, theorem1_ratio
from .simplicity import build_committee, partition_by_threshold, simplicity_scores

__version__ = "0.1.0"
