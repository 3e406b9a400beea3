"""Differentiable logic networks: training, discretization and circuit compilation."""
from .data import (
    Column, FeatureMatrix, Preprocessor, SequenceDataset, balanced_accuracy, best_at_k,
    extract_basic_features, load_feature_csv, load_sequences, preprocess,
)
from .layers import LogicLayer, SteFlags, SumLayer, ThresholdLayer
from .logic_kernel import OPERATORS, hard_logic, op_cost, soft_logic
from .network import DlnModel, TrainConfig, build, hard_predict, load, save, soft_predict, train

__version__ = "0.1.0"
