"""Full-field temperature prediction from a handful of sensors.

Offline, full-sensing snapshots are split into spatial modes and temporal
coefficients, the modes are turned into cubic B-spline surfaces and a
recurrent model learns the coefficient dynamics.  Online, sparse readings
are lifted to full coefficients, stepped forward and expanded over the
surfaces into a continuous field.
"""

from .errors import (ConfigError, DegenerateDataError, DimensionError, DomainError,
                     InsufficientDataError, LayoutError, MissingFileError, NumericalError,
                     ParseError, PersistenceError, SchemaError, SparseFieldError, StageError,
                     TrainingError)
from .field import (Grid2D, SensorLayout, SnapshotMatrix, build_mapping_matrix, flatten_sbf,
                    reshape_sbf_column, sample_sensors)
from .separation import SbfBasis, TemporalCoefficients, reconstruct, select_order, separate
from .completion import CompletionOperator, build_completion, complete_snapshot, pinv
from .spline import SplineSurface, SplineSurfaceSet, build_continuous_sbfs, knot_vector
from .temporal import LstmModel, TrainConfig, fit_ar_baseline, gradient_check, predict_step, train
from .synthesis import (PipelineConfig, SpatioTemporalModel, fit_offline, predict_field, rmse,
                        snae, stae, stream)
from .simulator import HeatSimConfig, simulate
from .io import Dataset, load_dataset, load_model, save_dataset, save_model

__all__ = [
    "ConfigError", "DegenerateDataError", "DimensionError", "DomainError",
    "InsufficientDataError", "LayoutError", "MissingFileError", "NumericalError", "ParseError",
    "PersistenceError", "SchemaError", "SparseFieldError", "StageError", "TrainingError",
    "Grid2D", "SensorLayout", "SnapshotMatrix", "build_mapping_matrix", "flatten_sbf",
    "reshape_sbf_column", "sample_sensors",
    "SbfBasis", "TemporalCoefficients", "reconstruct", "select_order", "separate",
    "CompletionOperator", "build_completion", "complete_snapshot", "pinv",
    "SplineSurface", "SplineSurfaceSet", "build_continuous_sbfs", "knot_vector",
    "LstmModel", "TrainConfig", "fit_ar_baseline", "gradient_check", "predict_step", "train",
    "PipelineConfig", "SpatioTemporalModel", "fit_offline", "predict_field", "rmse", "snae",
    "stae", "stream",
    "HeatSimConfig", "simulate",
    "Dataset", "load_dataset", "load_model", "save_dataset", "save_model",
]

__version__ = "0.1.0"
