"""LEMDA: attack-aware encoding of the most informative feature for IDS models.

Submodules:
    dataset     typed tables, CSV I/O, fold plans
    forest      decision trees and random forests
    importance  MDI / MDA feature importance
    pca         Jacobi-based PCA baseline
    pipeline    WEDF scoring, SF recency feature, fitted LEMDA pipeline
    mlp         small perceptron baseline
    metrics     confusion-matrix metrics
    experiment  cross-validated method x model benchmarks
    synth       synthetic flow dataset generator
    cli         command-line entry point
"""

from .dataset import ColumnSchema, Dataset, FoldPlan, Kind, load_csv, read_schema, split_folds
from .errors import (ConfigurationError, LabelError, LemdaError, NumericError, ParseError,
                     SchemaError, TrainingError)
from .pipeline import (LemdaConfig, LemdaPipeline, SfConfig, WedfDictionary, apply_wedf,
                       build_wedf_dictionary, compute_sf_series, fit_pipeline, transform_pipeline)

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema", "Dataset", "FoldPlan", "Kind", "load_csv", "read_schema", "split_folds",
    "ConfigurationError", "LabelError", "LemdaError", "NumericError", "ParseError",
    "SchemaError", "TrainingError",
    "LemdaConfig", "LemdaPipeline", "SfConfig", "WedfDictionary", "apply_wedf",
    "build_wedf_dictionary", "compute_sf_series", "fit_pipeline", "transform_pipeline",
]
