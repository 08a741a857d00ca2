"""Conditional GANs with a gradient-norm penalty for mixed-type tabular data."""

from ._validation import TrainingError, ValidationError
from .artifact import ArtifactError, load_artifact, save_artifact
from .benchmarks import BENCHMARKS, make_benchmark
from .evaluation import EvalReport, evaluate, feature_reports, tstr
from .gan import GanConfig, PenaltyConfig, TabularGAN, generate, train
from .pipeline import Schema, TabularEncoder, fit_pipeline, infer_schema
from .table import RawTable, read_csv, write_csv
from .tsne import TSNE, TsneConfig, combined_embed, mixing_score, tsne_embed

__version__ = "0.1.0"

__all__ = [
    "ArtifactError", "BENCHMARKS", "EvalReport", "GanConfig", "PenaltyConfig", "RawTable",
    "Schema", "TSNE", "TabularEncoder", "TabularGAN", "TrainingError", "TsneConfig",
    "ValidationError", "combined_embed", "evaluate", "feature_reports", "fit_pipeline",
    "generate", "infer_schema", "load_artifact", "make_benchmark", "mixing_score",
    "read_csv", "save_artifact", "train", "tsne_embed", "tstr", "write_csv",
]
