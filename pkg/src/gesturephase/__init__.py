"""Gesture phase detection from skeleton keypoint streams.

Sliding 18-frame windows over pose sequences are embedded by graph
convolutions over the skeleton, contextualized by a Transformer
encoder and decoded into phases (preparation, stroke, retraction,
neutral) by a linear-chain CRF. The package ships a deterministic
synthetic-corpus generator, subject-disjoint cross-validation and a
CLI covering the full pipeline.
"""

from .config import RunConfig, WindowSettings, config_from_dict, config_hash, load_run_config
from .crf import LinearChainCrf, brute_force_reference, crf_nll, log_partition, viterbi
from .errors import (
    AnnotationError,
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    GesturePhaseError,
    GradientCheckError,
    GraphError,
    NumericalError,
)
from .estimator import GesturePhaseLabeler
from .graph import SkeletonGraph, default_graph, load_graph
from .metrics import ClassMetrics, aggregate_folds, evaluate_labels, merge_to_units
from .model import GestureModel, ModelConfig, ModelVariant, all_variants, load_model, save_model
from .pipeline import FoldPlan, TrainConfig, make_folds, predict_sequences, train
from .pose import (
    JointSelection,
    SkeletonSequence,
    StrokeAnnotation,
    default_selection,
    normalize_coords,
    parse_pose_file,
    read_annotations,
    write_annotations,
    write_pose_file,
)
from .synth import SynthConfig, generate, write_corpus
from .windows import (
    BinaryLabel,
    Phase,
    TimeWindow,
    WindowSequence,
    group_into_sequences,
    label_window,
    label_windows,
    slide_windows,
    window_count,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "BinaryLabel",
    "CheckpointError",
    "ClassMetrics",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "FoldPlan",
    "GestureModel",
    "GesturePhaseError",
    "GesturePhaseLabeler",
    "GradientCheckError",
    "GraphError",
    "JointSelection",
    "LinearChainCrf",
    "ModelConfig",
    "ModelVariant",
    "NumericalError",
    "Phase",
    "RunConfig",
    "SkeletonGraph",
    "SkeletonSequence",
    "StrokeAnnotation",
    "SynthConfig",
    "TimeWindow",
    "TrainConfig",
    "WindowSequence",
    "WindowSettings",
    "aggregate_folds",
    "all_variants",
    "brute_force_reference",
    "config_from_dict",
    "config_hash",
    "crf_nll",
    "default_graph",
    "default_selection",
    "evaluate_labels",
    "generate",
    "group_into_sequences",
    "label_window",
    "label_windows",
    "load_graph",
    "load_model",
    "load_run_config",
    "log_partition",
    "make_folds",
    "merge_to_units",
    "normalize_coords",
    "parse_pose_file",
    "predict_sequences",
    "read_annotations",
    "save_model",
    "slide_windows",
    "train",
    "viterbi",
    "window_count",
    "write_annotations",
    "write_corpus",
    "write_pose_file",
]
