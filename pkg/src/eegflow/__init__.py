"""EEG mental-workload pipeline: preprocessing, feature extraction,
feature selection and classifier benchmarking."""
from .core import ChannelLayout, DataError, Epoch, Recording, RunConfig, TrialMeta, load_recording, save_recording
from .evaluation import EvalReport, run_table4
from .features import DEFAULT_REGISTRY, FeatureConfig, FeatureExtractor, FeatureMatrix, extract_all, extract_matrix
from .learners import ClassifierSpec, default_specs
from .preprocess import EpochSet, bandpass, segment, suppress_artifacts
from .selection import MeanNormalizer, SelectionReport, fuse_selection, select_features
from .synth import SynthSpec, generate_dataset, generate_trial

__version__ = "0.1.0"

__all__ = [
    "ChannelLayout", "ClassifierSpec", "DEFAULT_REGISTRY", "DataError", "Epoch", "EpochSet",
    "EvalReport", "FeatureConfig", "FeatureExtractor", "FeatureMatrix", "MeanNormalizer",
    "Recording", "RunConfig", "SelectionReport", "SynthSpec", "TrialMeta", "bandpass",
    "default_specs", "extract_all", "extract_matrix", "fuse_selection", "generate_dataset",
    "generate_trial", "load_recording", "run_table4", "save_recording", "segment",
    "select_features", "suppress_artifacts",
]
