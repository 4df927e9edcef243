"""Execution-unit timing fingerprints: simulation, classification, metric
learning, linking, evaluation, and ingestion.

Each submodule stands alone; this namespace re-exports the names a pipeline
script reaches for first. Anything deeper (loss internals, store scanning,
screen rules) is imported from its home module.
"""

from euprint.embedder import (
    NetworkSpec,
    TripletConfig,
    embed_batch,
    embed_record,
    knn_topk,
    load_weights,
    preset_spec,
    save_weights,
    train,
)
from euprint.evalbench import (
    base_rate_classical,
    base_rate_kshot,
    run_kshot,
    run_random_split,
    run_tracking,
)
from euprint.forest import ForestConfig, accuracy_gain, fit, kfold_accuracy
from euprint.ingest import TraceStore, export_corpus, serve
from euprint.linker import (
    LinkerConfig,
    Matcher,
    calibrate_epsilon,
    calibrate_lambda,
    default_rules,
    match,
    pair_training_set,
)
from euprint.synthdevice import (
    DeviceClassSpec,
    DeviceProfile,
    DispatchPolicy,
    TimerKind,
    TimerModel,
    generate_corpus,
    make_profiles,
    run_scenario,
    sample_trace,
)
from euprint.tracemodel import (
    CollectorConfig,
    FingerprintRecord,
    Method,
    Operator,
    Trace,
    parse_record,
    preprocess,
    serialize_record,
    validate_trace,
)

__version__ = "0.1.0"

__all__ = [
    "CollectorConfig",
    "DeviceClassSpec",
    "DeviceProfile",
    "DispatchPolicy",
    "FingerprintRecord",
    "ForestConfig",
    "LinkerConfig",
    "Matcher",
    "Method",
    "NetworkSpec",
    "Operator",
    "TimerKind",
    "TimerModel",
    "Trace",
    "TraceStore",
    "TripletConfig",
    "accuracy_gain",
    "base_rate_classical",
    "base_rate_kshot",
    "calibrate_epsilon",
    "calibrate_lambda",
    "default_rules",
    "embed_batch",
    "embed_record",
    "export_corpus",
    "fit",
    "generate_corpus",
    "kfold_accuracy",
    "knn_topk",
    "load_weights",
    "make_profiles",
    "match",
    "pair_training_set",
    "parse_record",
    "preprocess",
    "preset_spec",
    "run_kshot",
    "run_random_split",
    "run_scenario",
    "run_tracking",
    "sample_trace",
    "save_weights",
    "serialize_record",
    "serve",
    "train",
    "validate_trace",
]
