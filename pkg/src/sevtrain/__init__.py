"""Model-agnostic self-training for depression severity classification.

The pipeline trains a teacher on labeled posts, pseudo-labels a large
unlabeled pool by keeping the top-k most confident predictions per class,
trains a student from scratch on the pseudo-labels, and finetunes the
student on the original labeled data. Any classifier that speaks the
line-delimited JSON wire protocol (see sevtrain.wire) can slot in as the
model; a fast hashed n-gram linear classifier ships as the native default.
"""

from .classifier import (
    LinearModel,
    Optimizer,
    TrainConfig,
    dataset_loss,
    fit,
    load_model,
    predict_labels,
    predict_logits,
    save_model,
)
from .config import (
    EXTERNAL_TRAIN_DEFAULTS,
    KNOWN_KEYS,
    NATIVE_TRAIN_DEFAULTS,
    RunConfig,
)
from .corpus import (
    LABELS,
    URL_PLACEHOLDER,
    CleaningReport,
    Dataset,
    DatasetKind,
    Post,
    SeverityLabel,
    clean_dataset,
    clean_text,
    dedup,
    drop_cross_split,
    load_dataset,
    prepare,
    save_dataset,
)
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    SevTrainError,
    TrainingError,
)
from .features import DEFAULT_DIM, FeatureConfig, FeatureVector, featurize
from .metrics import (
    ClassScores,
    ConfusionMatrix,
    EvalReport,
    MultiRunReport,
    confusion,
    evaluate,
    evaluate_runs,
    macro_f1,
    per_class_scores,
)
from .report import DistributionReport, distribution, render_figure_data
from .selftrain import (
    PseudoLabeledSample,
    RankingScore,
    SelectionConfig,
    SelfTrainRun,
    build_pseudo_dataset,
    derive_seed,
    load_manifest,
    load_pseudo_samples,
    run_self_training,
    save_pseudo_samples,
    select_top_k,
)
from .synth import SynthConfig, SynthCorpus, make_corpus, separable_corpus
from .wire import ExternalSession, NativeSession, open_session, parse_backend

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ClassScores",
    "CleaningReport",
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "Dataset",
    "DatasetKind",
    "DEFAULT_DIM",
    "DistributionReport",
    "EvalReport",
    "EXTERNAL_TRAIN_DEFAULTS",
    "ExternalSession",
    "FeatureConfig",
    "FeatureVector",
    "KNOWN_KEYS",
    "LABELS",
    "LinearModel",
    "MultiRunReport",
    "NATIVE_TRAIN_DEFAULTS",
    "NativeSession",
    "Optimizer",
    "Post",
    "PseudoLabeledSample",
    "RankingScore",
    "RunConfig",
    "SelectionConfig",
    "SelfTrainRun",
    "SeverityLabel",
    "SevTrainError",
    "SynthConfig",
    "SynthCorpus",
    "TrainConfig",
    "TrainingError",
    "URL_PLACEHOLDER",
    "build_pseudo_dataset",
    "clean_dataset",
    "clean_text",
    "confusion",
    "dataset_loss",
    "dedup",
    "derive_seed",
    "distribution",
    "drop_cross_split",
    "evaluate",
    "evaluate_runs",
    "featurize",
    "fit",
    "load_dataset",
    "load_manifest",
    "load_model",
    "load_pseudo_samples",
    "macro_f1",
    "make_corpus",
    "open_session",
    "parse_backend",
    "per_class_scores",
    "predict_labels",
    "predict_logits",
    "prepare",
    "render_figure_data",
    "run_self_training",
    "save_dataset",
    "save_model",
    "save_pseudo_samples",
    "select_top_k",
    "separable_corpus",
]
