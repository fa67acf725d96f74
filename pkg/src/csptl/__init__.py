"""CSP filtering for two-class EEG epochs with transfer-learning enhancements.

The package covers the plain CSP + LDA pipeline, two covariance-fusion
transfer methods, a per-source model ensemble, kernel-mean-matching sample
reweighting, and an incremental-calibration benchmark with synthetic
multi-subject data.
"""

from .bench import (
    ALL_STRATEGIES,
    BenchConfig,
    ResultRecord,
    ResultTable,
    StrategyId,
    SummaryRow,
    emit_csv,
    read_results_csv,
    run_benchmark,
    run_strategy,
    summarize,
)
from .covariance_tl import (
    CHANCE_ACCURACY,
    SourceAffinity,
    cm1_affinities,
    cm1_combine,
    cm2_combine,
    cm2_lambda,
    cm2_select_subjects,
    kl_divergence_gaussian,
)
from .csp import (
    DEFAULT_FILTERS_PER_CLASS,
    CspFilterBank,
    apply_filters,
    compute_csp,
    feature_matrix,
    log_variance_features,
)
from .data import (
    Epoch,
    LabeledEpoch,
    SpatialCovariance,
    SubjectDataset,
    SubjectGroundTruth,
    SynthConfig,
    class_mean_covariance,
    epoch_covariance,
    generate_synthetic,
    generate_synthetic_with_truth,
    load_subject,
    save_subject,
)
from .errors import (
    AffinityError,
    ConditioningError,
    ConfigError,
    CsptlError,
    DegenerateEpochError,
    DegenerateFeatureError,
    DimensionError,
    EmptyClassError,
    FormatError,
    InsufficientDataError,
    LabelError,
    NumericalError,
    ZeroWeightError,
)
from .instance_tl import (
    InstanceWeights,
    KmmConfig,
    kmm_representation,
    kmm_weights,
    median_bandwidth,
    weighted_fused_training,
)
from .lda import LdaModel, lda_predict, lda_score, lda_train, loo_accuracy
from .model_tl import (
    EnsembleWeights,
    SourceModelBank,
    ensemble_predict,
    optimize_weights,
    prediction_matrix,
    train_source_models,
)

__version__ = "0.1.0"
