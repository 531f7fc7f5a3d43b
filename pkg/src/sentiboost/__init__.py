"""Visual sentiment classification from deep CNN features.

Pipeline: decode and preprocess images, run a modified ResNet50 forward pass
to tap 2048-wide deep features at the global average pool, train a
second-order multiclass gradient-boosting classifier on those features, and
evaluate with stratified k-fold cross-validation, per-class scores, confusion
matrices, and one-vs-rest ROC/AUC.
"""

from .gbm import (
    GBMConfig,
    GBMModel,
    fit,
    load_model,
    predict_class,
    predict_margin,
    predict_proba,
    save_model,
)
from .ingest import (
    FeatureCache,
    PreprocessConfig,
    dataset_stats,
    load_manifest,
    parse_manifest,
    preprocess_image,
    read_feature_cache,
    write_feature_cache,
)
from .metrics import (
    accuracy,
    auc_ovr,
    confusion,
    cross_validate,
    evaluate,
    precision_recall_f1,
    roc_curve_ovr,
    stratified_kfold,
)
from .resnet50 import (
    FEATURE_DIM,
    NetworkConfig,
    SentimentLabel,
    build_model,
    load_weights,
    load_weights_file,
    synthetic_weight_store,
    validate_architecture,
    write_weight_store,
)

__version__ = "0.1.0"
