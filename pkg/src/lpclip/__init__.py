"""Encoder-agnostic distillation of a zero-shot teacher into a linear probe,
plus calibration, corruption and OOD evaluation tooling."""

from .metrics import accuracy, aupr, auroc, calibration_report, fpr_at_95_tpr, pca_project
from .probe import (
    ProbeParams,
    TrainConfig,
    consistency_loss,
    cosine_lr,
    init_probe,
    predict_probe,
    train_probe,
)
from .tensorio import Manifest, read_store, validate_view_group, write_store
from .zeroshot import (
    ClassAnchors,
    PromptBank,
    compute_logits,
    ensemble_class_embeddings,
    select_best_prompt,
    teacher_predict,
)

__version__ = "0.1.0"

__all__ = [
    "ClassAnchors",
    "Manifest",
    "ProbeParams",
    "PromptBank",
    "TrainConfig",
    "accuracy",
    "aupr",
    "auroc",
    "calibration_report",
    "compute_logits",
    "consistency_loss",
    "cosine_lr",
    "ensemble_class_embeddings",
    "fpr_at_95_tpr",
    "init_probe",
    "pca_project",
    "predict_probe",
    "read_store",
    "select_best_prompt",
    "teacher_predict",
    "train_probe",
    "validate_view_group",
    "write_store",
]
