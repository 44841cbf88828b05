"""Mask-localized iterative sign-gradient attacks with a 3DGS file bridge.

The pipeline prepares multi-view capture frames, confines iterative
sign-gradient perturbations to segmentation masks against a pluggable
differentiable classifier, exports train/test image sets for an external
Gaussian-splatting trainer, re-ingests its renders, and reports
classification degradation (confidence, top-1, top-5) across conditions.
"""

__version__ = "0.1.0"

from .attack import AttackConfig, AttackResult, inverse_image, mifgsm_step, run_attack
from .errors import PipelineError
from .evaluation import (
    EvaluationReport,
    PredictionRecord,
    ReportRow,
    compare_conditions,
    emit_report,
    evaluate_set,
)
from .gsbridge import SplitAssignment, export_training_set, ingest_renders, make_split
from .ingest import DatasetManifest, ImageRecord, load_sequence, resize_to_input, subsample
from .segmentation import ObjectMask, acquire_mask, load_mask, mask_stats
from .victim import ClassVocabulary, ReferenceClassifier, VictimModel, default_vocabulary, topk

__all__ = [
    "AttackConfig",
    "AttackResult",
    "ClassVocabulary",
    "DatasetManifest",
    "EvaluationReport",
    "ImageRecord",
    "ObjectMask",
    "PipelineError",
    "PredictionRecord",
    "ReferenceClassifier",
    "ReportRow",
    "SplitAssignment",
    "VictimModel",
    "__version__",
    "acquire_mask",
    "compare_conditions",
    "default_vocabulary",
    "emit_report",
    "evaluate_set",
    "export_training_set",
    "ingest_renders",
    "inverse_image",
    "load_mask",
    "load_sequence",
    "make_split",
    "mask_stats",
    "mifgsm_step",
    "resize_to_input",
    "run_attack",
    "subsample",
    "topk",
]
