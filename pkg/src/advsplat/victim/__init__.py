"""Victim classifier contract, reference implementation, and CLIP adapter."""

from .base import (
    BENCHMARK_CLASSES,
    CO3D_CATEGORIES,
    ClassVocabulary,
    VictimModel,
    check_image,
    default_vocabulary,
    topk,
)
from .reference import ReferenceClassifier

__all__ = [
    "BENCHMARK_CLASSES",
    "CO3D_CATEGORIES",
    "ClassVocabulary",
    "ClipVictim",
    "ReferenceClassifier",
    "VictimModel",
    "check_image",
    "default_vocabulary",
    "topk",
]


def __getattr__(name):
    # ClipVictim pulls in torch/transformers; import it only on demand.
    if name == "ClipVictim":
        from .clip_adapter import ClipVictim
        return ClipVictim
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
