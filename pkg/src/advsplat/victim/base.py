"""Victim classifier contract: vocabulary, prediction, loss, input gradients.

A victim scores an RGB image against an ordered label vocabulary and exposes
the gradient of the cross-entropy loss with respect to the input pixels,
expressed in the 8-bit pixel domain [0, 255]. Adapters fold any internal
normalization into the returned gradient.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParameterError

DEFAULT_PROMPT_TEMPLATE = "a photo of a {}"

# The eight benchmark object classes, in report order.
BENCHMARK_CLASSES = (
    "apple", "cake", "couch", "hairdryer",
    "hydrant", "motorcycle", "mouse", "suitcase",
)

# CO3D category names used as zero-shot distractor labels. With only the
# eight benchmark labels a top-5 metric saturates, so real evaluations need
# a wider candidate set.
CO3D_CATEGORIES = (
    "apple", "backpack", "ball", "banana", "baseball bat", "baseball glove",
    "bench", "bicycle", "book", "bottle", "bowl", "broccoli", "cake", "car",
    "carrot", "cellphone", "chair", "couch", "cup", "donut", "frisbee",
    "hairdryer", "handbag", "hotdog", "hydrant", "keyboard", "kite", "laptop",
    "microwave", "motorcycle", "mouse", "orange", "parking meter", "pizza",
    "plant", "remote", "sandwich", "skateboard", "stop sign", "suitcase",
    "teddy bear", "toaster", "toilet", "toy bus", "toy plane", "toy train",
    "toy truck", "tv", "umbrella", "vase", "wine glass",
)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered candidate label set; the index of a label is its class id."""

    labels: tuple[str, ...]
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self):
        if not self.labels:
            raise ParameterError("vocabulary needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ParameterError("vocabulary labels must be unique")
        if "{}" not in self.prompt_template:
            raise ParameterError(
                f"prompt template {self.prompt_template!r} has no {{}} placeholder"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def label_id(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ParameterError(f"label {label!r} is not in the vocabulary") from None

    def prompts(self) -> list[str]:
        return [self.prompt_template.format(label) for label in self.labels]

    def to_json(self, path: Path | str) -> None:
        payload = {"labels": list(self.labels), "prompt_template": self.prompt_template}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: Path | str) -> "ClassVocabulary":
        payload = json.loads(Path(path).read_text())
        return cls(labels=tuple(payload["labels"]),
                   prompt_template=payload.get("prompt_template", DEFAULT_PROMPT_TEMPLATE))


def default_vocabulary(prompt_template: str = DEFAULT_PROMPT_TEMPLATE) -> ClassVocabulary:
    """Benchmark classes first, then the remaining CO3D categories."""
    distractors = tuple(c for c in CO3D_CATEGORIES if c not in BENCHMARK_CLASSES)
    return ClassVocabulary(labels=BENCHMARK_CLASSES + distractors,
                           prompt_template=prompt_template)


def check_image(image: np.ndarray, side: int) -> np.ndarray:
    """Validate a victim input and return it as float64.

    Accepts uint8 buffers or float buffers on the [0, 255] pixel scale.
    Float inputs may stray slightly outside the range (gradient probes do);
    shape and finiteness are enforced.
    """
    arr = np.asarray(image)
    if arr.shape != (side, side, 3):
        raise ContractError(
            f"victim expects a {side}x{side}x3 image, got shape {arr.shape}"
        )
    arr = arr.astype(np.float64, copy=False)
    if not np.isfinite(arr).all():
        raise ContractError("victim input contains non-finite values")
    return arr


class VictimModel(ABC):
    """Differentiable classifier under attack.

    Implementations must be deterministic in inference: repeated ``predict``
    calls on the same buffer return identical vectors. One instance serves
    one consumer at a time; concurrent attacks construct one instance per
    worker.
    """

    vocabulary: ClassVocabulary
    input_side: int = 224

    @abstractmethod
    def predict(self, image: np.ndarray) -> np.ndarray:
        """Softmax probabilities over the vocabulary order (sums to 1)."""

    @abstractmethod
    def loss_and_gradient(self, image: np.ndarray, label_id: int) -> tuple[float, np.ndarray]:
        """Cross-entropy loss against ``label_id`` and its pixel gradient.

        The gradient has the image's shape and lives in the 8-bit pixel
        domain: moving a pixel by one unit in [0, 255] changes the loss by
        approximately the returned component.
        """

    def predict_batch(self, images: list[np.ndarray]) -> np.ndarray:
        """Probabilities for several images; adapters may batch internally."""
        return np.stack([self.predict(image) for image in images])

    def check_label(self, label_id: int) -> int:
        if not 0 <= label_id < len(self.vocabulary):
            raise ParameterError(
                f"label id {label_id} outside vocabulary of size {len(self.vocabulary)}"
            )
        return int(label_id)


def topk(probs: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k (class id, probability) pairs, descending, ties to lower id."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ParameterError(f"probability vector must be 1-D, got shape {probs.shape}")
    if not 1 <= k <= probs.size:
        raise ParameterError(f"k must be in [1, {probs.size}], got {k}")
    order = np.argsort(-probs, kind="stable")[:k]
    return [(int(i), float(probs[i])) for i in order]
