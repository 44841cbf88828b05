"""Closed-form reference victim for oracle-grade testing.

Multinomial logistic regression over block-averaged grayscale features: the
image is converted to grayscale, average-pooled to a small feature grid,
scaled to [0, 1], and scored by per-class linear maps. Every quantity,
including the input-pixel gradient, has an exact closed form, which makes
this the victim of choice for finite-difference checks and attack-behavior
tests that need no external model.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ParameterError
from .base import ClassVocabulary, VictimModel, check_image

DEFAULT_FEATURE_SIDE = 32


class ReferenceClassifier(VictimModel):
    """Deterministic linear-softmax victim with exact gradients."""

    def __init__(self, vocabulary: ClassVocabulary, weights: np.ndarray,
                 bias: np.ndarray | None = None, input_side: int = 224,
                 feature_side: int = DEFAULT_FEATURE_SIDE):
        if input_side % feature_side != 0:
            raise ParameterError(
                f"input side {input_side} must be a multiple of the "
                f"feature side {feature_side}"
            )
        feature_count = feature_side * feature_side
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(vocabulary), feature_count):
            raise ParameterError(
                f"weights must have shape {(len(vocabulary), feature_count)}, "
                f"got {weights.shape}"
            )
        if bias is None:
            bias = np.zeros(len(vocabulary))
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (len(vocabulary),):
            raise ParameterError(f"bias must have shape ({len(vocabulary)},)")

        self.vocabulary = vocabulary
        self.input_side = int(input_side)
        self.feature_side = int(feature_side)
        self.block = input_side // feature_side
        self.weights = weights
        self.bias = bias

    @classmethod
    def seeded(cls, vocabulary: ClassVocabulary, seed: int = 0,
               input_side: int = 224, feature_side: int = DEFAULT_FEATURE_SIDE,
               scale: float = 1.0) -> "ReferenceClassifier":
        """Random weights drawn from a seeded generator (unit logit scale)."""
        feature_count = feature_side * feature_side
        rng = np.random.default_rng(seed)
        weights = rng.normal(0.0, scale / np.sqrt(feature_count),
                             size=(len(vocabulary), feature_count))
        return cls(vocabulary, weights, input_side=input_side, feature_side=feature_side)

    @classmethod
    def from_prototypes(cls, vocabulary: ClassVocabulary, prototypes: np.ndarray,
                        scale: float, input_side: int = 224,
                        feature_side: int = DEFAULT_FEATURE_SIDE) -> "ReferenceClassifier":
        """Victim whose classes are centered on given feature prototypes.

        ``prototypes`` has one row per class in [0, 1] feature space; weights
        are the centered prototypes times ``scale``, so an image whose
        features sit on prototype c gets the largest logit for class c.
        """
        prototypes = np.asarray(prototypes, dtype=np.float64)
        centered = prototypes - prototypes.mean(axis=0, keepdims=True)
        return cls(vocabulary, scale * centered, input_side=input_side,
                   feature_side=feature_side)

    def save(self, path: Path | str) -> None:
        """Persist weights so a demo victim can be rebuilt exactly."""
        np.savez(
            Path(path),
            weights=self.weights,
            bias=self.bias,
            input_side=self.input_side,
            feature_side=self.feature_side,
            labels=np.array(self.vocabulary.labels),
        )

    @classmethod
    def load(cls, vocabulary: ClassVocabulary, path: Path | str) -> "ReferenceClassifier":
        data = np.load(Path(path), allow_pickle=False)
        stored = tuple(str(x) for x in data["labels"])
        if stored != vocabulary.labels:
            raise ParameterError(
                "stored weights were fit to a different label order; "
                f"expected {vocabulary.labels}, file has {stored}"
            )
        return cls(vocabulary, data["weights"], bias=data["bias"],
                   input_side=int(data["input_side"]),
                   feature_side=int(data["feature_side"]))

    def features(self, image: np.ndarray) -> np.ndarray:
        """Block-averaged grayscale features in [0, 1], flattened."""
        arr = check_image(image, self.input_side)
        gray = arr.mean(axis=2)
        g, b = self.feature_side, self.block
        pooled = gray.reshape(g, b, g, b).mean(axis=(1, 3))
        return pooled.reshape(-1) / 255.0

    def _logits(self, image: np.ndarray) -> np.ndarray:
        return self.weights @ self.features(image) + self.bias

    def predict(self, image: np.ndarray) -> np.ndarray:
        logits = self._logits(image)
        shifted = logits - logits.max()
        expd = np.exp(shifted)
        return expd / expd.sum()

    def loss_and_gradient(self, image: np.ndarray, label_id: int) -> tuple[float, np.ndarray]:
        label_id = self.check_label(label_id)
        logits = self._logits(image)
        shifted = logits - logits.max()
        expd = np.exp(shifted)
        total = expd.sum()
        probs = expd / total
        # -log softmax, computed in log space so extreme logits stay finite
        loss = float(np.log(total) - shifted[label_id])

        delta = probs.copy()
        delta[label_id] -= 1.0
        feature_grad = self.weights.T @ delta

        g, b = self.feature_side, self.block
        per_pixel = feature_grad.reshape(g, g) / (b * b * 3.0 * 255.0)
        plane = np.repeat(np.repeat(per_pixel, b, axis=0), b, axis=1)
        grad = np.broadcast_to(plane[:, :, None],
                               (self.input_side, self.input_side, 3)).copy()
        return loss, grad
