"""Synthetic capture sequences and matching victims for tests and demos.

Each synthetic class is a random binary block pattern rendered at two gray
levels. A reference victim built from the same patterns classifies clean
frames with near-certain confidence, which gives attack tests an honest,
fully offline population of confidently-correct instances, and gives the
CLI an end-to-end demo dataset that needs no external model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ingest import save_image
from .victim.base import ClassVocabulary
from .victim.reference import DEFAULT_FEATURE_SIDE, ReferenceClassifier

# Gray levels for pattern cells; both sit well inside [0, 255] so that the
# attack budget is never boxed in, and both clear a 0.3 brightness threshold
# so the stub segmentation provider sees the object as one region.
PATTERN_LOW = 77
PATTERN_HIGH = 179
BACKGROUND_GRAY = 30


def make_patterns(class_count: int, feature_side: int = DEFAULT_FEATURE_SIDE,
                  seed: int = 0) -> np.ndarray:
    """Random binary block patterns, one row of 0/1 cells per class."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(class_count, feature_side * feature_side),
                        dtype=np.int64)


def pattern_levels(pattern: np.ndarray, low: int = PATTERN_LOW,
                   high: int = PATTERN_HIGH) -> np.ndarray:
    """Per-cell gray levels for a pattern row."""
    return np.where(np.asarray(pattern) > 0, high, low).astype(np.float64)


def pattern_image(pattern: np.ndarray, side: int,
                  feature_side: int = DEFAULT_FEATURE_SIDE,
                  low: int = PATTERN_LOW, high: int = PATTERN_HIGH) -> np.ndarray:
    """Render a pattern as a full-frame uint8 image (cells as pixel blocks)."""
    block = side // feature_side
    cells = pattern_levels(pattern, low, high).reshape(feature_side, feature_side)
    plane = np.repeat(np.repeat(cells, block, axis=0), block, axis=1)
    return np.broadcast_to(plane[:, :, None], (side, side, 3)).astype(np.uint8)


def boxed_pattern_image(pattern: np.ndarray, side: int,
                        feature_side: int = DEFAULT_FEATURE_SIDE,
                        box_fraction: float = 0.6,
                        background: int = BACKGROUND_GRAY) -> np.ndarray:
    """Pattern confined to a centered square over a dark background.

    The bright object region is what a brightness-threshold provider will
    segment, so masked attacks in demos perturb only the box.
    """
    image = np.full((side, side, 3), background, dtype=np.uint8)
    full = pattern_image(pattern, side, feature_side)
    half = int(side * box_fraction) // 2
    center = side // 2
    lo, hi = center - half, center + half
    image[lo:hi, lo:hi] = full[lo:hi, lo:hi]
    return image


def noisy_frames(base: np.ndarray, count: int, seed: int,
                 noise: int = 6) -> list[np.ndarray]:
    """Independent frames: the base image plus clipped uniform pixel noise."""
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(count):
        jitter = rng.integers(-noise, noise + 1, size=base.shape)
        frames.append(np.clip(base.astype(np.int64) + jitter, 0, 255).astype(np.uint8))
    return frames


def make_victim(vocabulary: ClassVocabulary, prototype_images: list[np.ndarray],
                input_side: int, feature_side: int = DEFAULT_FEATURE_SIDE,
                target_margin: float = 25.0) -> ReferenceClassifier:
    """Reference victim that confidently recognizes the given prototypes.

    Weights are the centered feature vectors of the prototype images,
    rescaled so the smallest clean inter-class logit margin equals
    ``target_margin`` (so every clean frame starts near-certainly correct).
    """
    probe = ReferenceClassifier(
        vocabulary, np.zeros((len(vocabulary), feature_side * feature_side)),
        input_side=input_side, feature_side=feature_side,
    )
    protos = np.stack([probe.features(img) for img in prototype_images])
    centered = protos - protos.mean(axis=0, keepdims=True)

    margins = []
    for i in range(len(prototype_images)):
        logits = centered @ protos[i]
        rivals = np.delete(logits, i)
        margins.append(logits[i] - rivals.max())
    min_margin = min(margins)
    if min_margin <= 0:
        raise ValueError("prototype images are not linearly separable in feature space")
    scale = target_margin / min_margin
    return ReferenceClassifier(vocabulary, scale * centered,
                               input_side=input_side, feature_side=feature_side)


def write_demo_dataset(root: Path | str,
                       class_names: tuple[str, ...] = ("widget", "gadget", "gizmo"),
                       frames: int = 12, side: int = 96,
                       feature_side: int = DEFAULT_FEATURE_SIDE,
                       seed: int = 0) -> Path:
    """Write a ready-to-run demo workspace and return its config path.

    Creates one frame directory per class (boxed patterns over a dark
    background), a vocabulary file, saved victim weights aligned with the
    patterns, and a pipeline config wired to the stub provider.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    patterns = make_patterns(len(class_names), feature_side, seed)
    vocabulary = ClassVocabulary(labels=tuple(class_names))

    classes = {}
    bases = []
    for index, name in enumerate(class_names):
        class_dir = root / "frames" / name
        base = boxed_pattern_image(patterns[index], side, feature_side)
        bases.append(base)
        for frame_index, frame in enumerate(noisy_frames(base, frames, seed + index)):
            save_image(frame, class_dir / f"frame{frame_index:04d}.png")
        classes[name] = str(class_dir)

    vocab_path = root / "vocabulary.json"
    vocabulary.to_json(vocab_path)

    # moderate clean margin: the demo attack only reaches the masked box,
    # so its budget is a fraction of the full-frame case
    victim = make_victim(vocabulary, bases, input_side=side,
                         feature_side=feature_side, target_margin=15.0)
    weights_path = root / "victim_weights.npz"
    victim.save(weights_path)

    config = {
        "classes": classes,
        "vocabulary": str(vocab_path),
        "output_root": str(root / "runs"),
        "run_tag": "demo",
        "stride": 2,
        "side": side,
        "victim": {"kind": "reference", "weights": str(weights_path)},
        "provider": {"kind": "threshold", "threshold": 0.3},
        "attack": {"epsilon": 1.0, "max_iters": 150},
        "split_ratio": 0.85,
        "split_seed": 7,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return config_path
