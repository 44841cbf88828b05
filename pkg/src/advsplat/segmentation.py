"""Binary object masks: provider adapter, file loading, and mask statistics.

The segmentation model itself is external. This module defines the provider
contract (an object that proposes soft masks with quality scores for an RGB
image), selects and binarizes the best proposal, and round-trips masks
through single-channel PNG files named ``<image_id>_mask.png``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    AlignmentError,
    FrameReadError,
    NoObjectFoundError,
    ParameterError,
    ProviderError,
)
from .ingest import ImageRecord

log = logging.getLogger(__name__)

SOFT_THRESHOLD = 0.5    # soft provider masks: value >= 0.5 becomes 1
FILE_THRESHOLD = 127    # 8-bit mask files: value > 127 becomes 1

MASK_SUFFIX = "_mask.png"


@dataclass
class MaskProposal:
    """One provider proposal: a soft mask in [0, 1] plus a quality score."""

    soft_mask: np.ndarray
    quality: float


@runtime_checkable
class SegmentationProvider(Protocol):
    """Contract for external segmentation backends.

    ``propose`` receives an H x W x 3 uint8 image and returns zero or more
    proposals. Implementations may be remote services or local processes;
    failures should surface as exceptions (wrapped into ProviderError by
    :func:`acquire_mask` so callers can retry).
    """

    name: str

    def propose(self, image: np.ndarray) -> list[MaskProposal]:
        ...


@dataclass
class ObjectMask:
    """Binary mask aligned to one image.

    ``mask`` holds exactly 0/1 uint8 values with the image's H x W shape.
    ``bbox`` is the tight inclusive bounding box (x0, y0, x1, y1) of the
    1-region, or None for an empty mask.
    """

    image_id: str
    mask: np.ndarray
    bbox: tuple[int, int, int, int] | None
    quality: float | None
    provider: str

    def is_empty(self) -> bool:
        return not bool(self.mask.any())


@dataclass
class MaskStats:
    coverage: float
    component_count: int


def tight_bbox(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Inclusive (x0, y0, x1, y1) bounds of the 1-region; None when empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def binarize(soft_mask: np.ndarray, threshold: float = SOFT_THRESHOLD) -> np.ndarray:
    """Threshold a soft mask into exact 0/1 uint8 values."""
    return (np.asarray(soft_mask, dtype=np.float64) >= threshold).astype(np.uint8)


def _select_proposal(proposals: list[MaskProposal]) -> tuple[MaskProposal, int]:
    """Pick max quality; ties go to the larger area, then the lower index."""
    best_index = 0
    best_key = None
    for index, prop in enumerate(proposals):
        area = int(binarize(prop.soft_mask).sum())
        key = (float(prop.quality), area, -index)
        if best_key is None or key > best_key:
            best_key = key
            best_index = index
    return proposals[best_index], best_index


def acquire_mask(record: ImageRecord, provider: SegmentationProvider,
                 fallback_full: bool = False, merge_instances: bool = False,
                 merge_quality_floor: float = 0.5) -> ObjectMask:
    """Ask the provider for proposals and return the best one, binarized.

    With ``merge_instances`` the union of all proposals at or above
    ``merge_quality_floor`` is taken instead of the single best proposal,
    the mitigation for scenes holding several instances of the object.
    When the provider yields nothing, raises :class:`NoObjectFoundError`
    unless ``fallback_full`` is set, in which case an all-ones mask is
    returned (marked with provider ``"<name>:fallback-full"``).
    """
    try:
        proposals = provider.propose(record.pixels)
    except Exception as exc:
        raise ProviderError(
            f"segmentation provider {provider.name!r} failed on {record.id}: {exc}"
        ) from exc

    height, width = record.pixels.shape[:2]
    if not proposals:
        if fallback_full:
            full = np.ones((height, width), dtype=np.uint8)
            return ObjectMask(record.id, full, tight_bbox(full), None,
                              f"{provider.name}:fallback-full")
        raise NoObjectFoundError(f"no object found in {record.id} by {provider.name!r}")

    if merge_instances:
        mask = merge_proposals(proposals, merge_quality_floor)
        quality = max(float(p.quality) for p in proposals
                      if p.quality >= merge_quality_floor)
        provider_tag = f"{provider.name}:merged"
    else:
        chosen, _ = _select_proposal(proposals)
        mask = binarize(chosen.soft_mask)
        quality = float(chosen.quality)
        provider_tag = provider.name
    if mask.shape != (height, width):
        raise AlignmentError(
            f"provider mask shape {mask.shape} does not match image "
            f"shape {(height, width)} for {record.id}"
        )
    return ObjectMask(record.id, mask, tight_bbox(mask), quality, provider_tag)


def load_mask(path: Path | str, image_id: str,
              expected_shape: tuple[int, int] | None = None) -> ObjectMask:
    """Load a single-channel mask file; pixels > 127 map to 1.

    ``expected_shape`` (H, W), when given, is validated and a mismatch
    raises :class:`AlignmentError` naming both shapes.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            raw = np.asarray(img.convert("L"))
    except Exception as exc:
        raise FrameReadError(f"cannot decode mask {path}: {exc}") from exc
    mask = (raw > FILE_THRESHOLD).astype(np.uint8)
    if expected_shape is not None and mask.shape != tuple(expected_shape):
        raise AlignmentError(
            f"mask {path} has shape {mask.shape} but the paired image "
            f"{image_id} has shape {tuple(expected_shape)}"
        )
    return ObjectMask(image_id, mask, tight_bbox(mask), None, f"file:{path.name}")


def save_mask(mask: ObjectMask, path: Path | str) -> None:
    """Write a mask as a 0/255 single-channel PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.mask * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def mask_path_for(image_id: str, directory: Path | str) -> Path:
    return Path(directory) / f"{image_id}{MASK_SUFFIX}"


def mask_stats(mask: ObjectMask) -> MaskStats:
    """Coverage (mean of 0/1 values) and 4-connected component count."""
    coverage = float(mask.mask.mean()) if mask.mask.size else 0.0
    _, count = ndimage.label(mask.mask)  # default structure is 4-connectivity
    return MaskStats(coverage=coverage, component_count=int(count))


def merge_proposals(proposals: list[MaskProposal], quality_floor: float) -> np.ndarray:
    """Union of all proposals at or above a quality threshold.

    Mitigation for multi-instance scenes where the single best proposal
    covers only one instance of the object class.
    """
    if not proposals:
        raise NoObjectFoundError("cannot merge an empty proposal list")
    masks = [binarize(p.soft_mask) for p in proposals if p.quality >= quality_floor]
    if not masks:
        raise NoObjectFoundError(
            f"no proposal reaches the quality floor {quality_floor}"
        )
    merged = masks[0]
    for m in masks[1:]:
        merged = np.maximum(merged, m)
    return merged


class ThresholdProvider:
    """Brightness-threshold stub provider for tests and offline demos.

    Proposes one mask per connected bright region (grayscale above the
    threshold), scoring each by its share of the thresholded area. This is
    not a real segmenter; it exists so the pipeline runs end to end without
    an external model.
    """

    def __init__(self, threshold: float = 0.5, min_area: int = 16):
        if not 0.0 < threshold < 1.0:
            raise ParameterError(f"threshold must be in (0, 1), got {threshold}")
        self.name = f"threshold:{threshold:g}"
        self.threshold = threshold
        self.min_area = min_area

    def propose(self, image: np.ndarray) -> list[MaskProposal]:
        gray = np.asarray(image, dtype=np.float64).mean(axis=2) / 255.0
        fg = gray > self.threshold
        labels, count = ndimage.label(fg)
        total = max(int(fg.sum()), 1)
        proposals = []
        for component in range(1, count + 1):
            member = labels == component
            area = int(member.sum())
            if area < self.min_area:
                continue
            proposals.append(
                MaskProposal(soft_mask=member.astype(np.float64),
                             quality=area / total)
            )
        return proposals
