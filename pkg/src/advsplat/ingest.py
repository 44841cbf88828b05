"""Dataset ingestion: load multi-view capture frames, subsample, resize, manifest.

A source dataset is a directory of raster frames for one object class
(CO3D-style captures). Preparation subsamples the sequence with a fixed
stride, resizes every kept frame to the classifier input side, and records
the result in a JSON manifest so a run can be reproduced byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FrameReadError, NoFramesError, ParameterError

log = logging.getLogger(__name__)

SUPPORTED_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

RESAMPLE_FILTERS = {
    "nearest": Image.NEAREST,
    "bilinear": Image.BILINEAR,
    "bicubic": Image.BICUBIC,
    "lanczos": Image.LANCZOS,
}

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SPLIT_UNASSIGNED = "unassigned"

DEFAULT_INPUT_SIDE = 224
DEFAULT_STRIDE = 5


@dataclass
class ImageRecord:
    """One frame of a capture sequence.

    ``pixels`` is an H x W x 3 uint8 buffer with values in [0, 255].
    ``frame_index`` is the frame's position in the source sequence, which
    subsampling preserves. ``id`` is the source filename stem and must be
    unique within a dataset.
    """

    id: str
    class_label: str
    frame_index: int
    pixels: np.ndarray
    split: str = SPLIT_UNASSIGNED
    source_path: Path | None = None


@dataclass
class DatasetManifest:
    """Deterministic description of a prepared dataset for one object class."""

    object_class: str
    records: list[ImageRecord]
    subsample_stride: int
    source_count: int
    seed: int = 0
    side: int = DEFAULT_INPUT_SIDE
    resample: str = "bilinear"

    def ids(self) -> list[str]:
        return [record.id for record in self.records]


def _decode_frame(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise FrameReadError(f"cannot decode frame {path}: {exc}") from exc


def load_sequence(directory: Path | str, class_label: str) -> list[ImageRecord]:
    """Load every frame of a capture directory in lexicographic filename order.

    Frame indices are assigned 0..n-1 after sorting; splits start unassigned.
    Raises :class:`NoFramesError` for an empty directory and
    :class:`FrameReadError` naming the first undecodable file.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NoFramesError(f"no frames: {directory} is not a directory")
    paths = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in SUPPORTED_EXTENSIONS
    )
    if not paths:
        raise NoFramesError(f"no frames: {directory} contains no supported images")

    records = []
    seen: set[str] = set()
    for index, path in enumerate(paths):
        if path.stem in seen:
            raise ParameterError(
                f"duplicate frame id {path.stem!r} in {directory}; "
                "frame filename stems must be unique"
            )
        seen.add(path.stem)
        records.append(
            ImageRecord(
                id=path.stem,
                class_label=class_label,
                frame_index=index,
                pixels=_decode_frame(path),
                source_path=path,
            )
        )
    return records


def subsample(records: list[ImageRecord], stride: int, offset: int = 0) -> list[ImageRecord]:
    """Keep records at positions offset, offset+stride, ... preserving order.

    With offset 0 the kept count is ceil(n / stride).
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if offset < 0:
        raise ParameterError(f"offset must be >= 0, got {offset}")
    return list(records[offset::stride])


def resize_to_input(record: ImageRecord, side: int = DEFAULT_INPUT_SIDE,
                    resample: str = "bilinear") -> ImageRecord:
    """Resize a record's pixels to side x side, returning a new record.

    Non-square sources are resized directly (aspect distortion) rather than
    cropped. A constant-color input stays exactly constant.
    """
    if side <= 0:
        raise ParameterError(f"side must be positive, got {side}")
    if resample not in RESAMPLE_FILTERS:
        raise ParameterError(
            f"unknown resample filter {resample!r}; choose from {sorted(RESAMPLE_FILTERS)}"
        )
    if record.pixels.size == 0:
        raise ParameterError(f"record {record.id} has an empty pixel buffer")
    if record.pixels.shape[:2] == (side, side):
        return replace(record, pixels=record.pixels.copy())
    img = Image.fromarray(record.pixels)
    resized = img.resize((side, side), RESAMPLE_FILTERS[resample])
    return replace(record, pixels=np.asarray(resized, dtype=np.uint8))


def prepare_sequence(directory: Path | str, class_label: str,
                     stride: int = DEFAULT_STRIDE, side: int = DEFAULT_INPUT_SIDE,
                     resample: str = "bilinear", offset: int = 0,
                     seed: int = 0) -> DatasetManifest:
    """Load, subsample, and resize a capture directory into a manifest."""
    loaded = load_sequence(directory, class_label)
    kept = [resize_to_input(r, side=side, resample=resample)
            for r in subsample(loaded, stride, offset=offset)]
    return DatasetManifest(
        object_class=class_label,
        records=kept,
        subsample_stride=stride,
        source_count=len(loaded),
        seed=seed,
        side=side,
        resample=resample,
    )


def write_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    """Write a manifest as deterministic JSON with paths relative to it."""
    path = Path(path)
    base = path.parent.resolve()
    entries = []
    for record in manifest.records:
        if record.source_path is None:
            raise ParameterError(f"record {record.id} has no source path to record")
        rel = _relative(base, Path(record.source_path).resolve())
        entries.append({
            "id": record.id,
            "source_path": rel.as_posix(),
            "frame_index": record.frame_index,
            "split": record.split,
        })
    payload = {
        "object_class": manifest.object_class,
        "subsample_stride": manifest.subsample_stride,
        "source_count": manifest.source_count,
        "seed": manifest.seed,
        "side": manifest.side,
        "resample": manifest.resample,
        "records": entries,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _relative(base: Path, target: Path) -> Path:
    """Relative path from base to target, tolerating non-subpath targets."""
    return Path(os.path.relpath(target, base))


def read_manifest(path: Path | str, load_pixels: bool = True) -> DatasetManifest:
    """Read a manifest written by :func:`write_manifest`.

    With ``load_pixels`` the recorded files are decoded; otherwise records
    carry empty buffers and only identity metadata.
    """
    path = Path(path)
    payload = json.loads(path.read_text())
    records = []
    for entry in payload["records"]:
        source = (path.parent / entry["source_path"]).resolve()
        pixels = _decode_frame(source) if load_pixels else np.empty((0, 0, 3), np.uint8)
        records.append(
            ImageRecord(
                id=entry["id"],
                class_label=payload["object_class"],
                frame_index=entry["frame_index"],
                pixels=pixels,
                split=entry["split"],
                source_path=source,
            )
        )
    records.sort(key=lambda r: r.frame_index)
    return DatasetManifest(
        object_class=payload["object_class"],
        records=records,
        subsample_stride=payload["subsample_stride"],
        source_count=payload["source_count"],
        seed=payload["seed"],
        side=payload["side"],
        resample=payload["resample"],
    )


def save_image(pixels: np.ndarray, path: Path | str) -> None:
    """Write an uint8 image buffer as PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")


def load_image(path: Path | str) -> np.ndarray:
    """Decode one raster file to an H x W x 3 uint8 buffer."""
    return _decode_frame(Path(path))
