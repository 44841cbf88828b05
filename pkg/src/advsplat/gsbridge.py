"""File bridge to an external Gaussian-splatting trainer.

The trainer itself (structure-from-motion initialization, Gaussian
optimization, density control, rasterization) is an external process. This
module owns the contract around it: deterministic train/test camera splits,
an export layout of ``out_dir/images/*.png`` plus ``manifest.json`` with the
held-out camera ids, and re-ingestion of renders named
``<image_id>_render.png`` tagged by the split of their source camera.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    AlignmentError,
    CompletenessError,
    DuplicateRenderError,
    OrphanRenderError,
    ParameterError,
)
from .ingest import RESAMPLE_FILTERS, DatasetManifest

log = logging.getLogger(__name__)

RENDER_SUFFIXES = (".png", ".jpg", ".jpeg")
RENDER_TAG = "_render"

CONDITION_ORIGINAL = "original"
CONDITION_ADVERSARIAL = "adversarial"

RENDER_ORIGINAL_MODEL = "original_model"
RENDER_ADVERSARIAL_MODEL = "adversarial_model"

STRATEGY_RANDOM = "random"
STRATEGY_POSITIONAL = "positional"


class PortableRng:
    """64-bit linear congruential generator with a documented contract.

    state' = (6364136223846793005 * state + 1442695040888963407) mod 2^64,
    output = state' >> 33. Any language with wrapping 64-bit arithmetic
    reproduces the same stream, so a recorded seed yields the same split
    everywhere. ``shuffle`` is a Fisher-Yates pass drawing j = output mod
    (i + 1); the modulo bias is negligible for the list sizes involved.
    """

    MULTIPLIER = 6364136223846793005
    INCREMENT = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u31(self) -> int:
        self.state = (self.MULTIPLIER * self.state + self.INCREMENT) & self.MASK
        return self.state >> 33

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u31() % (i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass
class SplitAssignment:
    """Disjoint train/test partition of a manifest's image ids."""

    train_ids: list[str]
    test_ids: list[str]
    ratio: float
    seed: int
    strategy: str = STRATEGY_RANDOM

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ParameterError(f"split leaks ids across sides: {sorted(overlap)}")

    def split_of(self, image_id: str) -> str:
        if image_id in set(self.train_ids):
            return "train"
        if image_id in set(self.test_ids):
            return "test"
        raise ParameterError(f"id {image_id!r} is not in this split")

    def all_ids(self) -> list[str]:
        return list(self.train_ids) + list(self.test_ids)

    def to_json(self, path: Path | str) -> None:
        payload = {
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "ratio": self.ratio,
            "seed": self.seed,
            "strategy": self.strategy,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: Path | str) -> "SplitAssignment":
        payload = json.loads(Path(path).read_text())
        return cls(
            train_ids=list(payload["train_ids"]),
            test_ids=list(payload["test_ids"]),
            ratio=float(payload["ratio"]),
            seed=int(payload["seed"]),
            strategy=payload.get("strategy", STRATEGY_RANDOM),
        )


@dataclass
class RenderRecord:
    """A trainer render re-ingested for evaluation.

    The image id names the camera the render came from; the split tag is
    inherited from that camera's source frame.
    """

    image_id: str
    pixels: np.ndarray
    condition: str
    split: str


@dataclass
class ExportDescriptor:
    """Content listing of one export, with a sha256 per written file."""

    out_dir: Path
    condition: str
    file_hashes: dict[str, str] = field(default_factory=dict)


def _train_count(n: int, ratio: float) -> int:
    # round-half-up keeps 41 * 0.85 at 35 regardless of float representation
    return int(np.floor(n * ratio + 0.5))


def make_split(manifest: DatasetManifest, ratio: float, seed: int,
               strategy: str = STRATEGY_RANDOM) -> SplitAssignment:
    """Deterministic train/test assignment of every manifest id.

    ``random`` shuffles ids with the portable generator and takes the first
    round(ratio * n) as train; ``positional`` spreads the test cameras
    evenly across the frame sequence. Both sides must end up non-empty.
    """
    ids = manifest.ids()
    n = len(ids)
    if n < 2:
        raise ParameterError(f"need at least 2 records to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must be in (0, 1), got {ratio}")
    train_count = _train_count(n, ratio)
    if train_count <= 0 or train_count >= n:
        raise ParameterError(
            f"ratio {ratio} leaves an empty side for {n} records "
            f"(train would be {train_count})"
        )

    if strategy == STRATEGY_RANDOM:
        shuffled = list(ids)
        PortableRng(seed).shuffle(shuffled)
        train_set = set(shuffled[:train_count])
    elif strategy == STRATEGY_POSITIONAL:
        test_count = n - train_count
        test_positions = {(i * n) // test_count for i in range(test_count)}
        train_set = {ids[pos] for pos in range(n) if pos not in test_positions}
    else:
        raise ParameterError(f"unknown split strategy {strategy!r}")

    train_ids = [i for i in ids if i in train_set]
    test_ids = [i for i in ids if i not in train_set]
    return SplitAssignment(train_ids=train_ids, test_ids=test_ids,
                           ratio=ratio, seed=seed, strategy=strategy)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def export_training_set(manifest: DatasetManifest, split: SplitAssignment,
                        condition: str, out_dir: Path | str,
                        adv_dir: Path | str | None = None) -> ExportDescriptor:
    """Copy the train-side images into a trainer-facing directory.

    For the adversarial condition every train id must have an
    ``<id>_adv.png`` in ``adv_dir``; a gap raises CompletenessError listing
    the absent ids. The export writes ``images/<id>.png`` (verbatim bytes),
    a ``manifest.json`` naming the files and the held-out camera ids, and a
    descriptor JSON with a sha256 per file, so re-exports are comparable.
    """
    if condition not in (CONDITION_ORIGINAL, CONDITION_ADVERSARIAL):
        raise ParameterError(f"unknown export condition {condition!r}")
    out_dir = Path(out_dir)
    by_id = {record.id: record for record in manifest.records}

    sources: dict[str, Path] = {}
    missing = []
    for image_id in split.train_ids:
        record = by_id.get(image_id)
        if record is None:
            missing.append(image_id)
            continue
        if condition == CONDITION_ORIGINAL:
            source = Path(record.source_path) if record.source_path else None
        else:
            if adv_dir is None:
                raise ParameterError("adversarial export needs adv_dir")
            source = Path(adv_dir) / f"{image_id}_adv.png"
        if source is None or not source.is_file():
            missing.append(image_id)
        else:
            sources[image_id] = source
    if missing:
        raise CompletenessError(
            f"{condition} export is missing {len(missing)} image(s): "
            + ", ".join(sorted(missing)),
            missing_ids=sorted(missing),
        )

    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    hashes: dict[str, str] = {}
    for image_id in split.train_ids:
        dest = images_dir / f"{image_id}.png"
        shutil.copyfile(sources[image_id], dest)
        hashes[f"images/{image_id}.png"] = _sha256(dest)

    trainer_manifest = {
        "object_class": manifest.object_class,
        "condition": condition,
        "image_side": manifest.side,
        "train_images": [f"images/{image_id}.png" for image_id in split.train_ids],
        "heldout_camera_ids": list(split.test_ids),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(trainer_manifest, indent=2, sort_keys=True) + "\n")
    hashes["manifest.json"] = _sha256(manifest_path)

    descriptor = ExportDescriptor(out_dir=out_dir, condition=condition,
                                  file_hashes=hashes)
    (out_dir / "export_descriptor.json").write_text(
        json.dumps({"condition": condition, "files": hashes},
                   indent=2, sort_keys=True) + "\n"
    )
    return descriptor


def _load_render_pixels(path: Path, side: int) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        if rgb.size != (side, side):
            rgb = rgb.resize((side, side), RESAMPLE_FILTERS["bilinear"])
        return np.asarray(rgb, dtype=np.uint8)


def ingest_renders(render_dir: Path | str, split: SplitAssignment,
                   condition: str, side: int = 224) -> list[RenderRecord]:
    """Load ``<image_id>_render.*`` files and tag them by camera split.

    A render whose id is absent from the split raises OrphanRenderError;
    two files resolving to the same id raise DuplicateRenderError. Renders
    are resized to the evaluation side when needed. An empty directory
    yields an empty list with a warning.
    """
    if condition not in (RENDER_ORIGINAL_MODEL, RENDER_ADVERSARIAL_MODEL):
        raise ParameterError(f"unknown render condition {condition!r}")
    render_dir = Path(render_dir)
    known = {image_id: split.split_of(image_id) for image_id in split.all_ids()}

    found: dict[str, Path] = {}
    for path in sorted(render_dir.iterdir()) if render_dir.is_dir() else []:
        if not path.is_file() or path.suffix.lower() not in RENDER_SUFFIXES:
            continue
        stem = path.stem
        if not stem.endswith(RENDER_TAG):
            continue
        image_id = stem[: -len(RENDER_TAG)]
        if image_id in found:
            raise DuplicateRenderError(
                f"renders {found[image_id].name} and {path.name} both claim "
                f"id {image_id!r}"
            )
        if image_id not in known:
            raise OrphanRenderError(
                f"render {path.name} names id {image_id!r} which is not in "
                "the split assignment"
            )
        found[image_id] = path

    if not found:
        log.warning("no renders found in %s", render_dir)
        return []

    return [
        RenderRecord(
            image_id=image_id,
            pixels=_load_render_pixels(path, side),
            condition=condition,
            split=known[image_id],
        )
        for image_id, path in sorted(found.items())
    ]
