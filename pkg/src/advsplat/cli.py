"""Pipeline orchestration: prepare, mask, attack, export, ingest, evaluate.

Every command works inside one run directory
(``<output_root>/<run_tag>/{manifests,prepared,masks,adv,exports,renders,
reports,logs}``), copies the run configuration verbatim on first use, and
appends an entry to ``run_meta.jsonl`` with library versions, seeds, and
provider/victim identifiers so a run can be audited and re-executed.

Exit codes: 0 success, 2 partial (some items skipped or failed and
recorded), 1 fatal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackConfig, run_attack, save_adversarial, write_trace
from .errors import CompletenessError, ParameterError, PipelineError
from .evaluation import (
    PredictionRecord,
    build_report,
    compare_conditions,
    emit_comparison,
    emit_report,
    evaluate_set,
    read_predictions,
    write_predictions,
)
from .gsbridge import (
    CONDITION_ADVERSARIAL,
    CONDITION_ORIGINAL,
    RENDER_ADVERSARIAL_MODEL,
    RENDER_ORIGINAL_MODEL,
    SplitAssignment,
    export_training_set,
    ingest_renders,
    make_split,
)
from .ingest import (
    DatasetManifest,
    load_image,
    prepare_sequence,
    read_manifest,
    save_image,
    write_manifest,
)
from .segmentation import (
    ThresholdProvider,
    acquire_mask,
    load_mask,
    mask_path_for,
    mask_stats,
    save_mask,
)
from .victim import ClassVocabulary, ReferenceClassifier, default_vocabulary

log = logging.getLogger("advsplat")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

# evaluation condition names as used in report files
EVAL_ORIGINAL = "original"
EVAL_ADVERSARIAL = "adversarial"
EVAL_RENDER_ORIGINAL = "render_original"
EVAL_RENDER_ADVERSARIAL = "render_adversarial"
EVAL_CONDITIONS = (EVAL_ORIGINAL, EVAL_ADVERSARIAL,
                   EVAL_RENDER_ORIGINAL, EVAL_RENDER_ADVERSARIAL)

_RENDER_DIR_OF = {
    EVAL_RENDER_ORIGINAL: RENDER_ORIGINAL_MODEL,
    EVAL_RENDER_ADVERSARIAL: RENDER_ADVERSARIAL_MODEL,
}


@dataclass
class RunConfig:
    """Serializable run configuration; flags override individual fields."""

    classes: dict[str, str] = field(default_factory=dict)
    output_root: str = "runs"
    run_tag: str = "run"
    run_dir: str | None = None
    vocabulary: str | None = None
    stride: int = 5
    side: int = 224
    resample: str = "bilinear"
    offset: int = 0
    victim: dict = field(default_factory=lambda: {"kind": "reference", "seed": 0})
    provider: dict = field(default_factory=lambda: {"kind": "threshold", "threshold": 0.5})
    attack: dict = field(default_factory=dict)
    split_ratio: float = 0.85
    split_seed: int = 0
    split_strategy: str = "random"
    workers: int = 1
    mask_fallback_full: bool = False
    merge_instances: bool = False
    merge_quality_floor: float = 0.5
    source_path: str | None = None  # config file this was loaded from

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__ if f != "source_path"}
        unknown = set(payload) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload, source_path=str(path))

    def resolve_run_dir(self) -> Path:
        if self.run_dir:
            return Path(self.run_dir)
        return Path(self.output_root) / self.run_tag

    def attack_config(self) -> AttackConfig:
        cfg = AttackConfig(**self.attack)
        cfg.validate()
        return cfg


def _ensure_run_dir(config: RunConfig) -> Path:
    run_dir = config.resolve_run_dir()
    for sub in ("manifests", "prepared", "masks", "adv", "exports",
                "renders", "reports", "logs"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    copy = run_dir / "run_config.json"
    if config.source_path:
        copy.write_bytes(Path(config.source_path).read_bytes())
    else:
        payload = {k: v for k, v in config.__dict__.items() if k != "source_path"}
        copy.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return run_dir


def _setup_logging(run_dir: Path, command: str) -> None:
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    for handler in list(root.handlers):
        root.removeHandler(handler)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    stream = logging.StreamHandler()
    stream.setFormatter(fmt)
    root.addHandler(stream)
    file_handler = logging.FileHandler(run_dir / "logs" / f"{command}.log")
    file_handler.setFormatter(fmt)
    root.addHandler(file_handler)


def _record_meta(run_dir: Path, command: str, config: RunConfig, extra: dict) -> None:
    import PIL

    entry = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "command": command,
        "versions": {
            "advsplat": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pillow": PIL.__version__,
        },
        "seeds": {"split_seed": config.split_seed,
                  "victim_seed": config.victim.get("seed")},
        "provider": config.provider,
        "victim": {k: v for k, v in config.victim.items() if k != "weights"},
    }
    entry.update(extra)
    with open(run_dir / "run_meta.jsonl", "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _tree_digest(root: Path, pattern: str) -> str:
    """Order-stable sha256 over a file tree, for re-execution audits."""
    digest = hashlib.sha256()
    if root.is_dir():
        for path in sorted(root.rglob(pattern)):
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def _build_vocabulary(config: RunConfig) -> ClassVocabulary:
    if config.vocabulary:
        return ClassVocabulary.from_json(config.vocabulary)
    return default_vocabulary()


def _check_labels(vocabulary: ClassVocabulary, config: RunConfig) -> None:
    missing = [label for label in config.classes if label not in vocabulary.labels]
    if missing:
        raise ParameterError(
            f"dataset labels {missing} are missing from the vocabulary; "
            "every ground-truth label must be a vocabulary entry"
        )


def _build_victim(config: RunConfig, vocabulary: ClassVocabulary):
    spec = dict(config.victim)
    kind = spec.pop("kind", "reference")
    if kind == "reference":
        weights = spec.pop("weights", None)
        if weights:
            return ReferenceClassifier.load(vocabulary, weights)
        return ReferenceClassifier.seeded(
            vocabulary,
            seed=spec.pop("seed", 0),
            input_side=spec.pop("input_side", config.side),
            feature_side=spec.pop("feature_side", 32),
        )
    if kind == "clip":
        from .victim.clip_adapter import ClipVictim
        return ClipVictim(vocabulary, **spec)
    raise ParameterError(f"unknown victim kind {kind!r}")


def _build_provider(config: RunConfig):
    spec = dict(config.provider)
    kind = spec.pop("kind", "threshold")
    if kind == "threshold":
        return ThresholdProvider(**spec)
    if kind == "files":
        return None  # handled by cmd_mask via load_mask
    raise ParameterError(f"unknown provider kind {kind!r}")


def _manifest_path(run_dir: Path, label: str) -> Path:
    return run_dir / "manifests" / f"{label}.json"


def _load_class_manifest(run_dir: Path, label: str,
                         load_pixels: bool = True) -> DatasetManifest:
    path = _manifest_path(run_dir, label)
    if not path.is_file():
        raise ParameterError(
            f"no manifest for class {label!r} at {path}; run `prepare` first"
        )
    return read_manifest(path, load_pixels=load_pixels)


def _chunk(items: list, workers: int) -> list[list]:
    if workers <= 1:
        return [items]
    return [items[i::workers] for i in range(workers) if items[i::workers]]


def cmd_prepare(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    if not config.classes:
        log.error("config has no classes to prepare")
        return EXIT_FATAL
    missing = [d for d in config.classes.values() if not Path(d).is_dir()]
    if missing:
        log.error("missing source directories: %s", ", ".join(missing))
        return EXIT_FATAL

    for label, directory in sorted(config.classes.items()):
        manifest = prepare_sequence(
            directory, label, stride=config.stride, side=config.side,
            resample=config.resample, offset=config.offset, seed=config.split_seed,
        )
        prepared_dir = run_dir / "prepared" / label
        for record in manifest.records:
            out = prepared_dir / f"{record.id}.png"
            if not out.is_file():
                save_image(record.pixels, out)
            record.source_path = out
        write_manifest(manifest, _manifest_path(run_dir, label))
        log.info("prepared %s: %d/%d frames at %dx%d",
                 label, len(manifest.records), manifest.source_count,
                 config.side, config.side)
    _record_meta(run_dir, "prepare", config, {
        "classes": sorted(config.classes),
        "content_digest": {
            "manifests": _tree_digest(run_dir / "manifests", "*.json"),
            "prepared": _tree_digest(run_dir / "prepared", "*.png"),
        },
    })
    return EXIT_OK


def cmd_mask(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    provider_kind = config.provider.get("kind", "threshold")
    failures: list[tuple[str, str]] = []
    cached = created = 0

    for label in sorted(config.classes):
        manifest = _load_class_manifest(run_dir, label)
        mask_dir = run_dir / "masks" / label
        mask_dir.mkdir(parents=True, exist_ok=True)

        todo = [r for r in manifest.records
                if not mask_path_for(r.id, mask_dir).is_file()]
        cached += len(manifest.records) - len(todo)

        def _one(record, provider):
            target = mask_path_for(record.id, mask_dir)
            if provider_kind == "files":
                source = mask_path_for(record.id, Path(config.provider["mask_dir"]))
                mask = load_mask(source, record.id,
                                 expected_shape=record.pixels.shape[:2])
            else:
                mask = acquire_mask(record, provider,
                                    fallback_full=config.mask_fallback_full,
                                    merge_instances=config.merge_instances,
                                    merge_quality_floor=config.merge_quality_floor)
            save_mask(mask, target)

        class_failures: list[tuple[str, str]] = []
        if config.workers > 1 and provider_kind != "files":
            chunks = _chunk(todo, config.workers)

            def _run_chunk(chunk):
                worker_provider = _build_provider(config)
                errors = []
                for record in chunk:
                    try:
                        _one(record, worker_provider)
                    except PipelineError as exc:
                        errors.append((record.id, str(exc)))
                return errors

            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                for errs in pool.map(_run_chunk, chunks):
                    class_failures.extend(errs)
        else:
            provider = _build_provider(config)
            for record in todo:
                try:
                    _one(record, provider)
                except PipelineError as exc:
                    class_failures.append((record.id, str(exc)))
        created += len(todo) - len(class_failures)
        failures.extend(class_failures)

        stats = []
        for record in manifest.records:
            target = mask_path_for(record.id, mask_dir)
            if not target.is_file():
                continue
            mask = load_mask(target, record.id)
            s = mask_stats(mask)
            stats.append({"id": record.id, "coverage": round(s.coverage, 6),
                          "components": s.component_count, "bbox": mask.bbox})
        (mask_dir / "mask_stats.json").write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n")

    log.info("masks: %d created, %d cached, %d failed", created, cached, len(failures))
    for image_id, message in failures:
        log.error("mask failure %s: %s", image_id, message)
    _record_meta(run_dir, "mask", config, {
        "created": created, "cached": cached, "failures": len(failures),
        "content_digest": {"masks": _tree_digest(run_dir / "masks", "*_mask.png")},
    })
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_attack(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    vocabulary = _build_vocabulary(config)
    _check_labels(vocabulary, config)
    attack_cfg = config.attack_config()
    shared_victim = _build_victim(config, vocabulary) if config.workers <= 1 else None

    skipped: list[str] = []
    attacked = resumed = early = 0
    noise_linf: list[float] = []
    noise_l0: list[float] = []

    for label in sorted(config.classes):
        manifest = _load_class_manifest(run_dir, label)
        true_id = vocabulary.label_id(label)
        mask_dir = run_dir / "masks" / label
        adv_dir = run_dir / "adv" / label
        adv_dir.mkdir(parents=True, exist_ok=True)

        todo = []
        for record in manifest.records:
            adv_path = adv_dir / f"{record.id}_adv.png"
            trace_path = adv_dir / f"{record.id}_trace.json"
            if adv_path.is_file() and trace_path.is_file():
                resumed += 1
                continue
            mask_file = mask_path_for(record.id, mask_dir)
            if not mask_file.is_file():
                skipped.append(record.id)
                continue
            todo.append((record, mask_file, adv_path, trace_path))

        def _attack_chunk(chunk):
            # one victim instance per worker: adapters are single-consumer
            victim = shared_victim or _build_victim(config, vocabulary)
            results = []
            for record, mask_file, adv_path, trace_path in chunk:
                mask = load_mask(mask_file, record.id,
                                 expected_shape=record.pixels.shape[:2])
                result = run_attack(record.pixels, mask, victim, true_id, attack_cfg)
                save_adversarial(result, adv_path)
                write_trace(result, attack_cfg, trace_path)
                results.append(result)
            return results

        chunks = _chunk(todo, config.workers)
        if config.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                all_results = [r for rs in pool.map(_attack_chunk, chunks) for r in rs]
        else:
            all_results = _attack_chunk(todo) if todo else []

        attacked += len(all_results)
        early += sum(1 for r in all_results if r.stopped_early)
        noise_linf += [r.noise_linf for r in all_results]
        noise_l0 += [r.noise_l0_fraction for r in all_results]

    summary = {
        "attacked": attacked,
        "resumed": resumed,
        "skipped_missing_mask": sorted(skipped),
        "early_stopped": early,
        "mean_noise_linf": float(np.mean(noise_linf)) if noise_linf else None,
        "mean_noise_l0_fraction": float(np.mean(noise_l0)) if noise_l0 else None,
    }
    (run_dir / "reports" / "attack_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("attack: %d attacked, %d resumed, %d skipped (no mask), %d early-stopped",
             attacked, resumed, len(skipped), early)
    _record_meta(run_dir, "attack", config, {
        "summary": summary,
        "content_digest": {"adv": _tree_digest(run_dir / "adv", "*_adv.png")},
    })
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_export_gs(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    partial = False
    for label in sorted(config.classes):
        manifest = _load_class_manifest(run_dir, label, load_pixels=False)
        split = make_split(manifest, config.split_ratio, config.split_seed,
                           strategy=config.split_strategy)
        class_dir = run_dir / "exports" / label
        split.to_json(class_dir / "split.json")

        for condition, adv_dir in (
                (CONDITION_ORIGINAL, None),
                (CONDITION_ADVERSARIAL, run_dir / "adv" / label)):
            try:
                descriptor = export_training_set(
                    manifest, split, condition, class_dir / condition,
                    adv_dir=adv_dir)
                log.info("exported %s/%s: %d files", label, condition,
                         len(descriptor.file_hashes))
            except CompletenessError as exc:
                log.error("export %s/%s incomplete: %s", label, condition, exc)
                partial = True
        log.info("split %s: %d train / %d test (seed %d)",
                 label, len(split.train_ids), len(split.test_ids), config.split_seed)
    _record_meta(run_dir, "export-gs", config,
                 {"ratio": config.split_ratio, "strategy": config.split_strategy})
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_ingest_renders(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    label = args.object_class
    if label not in config.classes:
        log.error("unknown class %r; config classes: %s", label, sorted(config.classes))
        return EXIT_FATAL
    split_path = run_dir / "exports" / label / "split.json"
    if not split_path.is_file():
        log.error("no split at %s; run `export-gs` first", split_path)
        return EXIT_FATAL
    split = SplitAssignment.from_json(split_path)

    records = ingest_renders(args.render_dir, split, args.model_condition,
                             side=config.side)
    dest = run_dir / "renders" / label / args.model_condition
    dest.mkdir(parents=True, exist_ok=True)
    for record in records:
        save_image(record.pixels, dest / f"{record.image_id}_render.png")
    log.info("ingested %d renders for %s/%s (%d train, %d test)",
             len(records), label, args.model_condition,
             sum(1 for r in records if r.split == "train"),
             sum(1 for r in records if r.split == "test"))
    _record_meta(run_dir, "ingest-renders", config,
                 {"class": label, "condition": args.model_condition,
                  "count": len(records)})
    return EXIT_OK


def _collect_predictions(config: RunConfig, run_dir: Path, condition: str,
                         vocabulary: ClassVocabulary, victim) -> list[PredictionRecord]:
    """Predict every image of one evaluation condition."""
    records: list[PredictionRecord] = []
    for label in sorted(config.classes):
        true_id = vocabulary.label_id(label)
        if condition == EVAL_ORIGINAL:
            manifest = _load_class_manifest(run_dir, label)
            batch = [(r.id, r.pixels, "all") for r in manifest.records]
        elif condition == EVAL_ADVERSARIAL:
            manifest = _load_class_manifest(run_dir, label, load_pixels=False)
            batch = []
            for record in manifest.records:
                adv_path = run_dir / "adv" / label / f"{record.id}_adv.png"
                if not adv_path.is_file():
                    log.warning("no adversarial image for %s/%s", label, record.id)
                    continue
                batch.append((record.id, load_image(adv_path), "all"))
        else:
            split_path = run_dir / "exports" / label / "split.json"
            render_dir = run_dir / "renders" / label / _RENDER_DIR_OF[condition]
            if not split_path.is_file() or not render_dir.is_dir():
                log.warning("no renders for %s/%s", label, condition)
                continue
            split = SplitAssignment.from_json(split_path)
            rendered = ingest_renders(render_dir, split, _RENDER_DIR_OF[condition],
                                      side=config.side)
            batch = [(r.image_id, r.pixels, r.split) for r in rendered]

        if not batch:
            continue
        probs = victim.predict_batch([pixels for _, pixels, _ in batch])
        for (image_id, _, split_tag), p in zip(batch, probs):
            records.append(PredictionRecord.from_probs(
                image_id=image_id, condition=condition, split=split_tag,
                true_label_id=true_id, probs=p))
    return records


def _predictions_path(run_dir: Path, condition: str) -> Path:
    return run_dir / "reports" / f"predictions_{condition}.jsonl"


def _report_rows(records: list[PredictionRecord], vocabulary: ClassVocabulary):
    rows = []
    keys = sorted({(r.true_label_id, r.condition, r.split) for r in records},
                  key=lambda k: (vocabulary.labels[k[0]], k[1], k[2]))
    for true_id, condition, split in keys:
        group = [r for r in records
                 if (r.true_label_id, r.condition, r.split) == (true_id, condition, split)]
        rows.append(evaluate_set(group, object_label=vocabulary.labels[true_id]))
    return rows


_REPORT_PAIRS = (
    ("images", (EVAL_ORIGINAL, EVAL_ADVERSARIAL)),
    ("renders", (EVAL_RENDER_ORIGINAL, EVAL_RENDER_ADVERSARIAL)),
)

_FORMAT_SUFFIX = {"json": "json", "csv": "csv", "markdown": "md"}


def _emit_reports(run_dir: Path, vocabulary: ClassVocabulary,
                  by_condition: dict[str, list[PredictionRecord]]) -> None:
    reports_dir = run_dir / "reports"
    for name, pair in _REPORT_PAIRS:
        present = [c for c in pair if by_condition.get(c)]
        if not present:
            continue
        rows = []
        for condition in present:
            rows.extend(_report_rows(by_condition[condition], vocabulary))
        report = build_report(rows, conditions=present)
        for fmt, suffix in _FORMAT_SUFFIX.items():
            emit_report(report, reports_dir / f"report_{name}.{suffix}", fmt)
        if len(present) == 2:
            first = build_report([r for r in rows if r.condition == present[0]],
                                 conditions=[present[0]])
            second = build_report([r for r in rows if r.condition == present[1]],
                                  conditions=[present[1]])
            table = compare_conditions(first, second)
            for fmt, suffix in _FORMAT_SUFFIX.items():
                emit_comparison(table, reports_dir / f"comparison_{name}.{suffix}", fmt)
        else:
            log.warning("only %s available for %s report; no comparison emitted",
                        present[0], name)


def cmd_evaluate(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    vocabulary = _build_vocabulary(config)
    _check_labels(vocabulary, config)
    requested = args.conditions or list(EVAL_CONDITIONS)

    victim = None
    by_condition: dict[str, list[PredictionRecord]] = {}
    for condition in requested:
        cache = _predictions_path(run_dir, condition)
        if cache.is_file() and not args.recompute:
            by_condition[condition] = read_predictions(cache)
            log.info("loaded %d cached predictions for %s",
                     len(by_condition[condition]), condition)
            continue
        if victim is None:
            victim = _build_victim(config, vocabulary)
        records = _collect_predictions(config, run_dir, condition, vocabulary, victim)
        if records:
            write_predictions(records, cache)
            by_condition[condition] = records
            log.info("predicted %d images for %s", len(records), condition)
        else:
            log.warning("no inputs available for condition %s", condition)

    if not by_condition:
        log.error("no predictions for any requested condition")
        return EXIT_FATAL

    _emit_reports(run_dir, vocabulary, by_condition)
    _record_meta(run_dir, "evaluate", config,
                 {"conditions": {c: len(v) for c, v in by_condition.items()}})
    return EXIT_OK


def cmd_report(config: RunConfig, args) -> int:
    run_dir = _ensure_run_dir(config)
    vocabulary = _build_vocabulary(config)
    by_condition = {}
    for condition in EVAL_CONDITIONS:
        cache = _predictions_path(run_dir, condition)
        if cache.is_file():
            by_condition[condition] = read_predictions(cache)
    if not by_condition:
        log.error("no cached predictions under %s; run `evaluate` first",
                  run_dir / "reports")
        return EXIT_FATAL
    _emit_reports(run_dir, vocabulary, by_condition)

    if args.plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            log.error("matplotlib is needed for --plot (pip install 'advsplat[plots]')")
            return EXIT_FATAL
        names, values = [], []
        for condition, records in by_condition.items():
            rows = _report_rows(records, vocabulary)
            grouped = build_report(rows, conditions=[condition])
            for agg in grouped.aggregates:
                tag = condition if agg.split in ("", "all") else f"{condition} ({agg.split})"
                names.append(tag)
                values.append(agg.top1)
        fig, ax = plt.subplots(figsize=(1.2 * max(4, len(names)), 4))
        ax.bar(range(len(names)), values, color="#4472a8")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("top-1 accuracy")
        ax.set_ylim(0, 1)
        fig.tight_layout()
        out = run_dir / "reports" / "top1_by_condition.png"
        fig.savefig(out)
        log.info("wrote %s", out)
    return EXIT_OK


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if getattr(args, "run_dir", None):
        config.run_dir = args.run_dir
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    if getattr(args, "vocabulary", None):
        config.vocabulary = args.vocabulary
    for attack_field in ("epsilon", "max_iters", "loss_threshold", "mode"):
        value = getattr(args, attack_field, None)
        if value is not None:
            config.attack[attack_field] = value
    if getattr(args, "target_label", None) is not None:
        config.attack["target_label_id"] = args.target_label
    for split_field in ("split_ratio", "split_seed", "split_strategy"):
        value = getattr(args, split_field, None)
        if value is not None:
            setattr(config, split_field, value)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advsplat",
        description="Masked iterative sign-gradient attack pipeline with a "
                    "Gaussian-splatting file bridge and metric reports.")
    parser.add_argument("--config", required=True, help="run configuration JSON")
    parser.add_argument("--run-dir", help="override the run directory")
    parser.add_argument("--workers", type=int, help="worker pool size (default 1)")
    parser.add_argument("--vocabulary", help="override the vocabulary file")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", help="load, subsample, resize, and manifest the frames")

    mask_parser = sub.add_parser("mask", help="generate or import object masks")
    mask_parser.add_argument("--merge-instances", dest="merge_instances",
                             action="store_true", default=None,
                             help="union all proposals above the quality floor "
                                  "instead of taking the single best one")
    mask_parser.add_argument("--merge-quality-floor", dest="merge_quality_floor",
                             type=float)

    attack_parser = sub.add_parser("attack", help="run the masked iterative attack")
    attack_parser.add_argument("--epsilon", type=float)
    attack_parser.add_argument("--max-iters", dest="max_iters", type=int)
    attack_parser.add_argument("--loss-threshold", dest="loss_threshold", type=float)
    attack_parser.add_argument("--mode", choices=("untargeted", "targeted"))
    attack_parser.add_argument("--target-label", dest="target_label", type=int)

    export_parser = sub.add_parser("export-gs",
                                   help="write train/test splits and trainer exports")
    export_parser.add_argument("--split-ratio", dest="split_ratio", type=float)
    export_parser.add_argument("--split-seed", dest="split_seed", type=int)
    export_parser.add_argument("--split-strategy", dest="split_strategy",
                               choices=("random", "positional"))

    ingest_parser = sub.add_parser("ingest-renders",
                                   help="import trainer renders tagged by camera split")
    ingest_parser.add_argument("--class", dest="object_class", required=True)
    ingest_parser.add_argument("--render-dir", required=True)
    ingest_parser.add_argument("--model-condition", required=True,
                               choices=(RENDER_ORIGINAL_MODEL, RENDER_ADVERSARIAL_MODEL))

    eval_parser = sub.add_parser("evaluate", help="predict and emit metric reports")
    eval_parser.add_argument("--conditions", nargs="*", choices=EVAL_CONDITIONS)
    eval_parser.add_argument("--recompute", action="store_true",
                             help="ignore cached predictions")

    report_parser = sub.add_parser("report",
                                   help="re-emit reports from cached predictions")
    report_parser.add_argument("--plot", action="store_true",
                               help="also write a top-1 bar chart PNG")
    return parser


_COMMANDS = {
    "prepare": cmd_prepare,
    "mask": cmd_mask,
    "attack": cmd_attack,
    "export-gs": cmd_export_gs,
    "ingest-renders": cmd_ingest_renders,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _apply_overrides(RunConfig.from_file(args.config), args)
        run_dir = _ensure_run_dir(config)
        _setup_logging(run_dir, args.command)
        return _COMMANDS[args.command](config, args)
    except PipelineError as exc:
        logging.getLogger("advsplat").error("%s", exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
