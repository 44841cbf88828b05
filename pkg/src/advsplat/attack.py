"""Masked iterative sign-gradient attack core.

Each iteration recomposes the pristine background through the inverse image
and perturbs only the masked region:

    untargeted:  x_{n+1} = clip_[0,255]( x_inv + M * (x_n + eps * sign(g_true)) )
    targeted:    x_{n+1} = clip_[0,255]( x_inv + M * (x_n - eps * sign(g_target)) )

where x_inv = x * (1 - M) carries the background, g is the gradient of the
victim's cross-entropy loss with respect to the pixels, and sign maps
negative/zero/positive to -1/0/+1. With an all-ones mask and a single
iteration this reduces to the classic one-step sign-gradient attack.

Iterates are kept in continuous representation during the loop and quantized
to 8-bit only on output; per-step rounding with a small step size can stall
progress. A strict per-iteration quantization mode exists for ablation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AlignmentError, ParameterError
from .ingest import save_image
from .segmentation import ObjectMask
from .victim.base import VictimModel, topk

log = logging.getLogger(__name__)

MODE_UNTARGETED = "untargeted"
MODE_TARGETED = "targeted"

ADVERSARIAL_SUFFIX = "_adv.png"
TRACE_SUFFIX = "_trace.json"

# PNG only: lossy re-encoding would corrupt the perturbation.
LOSSY_EXTENSIONS = {".jpg", ".jpeg", ".webp", ".gif", ".tif", ".tiff", ".bmp"}


@dataclass
class AttackConfig:
    """Parameters of one attack run.

    ``epsilon`` is the per-iteration step in pixel units; ``loss_threshold``
    and ``prob_floor`` define early stopping: an untargeted run halts once
    the true-class probability falls below the floor while the loss exceeds
    the threshold, a targeted run once the target probability exceeds
    1 - prob_floor. ``quantize_each_step`` rounds every iterate to whole
    pixel values (ablation mode). With fractional epsilon the final 8-bit
    rounding can add up to half a pixel unit on top of the per-step budget;
    integer epsilon keeps iterates on the integer lattice exactly.
    """

    epsilon: float = 1.0
    max_iters: int = 100
    loss_threshold: float = 20.0
    mode: str = MODE_UNTARGETED
    target_label_id: int | None = None
    prob_floor: float = 1e-6
    quantize_each_step: bool = False
    run_on_empty_mask: bool = False

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.mode not in (MODE_UNTARGETED, MODE_TARGETED):
            raise ParameterError(f"unknown attack mode {self.mode!r}")
        if self.mode == MODE_TARGETED and self.target_label_id is None:
            raise ParameterError("targeted mode needs target_label_id")
        if self.prob_floor < 0:
            raise ParameterError(f"prob_floor must be >= 0, got {self.prob_floor}")


@dataclass
class IterationRecord:
    """Victim state at the iterate that produced update n."""

    iteration: int
    loss: float
    true_prob: float
    top1_id: int


@dataclass
class AttackResult:
    """Adversarial image plus the per-iteration trace and noise statistics.

    Outside the mask the adversarial buffer equals the original bit for bit.
    ``noise_linf`` is the largest absolute 8-bit pixel change inside the
    mask; ``noise_l0_fraction`` the fraction of masked pixel positions with
    any channel changed.
    """

    adversarial: np.ndarray
    iterations_run: int
    stopped_early: bool
    trace: list[IterationRecord] = field(default_factory=list)
    noise_linf: float = 0.0
    noise_l0_fraction: float = 0.0
    empty_mask: bool = False


def _mask_array(mask: ObjectMask | np.ndarray) -> np.ndarray:
    arr = mask.mask if isinstance(mask, ObjectMask) else np.asarray(mask)
    if not np.isin(arr, (0, 1)).all():
        raise ParameterError("mask values must be exactly 0 or 1")
    return arr.astype(np.float64)


def _aligned_mask(image: np.ndarray, mask: ObjectMask | np.ndarray) -> np.ndarray:
    arr = _mask_array(mask)
    if arr.shape != image.shape[:2]:
        raise AlignmentError(
            f"mask shape {arr.shape} does not match image shape {image.shape[:2]}"
        )
    if image.ndim == 3:
        return arr[:, :, None]
    return arr


def inverse_image(image: np.ndarray, mask: ObjectMask | np.ndarray) -> np.ndarray:
    """Background carrier: pixels zeroed where the mask is 1.

    The mask broadcasts across channels; dtype follows the input.
    """
    image = np.asarray(image)
    m = _aligned_mask(image, mask)
    return (image * (1.0 - m)).astype(image.dtype)


def mifgsm_step(current: np.ndarray, x_inv: np.ndarray,
                mask: ObjectMask | np.ndarray, grad: np.ndarray,
                epsilon: float, mode: str = MODE_UNTARGETED) -> np.ndarray:
    """One masked sign-gradient update, clipped to [0, 255].

    Untargeted ascends the loss (+epsilon * sign), targeted descends the
    target-label loss (-epsilon * sign). Returns a float array; callers
    decide when to quantize.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if mode not in (MODE_UNTARGETED, MODE_TARGETED):
        raise ParameterError(f"unknown attack mode {mode!r}")
    current = np.asarray(current, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != current.shape:
        raise AlignmentError(
            f"gradient shape {grad.shape} does not match image shape {current.shape}"
        )
    m = _aligned_mask(current, mask)
    direction = epsilon if mode == MODE_UNTARGETED else -epsilon
    candidate = current + direction * np.sign(grad)
    return np.clip(x_inv + m * candidate, 0.0, 255.0)


def quantize(image: np.ndarray) -> np.ndarray:
    """Round a [0, 255] float buffer to uint8 (round half to even)."""
    return np.rint(np.clip(image, 0.0, 255.0)).astype(np.uint8)


def run_attack(image: np.ndarray, mask: ObjectMask | np.ndarray,
               model: VictimModel, true_label_id: int, config: AttackConfig,
               on_iteration: Callable[[int, np.ndarray], None] | None = None) -> AttackResult:
    """Run the masked iterative attack and return the adversarial result.

    The loop starts from the original image, evaluates the victim on each
    iterate, applies the masked update, and stops early once the configured
    probability and loss conditions hold for the evaluated iterate. The
    background is carried by the inverse image, so every iterate matches the
    original exactly outside the mask.

    ``on_iteration`` receives (update index, float iterate after the update)
    and exists for trace-level inspection in tests and diagnostics.
    """
    config.validate()
    true_label_id = model.check_label(true_label_id)
    if config.mode == MODE_TARGETED:
        target = model.check_label(config.target_label_id)
        if target == true_label_id:
            raise ParameterError("target label must differ from the true label")
    else:
        target = None

    original = np.asarray(image)
    m = _aligned_mask(original, mask)
    x0 = original.astype(np.float64)

    mask_pixels = int(np.count_nonzero(m))
    if mask_pixels == 0 and not config.run_on_empty_mask:
        log.warning("empty mask: attack returns the original image unchanged")
        return AttackResult(
            adversarial=quantize(x0),
            iterations_run=0,
            stopped_early=False,
            empty_mask=True,
        )

    x_inv = x0 * (1.0 - m)
    current = x0.copy()
    trace: list[IterationRecord] = []
    stopped_early = False
    iterations_run = 0

    for n in range(config.max_iters):
        probs = model.predict(current)
        grad_label = target if config.mode == MODE_TARGETED else true_label_id
        loss, grad = model.loss_and_gradient(current, grad_label)
        top1_id, _ = topk(probs, 1)[0]
        true_prob = float(probs[true_label_id])
        trace.append(IterationRecord(iteration=n, loss=float(loss),
                                     true_prob=true_prob, top1_id=top1_id))

        current = mifgsm_step(current, x_inv, m[..., 0] if original.ndim == 3 else m,
                              grad, config.epsilon, config.mode)
        if config.quantize_each_step:
            current = np.rint(current)
        iterations_run = n + 1
        if on_iteration is not None:
            on_iteration(n, current)

        if config.mode == MODE_UNTARGETED:
            if true_prob < config.prob_floor and loss > config.loss_threshold:
                stopped_early = True
                break
        else:
            if float(probs[target]) > 1.0 - config.prob_floor:
                stopped_early = True
                break

    adversarial = quantize(current)
    mask_bool = m.astype(bool)
    if original.ndim == 3:
        mask_bool = np.broadcast_to(mask_bool, original.shape)
    diff = np.abs(adversarial.astype(np.int64) - original.astype(np.int64))
    inside = diff[mask_bool]
    noise_linf = float(inside.max()) if inside.size else 0.0
    if original.ndim == 3:
        changed = (diff > 0).any(axis=2) & m[..., 0].astype(bool)
    else:
        changed = (diff > 0) & m.astype(bool)
    l0 = float(np.count_nonzero(changed)) / mask_pixels if mask_pixels else 0.0

    return AttackResult(
        adversarial=adversarial,
        iterations_run=iterations_run,
        stopped_early=stopped_early,
        trace=trace,
        noise_linf=noise_linf,
        noise_l0_fraction=l0,
        empty_mask=mask_pixels == 0,
    )


def save_adversarial(result: AttackResult, path: Path | str) -> None:
    """Write the adversarial image as lossless PNG; lossy suffixes rejected."""
    path = Path(path)
    if path.suffix.lower() in LOSSY_EXTENSIONS:
        raise ParameterError(
            f"refusing {path.suffix} output: adversarial images must be "
            "written as lossless PNG"
        )
    if path.suffix.lower() != ".png":
        raise ParameterError(f"adversarial output must use a .png suffix, got {path.name}")
    save_image(result.adversarial, path)


def write_trace(result: AttackResult, config: AttackConfig, path: Path | str) -> None:
    """Dump config, per-iteration records, and noise statistics as JSON."""
    payload = {
        "config": asdict(config),
        "iterations_run": result.iterations_run,
        "stopped_early": result.stopped_early,
        "empty_mask": result.empty_mask,
        "noise": {
            "linf": result.noise_linf,
            "l0_fraction": result.noise_l0_fraction,
        },
        "iterations": [asdict(record) for record in result.trace],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_trace(path: Path | str) -> dict:
    return json.loads(Path(path).read_text())
