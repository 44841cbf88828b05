"""Zero-shot vision-language victim backed by a CLIP checkpoint.

The adapter scores an image against the vocabulary's prompt embeddings and
differentiates the cross-entropy loss back to the raw pixel tensor, folding
the internal /255 scaling and channel normalization into the returned
gradient so the attack can work directly in the 8-bit pixel domain.

Heavy dependencies (torch, transformers) are imported lazily; a missing
backend or unfetchable checkpoint raises BackendUnavailableError at
construction time, never mid-attack.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import BackendUnavailableError, CapabilityError
from .base import ClassVocabulary, VictimModel, check_image

log = logging.getLogger(__name__)

DEFAULT_MODEL_NAME = "openai/clip-vit-base-patch16"

# Channel statistics CLIP checkpoints were trained with.
CLIP_IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)


class ClipVictim(VictimModel):
    """CLIP-based zero-shot classifier over a fixed prompt vocabulary."""

    def __init__(self, vocabulary: ClassVocabulary,
                 model_name: str = DEFAULT_MODEL_NAME,
                 device: str = "cpu",
                 checkpoint_path: str | None = None,
                 batch_size: int = 8,
                 verify_gradients: bool = True):
        try:
            import torch
            from transformers import CLIPModel, CLIPTokenizer
        except ImportError as exc:
            raise BackendUnavailableError(
                "the CLIP victim needs torch and transformers installed "
                "(pip install 'advsplat[clip]')"
            ) from exc

        source = checkpoint_path or model_name
        try:
            model = CLIPModel.from_pretrained(source)
            tokenizer = CLIPTokenizer.from_pretrained(source)
        except Exception as exc:
            raise BackendUnavailableError(
                f"could not load CLIP weights from {source!r}: {exc}. "
                "Provide a local checkpoint_path or a populated HF cache."
            ) from exc

        self._torch = torch
        self.vocabulary = vocabulary
        self.model_name = source
        self.device = torch.device(device)
        self.batch_size = int(batch_size)
        self.input_side = int(model.config.vision_config.image_size)

        model = model.to(self.device)
        model.eval()
        for param in model.parameters():
            param.requires_grad_(False)
        self.model = model

        mean = torch.tensor(CLIP_IMAGE_MEAN, dtype=torch.float32,
                            device=self.device).view(3, 1, 1)
        std = torch.tensor(CLIP_IMAGE_STD, dtype=torch.float32,
                           device=self.device).view(3, 1, 1)
        self._mean = mean
        self._std = std

        with torch.no_grad():
            tokens = tokenizer(vocabulary.prompts(), padding=True, return_tensors="pt")
            tokens = {k: v.to(self.device) for k, v in tokens.items()}
            text = model.get_text_features(**tokens)
            self._text_embeds = text / text.norm(dim=-1, keepdim=True)
            self._logit_scale = model.logit_scale.exp().item()

        if verify_gradients:
            self._verify_gradients()

    def _verify_gradients(self):
        probe = np.full((self.input_side, self.input_side, 3), 127.0)
        try:
            _, grad = self.loss_and_gradient(probe, 0)
        except Exception as exc:
            raise CapabilityError(
                f"CLIP backend cannot provide input gradients: {exc}"
            ) from exc
        if not np.isfinite(grad).all() or not np.any(grad):
            raise CapabilityError(
                "CLIP backend returned a degenerate input gradient"
            )

    def _pixels_to_logits(self, pixel_tensor):
        """Pixel tensor on the [0, 255] scale -> vocabulary logits."""
        normalized = (pixel_tensor / 255.0 - self._mean) / self._std
        image_embeds = self.model.get_image_features(pixel_values=normalized.unsqueeze(0))
        image_embeds = image_embeds / image_embeds.norm(dim=-1, keepdim=True)
        return self._logit_scale * image_embeds @ self._text_embeds.t()

    def _to_tensor(self, image: np.ndarray, requires_grad: bool):
        arr = check_image(image, self.input_side)
        tensor = self._torch.tensor(arr.transpose(2, 0, 1), dtype=self._torch.float32,
                                    device=self.device)
        if requires_grad:
            tensor.requires_grad_(True)
        return tensor

    def predict(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            logits = self._pixels_to_logits(self._to_tensor(image, requires_grad=False))
            probs = torch.softmax(logits, dim=-1)[0]
        out = probs.cpu().numpy().astype(np.float64)
        return out / out.sum()

    def predict_batch(self, images: list[np.ndarray]) -> np.ndarray:
        torch = self._torch
        rows = []
        with torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                chunk = images[start:start + self.batch_size]
                stacked = torch.stack([
                    self._to_tensor(img, requires_grad=False) for img in chunk
                ])
                normalized = (stacked / 255.0 - self._mean) / self._std
                embeds = self.model.get_image_features(pixel_values=normalized)
                embeds = embeds / embeds.norm(dim=-1, keepdim=True)
                logits = self._logit_scale * embeds @ self._text_embeds.t()
                rows.append(torch.softmax(logits, dim=-1).cpu().numpy())
        out = np.concatenate(rows, axis=0).astype(np.float64)
        return out / out.sum(axis=1, keepdims=True)

    def loss_and_gradient(self, image: np.ndarray, label_id: int) -> tuple[float, np.ndarray]:
        torch = self._torch
        label_id = self.check_label(label_id)
        leaf = self._to_tensor(image, requires_grad=True)
        logits = self._pixels_to_logits(leaf)
        target = torch.tensor([label_id], device=self.device)
        loss = torch.nn.functional.cross_entropy(logits, target)
        loss.backward()
        grad = leaf.grad.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float64)
        return float(loss.item()), grad
