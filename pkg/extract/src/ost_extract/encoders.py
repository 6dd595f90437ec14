"""Joint image/text encoders.

``ClipEncoder`` wraps a pretrained contrastive checkpoint (ViT-B/16 family
by default) through the transformers API; it needs the weights to be
available locally or downloadable.

``TinyJointEncoder`` is a deterministic, dependency-light stand-in used by
the test suite and ``--encoder toy`` runs: both modalities map into a shared
color-statistics space, so a caption naming the colors of an image lands
near that image.  It exists because extraction must be testable on machines
without model weights; it is not a recognition-grade encoder.
"""

from __future__ import annotations

import re

import numpy as np


class EncoderLoadError(RuntimeError):
    """The requested encoder could not be constructed."""


_COLOR_RGB = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
    "gray": (0.5, 0.5, 0.5),
    "grey": (0.5, 0.5, 0.5),
    "orange": (1.0, 0.5, 0.0),
    "purple": (0.5, 0.0, 0.5),
    "brown": (0.6, 0.3, 0.1),
    "pink": (1.0, 0.75, 0.8),
}

_WORD = re.compile(r"[a-z]+")


def _rgb_features(rgb: np.ndarray) -> np.ndarray:
    r, g, b = (float(x) for x in rgb)
    return np.array(
        [
            r,
            g,
            b,
            (r + g + b) / 3.0,          # brightness
            r - g,                       # red-green opponent
            (r + g) / 2.0 - b,           # yellow-blue opponent
            max(r, g, b) - min(r, g, b), # saturation proxy
            0.5,                         # bias keeps all-zero inputs usable
        ]
    )


class TinyJointEncoder:
    """Deterministic color-statistics embedding shared by both modalities."""

    dim = 8
    name = "toy"

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            words = _WORD.findall(text.lower())
            hits = [np.array(_COLOR_RGB[w]) for w in words if w in _COLOR_RGB]
            rgb = np.mean(hits, axis=0) if hits else np.array([0.5, 0.5, 0.5])
            rows.append(_rgb_features(rgb))
        return np.stack(rows)

    def encode_images(self, images) -> np.ndarray:
        rows = []
        for image in images:
            rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
            rows.append(_rgb_features(rgb.mean(axis=(0, 1))))
        return np.stack(rows)


class ClipEncoder:
    """Pretrained contrastive image-text encoder via transformers."""

    name = "clip"

    def __init__(self, model_id: str = "openai/clip-vit-base-patch16"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderLoadError(f"transformers/torch not installed: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load checkpoint {model_id!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.model_id = model_id
        self.dim = int(self._model.config.projection_dim)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        inputs = self._processor(text=texts, return_tensors="pt", padding=True, truncation=False)
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return features.cpu().numpy().astype(np.float64)

    def encode_images(self, images) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return features.cpu().numpy().astype(np.float64)


def load_encoder(spec: str):
    """``toy`` for the built-in encoder, anything else as a checkpoint id."""
    if spec == "toy":
        return TinyJointEncoder()
    return ClipEncoder(spec)
