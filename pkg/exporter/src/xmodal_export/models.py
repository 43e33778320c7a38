"""Encoder registry.

Two families:

- ``toy``: the built-in deterministic reference encoders (no weights,
  32-dimensional shared space). Intended for pipeline testing.
- ``clip:<model_id>``: a CLIP checkpoint loaded through the
  ``transformers`` library, e.g. ``clip:openai/clip-vit-base-patch32``.
  Requires torch + transformers and locally available weights; raises
  ModelLoadError otherwise. Inference runs in eval mode with gradients
  off, so repeated exports are byte-identical.

Audio towers (AudioCLIP-style) are not bundled: the toy audio encoder
covers pipeline testing, and real audio checkpoints can be integrated
by adding an Encoder subclass with an ``encode_audio_batch``.
"""
from __future__ import annotations

import numpy as np

from . import toy
from .errors import ModelLoadError


class Encoder:
    name: str
    dimension: int

    def encode_image_batch(self, images) -> np.ndarray:
        raise ModelLoadError(f"{self.name} has no image tower")

    def encode_text_batch(self, texts) -> np.ndarray:
        raise ModelLoadError(f"{self.name} has no text tower")

    def encode_audio_batch(self, paths) -> np.ndarray:
        raise ModelLoadError(f"{self.name} has no audio tower")


class ToyEncoder(Encoder):
    name = "toy"
    dimension = toy.DIM

    def encode_image_batch(self, images):
        return np.stack([toy.encode_image(im) for im in images])

    def encode_text_batch(self, texts):
        return np.stack([toy.encode_text(t) for t in texts])

    def encode_audio_batch(self, paths):
        return np.stack([toy.encode_audio(p) for p in paths])


class ClipEncoder(Encoder):
    def __init__(self, model_id: str):
        self.name = f"clip:{model_id}"
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(
                f"{self.name} needs torch and transformers installed "
                f"(pip install 'xmodal-export[clip]'): {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(
                f"cannot load weights for {model_id!r}: {exc}"
            ) from exc
        self._model.eval()
        self._torch = torch
        self.dimension = int(self._model.config.projection_dim)

    def encode_image_batch(self, images):
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def encode_text_batch(self, texts):
        inputs = self._processor(
            text=list(texts), return_tensors="pt", padding=True, truncation=True
        )
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def load_encoder(model_id: str) -> Encoder:
    if model_id == "toy":
        return ToyEncoder()
    if model_id.startswith("clip:"):
        return ClipEncoder(model_id.split(":", 1)[1])
    raise ModelLoadError(
        f"unknown model {model_id!r}; use 'toy' or 'clip:<hf model id>'"
    )
