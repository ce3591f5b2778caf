"""Dense text/image features from a pinned pretrained CLIP checkpoint.

Patch-token features from the vision tower are projected into the shared
text/image space and resized to the requested output grid, giving per-pixel
embeddings directly comparable to the text-tower label embeddings. Outputs
are written exactly as the model emits them, with no renormalization.

Requires the optional `clip` extra (torch + transformers) and a local copy
of the pinned checkpoint; nothing is downloaded implicitly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .backends import MissingWeightsError


class ClipDenseBackend:
    name = "clip"

    def __init__(self, model: str, revision: str, device: str = "cpu"):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as e:
            raise MissingWeightsError(
                f"clip backend needs torch and transformers installed: {e}"
            ) from None
        self.revision = revision
        self.device = device
        source = Path(model)
        if not source.is_dir():
            raise MissingWeightsError(
                f"pinned model weights not found at {model!r}; download revision "
                f"{revision} of the checkpoint and point the lock file at the local copy"
            )
        try:
            self._model = CLIPModel.from_pretrained(source).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(source)
        except Exception as e:
            raise MissingWeightsError(f"cannot load model from {model!r}: {e}") from None
        self.dim = int(self._model.config.projection_dim)

    def encode_text(self, labels: list[str]) -> np.ndarray:
        import torch

        inputs = self._processor(text=labels, return_tensors="pt", padding=True)
        with torch.no_grad():
            features = self._model.get_text_features(
                **{k: v.to(self.device) for k, v in inputs.items()}
            )
        return features.cpu().numpy().astype(np.float32)

    def encode_image(self, image: np.ndarray, downsample: int) -> np.ndarray:
        import torch
        import torch.nn.functional as F

        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
        if downsample < 1:
            raise ValueError(f"downsample factor must be >= 1, got {downsample}")
        h, w = image.shape[:2]
        inputs = self._processor(images=image, return_tensors="pt")
        pixel_values = inputs["pixel_values"].to(self.device)
        with torch.no_grad():
            vision_out = self._model.vision_model(pixel_values)
            tokens = vision_out.last_hidden_state[:, 1:, :]  # drop the CLS token
            tokens = self._model.vision_model.post_layernorm(tokens)
            projected = self._model.visual_projection(tokens)  # (1, P, dim)
            grid = int(round(projected.shape[1] ** 0.5))
            feature_map = projected.reshape(1, grid, grid, self.dim).permute(0, 3, 1, 2)
            out_h = -(-h // downsample)
            out_w = -(-w // downsample)
            resized = F.interpolate(
                feature_map, size=(out_h, out_w), mode="bilinear", align_corners=False
            )
        return (
            resized.squeeze(0).permute(1, 2, 0).cpu().numpy().astype(np.float32)
        )
