"""Patch feature extractors.

`vit-b16` uses the torchvision ViT-B/16 backbone (224x224 input, 14x14
patch grid, 768-d patch tokens); `--weights pretrained` loads ImageNet
weights when available, `--weights none` keeps the seeded random
initialization so exports work fully offline. `patch-stats` is a
torch-free fallback: per-patch intensity/gradient statistics pushed
through a seeded random projection.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

INPUT_SIZE = 224


class ExportError(Exception):
    pass


def load_frame(path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB").resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    except OSError as exc:
        raise ExportError(f"unreadable frame {path}: {exc}") from exc


class PatchStatsExtractor:
    """Per-patch channel means/stds and gradient energy, projected to
    `dim` features with a seed-fixed Gaussian matrix."""

    RAW_STATS = 8

    def __init__(self, grid=(4, 4), dim=32, seed=0):
        self.grid = tuple(grid)
        self.dim = int(dim)
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((self.RAW_STATS, self.dim)) / np.sqrt(self.RAW_STATS)

    def extract(self, frame: Image.Image) -> np.ndarray:
        arr = np.asarray(frame, dtype=np.float64) / 255.0
        rows, cols = self.grid
        ph, pw = INPUT_SIZE // rows, INPUT_SIZE // cols
        gy, gx = np.gradient(arr.mean(axis=2))
        stats = np.zeros((rows * cols, self.RAW_STATS))
        for r in range(rows):
            for c in range(cols):
                block = arr[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw]
                grad = np.hypot(gy[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw],
                                gx[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw])
                stats[r * cols + c] = [
                    block[..., 0].mean(), block[..., 1].mean(), block[..., 2].mean(),
                    block[..., 0].std(), block[..., 1].std(), block[..., 2].std(),
                    grad.mean(), grad.std(),
                ]
        return (stats @ self._projection).astype(np.float32)


class VitExtractor:
    """Patch tokens from torchvision's ViT-B/16 encoder (class token
    dropped), in eval mode with gradients disabled."""

    def __init__(self, weights="none", seed=0):
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise ExportError(f"vit-b16 extractor needs torch/torchvision: {exc}") from exc
        self._torch = torch
        torch.manual_seed(seed)
        if weights == "pretrained":
            try:
                enum = torchvision.models.ViT_B_16_Weights.IMAGENET1K_V1
                model = torchvision.models.vit_b_16(weights=enum)
            except Exception as exc:  # noqa: BLE001 - downloads can fail offline
                raise ExportError(f"pretrained ViT weights unavailable: {exc}") from exc
        elif weights == "none":
            model = torchvision.models.vit_b_16(weights=None)
        else:
            model = torchvision.models.vit_b_16(weights=None)
            state = torch.load(weights, map_location="cpu")
            model.load_state_dict(state)
        model.eval()
        self._model = model
        self.grid = (14, 14)
        self.dim = 768
        mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)
        self._mean, self._std = mean, std

    def extract(self, frame: Image.Image) -> np.ndarray:
        torch = self._torch
        arr = np.asarray(frame, dtype=np.float32) / 255.0
        x = torch.from_numpy(arr).permute(2, 0, 1)
        x = ((x - self._mean) / self._std).unsqueeze(0)
        with torch.no_grad():
            tokens = self._model._process_input(x)
            cls = self._model.class_token.expand(tokens.shape[0], -1, -1)
            out = self._model.encoder(torch.cat([cls, tokens], dim=1))
        return out[0, 1:].numpy().astype(np.float32)


def build_extractor(name, grid=(4, 4), dim=32, weights="none", seed=0):
    if name == "patch-stats":
        return PatchStatsExtractor(grid=grid, dim=dim, seed=seed)
    if name == "vit-b16":
        return VitExtractor(weights=weights, seed=seed)
    raise ExportError(f"unknown extractor {name!r}")
