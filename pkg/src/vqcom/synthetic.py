"""Procedural toy images for training and benchmarking the pipeline.

Band textures are piecewise-constant stripes aligned to the patch grid, so a
patch autoencoder plus small codebook represents them exactly and a neighbor
context model has real structure to learn. Checker textures alternate two
levels on the patch grid.
"""

from __future__ import annotations

import numpy as np

_LEVELS = np.array([0.1, 0.3, 0.5, 0.7, 0.9])


def band_texture(
    h: int, w: int, rng: np.random.Generator, s: int = 8, noise: float = 0.005
) -> np.ndarray:
    """Axis-aligned constant bands with widths that are multiples of s."""
    horizontal = bool(rng.integers(2))
    n_bands = (h if horizontal else w) // s
    levels = rng.choice(_LEVELS, size=n_bands)
    # merge runs: with prob 1/3 a band repeats its predecessor's level
    for i in range(1, n_bands):
        if rng.random() < 1 / 3:
            levels[i] = levels[i - 1]
    img = np.empty((h, w, 1), dtype=np.float64)
    for i, lv in enumerate(levels):
        if horizontal:
            img[i * s : (i + 1) * s, :, 0] = lv
        else:
            img[:, i * s : (i + 1) * s, 0] = lv
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def checker_texture(
    h: int, w: int, rng: np.random.Generator, s: int = 8, noise: float = 0.005
) -> np.ndarray:
    """Two-level checkerboard on the patch grid."""
    a, b = rng.choice(_LEVELS, size=2, replace=False)
    rows = np.arange(h) // s
    cols = np.arange(w) // s
    parity = (rows[:, None] + cols[None, :]) % 2
    img = np.where(parity == 0, a, b)[:, :, None].astype(np.float64)
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def texture_corpus(
    n: int, h: int, w: int, seed: int = 0, s: int = 8, noise: float = 0.005
) -> list[np.ndarray]:
    """Mixed corpus of band and checker textures, deterministic per seed."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        maker = band_texture if i % 4 != 3 else checker_texture
        out.append(maker(h, w, rng, s=s, noise=noise))
    return out
