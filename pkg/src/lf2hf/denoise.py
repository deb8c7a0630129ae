"""Pixelwise non-local means, used to smooth the grain that intensity binning
can leave in the AM estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import as_image


@dataclass(frozen=True)
class NlmConfig:
    patch_radius: int = 1
    search_radius: int = 5
    strength: float = 0.05
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.patch_radius < 0 or self.search_radius < 0:
            raise ValueError("NLM radii must be >= 0")
        if not self.strength > 0:
            raise ValueError("NLM strength must be > 0")
        if self.noise_sd < 0:
            raise ValueError("NLM noise_sd must be >= 0")


def nlm(img, cfg: NlmConfig = NlmConfig()) -> np.ndarray:
    """Classic NLM with weights ``exp(-max(d2 - 2 sd^2, 0) / strength^2)``.

    ``d2`` is the mean squared difference between the (2f+1)^2 patches around
    the two pixels; borders are replicate-padded. The loop runs over search
    offsets, so cost is O(pixels * window), fine for single slices.
    """
    x = as_image(img)
    f, s = cfg.patch_radius, cfg.search_radius
    h, w = x.shape
    pad = f + s
    xp = np.pad(x, pad, mode="edge")
    # region holding every patch around every output pixel
    ref = xp[s : s + h + 2 * f, s : s + w + 2 * f]
    k = 2 * f + 1
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    h2 = cfg.strength**2
    bias = 2.0 * cfg.noise_sd**2
    for di in range(-s, s + 1):
        for dj in range(-s, s + 1):
            moved = xp[s + di : s + di + h + 2 * f, s + dj : s + dj + w + 2 * f]
            diff2 = (ref - moved) ** 2
            d2 = sliding_window_view(diff2, (k, k)).mean(axis=(-2, -1))
            wgt = np.exp(-np.maximum(d2 - bias, 0.0) / h2)
            # accumulate offsets from x so a constant image is an exact fixed point
            num += wgt * (moved[f : f + h, f : f + w] - x)
            den += wgt
    return x + num / den
