"""Image quality metrics, a 3-class intensity segmenter, Dice overlap and
tissue volumes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import MetricsError
from .image import as_image, check_same_shape, percentile


class Tissue(IntEnum):
    BG = 0
    CSF = 1
    GM = 2
    WM = 3


TISSUES = (Tissue.CSF, Tissue.GM, Tissue.WM)


def tissue(t) -> Tissue:
    if isinstance(t, str):
        return Tissue[t.upper()]
    return Tissue(int(t))


# -- reference-based --------------------------------------------------------


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak SNR in dB; identical images give ``inf``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak**2 / mse)


@dataclass(frozen=True)
class SsimConfig:
    window: str = "gaussian"  # 11x11, sigma 1.5; or "uniform" 8x8
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window not in ("gaussian", "uniform"):
            raise ValueError(f"unknown SSIM window {self.window!r}")
        if not (self.k1 > 0 and self.k2 > 0 and self.dynamic_range > 0):
            raise ValueError("SSIM constants must be positive")

    def weights(self) -> np.ndarray:
        if self.window == "uniform":
            return np.full((8, 8), 1.0 / 64.0)
        r = np.arange(11) - 5
        g = np.exp(-(r**2) / (2 * 1.5**2))
        w = np.outer(g, g)
        return w / w.sum()


def _window_stats(a, b, w):
    k = w.shape
    if a.shape[0] < k[0] or a.shape[1] < k[1]:
        raise MetricsError("image-too-small", f"image {a.shape} smaller than window {k}")
    A = sliding_window_view(a, k)
    B = sliding_window_view(b, k)
    mu_a = np.einsum("ijkl,kl->ij", A, w)
    mu_b = np.einsum("ijkl,kl->ij", B, w)
    da = A - mu_a[..., None, None]
    db = B - mu_b[..., None, None]
    var_a = np.einsum("ijkl,kl->ij", da * da, w)
    var_b = np.einsum("ijkl,kl->ij", db * db, w)
    cov = np.einsum("ijkl,kl->ij", da * db, w)
    # exact zeros for flat windows; rounding in mu would otherwise leave ~1e-34
    flat_a = A.max(axis=(-2, -1)) == A.min(axis=(-2, -1))
    flat_b = B.max(axis=(-2, -1)) == B.min(axis=(-2, -1))
    var_a[flat_a] = 0.0
    var_b[flat_b] = 0.0
    cov[flat_a | flat_b] = 0.0
    return mu_a, mu_b, var_a, var_b, cov


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over all fully-contained windows."""
    a = as_image(a)
    b = as_image(b)
    check_same_shape(a, b)
    mu_a, mu_b, var_a, var_b, cov = _window_stats(a, b, cfg.weights())
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def uqi(a, b, window: int = 8) -> float:
    """Universal quality index over ``window x window`` uniform windows.

    Windows whose denominator is exactly zero (both flat, or both zero-mean)
    are left out of the mean. If every window is degenerate the index is 1
    for identical images and undefined otherwise.
    """
    a = as_image(a)
    b = as_image(b)
    check_same_shape(a, b)
    w = np.full((window, window), 1.0 / window**2)
    mu_a, mu_b, var_a, var_b, cov = _window_stats(a, b, w)
    den = (mu_a**2 + mu_b**2) * (var_a + var_b)
    ok = den > 0
    if not ok.any():
        if np.array_equal(a, b):
            return 1.0
        raise MetricsError("undefined-uqi", "every window has a zero denominator")
    q = 4.0 * cov[ok] * mu_a[ok] * mu_b[ok] / den[ok]
    return float(np.mean(q))


# -- no-reference -----------------------------------------------------------


def signal_difference(img, labels, t_a, t_b) -> float:
    """Mean intensity of tissue ``t_a`` minus that of ``t_b``."""
    img = np.asarray(img, dtype=np.float64)
    labels = np.asarray(labels)
    check_same_shape(img, labels)
    means = []
    for t in (tissue(t_a), tissue(t_b)):
        sel = labels == t
        if not sel.any():
            raise MetricsError("missing-tissue", f"no {t.name} pixels in label map")
        means.append(float(img[sel].mean()))
    return means[0] - means[1]


def _line_edges(line, threshold):
    """Distinct (width, height) of edges along one 1D profile."""
    d = np.diff(line)
    n = line.size
    seen = set()
    out = []
    for i in np.flatnonzero(np.abs(d) > threshold):
        sgn = 1.0 if d[i] > 0 else -1.0
        lo = i
        while lo > 0 and sgn * (line[lo] - line[lo - 1]) > 0:
            lo -= 1
        hi = i + 1
        while hi < n - 1 and sgn * (line[hi + 1] - line[hi]) > 0:
            hi += 1
        if (lo, hi) in seen:
            continue
        seen.add((lo, hi))
        out.append((hi - lo, abs(line[hi] - line[lo])))
    return out


def sharpness(img):
    """Edge-profile sharpness estimator.

    Every row and column is scanned as a 1D profile. Steps whose absolute
    first difference exceeds the 90th percentile of all first differences are
    edges; each edge is widened to the nearest local extrema on both sides.

    Returns
    -------
    (sharpness, edge_width, edge_height)
        ``sharpness = 100 * mean(height / width)``; width in pixels.
    """
    x = as_image(img)
    if min(x.shape) < 5:
        raise MetricsError("image-too-small", "sharpness needs at least 5x5 pixels")
    diffs = np.concatenate([np.abs(np.diff(x, axis=1)).ravel(), np.abs(np.diff(x, axis=0)).ravel()])
    threshold = percentile(diffs, None, 0.90)
    edges = []
    for row in x:
        edges.extend(_line_edges(row, threshold))
    for col in x.T:
        edges.extend(_line_edges(col, threshold))
    if not edges:
        raise MetricsError("featureless-image", "no edges above threshold")
    e = np.asarray(edges, dtype=np.float64)
    widths, heights = e[:, 0], e[:, 1]
    return 100.0 * float(np.mean(heights / widths)), float(widths.mean()), float(heights.mean())


# -- segmentation -----------------------------------------------------------


def _kmeans_1d(values, k, rng, max_iter, tol):
    # k-means++ seeding
    centers = [values[rng.integers(values.size)]]
    for _ in range(1, k):
        d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(values[rng.integers(values.size)])
        else:
            centers.append(values[rng.choice(values.size, p=d2 / total)])
    centers = np.array(centers, dtype=np.float64)
    for _ in range(max_iter):
        assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        new = centers.copy()
        for j in range(k):
            members = values[assign == j]
            if members.size:
                new[j] = members.mean()
            else:
                # reseed an empty cluster at the worst-fit value
                err = np.abs(values - centers[assign])
                new[j] = values[np.argmax(err)]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < tol:
            break
    assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    inertia = float(np.sum((values - centers[assign]) ** 2))
    return centers, inertia


def segment3(img, mask, seed: int = 0, n_init: int = 5, max_iter: int = 100, tol: float = 1e-8):
    """Seeded 3-class k-means on foreground intensities.

    Classes are ordered by centroid: darkest is CSF, middle GM, brightest WM
    (T1-weighted contrast). Background pixels get label 0.
    """
    x = np.asarray(img, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(x, mask)
    values = x[mask]
    if np.unique(values).size < 3:
        raise MetricsError("degenerate-clustering", "fewer than 3 distinct foreground values")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, inertia = _kmeans_1d(values, 3, rng, max_iter, tol)
        if best is None or inertia < best[1]:
            best = (centers, inertia)
    centers = np.sort(best[0])
    assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    labels = np.zeros(x.shape, dtype=np.int16)
    labels[mask] = np.array([Tissue.CSF, Tissue.GM, Tissue.WM], dtype=np.int16)[assign]
    return labels


def dice(a, b, t) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b)
    t = tissue(t)
    A = a == t
    B = b == t
    size = int(A.sum()) + int(B.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.sum(A & B)) / size


def tissue_volumes(labels, voxel_dims=(1.0, 1.0, 1.0)) -> dict:
    """Volume in mm^3 of each tissue class."""
    if any(v <= 0 for v in voxel_dims):
        raise MetricsError("invalid-voxel-dims", "voxel dimensions must be positive")
    vox = float(np.prod(voxel_dims))
    labels = np.asarray(labels)
    return {t.name: int(np.sum(labels == t)) * vox for t in TISSUES}
