"""Image containers, robust statistics and same-size 2D convolution.

Images are plain 2D ``float64`` numpy arrays and masks are boolean arrays of
the same shape. The convolution pair ``convolve_same`` /
``adjoint_convolve_same`` are exact adjoints of each other for every boundary
mode, which the solver relies on when it forms normal equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ImageError

BOUNDARIES = ("replicate", "zero", "circular")
_PAD_MODE = {"replicate": "edge", "zero": "constant", "circular": "wrap"}


def as_image(img) -> np.ndarray:
    """Return ``img`` as a finite 2D float64 array (no copy when possible)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ImageError("non-finite", "image contains NaN or Inf")
    return arr


def check_same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")


@dataclass(eq=False)
class Kernel:
    """Odd-sized convolution kernel with its boundary convention.

    ``taps`` is normally ``p x p``; rectangular odd shapes (e.g. ``1 x 3``)
    are accepted so that 1D signals can be convolved as ``1 x N`` images.
    """

    taps: np.ndarray
    boundary: str = "replicate"

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ImageError("bad-kernel", f"kernel must be 2D with odd sides, got {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ImageError("bad-kernel", "kernel taps must be finite")
        if self.boundary not in BOUNDARIES:
            raise ImageError("bad-kernel", f"unknown boundary {self.boundary!r}")
        self.taps = taps

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    @property
    def shape(self):
        return self.taps.shape

    def norm2(self) -> float:
        return float(np.sum(self.taps * self.taps))

    def with_boundary(self, boundary: str) -> "Kernel":
        return Kernel(self.taps, boundary)

    @classmethod
    def delta(cls, p: int = 5, boundary: str = "replicate") -> "Kernel":
        taps = np.zeros((p, p))
        taps[p // 2, p // 2] = 1.0
        return cls(taps, boundary)

    @classmethod
    def box(cls, p: int = 3, boundary: str = "replicate") -> "Kernel":
        return cls(np.full((p, p), 1.0 / (p * p)), boundary)

    @classmethod
    def gaussian(cls, p: int = 5, sigma: float = 1.0, boundary: str = "replicate") -> "Kernel":
        """Normalized isotropic Gaussian sampled on a ``p x p`` grid."""
        r = np.arange(p) - p // 2
        g = np.exp(-(r**2) / (2.0 * sigma**2))
        taps = np.outer(g, g)
        return cls(taps / taps.sum(), boundary)


@dataclass
class Volume:
    """3D scalar volume, ``data[x, y, z]`` with voxel sizes in mm.

    ``orientation`` holds the NIfTI qform/sform fields verbatim so that they
    survive a read/write cycle; nothing in the pipeline interprets them.
    """

    data: np.ndarray
    voxel_dims: tuple = (1.0, 1.0, 1.0)
    orientation: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionError(f"volume must be 3D with positive dims, got {data.shape}")
        self.data = data
        self.voxel_dims = tuple(float(v) for v in self.voxel_dims)

    @property
    def dims(self):
        return self.data.shape

    def slice(self, k: int) -> np.ndarray:
        return np.asarray(self.data[:, :, k], dtype=np.float64)


def percentile(img, mask=None, q: float = 0.5) -> float:
    """Nearest-rank percentile of the masked intensities.

    Returns the sorted value at index ``ceil(q * (n - 1))``. ``q`` is a
    fraction in [0, 1], not a percentage.
    """
    arr = np.asarray(img, dtype=np.float64)
    values = arr if mask is None else arr[_mask_for(arr, mask)]
    values = values.ravel()
    if values.size == 0:
        raise ImageError("empty-mask", "percentile of an empty pixel set")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    n = values.size
    # the small offset keeps e.g. 0.95 * 100 = 95.00000000000001 at rank 95
    rank = min(max(math.ceil(q * (n - 1) - 1e-9), 0), n - 1)
    return float(np.sort(values, kind="stable")[rank])


def _mask_for(arr, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != arr.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match image {arr.shape}")
    return mask


def robust_normalize(img, q_hi: float = 0.999, mask=None, tau: float = 0.02):
    """Scale ``img`` so its ``q_hi`` foreground percentile maps to 1.

    When no mask is given the foreground is every pixel brighter than
    ``tau * max(img)``, which makes the result invariant to a global gain.

    Returns
    -------
    (normalized, scale)
        ``normalized = clip(img / scale, 0, 1)``.
    """
    arr = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ImageError("non-finite", "image contains NaN or Inf")
    peak = float(arr.max()) if arr.size else 0.0
    if peak <= 0.0:
        raise ImageError("degenerate-image", "image has no positive intensities")
    if mask is None:
        mask = arr > tau * peak
    scale = percentile(arr, mask, q_hi)
    if scale <= 0.0:
        raise ImageError("degenerate-image", f"percentile {q_hi} of foreground is not positive")
    return np.clip(arr / scale, 0.0, 1.0), scale


def background_mask(img, tau: float = 0.02) -> np.ndarray:
    """Foreground mask: True where the normalized intensity exceeds ``tau``."""
    return np.asarray(img, dtype=np.float64) > tau


def _pad(img, ry, rx, boundary):
    mode = _PAD_MODE[boundary]
    return np.pad(img, ((ry, ry), (rx, rx)), mode=mode)


def _fold_axis0(z, r, n, boundary):
    # adjoint of padding n rows by r on each side
    core = z[r : r + n].copy()
    if r == 0 or boundary == "zero":
        return core
    if boundary == "replicate":
        core[0] += z[:r].sum(axis=0)
        core[-1] += z[r + n :].sum(axis=0)
    else:
        core[n - r :] += z[:r]
        core[:r] += z[r + n :]
    return core


def _unpad_adjoint(z, ry, rx, shape, boundary):
    z = _fold_axis0(z, ry, shape[0], boundary)
    return _fold_axis0(z.T, rx, shape[1], boundary).T


def _check_fits(img, kernel):
    kh, kw = kernel.shape
    if kh > img.shape[0] or kw > img.shape[1]:
        raise ImageError(
            "kernel-too-large", f"kernel {kernel.shape} exceeds image {img.shape}"
        )


def convolve_same(img, kernel: Kernel) -> np.ndarray:
    """Same-size 2D convolution (kernel flipped) under ``kernel.boundary``.

    Taps are accumulated in a fixed order so results are reproducible to the
    bit across runs.
    """
    x = as_image(img)
    _check_fits(x, kernel)
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    h, w = x.shape
    xp = _pad(x, ry, rx, kernel.boundary)
    out = np.zeros_like(x)
    taps = kernel.taps
    for a in range(kh):
        for b in range(kw):
            t = taps[a, b]
            if t != 0.0:
                out += t * xp[2 * ry - a : 2 * ry - a + h, 2 * rx - b : 2 * rx - b + w]
    return out


def adjoint_convolve_same(img, kernel: Kernel) -> np.ndarray:
    """Exact adjoint of :func:`convolve_same` for the same kernel and boundary."""
    v = as_image(img)
    _check_fits(v, kernel)
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    h, w = v.shape
    z = np.zeros((h + 2 * ry, w + 2 * rx))
    taps = kernel.taps
    for a in range(kh):
        for b in range(kw):
            t = taps[a, b]
            if t != 0.0:
                z[2 * ry - a : 2 * ry - a + h, 2 * rx - b : 2 * rx - b + w] += t * v
    return _unpad_adjoint(z, ry, rx, v.shape, kernel.boundary)


def shifted_copies(img, p: int, boundary: str) -> np.ndarray:
    """Stack of the ``p*p`` shifted images that ``convolve_same`` combines.

    Row ``a * p + b`` holds the image that tap ``(a, b)`` multiplies, so
    ``convolve_same(x, k) == tensordot(k.taps.ravel(), shifted_copies(x, ...), 1)``.
    """
    x = as_image(img)
    r = p // 2
    h, w = x.shape
    xp = _pad(x, r, r, boundary)
    out = np.empty((p * p, h, w))
    for a in range(p):
        for b in range(p):
            out[a * p + b] = xp[2 * r - a : 2 * r - a + h, 2 * r - b : 2 * r - b + w]
    return out
