"""Acquisition physics: signal factors, field-strength scale ratios and the
pixel-wise scale map that turns a low-field image into a simulated
high-field one.

The T1-dependent signal factor is implemented in the form

    (1 - exp(-TR/T1) * sin(theta)) / (1 - exp(-TR/T1) * cos(theta))

which coincides with the textbook spin-echo saturation-recovery term at
theta = 90 degrees. Proton density, B0^2 and the T2 decay term cancel in the
ratio between fields once both images share a common intensity normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhysicsError
from .image import as_image, check_same_shape, percentile

SEQUENCES = ("SE", "GRE")


@dataclass(frozen=True)
class AcquisitionParams:
    field_strength: float = 1.5  # tesla
    tr: float = 500.0  # ms
    te: float = 15.0  # ms
    flip_angle: float = 90.0  # degrees
    sequence: str = "SE"

    def __post_init__(self):
        if not self.tr > 0:
            raise PhysicsError("invalid-acquisition", f"TR must be > 0, got {self.tr}")
        if not self.te >= 0:
            raise PhysicsError("invalid-acquisition", f"TE must be >= 0, got {self.te}")
        if not 0 < self.flip_angle <= 180:
            raise PhysicsError(
                "invalid-acquisition", f"flip angle must lie in (0, 180], got {self.flip_angle}"
            )
        if not self.field_strength > 0:
            raise PhysicsError("invalid-acquisition", "field strength must be positive")
        if self.sequence not in SEQUENCES:
            raise PhysicsError("invalid-acquisition", f"unknown sequence {self.sequence!r}")


@dataclass(frozen=True)
class T1Table:
    """Literature T1 anchors (ms) for WM and GM at the low and high field."""

    wm_l: float = 650.0
    gm_l: float = 1200.0
    wm_h: float = 850.0
    gm_h: float = 1600.0
    t1_min: float = 200.0
    t1_max: float = 4500.0

    def __post_init__(self):
        if not 0 < self.t1_min < self.t1_max:
            raise PhysicsError("invalid-t1-table", "need 0 < t1_min < t1_max")
        for name in ("wm_l", "gm_l", "wm_h", "gm_h"):
            v = getattr(self, name)
            if not self.t1_min <= v <= self.t1_max:
                raise PhysicsError("invalid-t1-table", f"{name}={v} outside clamp range")
        if not (self.gm_l > self.wm_l and self.gm_h > self.wm_h):
            raise PhysicsError("invalid-t1-table", "GM T1 must exceed WM T1 at each field")

    @property
    def clamp(self):
        return (self.t1_min, self.t1_max)


@dataclass(frozen=True)
class IntensityAnchors:
    q_wm: float
    q_gm: float


@dataclass(frozen=True)
class ScaleMapConfig:
    acq_l: AcquisitionParams = AcquisitionParams(field_strength=1.5)
    acq_h: AcquisitionParams = AcquisitionParams(field_strength=3.0)
    t1: T1Table = T1Table()
    n_bins: int = 256
    background_scale: float = 1.0

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise PhysicsError("invalid-scale-config", f"n_bins must be an integer >= 2, got {self.n_bins}")


def se_signal_factor(tr, t1, flip_angle):
    """T1-dependent signal factor; accepts scalars or arrays for ``t1``."""
    theta = np.deg2rad(flip_angle)
    t1 = np.asarray(t1, dtype=np.float64)
    if np.any(t1 <= 0) or tr <= 0:
        raise PhysicsError("invalid-relaxation", "TR and T1 must be positive")
    e1 = np.exp(-tr / t1)
    den = 1.0 - e1 * np.cos(theta)
    if np.any(np.abs(den) < 1e-12):
        raise PhysicsError("singular-signal-factor", "signal factor denominator vanishes")
    out = (1.0 - e1 * np.sin(theta)) / den
    return float(out) if out.ndim == 0 else out


def scale_ratio(acq_h: AcquisitionParams, acq_l: AcquisitionParams, t1_h, t1_l):
    """Ratio of high-field to low-field signal factors for the given T1s."""
    f_l = se_signal_factor(acq_l.tr, t1_l, acq_l.flip_angle)
    if np.any(np.asarray(f_l) < 1e-12):
        raise PhysicsError("singular-ratio", "low-field signal factor is ~0")
    f_h = se_signal_factor(acq_h.tr, t1_h, acq_h.flip_angle)
    return f_h / f_l


def intensity_anchors(img, mask) -> IntensityAnchors:
    """WM/GM intensity anchors from the foreground histogram.

    WM is the mean of the brightest 5 % of foreground pixels, GM the mean of
    the darkest 20 %.
    """
    arr = as_image(img)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(arr, mask)
    values = arr[mask]
    if values.size < 40:
        raise PhysicsError("too-few-pixels", f"need >= 40 foreground pixels, got {values.size}")
    hi = percentile(values, None, 0.95)
    lo = percentile(values, None, 0.20)
    q_wm = float(values[values >= hi].mean())
    q_gm = float(values[values <= lo].mean())
    if not q_wm > q_gm:
        raise PhysicsError("degenerate-contrast", f"q_WM={q_wm} does not exceed q_GM={q_gm}")
    return IntensityAnchors(q_wm=q_wm, q_gm=q_gm)


def t1_of_intensity(q, anchors: IntensityAnchors, w_wm, w_gm, clamp=(200.0, 4500.0)):
    """Linear intensity-to-T1 map through the two anchors, clamped."""
    slope = (w_wm - w_gm) / (anchors.q_wm - anchors.q_gm)
    w = w_gm + (np.asarray(q, dtype=np.float64) - anchors.q_gm) * slope
    w = np.clip(w, clamp[0], clamp[1])
    return float(w) if w.ndim == 0 else w


def bin_ratios(anchors: IntensityAnchors, cfg: ScaleMapConfig) -> np.ndarray:
    """Scale ratio evaluated at each of the ``n_bins`` bin centers on [0, 1]."""
    centers = (np.arange(cfg.n_bins) + 0.5) / cfg.n_bins
    t = cfg.t1
    t1_l = t1_of_intensity(centers, anchors, t.wm_l, t.gm_l, t.clamp)
    t1_h = t1_of_intensity(centers, anchors, t.wm_h, t.gm_h, t.clamp)
    return scale_ratio(cfg.acq_h, cfg.acq_l, t1_h, t1_l)


def bin_index(img, n_bins: int) -> np.ndarray:
    return np.clip(np.floor(np.asarray(img) * n_bins).astype(np.int64), 0, n_bins - 1)


def build_scale_map(img, mask, cfg: ScaleMapConfig = ScaleMapConfig()) -> np.ndarray:
    """Pixel-wise scale map ``c`` such that ``c * img`` has high-field contrast.

    Because the simulated high-field image is ``r * img``, ``c`` is simply the
    per-pixel ratio ``r`` of the pixel's intensity bin; no division by the
    image ever happens, so dark pixels are safe.
    """
    arr = as_image(img)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(arr, mask)
    c = np.full(arr.shape, float(cfg.background_scale))
    if not mask.any():
        return c
    anchors = intensity_anchors(arr, mask)
    table = bin_ratios(anchors, cfg)
    c[mask] = table[bin_index(arr[mask], cfg.n_bins)]
    return c


def simulate_hf(img, c) -> np.ndarray:
    """Simulated high-field image: elementwise product ``c * img``."""
    arr = as_image(img)
    c = as_image(c)
    check_same_shape(arr, c)
    return c * arr
