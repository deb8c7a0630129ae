"""Synthetic ground truth: label maps rendered at any field strength through
the signal model, then blurred by a known kernel and corrupted by noise."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import PhantomError
from .image import Kernel, convolve_same
from .metrics import TISSUES, Tissue
from .physics import AcquisitionParams, se_signal_factor

DEFAULT_PD = {"CSF": 1.0, "GM": 0.8, "WM": 0.7}
# T1 in ms per tissue; WM/GM match the default T1Table anchors
T1_LF = {"CSF": 4000.0, "GM": 1200.0, "WM": 650.0}
T1_HF = {"CSF": 4300.0, "GM": 1600.0, "WM": 850.0}
GEOMETRIES = ("nested_ellipses", "random_blobs")


@dataclass(frozen=True)
class PhantomSpec:
    """``shape`` is the array shape (rows, cols) of the generated slice."""

    shape: tuple = (128, 128)
    geometry: str = "nested_ellipses"
    pd: dict = field(default_factory=lambda: dict(DEFAULT_PD))
    seed: int = 0

    def __post_init__(self):
        if len(self.shape) != 2 or min(self.shape) < 64:
            raise PhantomError("shape-too-small", f"phantom needs >= 64x64, got {self.shape}")
        if self.geometry not in GEOMETRIES:
            raise PhantomError("bad-geometry", f"unknown geometry {self.geometry!r}")
        for name, v in self.pd.items():
            if not 0 < v <= 1:
                raise PhantomError("bad-pd", f"PD for {name} must lie in (0, 1], got {v}")


def _ellipse(shape, cy, cx, ay, ax):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0


def _nested_ellipses(spec, rng):
    rows, cols = spec.shape
    cy = rows / 2 - 0.5 + rng.uniform(-2, 2)
    cx = cols / 2 - 0.5 + rng.uniform(-2, 2)
    ay = 0.42 * rows * rng.uniform(0.95, 1.0)
    ax = 0.40 * cols * rng.uniform(0.95, 1.0)
    labels = np.zeros(spec.shape, dtype=np.int16)
    labels[_ellipse(spec.shape, cy, cx, ay, ax)] = Tissue.WM
    # area shares roughly those of adult brain: CSF 12 %, GM 45 %, WM 43 %
    labels[_ellipse(spec.shape, cy, cx, 0.755 * ay, 0.755 * ax)] = Tissue.GM
    labels[_ellipse(spec.shape, cy, cx, 0.35 * ay, 0.35 * ax)] = Tissue.CSF
    return labels


def _random_blobs(spec, rng):
    rows, cols = spec.shape
    cy, cx = rows / 2 - 0.5, cols / 2 - 0.5
    ay, ax = 0.45 * rows, 0.45 * cols
    labels = np.zeros(spec.shape, dtype=np.int16)
    head = _ellipse(spec.shape, cy, cx, ay, ax)
    labels[head] = Tissue.WM
    target = max(2, (rows * cols) // 800)
    placed = []
    yy, xx = np.mgrid[:rows, :cols]
    for _ in range(200 * target):
        if len(placed) == target:
            break
        r = rng.uniform(4.0, 8.0)
        py = rng.uniform(cy - ay, cy + ay)
        px = rng.uniform(cx - ax, cx + ax)
        # whole disc (plus a 2 px gap) must sit inside the head
        if ((py - cy) / (ay - r - 2)) ** 2 + ((px - cx) / (ax - r - 2)) ** 2 > 1.0:
            continue
        if any(np.hypot(py - qy, px - qx) < r + qr + 3 for qy, qx, qr in placed):
            continue
        placed.append((py, px, r))
    for i, (py, px, r) in enumerate(placed):
        disc = (yy - py) ** 2 + (xx - px) ** 2 <= r * r
        labels[disc] = Tissue.CSF if i % 2 == 0 else Tissue.GM
    return labels


def make_labels(spec: PhantomSpec) -> np.ndarray:
    """Deterministic label map with codes 0=BG, 1=CSF, 2=GM, 3=WM."""
    rng = np.random.default_rng(spec.seed)
    if spec.geometry == "nested_ellipses":
        return _nested_ellipses(spec, rng)
    return _random_blobs(spec, rng)


def render(labels, acq: AcquisitionParams, t1_per_tissue: dict, pd: dict) -> np.ndarray:
    """Piecewise-constant image ``pd(t) * signal_factor(TR, T1(t), flip)``."""
    labels = np.asarray(labels)
    out = np.zeros(labels.shape)
    for t in TISSUES:
        sel = labels == t
        if not sel.any():
            continue
        if t.name not in t1_per_tissue or t.name not in pd:
            raise PhantomError("missing-tissue", f"no T1/PD entry for {t.name}")
        out[sel] = pd[t.name] * se_signal_factor(acq.tr, t1_per_tissue[t.name], acq.flip_angle)
    return out


def degrade(img, kernel: Kernel, noise_sd: float, seed: int = 0) -> np.ndarray:
    """Blur with ``kernel``, add seeded Gaussian noise, clamp to [0, 1.5]."""
    if noise_sd < 0:
        raise PhantomError("bad-noise", "noise_sd must be >= 0")
    out = convolve_same(img, kernel)
    if noise_sd > 0:
        out = out + np.random.default_rng(seed).normal(0.0, noise_sd, out.shape)
    return np.clip(out, 0.0, 1.5)


@dataclass
class PhantomCase:
    """Everything needed to regenerate one degraded low-field phantom."""

    spec: PhantomSpec = field(default_factory=PhantomSpec)
    acq_l: AcquisitionParams = AcquisitionParams(field_strength=1.5)
    acq_h: AcquisitionParams = AcquisitionParams(field_strength=3.0)
    t1_l: dict = field(default_factory=lambda: dict(T1_LF))
    t1_h: dict = field(default_factory=lambda: dict(T1_HF))
    blur_p: int = 5
    blur_sigma: float = 1.0
    noise_sd: float = 0.01
    noise_seed: int = 0

    def kernel(self) -> Kernel:
        return Kernel.gaussian(self.blur_p, self.blur_sigma, "replicate")

    def generate(self):
        """Return ``(labels, lf_clean, hf_truth, y)``."""
        labels = make_labels(self.spec)
        lf = render(labels, self.acq_l, self.t1_l, self.spec.pd)
        hf = render(labels, self.acq_h, self.t1_h, self.spec.pd)
        y = degrade(lf, self.kernel(), self.noise_sd, self.noise_seed)
        return labels, lf, hf, y

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"]["shape"] = list(self.spec.shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomCase":
        d = dict(d)
        spec = dict(d.pop("spec"))
        spec["shape"] = tuple(spec["shape"])
        return cls(
            spec=PhantomSpec(**spec),
            acq_l=AcquisitionParams(**d.pop("acq_l")),
            acq_h=AcquisitionParams(**d.pop("acq_h")),
            **d,
        )
