"""End-to-end enhancement: normalize, mask, scale map, AM, optional NLM.

Volumes are processed one axial slice at a time with an independent kernel
and scale map per slice. Intensity normalization is shared by the whole
volume so slices stay comparable.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .denoise import nlm
from .image import Kernel, Volume, background_mask, robust_normalize
from .physics import build_scale_map, simulate_hf
from .solver import AMTrace, run_am

log = logging.getLogger(__name__)

# intensity anchors need at least this many foreground pixels
MIN_FOREGROUND = 40


@dataclass
class SliceResult:
    x: np.ndarray  # normalized estimate (after NLM when enabled)
    scale_map: np.ndarray
    kernel: Kernel | None = None
    trace: AMTrace | None = None


def scale_map_for(y, cfg: PipelineConfig):
    """Scale map and foreground mask for one normalized slice."""
    mask = background_mask(y, cfg.normalization.background_tau)
    if mask.sum() < MIN_FOREGROUND:
        return np.full(y.shape, float(cfg.scale_map.background_scale)), mask
    return build_scale_map(y, mask, cfg.scale_map_config()), mask


def enhance_slice(y, cfg: PipelineConfig = PipelineConfig(), use_nlm=None) -> SliceResult:
    """Enhance one normalized slice.

    Slices with too little foreground for intensity anchors are passed
    through as ``c * y`` without running the solver.
    """
    y = np.asarray(y, dtype=np.float64)
    c, mask = scale_map_for(y, cfg)
    if mask.sum() < MIN_FOREGROUND:
        return SliceResult(x=simulate_hf(y, c), scale_map=c)
    x, h, trace = run_am(y, c, cfg.am)
    enabled = cfg.nlm.enabled if use_nlm is None else use_nlm
    if enabled:
        x = nlm(x, cfg.nlm.params())
    return SliceResult(x=x, scale_map=c, kernel=h, trace=trace)


def _slice_job(args):
    y, cfg, use_nlm = args
    return enhance_slice(y, cfg, use_nlm)


def normalized_slices(vol: Volume, cfg: PipelineConfig, slices=None):
    norm, scale = robust_normalize(vol.data, cfg.normalization.q_hi, tau=cfg.normalization.background_tau)
    idx = list(range(vol.dims[2])) if slices is None else list(slices)
    return [norm[:, :, k] for k in idx], idx, scale


def enhance_volume(vol: Volume, cfg: PipelineConfig = PipelineConfig(), use_nlm=None, slices=None, workers: int = 1):
    """Run the pipeline on ``vol``.

    Returns
    -------
    (volume, results, indices, scale)
        ``volume`` holds the estimate in the input's intensity units, one
        z-slice per selected index; ``results`` are the per-slice
        :class:`SliceResult` objects in the same order.
    """
    ys, idx, scale = normalized_slices(vol, cfg, slices)
    jobs = [(y, cfg, use_nlm) for y in ys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_slice_job, jobs))
    else:
        results = [_slice_job(j) for j in jobs]
    for k, res in zip(idx, results):
        if res.trace is not None:
            log.info("slice %d: %d AM iterations, converged=%s", k, len(res.trace), res.trace.converged)
    data = np.stack([res.x * scale for res in results], axis=2)
    out = Volume(data=data, voxel_dims=vol.voxel_dims, orientation=vol.orientation)
    return out, results, idx, scale


def simulate_volume(vol: Volume, cfg: PipelineConfig = PipelineConfig(), slices=None):
    """Physics-only simulation ``c * y`` on the normalized input (no AM)."""
    ys, idx, _ = normalized_slices(vol, cfg, slices)
    data = np.stack([simulate_hf(y, scale_map_for(y, cfg)[0]) for y in ys], axis=2)
    return Volume(data=data, voxel_dims=vol.voxel_dims, orientation=vol.orientation)
