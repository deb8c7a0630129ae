"""Estimate high-field-like T1-weighted MR images from low-field acquisitions."""

from .config import PipelineConfig, load_config
from .errors import Lf2hfError
from .image import Kernel, Volume
from .pipeline import enhance_slice, enhance_volume, simulate_volume
from .solver import AMConfig, run_am

__version__ = "0.1.0"

__all__ = [
    "AMConfig",
    "Kernel",
    "Lf2hfError",
    "PipelineConfig",
    "Volume",
    "enhance_slice",
    "enhance_volume",
    "load_config",
    "run_am",
    "simulate_volume",
]
