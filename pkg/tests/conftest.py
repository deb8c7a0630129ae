import numpy as np
import pytest

from lf2hf.phantom import PhantomCase, PhantomSpec


def textured(shape=(32, 32), seed=0):
    """Smooth-plus-noise image with a rich spectrum, values in (0, 1)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    base = 0.5 + 0.2 * np.sin(xx / 3.0) * np.cos(yy / 5.0)
    return np.clip(base + 0.1 * rng.random(shape), 0.0, 1.0)


def phantom_case(seed=0, size=128, geometry="nested_ellipses", noise_sd=0.01):
    spec = PhantomSpec(shape=(size, size), geometry=geometry, seed=seed)
    return PhantomCase(spec=spec, noise_sd=noise_sd, noise_seed=seed)


@pytest.fixture(scope="session")
def phantom():
    """(labels, lf_clean, hf_truth, y) for the default 128x128 phantom."""
    return phantom_case().generate()
