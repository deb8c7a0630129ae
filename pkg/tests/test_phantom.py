import math
from collections import deque

import numpy as np
import pytest

from lf2hf.errors import PhantomError
from lf2hf.image import Kernel, robust_normalize
from lf2hf.metrics import Tissue
from lf2hf.phantom import (
    DEFAULT_PD,
    T1_HF,
    T1_LF,
    PhantomCase,
    PhantomSpec,
    degrade,
    make_labels,
    render,
)
from lf2hf.physics import AcquisitionParams, scale_ratio

from conftest import phantom_case

LF = AcquisitionParams(1.5)
HF = AcquisitionParams(3.0)


def count_components(mask):
    """4-connected components by breadth-first flood fill."""
    seen = np.zeros_like(mask, bool)
    n = 0
    H, W = mask.shape
    for i in range(H):
        for j in range(W):
            if mask[i, j] and not seen[i, j]:
                n += 1
                seen[i, j] = True
                todo = deque([(i, j)])
                while todo:
                    a, b = todo.popleft()
                    for u, v in ((a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)):
                        if 0 <= u < H and 0 <= v < W and mask[u, v] and not seen[u, v]:
                            seen[u, v] = True
                            todo.append((u, v))
    return n


def test_labels_deterministic_and_complete():
    spec = PhantomSpec(seed=7)
    a, b = make_labels(spec), make_labels(spec)
    assert np.array_equal(a, b)
    assert set(np.unique(a).tolist()) == {0, 1, 2, 3}
    blobs = make_labels(PhantomSpec(geometry="random_blobs", seed=7))
    assert set(np.unique(blobs).tolist()) == {0, 1, 2, 3}


def test_blob_count_grows_with_area():
    counts = []
    for size in (64, 128, 192):
        lab = make_labels(PhantomSpec(shape=(size, size), geometry="random_blobs", seed=0))
        counts.append(count_components((lab == Tissue.CSF) | (lab == Tissue.GM)))
    assert counts[0] < counts[1] < counts[2]


def test_spec_invariants():
    with pytest.raises(PhantomError):
        PhantomSpec(shape=(32, 128))
    with pytest.raises(PhantomError):
        PhantomSpec(pd={"CSF": 1.2, "GM": 0.8, "WM": 0.7})
    with pytest.raises(PhantomError):
        PhantomSpec(geometry="sphere")


def test_render_single_tissue():
    lab = np.full((8, 8), Tissue.WM)
    lab[0, 0] = 0
    img = render(lab, AcquisitionParams(1.5, tr=500.0), {"WM": 650.0}, {"WM": 1.0})
    assert img[0, 0] == 0.0
    assert np.all(img[lab == Tissue.WM] == pytest.approx(1 - math.exp(-500 / 650), rel=1e-15))


def test_render_full_recovery():
    lab = make_labels(PhantomSpec())
    img = render(lab, AcquisitionParams(1.5, tr=1e9), T1_LF, DEFAULT_PD)
    for t in (Tissue.CSF, Tissue.GM, Tissue.WM):
        np.testing.assert_allclose(img[lab == t], DEFAULT_PD[t.name], rtol=1e-12)


def test_render_ratio_is_scale_ratio():
    lab = make_labels(PhantomSpec())
    lf = render(lab, LF, T1_LF, DEFAULT_PD)
    hf = render(lab, HF, T1_HF, DEFAULT_PD)
    for t in (Tissue.CSF, Tissue.GM, Tissue.WM):
        ratio = hf[lab == t] / lf[lab == t]
        np.testing.assert_allclose(ratio, scale_ratio(HF, LF, T1_HF[t.name], T1_LF[t.name]), rtol=1e-14)


def test_render_monotone_in_pd():
    lab = make_labels(PhantomSpec())
    base = render(lab, LF, T1_LF, DEFAULT_PD)
    half = render(lab, LF, T1_LF, {k: 0.5 * v for k, v in DEFAULT_PD.items()})
    np.testing.assert_allclose(half, 0.5 * base, rtol=1e-15)


def test_render_missing_tissue():
    lab = make_labels(PhantomSpec())
    with pytest.raises(PhantomError) as e:
        render(lab, LF, {"WM": 650.0, "GM": 1200.0}, DEFAULT_PD)
    assert e.value.code == "missing-tissue"


def test_degrade():
    img = np.full((256, 256), 0.5)
    assert np.array_equal(degrade(img, Kernel.delta(5), 0.0), img)
    noisy = degrade(img, Kernel.delta(5), 0.02, seed=3)
    assert abs((noisy - img).std() - 0.02) <= 0.05 * 0.02
    assert np.array_equal(noisy, degrade(img, Kernel.delta(5), 0.02, seed=3))
    assert degrade(np.full((8, 8), 2.0), Kernel.delta(3), 0.0).max() == 1.5
    with pytest.raises(PhantomError):
        degrade(img, Kernel.delta(3), -1.0)


def test_case_round_trip():
    case = phantom_case(seed=4, geometry="random_blobs")
    again = PhantomCase.from_dict(case.to_dict())
    assert again == case
    for a, b in zip(case.generate(), again.generate()):
        assert np.array_equal(a, b)


# -- full pipeline oracle on a known instance --------------------------------


@pytest.fixture(scope="module")
def pipeline_run():
    from lf2hf.config import PipelineConfig
    from lf2hf.pipeline import enhance_slice

    case = phantom_case(seed=0)
    labels, _, hf, y = case.generate()
    yn, s = robust_normalize(y)
    res = enhance_slice(yn, PipelineConfig())
    return case, hf, y, res, s


def best_affine(src, target):
    A = np.stack([src.ravel(), np.ones(src.size)], axis=1)
    coef, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
    return (A @ coef).reshape(src.shape)


def test_pipeline_oracle_descent(pipeline_run):
    seq = pipeline_run[3].trace.sequence()
    assert all(b <= a + 1e-9 * seq[0] for a, b in zip(seq, seq[1:]))


def test_pipeline_oracle_psnr_gain(pipeline_run):
    from lf2hf.metrics import psnr

    _, hf, y, res, s = pipeline_run
    est, base = psnr(res.x * s, hf), psnr(best_affine(y, hf), hf)
    assert est > base, f"PSNR estimate {est:.3f} dB vs affine-rescaled input {base:.3f} dB"


def test_pipeline_oracle_kernel(pipeline_run):
    case, _, _, res, _ = pipeline_run
    err = float(np.linalg.norm(res.kernel.taps - case.kernel().taps))
    assert err <= 0.1, f"|h - h_true|_2 = {err:.4f}"
