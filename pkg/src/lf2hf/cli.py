"""Command-line front end.

Exit status: 0 on success, 2 for usage or input errors, 3 for numerical
failures. Diagnostics go to stderr; reports and images only to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config
from .errors import Lf2hfError
from .image import Volume, background_mask, robust_normalize
from .io import read_volume, write_nifti, write_volume
from .metrics import (
    SsimConfig,
    Tissue,
    psnr,
    segment3,
    sharpness,
    signal_difference,
    ssim,
    tissue_volumes,
    uqi,
)
from .phantom import GEOMETRIES, PhantomCase, PhantomSpec
from .pipeline import enhance_volume, simulate_volume

log = logging.getLogger("lf2hf")


def _config(args) -> PipelineConfig:
    return load_config(args.config) if args.config else PipelineConfig()


def _slices(args):
    return None if args.slice is None else [args.slice]


def _write_traces(results, idx, path):
    traced = [(k, r.trace) for k, r in zip(idx, results) if r.trace is not None]
    multi = len(idx) > 1
    with open(path, "w", newline="") as fh:
        if not traced:
            fh.write(",".join((("slice",) if multi else ()) + tuple(_trace_columns())) + "\n")
        for n, (k, trace) in enumerate(traced):
            trace.write_csv(fh, slice_index=k if multi else None, header=n == 0)


def _trace_columns():
    from .solver import AMTrace

    return AMTrace.COLUMNS


def cmd_enhance(args):
    vol = read_volume(args.input)
    cfg = _config(args)
    out, results, idx, _ = enhance_volume(vol, cfg, use_nlm=args.nlm, slices=_slices(args), workers=args.workers)
    write_volume(out, args.output)
    if args.trace:
        _write_traces(results, idx, args.trace)
    if args.save_kernel:
        kernels = [
            {"slice": k, "boundary": r.kernel.boundary, "taps": r.kernel.taps.tolist()}
            for k, r in zip(idx, results)
            if r.kernel is not None
        ]
        Path(args.save_kernel).write_text(json.dumps({"kernels": kernels}, indent=2))
    if args.save_scale_map:
        maps = np.stack([r.scale_map for r in results], axis=2)
        write_volume(Volume(maps, vol.voxel_dims, vol.orientation), args.save_scale_map)
    return 0


def cmd_simulate(args):
    vol = read_volume(args.input)
    out = simulate_volume(vol, _config(args), slices=_slices(args))
    write_volume(out, args.output)
    return 0


def cmd_trace_export(args):
    vol = read_volume(args.input)
    _, results, idx, _ = enhance_volume(vol, _config(args), use_nlm=False, slices=_slices(args))
    _write_traces(results, idx, args.output)
    return 0


def cmd_phantom(args):
    if args.from_sidecar:
        case = PhantomCase.from_dict(json.loads(Path(args.from_sidecar).read_text())["case"])
    else:
        case = PhantomCase(
            spec=PhantomSpec(shape=(args.size, args.size), geometry=args.geometry, seed=args.seed),
            blur_p=args.blur_p,
            blur_sigma=args.blur_sigma,
            noise_sd=args.noise_sd,
            noise_seed=args.noise_seed,
        )
    labels, lf_clean, hf, y = case.generate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = args.format
    files = {"lf": f"lf.{ext}", "hf": f"hf.{ext}", "labels": "labels.nii"}
    write_volume(Volume(y), out / files["lf"])
    write_volume(Volume(hf), out / files["hf"])
    write_nifti(Volume(labels), out / files["labels"], datatype="int16")
    sidecar = {"case": case.to_dict(), "files": files, "label_codes": {t.name: int(t) for t in Tissue}}
    (out / "phantom.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return 0


def _normalized(vol, raw):
    data = np.asarray(vol.data, dtype=np.float64)
    return data if raw else robust_normalize(data)[0]


def _json_number(v):
    return "inf" if math.isinf(v) else v


def cmd_metrics(args):
    test_vol = read_volume(args.test)
    test = _normalized(test_vol, args.raw)
    report = {}
    if args.ref:
        ref_vol = read_volume(args.ref)
        ref = _normalized(ref_vol, args.raw)
        if ref.shape != test.shape:
            from .errors import DimensionError

            raise DimensionError(f"test {test.shape} vs reference {ref.shape}")
        cfg = SsimConfig(window=args.ssim_window)
        nz = test.shape[2]
        report["psnr"] = _json_number(psnr(test, ref, peak=1.0))
        report["ssim"] = float(np.mean([ssim(test[:, :, k], ref[:, :, k], cfg) for k in range(nz)]))
        report["uqi"] = float(np.mean([uqi(test[:, :, k], ref[:, :, k]) for k in range(nz)]))
    if args.labels:
        labels = np.rint(np.asarray(read_volume(args.labels).data)).astype(np.int16)
        if labels.shape != test.shape:
            from .errors import DimensionError

            raise DimensionError(f"labels {labels.shape} vs test {test.shape}")
        report["signal_difference_wm_gm"] = signal_difference(test, labels, Tissue.WM, Tissue.GM)
        report["signal_difference_gm_csf"] = signal_difference(test, labels, Tissue.GM, Tissue.CSF)
        report["tissue_volumes_mm3"] = tissue_volumes(labels, test_vol.voxel_dims)
    per_slice = [sharpness(test[:, :, k]) for k in range(test.shape[2])]
    report["sharpness"] = float(np.mean([s[0] for s in per_slice]))
    report["edge_width"] = float(np.mean([s[1] for s in per_slice]))
    report["edge_height"] = float(np.mean([s[2] for s in per_slice]))
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_segment(args):
    vol = read_volume(args.input)
    norm, _ = robust_normalize(np.asarray(vol.data, dtype=np.float64))
    labels = segment3(norm, background_mask(norm, args.tau), seed=args.seed)
    write_nifti(Volume(labels, vol.voxel_dims, vol.orientation), args.output, datatype="int16")
    if args.volumes:
        Path(args.volumes).write_text(json.dumps(tissue_volumes(labels, vol.voxel_dims), indent=2))
    return 0


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="lf2hf",
        description="Estimate high-field-like T1-weighted MR images from low-field scans.",
        formatter_class=fmt,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    def volume_args(p):
        p.add_argument("--input", required=True, help="input volume (.nii) or slice (.pgm)")
        p.add_argument("--config", default=None, help="JSON pipeline config; defaults when omitted")
        p.add_argument("--slice", type=int, default=None, help="process only this z-slice")

    p = add("enhance", cmd_enhance, "full pipeline: scale map, alternating minimization, optional NLM")
    volume_args(p)
    p.add_argument("--output", required=True, help="estimated volume (.nii or .pgm)")
    p.add_argument(
        "--nlm",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="force NLM post-smoothing on or off; the config's nlm.enabled decides when omitted",
    )
    p.add_argument("--trace", default=None, help="write the per-iteration objective trace as CSV")
    p.add_argument("--save-kernel", default=None, help="write estimated kernels as JSON")
    p.add_argument("--save-scale-map", default=None, help="write the scale map volume")
    p.add_argument("--workers", type=int, default=1, help="parallel slice workers")

    p = add("simulate", cmd_simulate, "physics-only simulation c*y of the normalized input")
    volume_args(p)
    p.add_argument("--output", required=True, help="simulated volume")

    p = add("trace-export", cmd_trace_export, "run the solver and write only its convergence trace")
    volume_args(p)
    p.add_argument("--output", required=True, help="CSV trace path")

    p = add("phantom", cmd_phantom, "generate a synthetic phantom with known ground truth")
    p.add_argument("--out-dir", required=True, help="directory for images, labels and sidecar")
    p.add_argument("--geometry", choices=GEOMETRIES, default="nested_ellipses", help="label layout")
    p.add_argument("--size", type=int, default=128, help="square image side in pixels")
    p.add_argument("--seed", type=int, default=0, help="geometry seed")
    p.add_argument("--noise-sd", type=float, default=0.01, help="Gaussian noise SD of the LF image")
    p.add_argument("--noise-seed", type=int, default=0, help="noise seed")
    p.add_argument("--blur-sigma", type=float, default=1.0, help="SD of the Gaussian blur kernel in pixels")
    p.add_argument("--blur-p", type=int, default=5, help="blur kernel size")
    p.add_argument("--format", choices=("nii", "pgm"), default="nii", help="image file format")
    p.add_argument("--from-sidecar", default=None, help="replay the parameters of a phantom.json")

    p = add("metrics", cmd_metrics, "quality metrics report as JSON")
    p.add_argument("--test", required=True, help="image under test")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--ref", default=None, help="reference image for PSNR/SSIM/UQI")
    ref.add_argument("--no-ref", action="store_true", help="no-reference metrics only")
    p.add_argument("--labels", default=None, help="label map (0=BG 1=CSF 2=GM 3=WM)")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--raw", action="store_true", help="skip intensity normalization")
    p.add_argument("--ssim-window", choices=("gaussian", "uniform"), default="gaussian", help="SSIM window")

    p = add("segment", cmd_segment, "3-class k-means tissue segmentation")
    p.add_argument("--input", required=True, help="T1-weighted volume to segment")
    p.add_argument("--output", required=True, help="label map (.nii, int16 codes)")
    p.add_argument("--seed", type=int, default=0, help="k-means seed")
    p.add_argument("--tau", type=float, default=0.02, help="foreground threshold after normalization")
    p.add_argument("--volumes", default=None, help="write tissue volumes (mm^3) as JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Lf2hfError as exc:
        print(f"lf2hf {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"lf2hf {args.command}: error: no such file: {exc.filename}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lf2hf {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
