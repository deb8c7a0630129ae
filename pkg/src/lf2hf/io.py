"""Minimal single-file NIfTI-1 and 16-bit PGM readers/writers.

Only what the pipeline needs: uncompressed ``.nii`` with float32 or int16
voxels (either byte order on read, little-endian on write), and binary P5
PGM slices. Orientation fields are carried through untouched.
"""

from __future__ import annotations

import math
import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .image import Volume

# (name, struct code) for the 348-byte NIfTI-1 header, in file order
_HDR_FIELDS = [
    ("sizeof_hdr", "i"),
    ("data_type", "10s"),
    ("db_name", "18s"),
    ("extents", "i"),
    ("session_error", "h"),
    ("regular", "c"),
    ("dim_info", "B"),
    ("dim", "8h"),
    ("intent_p", "3f"),
    ("intent_code", "h"),
    ("datatype", "h"),
    ("bitpix", "h"),
    ("slice_start", "h"),
    ("pixdim", "8f"),
    ("vox_offset", "f"),
    ("scl_slope", "f"),
    ("scl_inter", "f"),
    ("slice_end", "h"),
    ("slice_code", "B"),
    ("xyzt_units", "B"),
    ("cal_max", "f"),
    ("cal_min", "f"),
    ("slice_duration", "f"),
    ("toffset", "f"),
    ("glmax", "i"),
    ("glmin", "i"),
    ("descrip", "80s"),
    ("aux_file", "24s"),
    ("qform_code", "h"),
    ("sform_code", "h"),
    ("quatern", "3f"),
    ("qoffset", "3f"),
    ("srow_x", "4f"),
    ("srow_y", "4f"),
    ("srow_z", "4f"),
    ("intent_name", "16s"),
    ("magic", "4s"),
]
_HDR_FMT = "".join(code for _, code in _HDR_FIELDS)
HEADER_SIZE = 348
assert struct.calcsize("<" + _HDR_FMT) == HEADER_SIZE

NIFTI_FLOAT32 = 16
NIFTI_INT16 = 4
_DTYPES = {NIFTI_FLOAT32: ("f4", 32), NIFTI_INT16: ("i2", 16)}
_ORIENTATION_KEYS = ("qform_code", "sform_code", "quatern", "qoffset", "srow_x", "srow_y", "srow_z", "qfac")


def _unpack_header(raw: bytes, endian: str) -> dict:
    values = struct.unpack(endian + _HDR_FMT, raw)
    hdr, i = {}, 0
    for name, code in _HDR_FIELDS:
        count = int(code[:-1]) if code[:-1].isdigit() and code[-1] != "s" else 1
        hdr[name] = values[i] if count == 1 else tuple(values[i : i + count])
        i += count
    return hdr


def _pack_header(hdr: dict) -> bytes:
    flat = []
    for name, code in _HDR_FIELDS:
        v = hdr[name]
        if isinstance(v, tuple):
            flat.extend(v)
        else:
            flat.append(v)
    return struct.pack("<" + _HDR_FMT, *flat)


def read_nifti(path) -> Volume:
    """Read a single-file NIfTI-1 volume, applying scl_slope/scl_inter.

    Unscaled float32 data is returned as float32 so a write/read cycle is
    bit-exact; anything scaled comes back as float64.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FormatError("truncated-file", f"{path}: {len(raw)} bytes, header needs {HEADER_SIZE}")
    if struct.unpack("<i", raw[:4])[0] == HEADER_SIZE:
        endian = "<"
    elif struct.unpack(">i", raw[:4])[0] == HEADER_SIZE:
        endian = ">"
    else:
        raise FormatError("bad-header", f"{path}: byte 0: sizeof_hdr is not 348 in either byte order")
    hdr = _unpack_header(raw[:HEADER_SIZE], endian)
    if hdr["magic"] != b"n+1\x00":
        raise FormatError("bad-magic", f"{path}: byte 344: magic {hdr['magic']!r} is not single-file NIfTI-1")
    if hdr["datatype"] not in _DTYPES:
        raise FormatError("unsupported-datatype", f"{path}: byte 70: datatype code {hdr['datatype']}")
    ndim = hdr["dim"][0]
    if not 1 <= ndim <= 7:
        raise FormatError("bad-header", f"{path}: byte 40: dim[0]={ndim}")
    dims = [max(int(d), 1) for d in hdr["dim"][1 : ndim + 1]]
    if len(dims) > 3 and math.prod(dims[3:]) != 1:
        raise FormatError("bad-header", f"{path}: only 3D volumes are supported, got dims {dims}")
    dims = (dims + [1, 1, 1])[:3]
    code, _ = _DTYPES[hdr["datatype"]]
    dtype = np.dtype(endian + code)
    offset = int(hdr["vox_offset"])
    nbytes = math.prod(dims) * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise FormatError("truncated-file", f"{path}: byte {len(raw)}: need {offset + nbytes} bytes of header and voxel data")
    data = np.frombuffer(raw, dtype=dtype, count=math.prod(dims), offset=offset)
    data = data.reshape(dims, order="F")
    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    if slope == 0.0 or not np.isfinite(slope):
        slope = 1.0
    if not np.isfinite(inter):
        inter = 0.0
    if hdr["datatype"] == NIFTI_FLOAT32 and slope == 1.0 and inter == 0.0:
        data = data.astype(np.float32)
    else:
        data = data.astype(np.float64) * slope + inter
    orientation = {k: hdr[k] for k in _ORIENTATION_KEYS if k in hdr}
    orientation["qfac"] = hdr["pixdim"][0]
    return Volume(data=data, voxel_dims=tuple(hdr["pixdim"][1:4]), orientation=orientation)


def write_nifti(vol: Volume, path, datatype: str = "float32", scl_slope: float = 1.0, scl_inter: float = 0.0):
    """Write ``vol`` as little-endian single-file NIfTI-1.

    For ``datatype="int16"`` voxels are stored as
    ``round((value - scl_inter) / scl_slope)``.
    """
    if datatype == "float32":
        code = NIFTI_FLOAT32
        stored = np.asarray(vol.data, dtype="<f4")
        if scl_slope != 1.0 or scl_inter != 0.0:
            stored = ((np.asarray(vol.data, dtype=np.float64) - scl_inter) / scl_slope).astype("<f4")
    elif datatype == "int16":
        code = NIFTI_INT16
        if scl_slope == 0.0:
            raise FormatError("bad-scaling", "scl_slope must be non-zero for int16 output")
        scaled = np.rint((np.asarray(vol.data, dtype=np.float64) - scl_inter) / scl_slope)
        stored = np.clip(scaled, -32768, 32767).astype("<i2")
    else:
        raise FormatError("unsupported-datatype", f"cannot write datatype {datatype!r}")
    nx, ny, nz = vol.dims
    o = vol.orientation
    hdr = {
        "sizeof_hdr": HEADER_SIZE,
        "data_type": b"",
        "db_name": b"",
        "extents": 0,
        "session_error": 0,
        "regular": b"r",
        "dim_info": 0,
        "dim": (3, nx, ny, nz, 1, 1, 1, 1),
        "intent_p": (0.0, 0.0, 0.0),
        "intent_code": 0,
        "datatype": code,
        "bitpix": _DTYPES[code][1],
        "slice_start": 0,
        "pixdim": (float(o.get("qfac", 1.0)), *vol.voxel_dims, 1.0, 0.0, 0.0, 0.0),
        "vox_offset": 352.0,
        "scl_slope": float(scl_slope),
        "scl_inter": float(scl_inter),
        "slice_end": 0,
        "slice_code": 0,
        "xyzt_units": 2,  # mm
        "cal_max": 0.0,
        "cal_min": 0.0,
        "slice_duration": 0.0,
        "toffset": 0.0,
        "glmax": 0,
        "glmin": 0,
        "descrip": b"lf2hf",
        "aux_file": b"",
        "qform_code": int(o.get("qform_code", 0)),
        "sform_code": int(o.get("sform_code", 0)),
        "quatern": tuple(o.get("quatern", (0.0, 0.0, 0.0))),
        "qoffset": tuple(o.get("qoffset", (0.0, 0.0, 0.0))),
        "srow_x": tuple(o.get("srow_x", (0.0, 0.0, 0.0, 0.0))),
        "srow_y": tuple(o.get("srow_y", (0.0, 0.0, 0.0, 0.0))),
        "srow_z": tuple(o.get("srow_z", (0.0, 0.0, 0.0, 0.0))),
        "intent_name": b"",
        "magic": b"n+1\x00",
    }
    with open(path, "wb") as fh:
        fh.write(_pack_header(hdr))
        fh.write(b"\x00\x00\x00\x00")  # no extensions
        fh.write(stored.tobytes(order="F"))


_PGM_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def read_pgm(path, raw: bool = False) -> np.ndarray:
    """Read a binary (P5) PGM as a ``(rows, cols)`` array.

    Intensities are scaled to [0, 1] by ``maxval`` unless ``raw`` is set, in
    which case the integer samples are returned.
    """
    buf = Path(path).read_bytes()
    if not buf.startswith(b"P5"):
        raise FormatError("bad-magic", f"{path}: not a binary PGM (P5)")
    m = _PGM_HEADER.match(buf)
    if m is None:
        raise FormatError("bad-header", f"{path}: byte 0: malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval not in (255, 65535):
        raise FormatError("unsupported-maxval", f"{path}: maxval {maxval} (need 255 or 65535)")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = width * height
    if len(buf) - m.end() < count * dtype.itemsize:
        raise FormatError("truncated-file", f"{path}: byte {len(buf)}: pixel data shorter than {count} samples")
    samples = np.frombuffer(buf, dtype=dtype, count=count, offset=m.end()).reshape(height, width)
    if raw:
        return samples.astype(np.int64)
    return samples.astype(np.float64) / maxval


def write_pgm(img, path):
    """Write ``img`` (clipped to [0, 1]) as 16-bit big-endian P5, rounding half up."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise FormatError("bad-shape", f"PGM needs a 2D image, got {arr.shape}")
    samples = np.floor(arr * 65535.0 + 0.5).astype(">u2")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(samples.tobytes())


def read_volume(path) -> Volume:
    """Dispatch on extension: ``.nii`` or ``.pgm`` (as a single-slice volume)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return Volume(read_pgm(path)[:, :, np.newaxis])
    return read_nifti(path)


def write_volume(vol: Volume, path, datatype: str = "float32"):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        if vol.dims[2] != 1:
            raise FormatError("bad-shape", "PGM output needs a single-slice volume")
        write_pgm(vol.data[:, :, 0], path)
    else:
        write_nifti(vol, path, datatype=datatype)
