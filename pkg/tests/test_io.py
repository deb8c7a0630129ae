import struct

import numpy as np
import pytest

from lf2hf.errors import FormatError
from lf2hf.image import Volume
from lf2hf.io import read_nifti, read_pgm, read_volume, write_nifti, write_pgm


def write_raw_nifti(path, data, datatype, bitpix, endian="<", slope=0.0, inter=0.0, magic=b"n+1\x00"):
    """Independent header writer: only the fields a reader must honour."""
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, 348)
    struct.pack_into(endian + "8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into(endian + "hh", hdr, 70, datatype, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, 1.5, 2.0, 2.5, 0, 0, 0, 0)
    struct.pack_into(endian + "fff", hdr, 108, 352.0, slope, inter)
    hdr[344:348] = magic
    code = {16: "f4", 4: "i2"}[datatype]
    with open(path, "wb") as fh:
        fh.write(bytes(hdr) + b"\0" * 4 + data.astype(endian + code).tobytes(order="F"))


def test_nifti_float32_round_trip(tmp_path):
    data = np.random.default_rng(0).random((8, 8, 3)).astype(np.float32)
    orient = {"qform_code": 1, "sform_code": 2, "quatern": (0.0, 0.5, 0.0), "qoffset": (1.0, 2.0, 3.0),
              "srow_x": (1.0, 0.0, 0.0, -5.0), "srow_y": (0.0, 1.0, 0.0, 6.0), "srow_z": (0.0, 0.0, 2.0, 7.0), "qfac": -1.0}
    write_nifti(Volume(data, (0.5, 0.75, 2.0), orient), tmp_path / "a.nii")
    back = read_nifti(tmp_path / "a.nii")
    assert back.data.dtype == np.float32
    assert back.data.tobytes() == data.tobytes()
    assert back.voxel_dims == (0.5, 0.75, 2.0)
    for k, v in orient.items():
        assert back.orientation[k] == pytest.approx(v)
    # second cycle is byte-identical on disk
    write_nifti(back, tmp_path / "b.nii")
    assert (tmp_path / "a.nii").read_bytes() == (tmp_path / "b.nii").read_bytes()


def test_nifti_int16_scaling(tmp_path):
    write_raw_nifti(tmp_path / "s.nii", np.full((2, 2, 1), 5), 4, 16, slope=2.0, inter=1.0)
    assert np.all(read_nifti(tmp_path / "s.nii").data == 11.0)
    write_raw_nifti(tmp_path / "z.nii", np.full((2, 2, 1), 5), 4, 16, slope=0.0)
    assert np.all(read_nifti(tmp_path / "z.nii").data == 5.0)


def test_nifti_big_endian(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    write_raw_nifti(tmp_path / "be.nii", data, 16, 32, endian=">")
    back = read_nifti(tmp_path / "be.nii")
    assert np.array_equal(back.data, data) and back.voxel_dims == (1.5, 2.0, 2.5)


def test_nifti_int16_writer(tmp_path):
    lab = np.array([[[0], [1]], [[2], [3]]], dtype=np.int16)
    write_nifti(Volume(lab), tmp_path / "l.nii", datatype="int16")
    assert np.array_equal(read_nifti(tmp_path / "l.nii").data, lab)


@pytest.mark.parametrize(
    "kwargs, code",
    [
        (dict(magic=b"ni1\x00"), "bad-magic"),
        (dict(datatype=64, bitpix=64), "unsupported-datatype"),
    ],
)
def test_nifti_rejects(tmp_path, kwargs, code):
    args = dict(datatype=16, bitpix=32)
    args.update(kwargs)
    data = np.zeros((2, 2, 1))
    dt = args.pop("datatype")
    bp = args.pop("bitpix")
    if dt == 64:
        write_raw_nifti(tmp_path / "x.nii", data, 16, 32)
        raw = bytearray((tmp_path / "x.nii").read_bytes())
        struct.pack_into("<hh", raw, 70, dt, bp)
        (tmp_path / "x.nii").write_bytes(bytes(raw))
    else:
        write_raw_nifti(tmp_path / "x.nii", data, dt, bp, **args)
    with pytest.raises(FormatError) as e:
        read_nifti(tmp_path / "x.nii")
    assert e.value.code == code


def test_nifti_truncated(tmp_path):
    write_nifti(Volume(np.ones((4, 4, 2), np.float32)), tmp_path / "t.nii")
    raw = (tmp_path / "t.nii").read_bytes()
    for n in (100, len(raw) - 1):
        (tmp_path / "t.nii").write_bytes(raw[:n])
        with pytest.raises(FormatError) as e:
            read_nifti(tmp_path / "t.nii")
        assert e.value.code == "truncated-file"


def test_nifti_bad_sizeof_hdr(tmp_path):
    (tmp_path / "h.nii").write_bytes(b"\x01" * 400)
    with pytest.raises(FormatError) as e:
        read_nifti(tmp_path / "h.nii")
    assert e.value.code == "bad-header"


def test_pgm_values(tmp_path):
    write_pgm(np.array([[0.0, 1.0, 0.5]]), tmp_path / "v.pgm")
    assert read_pgm(tmp_path / "v.pgm", raw=True).tolist() == [[0, 65535, 32768]]


def test_pgm_round_trip(tmp_path):
    samples = np.random.default_rng(1).integers(0, 65536, (7, 9))
    img = samples / 65535.0
    write_pgm(img, tmp_path / "r.pgm")
    assert np.array_equal(read_pgm(tmp_path / "r.pgm", raw=True), samples)
    assert np.array_equal(read_pgm(tmp_path / "r.pgm"), img)
    write_pgm(read_pgm(tmp_path / "r.pgm"), tmp_path / "r2.pgm")
    assert (tmp_path / "r.pgm").read_bytes() == (tmp_path / "r2.pgm").read_bytes()


def test_pgm_8bit_and_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# note\n2 1\n255\n\x00\xff")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[0.0, 1.0]]
    assert read_volume(tmp_path / "c.pgm").dims == (1, 2, 1)


@pytest.mark.parametrize(
    "blob, code",
    [
        (b"P2\n2 1\n255\n0 1", "bad-magic"),
        (b"P5\n2 x\n255\n", "bad-header"),
        (b"P5\n2 1\n1023\n\x00\x00\x00\x00", "unsupported-maxval"),
        (b"P5\n2 2\n65535\n\x00\x00", "truncated-file"),
    ],
)
def test_pgm_rejects(tmp_path, blob, code):
    (tmp_path / "b.pgm").write_bytes(blob)
    with pytest.raises(FormatError) as e:
        read_pgm(tmp_path / "b.pgm")
    assert e.value.code == code
