import struct

import numpy as np
import pytest

from trajvid.errors import FileUnreadableError
from trajvid.floio import read_flo, read_flow_sequence, write_flo, write_flow_sequence


def test_flo_roundtrip_bit_exact(tmp_path, rng):
    frame = rng.normal(scale=5.0, size=(2, 7, 9)).astype(np.float32)
    path = tmp_path / "f.flo"
    write_flo(path, frame)
    back = read_flo(path)
    np.testing.assert_array_equal(back, frame)


def test_flo_byte_layout(tmp_path):
    frame = np.zeros((2, 2, 3), dtype=np.float32)
    frame[0, 0, 1] = 1.5   # u at row 0, col 1
    frame[1, 1, 2] = -2.0  # v at row 1, col 2
    path = tmp_path / "f.flo"
    write_flo(path, frame)
    raw = path.read_bytes()
    magic, w, h = struct.unpack("<fii", raw[:12])
    assert magic == pytest.approx(202021.25)
    assert (w, h) == (3, 2)
    pairs = struct.unpack("<12f", raw[12:])
    # row-major (u,v) interleaved: index = (row*w + col)*2
    assert pairs[(0 * 3 + 1) * 2] == pytest.approx(1.5)
    assert pairs[(1 * 3 + 2) * 2 + 1] == pytest.approx(-2.0)


def test_flo_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(struct.pack("<fii", 1234.5, 2, 2) + b"\x00" * 32)
    with pytest.raises(FileUnreadableError, match="magic"):
        read_flo(p)


def test_flo_rejects_truncation(tmp_path):
    p = tmp_path / "short.flo"
    p.write_bytes(struct.pack("<fii", 202021.25, 4, 4) + b"\x00" * 8)
    with pytest.raises(FileUnreadableError, match="shorter"):
        read_flo(p)


def test_flow_sequence_naming_and_order(tmp_path, rng):
    flow = rng.normal(size=(3, 2, 4, 5)).astype(np.float32)
    write_flow_sequence(tmp_path, flow)
    names = sorted(p.name for p in tmp_path.glob("*.flo"))
    assert names == ["flow_0000.flo", "flow_0001.flo", "flow_0002.flo"]
    back = read_flow_sequence(tmp_path)
    np.testing.assert_array_equal(back, flow)
