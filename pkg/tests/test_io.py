import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortsel import io as vio
from vortsel.grid import PolarField, Stretch, make_radial_grid

GRID = make_radial_grid(6.0, 64, Stretch("sinh", 0.05))


def _field(kind="vorticity", n_modes=3, seed=0):
    rng = np.random.default_rng(seed)
    shape = (n_modes, GRID.n) if kind == "vorticity" else (2, n_modes, GRID.n)
    data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return PolarField(GRID, 3, data, kind, "similarity", 2.5, 0.5)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(["vorticity", "velocity"]), n_modes=st.integers(1, 6), seed=st.integers(0, 10_000),
       time=st.floats(-50, 50))
def test_checkpoint_roundtrip(kind, n_modes, seed, time):
    f = _field(kind, n_modes, seed).with_data(_field(kind, n_modes, seed).data, time=time)
    g = vio.decode_field(vio.encode_field(f))
    assert np.array_equal(g.data, f.data)
    assert (g.kind, g.frame, g.m0, g.time, g.alpha) == (f.kind, f.frame, f.m0, f.time, f.alpha)
    assert g.grid.key == f.grid.key


def test_save_and_load(tmp_path):
    f = _field()
    path = vio.save_field(f, tmp_path / "a.vshk")
    assert np.array_equal(vio.load_field(path).data, f.data)


def test_bad_magic():
    blob = bytearray(vio.encode_field(_field()))
    blob[:4] = b"XXXX"
    with pytest.raises(vio.CheckpointError):
        vio.decode_field(bytes(blob))


def test_truncated_blob():
    blob = vio.encode_field(_field())
    with pytest.raises(vio.CheckpointError):
        vio.decode_field(blob[:-16])


def test_wrong_version():
    blob = bytearray(vio.encode_field(_field()))
    struct.pack_into("<I", blob, 4, 99)
    with pytest.raises(vio.CheckpointError, match="version"):
        vio.decode_field(bytes(blob))


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        vio.load_field(tmp_path / "nope.vshk")


def test_csv_roundtrip(tmp_path):
    rows = [[1, 2.5, "a", True], [0, 1e-300, "b", False]]
    path = vio.write_csv(tmp_path / "t.csv", ["i", "x", "s", "flag"], rows)
    cols, back = vio.read_csv(path)
    assert cols == ["i", "x", "s", "flag"]
    assert back == [[1, 2.5, "a", 1], [0, 1e-300, "b", 0]]


def test_csv_row_length_checked():
    with pytest.raises(ValueError):
        vio.csv_text(["a", "b"], [[1]])


def test_sha256_file(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    assert vio.sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
