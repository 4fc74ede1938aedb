"""Binary field checkpoints and CSV tables.

Checkpoint layout (little-endian):

    b"VSHK", u32 version, f64 alpha, u32 m0, u32 M_max, u32 N, f64 R_max,
    8-byte stretch kind, f64 stretch scale, u8 kind, u8 frame, 6 pad bytes,
    f64 time, N f64 nodes, then complex coefficients as (re, im) f64 pairs,
    modes in increasing m (velocity: all u^r modes, then all u^theta modes).

Only m >= 0 is stored; negative modes follow from reality.
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from pathlib import Path

import numpy as np

from .grid import GridError, PolarField, Stretch, make_radial_grid

MAGIC = b"VSHK"
VERSION = 1
_HEAD = struct.Struct("<4sIdIIId8sdBB6xd")
_KINDS = ("vorticity", "velocity")
_FRAMES = ("physical", "similarity")


class CheckpointError(GridError):
    pass


def encode_field(f: PolarField) -> bytes:
    kind = f.grid.stretch.kind
    if len(kind) > 8:
        raise CheckpointError(f"stretch kind {kind!r} does not fit the header")
    head = _HEAD.pack(MAGIC, VERSION, float(f.alpha), int(f.m0), int(f.m_max), int(f.grid.n), float(f.grid.r_max),
                      kind.encode("ascii").ljust(8, b"\0"), float(f.grid.stretch.scale),
                      _KINDS.index(f.kind), _FRAMES.index(f.frame), float(f.time))
    coef = np.ascontiguousarray(f.data, dtype="<c16")
    return head + np.ascontiguousarray(f.grid.r, dtype="<f8").tobytes() + coef.tobytes()


def decode_field(blob: bytes) -> PolarField:
    if len(blob) < _HEAD.size or blob[:4] != MAGIC:
        raise CheckpointError("not a VSHK checkpoint")
    (_, version, alpha, m0, m_max, n, r_max, skind, scale, kind, frame, time) = _HEAD.unpack_from(blob)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if kind >= len(_KINDS) or frame >= len(_FRAMES):
        raise CheckpointError("corrupt kind or frame tag")
    n_modes = (m_max // m0 + 1) if m0 else 1
    shape = (n_modes, n) if _KINDS[kind] == "vorticity" else (2, n_modes, n)
    need = _HEAD.size + 8 * n + 16 * int(np.prod(shape))
    if len(blob) != need:
        raise CheckpointError(f"checkpoint has {len(blob)} bytes, expected {need}")
    grid = make_radial_grid(r_max, n, Stretch(skind.rstrip(b"\0").decode("ascii"), scale))
    nodes = np.frombuffer(blob, "<f8", n, _HEAD.size)
    if not np.allclose(nodes, grid.r, rtol=1e-13, atol=0.0):
        raise CheckpointError("stored nodes do not match the rebuilt grid")
    data = np.frombuffer(blob, "<c16", offset=_HEAD.size + 8 * n).reshape(shape).astype(complex)
    return PolarField(grid, m0, data, _KINDS[kind], _FRAMES[frame], time, alpha)


def save_field(f: PolarField, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode_field(f))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_field(path: str | Path) -> PolarField:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_field(blob)


# ---------------------------------------------------------------------------
# CSV

NORM_COLUMNS = ["time", "frame", "norm_kind", "value"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} entries for {len(columns)} columns")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, columns: list[str], rows) -> Path:
    path = Path(path)
    text = csv_text(columns, rows)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path: str | Path) -> tuple[list[str], list[list]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path} has no header")
    return rows[0], [[_parse(v) for v in r] for r in rows[1:]]


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
