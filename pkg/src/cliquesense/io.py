"""Matrix files (binary SPMX and CSV), placement JSON and PGM field images.

SPMX layout, all little-endian::

    b"SPMX" | version u16 | rows u32 | cols u32 | flags u16
    [n_v u32 | n_h u32]            # present when flags bit 0 is set
    rows*cols float64, column-major

CSV layout: first line ``rows,cols[,n_v,n_h]``, then one snapshot (column)
per line with 17 significant digits.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .placement import Placement
from .pod import DataMatrix

MAGIC = b"SPMX"
FORMAT_VERSION = 1
FLAG_GRID = 0x1
_HEADER = struct.Struct("<4sHIIH")
_GRID = struct.Struct("<II")
MAX_ELEMENTS = 1 << 34


class DataFormatError(ValueError):
    """Malformed data file. ``reason`` is one of: magic, version, truncated, dimensions, grid, parse."""

    def __init__(self, reason, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.reason = reason
        self.path = str(path) if path else None


def encode_matrix(X):
    X = X if isinstance(X, DataMatrix) else DataMatrix(X)
    rows, cols = X.shape
    flags = FLAG_GRID if X.grid_shape else 0
    out = [_HEADER.pack(MAGIC, FORMAT_VERSION, rows, cols, flags)]
    if X.grid_shape:
        out.append(_GRID.pack(*X.grid_shape))
    out.append(np.asarray(X.values, dtype="<f8").tobytes(order="F"))
    return b"".join(out)


def decode_matrix(buf, path=None):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise DataFormatError("magic", "not an SPMX matrix file (bad magic)", path)
    if len(buf) < _HEADER.size:
        raise DataFormatError("truncated", "header truncated", path)
    _, version, rows, cols, flags = _HEADER.unpack_from(buf, 0)
    if version != FORMAT_VERSION:
        raise DataFormatError("version", f"unsupported format version {version}", path)
    off = _HEADER.size
    grid = None
    if flags & FLAG_GRID:
        if len(buf) < off + _GRID.size:
            raise DataFormatError("truncated", "grid header truncated", path)
        grid = _GRID.unpack_from(buf, off)
        off += _GRID.size
    if rows < 1 or cols < 1 or rows * cols > MAX_ELEMENTS:
        raise DataFormatError("dimensions", f"invalid dimensions {rows}x{cols}", path)
    if grid is not None and grid[0] * grid[1] != rows:
        raise DataFormatError("grid", f"grid {grid[0]}x{grid[1]} does not match {rows} rows", path)
    need = rows * cols * 8
    if len(buf) - off < need:
        raise DataFormatError("truncated", f"payload truncated: need {need} bytes, have {len(buf) - off}", path)
    if len(buf) - off > need:
        raise DataFormatError("dimensions", "trailing bytes after payload", path)
    values = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=off).reshape((rows, cols), order="F")
    return DataMatrix(values.astype(np.float64), grid_shape=grid)


def write_matrix(X, path):
    Path(path).write_bytes(encode_matrix(X))


def read_matrix(path):
    """Read ``.csv`` files as CSV, anything else as SPMX."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataFormatError("io", str(exc), path) from exc
    return decode_matrix(buf, path)


def write_csv(X, path):
    X = X if isinstance(X, DataMatrix) else DataMatrix(X)
    head = [X.n, X.m] + (list(X.grid_shape) if X.grid_shape else [])
    with open(path, "w") as fh:
        fh.write(",".join(str(v) for v in head) + "\n")
        for col in X.values.T:
            fh.write(",".join(format(v, ".17g") for v in col) + "\n")


def read_csv(path):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataFormatError("io", str(exc), path) from exc
    if not lines:
        raise DataFormatError("parse", "empty CSV file", path)
    try:
        head = [int(v) for v in lines[0].split(",")]
    except ValueError:
        raise DataFormatError("parse", f"bad header line {lines[0]!r}", path) from None
    if len(head) not in (2, 4):
        raise DataFormatError("parse", "header must be rows,cols[,nv,nh]", path)
    rows, cols = head[:2]
    if rows < 1 or cols < 1:
        raise DataFormatError("dimensions", f"invalid dimensions {rows}x{cols}", path)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != cols:
        raise DataFormatError("truncated", f"expected {cols} snapshot lines, found {len(body)}", path)
    try:
        values = np.array([[float(v) for v in ln.split(",")] for ln in body]).T
    except ValueError as exc:
        raise DataFormatError("parse", str(exc), path) from None
    if values.shape != (rows, cols):
        raise DataFormatError("dimensions", f"snapshot lines do not have {rows} values", path)
    grid = tuple(head[2:]) if len(head) == 4 else None
    if grid and grid[0] * grid[1] != rows:
        raise DataFormatError("grid", f"grid {grid} does not match {rows} rows", path)
    return DataMatrix(values, grid_shape=grid)


def write_placement(placement, path):
    Path(path).write_text(json.dumps(placement.to_dict(), indent=2, sort_keys=True) + "\n")


def read_placement(path):
    try:
        return Placement.from_dict(json.loads(Path(path).read_text()))
    except (OSError, KeyError, ValueError) as exc:
        raise DataFormatError("parse", f"bad placement file: {exc}", path) from exc


def field_to_gray(values, vmin, vmax):
    """Linear map [vmin, vmax] -> 0..255 with clamping and round-half-up."""
    if not (np.isfinite(vmin) and np.isfinite(vmax)) or not vmin < vmax:
        raise ValueError(f"need a finite range with min < max, got [{vmin}, {vmax}]")
    scaled = (np.asarray(values, dtype=np.float64) - vmin) / (vmax - vmin) * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def export_field_image(field_values, grid_shape, path, vmin, vmax, sensors=None, marker=255):
    """Write a binary PGM (P5) of an image-shaped field; optional sensor marker pixels."""
    if grid_shape is None:
        raise ValueError("image export needs a grid shape")
    nv, nh = grid_shape
    img = field_to_gray(np.asarray(field_values).reshape(nv, nh), vmin, vmax)
    if sensors is not None:
        flat = img.reshape(-1)
        flat[np.asarray(sensors, dtype=np.int64)] = marker
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nh} {nv}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return img


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise DataFormatError("magic", "not a binary PGM", path)
    nh, nv = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=nv * nh).reshape(nv, nh)
