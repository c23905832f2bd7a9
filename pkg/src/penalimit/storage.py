"""CSV tables, legacy VTK snapshots and binary checkpoints."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"PLMCKPT1"
# magic, step, time, number of coefficients, number of cells
_HEADER = struct.Struct("<8sqdqq")


def format_value(v):
    """Ten significant digits for floats; integers and strings verbatim."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9e}"
    return str(v)


def write_csv(path, columns, rows):
    """Write ``rows`` (dicts) with a fixed column order and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(row.get(c, "")) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def write_vtk(path, mesh, cell_fields, title="penalimit"):
    """Legacy ASCII unstructured grid of quads with cell data.

    ``cell_fields`` maps a name to a per-cell array; integer arrays are
    written as ``int``, everything else as ``double``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    verts = mesh.vertices
    cells = mesh.cell_vertices
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(verts)} double"]
    out.extend(f"{x:.9e} {y:.9e} 0" for x, y in verts)
    out.append(f"CELLS {len(cells)} {5 * len(cells)}")
    out.extend("4 " + " ".join(str(int(v)) for v in c) for c in cells)
    out.append(f"CELL_TYPES {len(cells)}")
    out.extend(["9"] * len(cells))
    out.append(f"CELL_DATA {len(cells)}")
    for name, values in cell_fields.items():
        values = np.asarray(values)
        if np.issubdtype(values.dtype, np.integer) or values.dtype == bool:
            out += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
            out.extend(str(int(v)) for v in values)
        else:
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out.extend(f"{float(v):.9e}" for v in values)
    path.write_text("\n".join(out) + "\n", encoding="ascii")


@dataclass
class Checkpoint:
    step: int
    t: float
    coeffs: np.ndarray
    bitmap: np.ndarray


def write_checkpoint(path, step, t, coeffs, bitmap):
    """Header, then float64 coefficients and one uint8 per cell (1 = discontinuous)."""
    coeffs = np.ascontiguousarray(coeffs, dtype="<f8")
    bitmap = np.ascontiguousarray(bitmap, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, int(step), float(t), coeffs.size, bitmap.size))
        fh.write(coeffs.tobytes())
        fh.write(bitmap.tobytes())


def read_checkpoint(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, step, t, nc, nb = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    expected = _HEADER.size + 8 * nc + nb
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _HEADER.size
    coeffs = np.frombuffer(data, dtype="<f8", count=nc, offset=off).astype(float)
    bitmap = np.frombuffer(data, dtype=np.uint8, count=nb, offset=off + 8 * nc).copy()
    return Checkpoint(step, t, coeffs, bitmap)


def checkpoint_path(directory, step):
    return Path(directory) / f"step_{step:05d}.bin"


def snapshot_path(directory, step):
    return Path(directory) / f"step_{step:05d}.vtk"


class CheckpointReference:
    """Streams reference coefficients from a checkpoint directory, one step at a time."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"reference directory {self.directory} does not exist")

    def __call__(self, step):
        path = checkpoint_path(self.directory, step)
        if not path.exists():
            raise FileNotFoundError(f"missing reference checkpoint {path}")
        return read_checkpoint(path).coeffs
