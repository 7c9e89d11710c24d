"""On-disk formats: field CSV/binary dumps, plot CSVs, report JSON.

Binary field dump layout: magic b"CNLB1", little-endian uint32 rank,
little-endian uint32 shape per axis, then the lattice values as
little-endian float64 in row-major order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"CNLB1"


def field_to_csv(field, path):
    """Active-node table with header x1,...,xn,value (row-major order)."""
    grid = field.grid
    n = grid.dim
    idx = np.argwhere(grid.active)
    coords = np.stack([grid.axes[d][idx[:, d]] for d in range(n)], axis=1)
    vals = field.values[tuple(idx.T)]
    header = ",".join(f"x{d + 1}" for d in range(n)) + ",value"
    data = np.column_stack([coords, vals])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.17g")


def field_to_binary(field, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        shape = field.values.shape
        fh.write(struct.pack("<I", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def field_values_from_binary(path):
    """Lattice array back from a binary dump (values only, no grid)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a field dump")
        rank, = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated field dump")
    return data.reshape(shape)


def mask_to_csv(grid, mask, path):
    """Node list of a boolean mask with header x1,...,xn (for plotting)."""
    n = grid.dim
    idx = np.argwhere(mask)
    coords = np.stack([grid.axes[d][idx[:, d]] for d in range(n)], axis=1) \
        if len(idx) else np.zeros((0, n))
    header = ",".join(f"x{d + 1}" for d in range(n))
    np.savetxt(path, coords, delimiter=",", header=header, comments="",
               fmt="%.17g")


def write_plot_csv(path, comment, columns):
    """One plot file: '#'-prefixed comment naming the columns, then rows.

    columns is an ordered mapping name -> 1-d sequence, all equal length.
    """
    names = list(columns)
    arrs = [np.asarray(columns[k], dtype=float) for k in names]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError("plot columns must have equal length")
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n")
        fh.write("# columns: " + ",".join(names) + "\n")
        for row in zip(*arrs):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def report_to_dict(report):
    return {
        "name": report.name,
        "config": report.config_echo,
        "runs": [r.as_dict() for r in report.runs],
        "slopes": [s.as_dict() for s in report.slopes],
        "verdicts": [v.as_dict() for v in report.verdicts],
    }


def report_to_json(report, path):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
