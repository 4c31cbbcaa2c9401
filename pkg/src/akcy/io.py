"""Field dump format: one JSON header line, then raw little-endian f64.

Layout is row-major over (grid indices, flattened component index), so a
dump is `header\n` + n1*n2*n3*n4*4^rank doubles.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fields import Metric, OneForm, ScalarField, TensorField, TwoForm
from .grid import Grid4


def dump_field(field: TensorField, path) -> None:
    grid = field.grid
    ncomp = 4 ** field.rank
    header = {
        "shape": list(grid.n) + [ncomp],
        "variance": list(field.variance),
        "dtype": "f64",
        "order": "row-major",
        "endianness": "little",
    }
    body = np.ascontiguousarray(field.data.reshape(grid.n + (ncomp,)),
                                dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(body)


def load_field(path, grid: Grid4 | None = None) -> TensorField:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    shape = tuple(header["shape"])
    variance = tuple(header["variance"])
    n, ncomp = shape[:4], shape[4]
    if ncomp != 4 ** len(variance):
        raise ValueError(f"component count {ncomp} inconsistent with variance {variance}")
    if grid is None:
        grid = Grid4(n)
    elif grid.n != n:
        raise ValueError(f"dump grid {n} does not match expected {grid.n}")
    data = np.frombuffer(raw[nl + 1:], dtype="<f8").reshape(n + (4,) * len(variance))
    data = np.ascontiguousarray(data)
    rank = len(variance)
    if rank == 0:
        return ScalarField(grid, data)
    if variance == ("d",):
        return OneForm(grid, data)
    if variance == ("d", "d"):
        asym = np.max(np.abs(data + np.swapaxes(data, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(data))))
        if asym <= TwoForm.ASYM_TOL * scale:
            return TwoForm(grid, data)
        sym = np.max(np.abs(data - np.swapaxes(data, -1, -2)))
        if sym <= 1e-10 * scale:
            try:
                return Metric(grid, data)
            except Exception:
                pass
    return TensorField(grid, variance, data)
