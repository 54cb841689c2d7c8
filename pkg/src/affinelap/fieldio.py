"""Field file format and CSV slice export.

A field file is one ASCII header line

    AFLD v1 N=<dim> shape=<s1,...> spacing=<h1,...> origin=<o1,...> masked=<0|1>

followed by the node values in row-major order as little-endian float64, and,
for masked fields, the inside flags in the same order and encoding (0.0/1.0).
"""

from __future__ import annotations

import csv

import numpy as np

from .grids import DomainMask, GridSpec, ScalarField

_MAGIC = "AFLD v1"


def _fmt_floats(vals) -> str:
    return ",".join(repr(float(v)) for v in vals)


def write_afld(path, field: ScalarField) -> None:
    grid = field.grid
    masked = field.mask is not None
    header = (f"{_MAGIC} N={grid.dim}"
              f" shape={','.join(str(s) for s in grid.shape)}"
              f" spacing={_fmt_floats(grid.spacing)}"
              f" origin={_fmt_floats(grid.origin)}"
              f" masked={int(masked)}\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
        if masked:
            f.write(np.ascontiguousarray(field.mask.inside, dtype="<f8").tobytes())


def read_afld(path) -> ScalarField:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        if not header.startswith(_MAGIC):
            raise ValueError(f"{path}: not an AFLD v1 file")
        fields = dict(tok.split("=", 1) for tok in header[len(_MAGIC):].split())
        dim = int(fields["N"])
        shape = tuple(int(s) for s in fields["shape"].split(","))
        spacing = tuple(float(s) for s in fields["spacing"].split(","))
        origin = tuple(float(s) for s in fields["origin"].split(","))
        masked = fields["masked"] == "1"
        grid = GridSpec(dim, shape, spacing, origin)
        count = grid.n_nodes
        raw = f.read(8 * count * (2 if masked else 1))
        expect = 8 * count * (2 if masked else 1)
        if len(raw) != expect:
            raise ValueError(f"{path}: truncated payload ({len(raw)} of {expect} bytes)")
        values = np.frombuffer(raw[:8 * count], dtype="<f8").reshape(shape).copy()
        mask = None
        if masked:
            flags = np.frombuffer(raw[8 * count:], dtype="<f8").reshape(shape)
            mask = DomainMask(grid, flags != 0.0)
        return ScalarField(grid, values, mask)


def write_slice_csv(path, field: ScalarField, axes: tuple[int, ...] | None = None,
                    index: dict[int, int] | None = None) -> None:
    """Export an axis-aligned 1D/2D slice as CSV rows of coordinates + value.

    axes: the free axes of the slice (default: first min(dim, 2) axes).
    index: node index per fixed axis (default: middle node).
    """
    grid = field.grid
    if axes is None:
        axes = tuple(range(min(grid.dim, 2)))
    if len(axes) not in (1, 2):
        raise ValueError("slice must have 1 or 2 free axes")
    index = dict(index or {})
    sel: list = [slice(None)] * grid.dim
    for ax in range(grid.dim):
        if ax in axes:
            continue
        sel[ax] = index.get(ax, grid.shape[ax] // 2)
    sub = field.values[tuple(sel)]
    axlists = [grid.axis(a) for a in axes]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{a + 1}" for a in axes] + ["value"])
        if len(axes) == 1:
            for i, x in enumerate(axlists[0]):
                w.writerow([repr(float(x)), repr(float(sub[i]))])
        else:
            for i, x in enumerate(axlists[0]):
                for j, y in enumerate(axlists[1]):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(sub[i, j]))])
