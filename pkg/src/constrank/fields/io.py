"""
Field dump and slice export.
A dump is one JSON header line followed by the raw little-endian float64 payload.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.errors import ConfigError, InvalidParameter
from .grid import GridSpec, PeriodicField

logger = logging.getLogger(__name__)

LAYOUT = "row-major, fiber-fastest"


def dump_field(field: PeriodicField, path: Union[str, Path]) -> None:
    header = {
        "grid": {
            "dim_n": field.grid.dim_n,
            "points_per_axis": field.grid.points_per_axis,
            "period": field.grid.period,
        },
        "fiber_dim": field.fiber_dim,
        "layout": LAYOUT,
        "dtype": "<f8",
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    logger.debug(f"Wrote field {field} to {path}")


def load_field(path: Union[str, Path]) -> PeriodicField:
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"{path} does not start with a field header: {e}")
        payload = f.read()

    if header.get("layout") != LAYOUT:
        raise ConfigError(f"Unsupported field layout {header.get('layout')!r}")
    grid = GridSpec(**header["grid"])
    fiber_dim = int(header["fiber_dim"])
    values = np.frombuffer(payload, dtype="<f8")
    expected = grid.n_points * fiber_dim
    if values.size != expected:
        raise ConfigError(f"{path} holds {values.size} values, header implies {expected}")
    return PeriodicField(grid, values.reshape(grid.shape + (fiber_dim,)))


def export_slice_csv(field: PeriodicField, path: Union[str, Path],
                     fixed_index: Optional[int] = None) -> int:
    """
    Write a 1D or 2D slice as CSV rows (coordinates, components).

    Args:
        field: Field to export
        path: Output CSV
        fixed_index: Index along the last axis for 3D fields (defaults to the middle plane)

    Returns:
        Number of data rows written
    """
    grid = field.grid
    coords = grid.coordinates()
    values = field.values
    if grid.dim_n == 3:
        index = grid.points_per_axis // 2 if fixed_index is None else fixed_index
        if not 0 <= index < grid.points_per_axis:
            raise InvalidParameter(f"slice index {index} outside 0..{grid.points_per_axis - 1}")
        coords, values = coords[..., index, :2], values[..., index, :]

    n_coords = coords.shape[-1]
    coords = coords.reshape(-1, n_coords)
    values = values.reshape(-1, field.fiber_dim)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x{i + 1}" for i in range(n_coords)] + [f"f{c}" for c in range(field.fiber_dim)])
        for x, v in zip(coords, values):
            writer.writerow([f"{c:.12g}" for c in x] + [f"{c:.12g}" for c in v])
    return len(values)
