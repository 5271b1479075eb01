"""Read/write 2D fields as ESRI ASCII grids.

Values are written with Python's repr, which round-trips float64 exactly, so
write -> read returns a bit-identical array. Row 0 of the array is the first
(northernmost) data row in the file.
"""

from __future__ import annotations

import os

import numpy as np

NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value")


def write_ascii_grid(path: str | os.PathLike, values: np.ndarray, cell_size: float,
                     xllcorner: float = 0.0, yllcorner: float = 0.0,
                     nodata: float = NODATA) -> None:
    """Write a 2D array as an ESRI ASCII grid. NaNs become the NODATA value."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {values.shape}")
    nrows, ncols = values.shape
    with open(path, "w", encoding="ascii") as f:
        f.write(f"ncols {ncols}\n")
        f.write(f"nrows {nrows}\n")
        f.write(f"xllcorner {float(xllcorner)!r}\n")
        f.write(f"yllcorner {float(yllcorner)!r}\n")
        f.write(f"cellsize {float(cell_size)!r}\n")
        f.write(f"NODATA_value {float(nodata)!r}\n")
        for row in values:
            f.write(" ".join(repr(float(v)) if np.isfinite(v) else repr(float(nodata))
                             for v in row))
            f.write("\n")


def read_ascii_grid(path: str | os.PathLike) -> tuple[np.ndarray, dict]:
    """Read an ESRI ASCII grid. Returns (values, header dict); NODATA cells
    become NaN."""
    header: dict = {}
    with open(path, "r", encoding="ascii") as f:
        for key in _HEADER_KEYS:
            line = f.readline()
            parts = line.split()
            if len(parts) != 2 or parts[0].lower() != key.lower():
                raise ValueError(f"{path}: malformed header line {line!r}, expected {key}")
            header[key] = float(parts[1]) if key not in ("ncols", "nrows") else int(parts[1])
        values = np.loadtxt(f, dtype=np.float64, ndmin=2)
    if values.shape != (header["nrows"], header["ncols"]):
        raise ValueError(
            f"{path}: data shape {values.shape} does not match header "
            f"({header['nrows']}, {header['ncols']})")
    values[values == header["NODATA_value"]] = np.nan
    return values, header
