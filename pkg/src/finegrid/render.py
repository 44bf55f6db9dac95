"""Lossless heatmap rendering of grids to binary portable pixmaps (P6).

One image pixel per cell. The sequential palette runs warm (low values) to
cool (high values); the diverging palette is symmetric around zero for
residual maps. Nodata cells render as a reserved neutral grey, and the value
range behind the color scale goes to a sidecar text file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UsageError
from .grid import Grid

PALETTES = ("sequential", "diverging")

NODATA_COLOR = (128, 128, 128)

# warm -> pale -> cool, low to high
_SEQUENTIAL_STOPS = ((178, 34, 52), (247, 238, 170), (44, 84, 172))

# cool -> white -> warm, negative to positive
_DIVERGING_STOPS = ((33, 102, 172), (247, 247, 247), (178, 24, 43))


def _interpolate(stops, t: np.ndarray) -> np.ndarray:
    """Piecewise-linear color ramp; t in [0, 1] -> (n, 3) uint8."""
    stops = np.asarray(stops, dtype=float)
    segments = len(stops) - 1
    scaled = np.clip(t, 0.0, 1.0) * segments
    seg = np.minimum(scaled.astype(int), segments - 1)
    frac = scaled - seg
    color = stops[seg] + (stops[seg + 1] - stops[seg]) * frac[:, None]
    return np.clip(np.rint(color), 0, 255).astype(np.uint8)


def render_heatmap(grid: Grid, palette: str, path) -> None:
    """Write a P6 pixmap of the grid plus a ``<path>.legend.txt`` sidecar.

    sequential: values mapped linearly over [min, max] of the data cells;
    diverging: mapped over [-m, m] with m = max |value|, so zero sits on the
    neutral midpoint. A constant grid renders as the midpoint color.
    """
    if palette not in PALETTES:
        raise UsageError(f"palette must be one of {PALETTES}")
    mask = grid.data_mask
    flat_mask = mask.ravel()
    values = grid.values.ravel()

    if palette == "sequential":
        if flat_mask.any():
            lo = float(values[flat_mask].min())
            hi = float(values[flat_mask].max())
        else:
            lo = hi = 0.0
        stops = _SEQUENTIAL_STOPS
    else:
        m = float(np.abs(values[flat_mask]).max()) if flat_mask.any() else 0.0
        lo, hi = -m, m
        stops = _DIVERGING_STOPS

    if hi > lo:
        t = (values - lo) / (hi - lo)
    else:
        t = np.full(values.shape, 0.5)
    pixels = _interpolate(stops, t)
    pixels[~flat_mask] = NODATA_COLOR

    path = Path(path)
    header = f"P6\n{grid.ncols} {grid.nrows}\n255\n".encode("ascii")
    try:
        path.write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise UsageError(f"cannot write image {path}: {exc}") from exc
    legend = (
        f"palette={palette}\nmin={lo!r}\nmax={hi!r}\n"
        f"nodata_color={NODATA_COLOR[0]},{NODATA_COLOR[1]},{NODATA_COLOR[2]}\n"
    )
    Path(str(path) + ".legend.txt").write_text(legend)


def read_ppm(path):
    """Read back a P6 pixmap as ((width, height), (h, w, 3) uint8 array)."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6":
        raise UsageError(f"{path} is not a binary PPM")
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=width * height * 3)
    return (width, height), pixels.reshape(height, width, 3)
