"""Raster data model: uniform lon/lat grids, ESRI ASCII I/O, and point tables.

Grids are stored with row 0 as the northernmost row, matching the on-disk
ESRI ASCII layout. All coordinate math goes through the cell-centroid
formula so the half-cell offset is applied in exactly one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ParseError, UsageError

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class Grid:
    """A georeferenced raster with uniform square cells in lon/lat degrees.

    Cells whose value equals ``nodata`` are missing. ``values[0, :]`` is the
    northernmost row. The centroid of cell ``(r, c)`` is
    ``(xll + (c + 0.5) * cellsize, yll + (nrows - r - 0.5) * cellsize)``.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ncols", int(self.ncols))
        object.__setattr__(self, "nrows", int(self.nrows))
        object.__setattr__(self, "xll", float(self.xll))
        object.__setattr__(self, "yll", float(self.yll))
        object.__setattr__(self, "cellsize", float(self.cellsize))
        object.__setattr__(self, "nodata", float(self.nodata))
        if self.ncols < 1 or self.nrows < 1:
            raise UsageError("grid needs at least one row and one column")
        if not self.cellsize > 0:
            raise UsageError("cellsize must be positive")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.nrows, self.ncols):
            raise UsageError(
                f"values shape {v.shape} does not match (nrows, ncols) = "
                f"({self.nrows}, {self.ncols})"
            )
        if not np.isfinite(v).all():
            raise UsageError("grid values must be finite; use the nodata sentinel for gaps")
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.same_header(other) and bool(np.array_equal(self.values, other.values))

    def same_header(self, other: "Grid") -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and self.xll == other.xll
            and self.yll == other.yll
            and self.cellsize == other.cellsize
        )

    @property
    def data_mask(self) -> np.ndarray:
        """Boolean mask of cells that hold data (True = not nodata)."""
        return self.values != self.nodata

    def centroid(self, row: int, col: int) -> tuple[float, float]:
        """Lon/lat centroid of cell ``(row, col)``."""
        lon = self.xll + (col + 0.5) * self.cellsize
        lat = self.yll + (self.nrows - row - 0.5) * self.cellsize
        return lon, lat

    def cell_index(self, lon: float, lat: float) -> tuple[int, int] | None:
        """Cell containing the point, or None if outside the grid extent.

        Left and bottom cell edges belong to the cell; right and top edges
        belong to the neighbor, so every point maps to at most one cell and
        a cell's own lower-left corner maps back to it.
        """
        col = math.floor((lon - self.xll) / self.cellsize)
        row_from_bottom = math.floor((lat - self.yll) / self.cellsize)
        if col < 0 or col >= self.ncols or row_from_bottom < 0 or row_from_bottom >= self.nrows:
            return None
        return self.nrows - 1 - row_from_bottom, col

    def cell_index_arrays(self, lons: np.ndarray, lats: np.ndarray):
        """Vectorized :meth:`cell_index`.

        Returns ``(rows, cols, inside)``; rows/cols are only meaningful where
        ``inside`` is True.
        """
        lons = np.asarray(lons, dtype=float)
        lats = np.asarray(lats, dtype=float)
        cols = np.floor((lons - self.xll) / self.cellsize).astype(np.int64)
        rfb = np.floor((lats - self.yll) / self.cellsize).astype(np.int64)
        inside = (cols >= 0) & (cols < self.ncols) & (rfb >= 0) & (rfb < self.nrows)
        rows = self.nrows - 1 - rfb
        return rows, cols, inside

    def centroid_arrays(self):
        """Lon/lat centroids of all cells as two (nrows, ncols) arrays."""
        lons = self.xll + (np.arange(self.ncols) + 0.5) * self.cellsize
        lats = self.yll + (self.nrows - np.arange(self.nrows) - 0.5) * self.cellsize
        return np.broadcast_to(lons, (self.nrows, self.ncols)), np.broadcast_to(
            lats[:, None], (self.nrows, self.ncols)
        )

    def with_values(self, values: np.ndarray) -> "Grid":
        """New grid sharing this header with different cell values."""
        return replace(self, values=values)


@dataclass(frozen=True, eq=False)
class PointTable:
    """Point records with lon/lat coordinates, optional target, and covariates.

    ``target`` uses NaN for missing values. ``covariates`` is an (n, p) array;
    p = 0 is allowed for coordinates-only modeling.
    """

    lon: np.ndarray
    lat: np.ndarray
    target: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        lon = np.atleast_1d(np.asarray(self.lon, dtype=float))
        lat = np.atleast_1d(np.asarray(self.lat, dtype=float))
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        covs = np.asarray(self.covariates, dtype=float)
        if covs.ndim == 1:
            covs = covs.reshape(len(lon), -1) if covs.size else covs.reshape(len(lon), 0)
        n = len(lon)
        if len(lat) != n or len(target) != n or covs.shape[0] != n:
            raise UsageError("lon, lat, target, and covariates must have matching lengths")
        if n and not (np.isfinite(lon).all() and np.isfinite(lat).all()):
            raise UsageError("point coordinates must be finite")
        names = tuple(self.covariate_names)
        if not names and covs.shape[1]:
            names = tuple(f"cov{i + 1}" for i in range(covs.shape[1]))
        if len(names) != covs.shape[1]:
            raise UsageError(
                f"{len(names)} covariate names for {covs.shape[1]} covariate columns"
            )
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "covariate_names", names)

    def __len__(self) -> int:
        return len(self.lon)

    def __eq__(self, other):
        if not isinstance(other, PointTable):
            return NotImplemented
        return (
            self.covariate_names == other.covariate_names
            and np.array_equal(self.lon, other.lon)
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.target, other.target, equal_nan=True)
            and np.array_equal(self.covariates, other.covariates)
        )

    @property
    def p(self) -> int:
        """Covariate width."""
        return self.covariates.shape[1]

    @property
    def columns(self) -> tuple[str, ...]:
        return ("lon", "lat", "target") + self.covariate_names

    def subset(self, mask_or_indices) -> "PointTable":
        """Rows selected by a boolean mask or index array, order preserved."""
        return PointTable(
            self.lon[mask_or_indices],
            self.lat[mask_or_indices],
            self.target[mask_or_indices],
            self.covariates[mask_or_indices],
            self.covariate_names,
        )

    def with_target(self, target: np.ndarray) -> "PointTable":
        return PointTable(self.lon, self.lat, target, self.covariates, self.covariate_names)

    def require_targets(self) -> np.ndarray:
        """Targets as an array, raising if any record is missing one."""
        if len(self) == 0:
            raise UsageError("point table is empty")
        if not np.isfinite(self.target).all():
            raise UsageError("operation requires a target value on every record")
        return self.target


def empty_covariates(n: int) -> np.ndarray:
    return np.zeros((n, 0))


def read_ascii_grid(path) -> Grid:
    """Read an ESRI ASCII grid file.

    Header keys are case-insensitive but must appear in the canonical order
    (ncols, nrows, xllcorner, yllcorner, cellsize, NODATA_value). Raises
    :class:`ParseError` naming the offending line on any format violation.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read grid file: {exc}", path=path) from exc

    header = {}
    for i, key in enumerate(_HEADER_KEYS):
        if i >= len(lines):
            raise ParseError(f"missing header line '{key}'", path=path, line=i + 1)
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise ParseError(f"expected header line '{key} <value>'", path=path, line=i + 1)
        try:
            header[key] = int(parts[1]) if key in ("ncols", "nrows") else float(parts[1])
        except ValueError as exc:
            raise ParseError(f"non-numeric header value for '{key}'", path=path, line=i + 1) from exc

    ncols, nrows = header["ncols"], header["nrows"]
    if ncols < 1 or nrows < 1:
        raise ParseError("ncols and nrows must be positive", path=path, line=1)

    rows = []
    for i, line in enumerate(lines[len(_HEADER_KEYS):], start=len(_HEADER_KEYS) + 1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != ncols:
            raise ParseError(
                f"data row has {len(tokens)} values, expected {ncols}", path=path, line=i
            )
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise ParseError("non-numeric data token", path=path, line=i) from exc
    if len(rows) != nrows:
        raise ParseError(f"found {len(rows)} data rows, expected {nrows}", path=path)

    return Grid(
        ncols=ncols,
        nrows=nrows,
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=header["nodata_value"],
        values=np.array(rows),
    )


def write_ascii_grid(grid: Grid, path) -> None:
    """Write a grid as ESRI ASCII.

    Values are printed with ``repr`` (shortest digit string that parses back
    to the identical double), so write followed by read is the identity.
    """
    path = Path(path)
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.xll!r}",
        f"yllcorner {grid.yll!r}",
        f"cellsize {grid.cellsize!r}",
        f"NODATA_value {grid.nodata!r}",
    ]
    for row in grid.values:
        out.append(" ".join(repr(float(v)) for v in row))
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write grid file {path}: {exc}") from exc


def monthly_mean(days: list[Grid], min_count: int = 1) -> Grid:
    """Per-cell arithmetic mean of the non-nodata values across daily grids.

    A cell is nodata in the result iff fewer than ``min_count`` inputs have
    data there. All inputs must share an identical header.
    """
    if not days:
        raise UsageError("monthly_mean needs at least one grid")
    if min_count < 1:
        raise UsageError("min_count must be at least 1")
    first = days[0]
    for g in days[1:]:
        if not first.same_header(g) or g.nodata != first.nodata:
            raise UsageError("monthly_mean inputs must share an identical header")
    total = np.zeros_like(first.values)
    count = np.zeros(first.values.shape, dtype=int)
    for g in days:
        mask = g.data_mask
        total[mask] += g.values[mask]
        count += mask
    mean = np.divide(total, count, out=np.full_like(total, first.nodata), where=count > 0)
    result = np.where(count >= min_count, mean, first.nodata)
    return first.with_values(result)


def grid_to_points(grid: Grid) -> PointTable:
    """One record per non-nodata cell: centroid coordinates and the cell value."""
    mask = grid.data_mask
    rows, cols = np.nonzero(mask)
    lons = grid.xll + (cols + 0.5) * grid.cellsize
    lats = grid.yll + (grid.nrows - rows - 0.5) * grid.cellsize
    return PointTable(lons, lats, grid.values[mask], empty_covariates(mask.sum()))


def grid_centroids(grid: Grid) -> PointTable:
    """One record per cell (data or not) with no target: a prediction lattice."""
    lons, lats = grid.centroid_arrays()
    n = grid.nrows * grid.ncols
    return PointTable(
        lons.ravel().copy(), lats.ravel().copy(), np.full(n, np.nan), empty_covariates(n)
    )


def sample_covariates(points: PointTable, layers: list[Grid], layer_names: list[str]) -> PointTable:
    """Append one covariate per layer, read by nearest-cell lookup.

    Records that fall outside the layers' extent, or that hit nodata in any
    layer, are dropped; the drop count is ``len(points) - len(result)``.
    """
    if len(points) == 0:
        raise UsageError("sample_covariates needs a non-empty point table")
    if not layers:
        raise UsageError("sample_covariates needs at least one layer")
    if len(layers) != len(layer_names):
        raise UsageError(f"{len(layers)} layers but {len(layer_names)} names")
    first = layers[0]
    for g in layers[1:]:
        if not first.same_header(g):
            raise UsageError("covariate layers must share an identical header")

    rows, cols, inside = first.cell_index_arrays(points.lon, points.lat)
    rows_safe = np.clip(rows, 0, first.nrows - 1)
    cols_safe = np.clip(cols, 0, first.ncols - 1)
    keep = inside.copy()
    sampled = np.empty((len(points), len(layers)))
    for j, layer in enumerate(layers):
        vals = layer.values[rows_safe, cols_safe]
        keep &= inside & (vals != layer.nodata)
        sampled[:, j] = vals

    kept = points.subset(keep)
    names = kept.covariate_names + tuple(layer_names)
    if len(set(names)) != len(names):
        raise UsageError("covariate names must be unique")
    covs = np.hstack([kept.covariates, sampled[keep]])
    return PointTable(kept.lon, kept.lat, kept.target, covs, names)


def write_point_csv(table: PointTable, path) -> None:
    """Write a point table as CSV: ``lon,lat[,target][,<covariates>]``.

    The target column is included when any record has one; missing targets
    are empty fields.
    """
    include_target = bool(np.isfinite(table.target).any())
    cols = ["lon", "lat"] + (["target"] if include_target else []) + list(table.covariate_names)
    lines = [",".join(cols)]
    for i in range(len(table)):
        row = [repr(float(table.lon[i])), repr(float(table.lat[i]))]
        if include_target:
            row.append("" if not np.isfinite(table.target[i]) else repr(float(table.target[i])))
        row.extend(repr(float(v)) for v in table.covariates[i])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_point_csv(path) -> PointTable:
    """Read a point table written by :func:`write_point_csv`."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty point CSV", path=path)
    cols = lines[0].split(",")
    if cols[:2] != ["lon", "lat"]:
        raise ParseError("point CSV must start with lon,lat columns", path=path, line=1)
    has_target = len(cols) > 2 and cols[2] == "target"
    cov_names = cols[3:] if has_target else cols[2:]
    lon, lat, target, covs = [], [], [], []
    for i, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(cols):
            raise ParseError(f"row has {len(fields)} fields, expected {len(cols)}", path=path, line=i)
        try:
            lon.append(float(fields[0]))
            lat.append(float(fields[1]))
            if has_target:
                target.append(float(fields[2]) if fields[2] != "" else np.nan)
                covs.append([float(v) for v in fields[3:]])
            else:
                target.append(np.nan)
                covs.append([float(v) for v in fields[2:]])
        except ValueError as exc:
            raise ParseError("non-numeric field", path=path, line=i) from exc
    covariates = np.array(covs) if cov_names else empty_covariates(len(lon))
    return PointTable(np.array(lon), np.array(lat), np.array(target), covariates, tuple(cov_names))
