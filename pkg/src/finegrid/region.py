"""Polygon region masks with an optional geographic buffer.

A region is an outer lon/lat ring plus optional hole rings. Membership uses
the even-odd ray-casting rule with boundary points counting as inside. The
buffer is a point predicate: a point passes when it is inside the polygon or
within ``distance_km`` (haversine, Earth radius 6371.0088 km) of the nearest
boundary segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, UsageError
from .grid import PointTable

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class Region:
    """Polygon in lon/lat degrees: first ring is the outer boundary, the rest holes.

    Rings are stored unclosed (first vertex not repeated at the end).
    """

    rings: tuple
    name: str = ""

    def __post_init__(self):
        if not self.rings:
            raise UsageError("region needs at least one ring")
        cleaned = []
        for ring in self.rings:
            pts = [(float(lon), float(lat)) for lon, lat in ring]
            if len(pts) > 1 and pts[0] == pts[-1]:
                pts = pts[:-1]
            if len(set(pts)) < 3:
                raise UsageError("each ring needs at least 3 distinct vertices")
            cleaned.append(tuple(pts))
        if _ring_area(cleaned[0]) <= 0:
            raise UsageError("outer ring must enclose positive area")
        object.__setattr__(self, "rings", tuple(cleaned))


@dataclass(frozen=True)
class BufferSpec:
    """Buffer distance around the region boundary; 0 means no buffer."""

    distance_km: float = 0.0

    def __post_init__(self):
        if self.distance_km < 0:
            raise UsageError("buffer distance must be non-negative")


def _ring_area(ring) -> float:
    """Unsigned shoelace area of a ring in square degrees."""
    area = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0


def _on_segment(px, py, x1, y1, x2, y2) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= px <= max(x1, x2) and min(y1, y2) <= py <= max(y1, y2)


def _ring_crossings(ring, lon: float, lat: float):
    """(on_boundary, odd_crossings) for one ring via even-odd ray casting."""
    n = len(ring)
    inside = False
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        if _on_segment(lon, lat, x1, y1, x2, y2):
            return True, inside
        # half-open vertex rule so a ray through a vertex counts once
        if (y1 > lat) != (y2 > lat):
            x_at = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
            if lon < x_at:
                inside = not inside
    return False, inside


def contains(region: Region, lon: float, lat: float) -> bool:
    """Even-odd membership over all rings: inside the outer ring and not in a
    hole. Points exactly on any ring edge or vertex count as inside."""
    on, inside = _ring_crossings(region.rings[0], lon, lat)
    if on:
        return True
    if not inside:
        return False
    for hole in region.rings[1:]:
        on, in_hole = _ring_crossings(hole, lon, lat)
        if on:
            return True
        if in_hole:
            return False
    return True


def haversine_km(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in km between two lon/lat points."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def _segment_distance_km(lon, lat, x1, y1, x2, y2) -> float:
    """Point-to-segment distance on a local tangent plane at the segment midpoint.

    Equirectangular projection: x = dlon*cos(phi0)*R, y = dlat*R, with phi0
    the midpoint latitude. Adequate for buffer tests at a few hundred km.
    """
    phi0 = math.radians((y1 + y2) / 2.0)
    kx = math.cos(phi0) * EARTH_RADIUS_KM * math.pi / 180.0
    ky = EARTH_RADIUS_KM * math.pi / 180.0
    px, py = (lon - x1) * kx, (lat - y1) * ky
    sx, sy = (x2 - x1) * kx, (y2 - y1) * ky
    seg2 = sx * sx + sy * sy
    t = 0.0 if seg2 == 0.0 else max(0.0, min(1.0, (px * sx + py * sy) / seg2))
    dx, dy = px - t * sx, py - t * sy
    return math.hypot(dx, dy)


def boundary_distance_km(region: Region, lon: float, lat: float) -> float:
    """Distance from a point to the nearest boundary segment of any ring."""
    best = math.inf
    for ring in region.rings:
        n = len(ring)
        for i in range(n):
            x1, y1 = ring[i]
            x2, y2 = ring[(i + 1) % n]
            d = _segment_distance_km(lon, lat, x1, y1, x2, y2)
            if d < best:
                best = d
    return best


def within_buffer(region: Region, lon: float, lat: float, buffer: BufferSpec) -> bool:
    """True iff the point is inside the region or within the buffer distance
    of its boundary."""
    if contains(region, lon, lat):
        return True
    if buffer.distance_km == 0.0:
        return False
    return boundary_distance_km(region, lon, lat) <= buffer.distance_km


def clip_points(points: PointTable, region: Region, buffer: BufferSpec) -> PointTable:
    """Records with within_buffer true, order preserved."""
    keep = np.fromiter(
        (within_buffer(region, points.lon[i], points.lat[i], buffer) for i in range(len(points))),
        dtype=bool,
        count=len(points),
    )
    return points.subset(keep)


def read_region(path) -> Region:
    """Read a region from a GeoJSON file.

    Accepts a FeatureCollection, a bare Feature, or a bare Polygon geometry;
    only the first Polygon is used. Coordinates are [lon, lat]. MultiPolygon
    and other geometry types are rejected.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read region file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}", path=path) from exc

    name = ""
    if not isinstance(doc, dict):
        raise ParseError("region document must be a JSON object", path=path)
    kind = doc.get("type")
    if kind == "FeatureCollection":
        features = doc.get("features") or []
        if not features:
            raise ParseError("FeatureCollection has no features", path=path)
        feature = features[0]
    elif kind == "Feature":
        feature = doc
    elif kind == "Polygon":
        feature = {"geometry": doc, "properties": {}}
    else:
        raise ParseError(f"unsupported GeoJSON type: {kind!r}", path=path)

    geometry = feature.get("geometry") or {}
    if geometry.get("type") != "Polygon":
        raise ParseError(
            f"first feature must be a Polygon, got {geometry.get('type')!r}", path=path
        )
    props = feature.get("properties") or {}
    if isinstance(props, dict):
        name = str(props.get("name", ""))

    rings = []
    for ring in geometry.get("coordinates") or []:
        if len(ring) < 4:
            raise ParseError("polygon ring needs at least 4 on-disk vertices", path=path)
        for pt in ring:
            if not (isinstance(pt, (list, tuple)) and len(pt) >= 2):
                raise ParseError("ring coordinates must be [lon, lat] pairs", path=path)
        rings.append(tuple((float(p[0]), float(p[1])) for p in ring))
    if not rings:
        raise ParseError("polygon has no rings", path=path)
    try:
        return Region(rings=tuple(rings), name=name)
    except UsageError as exc:
        raise ParseError(str(exc), path=path) from exc


def write_region(region: Region, path) -> None:
    """Write a region as a single-feature GeoJSON FeatureCollection."""
    coords = [[[lon, lat] for lon, lat in ring] + [[ring[0][0], ring[0][1]]] for ring in region.rings]
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"name": region.name},
                "geometry": {"type": "Polygon", "coordinates": coords},
            }
        ],
    }
    Path(path).write_text(json.dumps(doc))
