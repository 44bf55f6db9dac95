import json
import math

import numpy as np
import pytest

from finegrid import (
    BufferSpec,
    ParseError,
    PointTable,
    Region,
    UsageError,
    boundary_distance_km,
    clip_points,
    contains,
    haversine_km,
    read_region,
    within_buffer,
    write_region,
)

UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

ANNULUS = (
    ((0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)),
    ((1.5, 1.5), (2.5, 1.5), (2.5, 2.5), (1.5, 2.5)),
)

# 1 km of longitude at the equator, in degrees (great circle, R = 6371.0088)
DEG_PER_KM_EQUATOR = 0.00899320363724538


def winding_inside(ring, lon, lat):
    """Winding-number membership, the independent oracle for simple polygons."""
    angle = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i][0] - lon, ring[i][1] - lat
        x2, y2 = ring[(i + 1) % n][0] - lon, ring[(i + 1) % n][1] - lat
        angle += math.atan2(x1 * y2 - y1 * x2, x1 * x2 + y1 * y2)
    return abs(angle) > math.pi


def law_of_cosines_km(lon1, lat1, lon2, lat2):
    """Independent great-circle formula for oracle comparison."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return 6371.0088 * math.acos(max(-1.0, min(1.0, c)))


class TestRegionConstruction:
    def test_closed_ring_stored_unclosed(self):
        r = Region(rings=(UNIT_SQUARE + ((0.0, 0.0),),))
        assert len(r.rings[0]) == 4

    def test_too_few_vertices(self):
        with pytest.raises(UsageError):
            Region(rings=(((0.0, 0.0), (1.0, 0.0)),))

    def test_degenerate_outer_ring(self):
        with pytest.raises(UsageError):
            Region(rings=(((0.0, 0.0), (1.0, 1.0), (2.0, 2.0)),))


class TestGeoJson:
    def test_unit_square_feature_collection(self, tmp_path):
        doc = {
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"name": "8.5.1"},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
                },
            }],
        }
        path = tmp_path / "sq.geojson"
        path.write_text(json.dumps(doc))
        r = read_region(path)
        assert len(r.rings) == 1
        assert len(r.rings[0]) == 4
        assert r.name == "8.5.1"

    def test_polygon_with_hole(self, tmp_path):
        doc = {
            "type": "Polygon",
            "coordinates": [
                [[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]],
                [[1, 1], [2, 1], [2, 2], [1, 2], [1, 1]],
            ],
        }
        path = tmp_path / "hole.geojson"
        path.write_text(json.dumps(doc))
        assert len(read_region(path).rings) == 2

    def test_linestring_rejected(self, tmp_path):
        doc = {
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]},
        }
        path = tmp_path / "ls.geojson"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="Polygon"):
            read_region(path)

    def test_multipolygon_rejected(self, tmp_path):
        doc = {"type": "Feature",
               "geometry": {"type": "MultiPolygon", "coordinates": []}}
        path = tmp_path / "mp.geojson"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            read_region(path)

    def test_short_ring_rejected(self, tmp_path):
        doc = {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [0, 0]]]}
        path = tmp_path / "short.geojson"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="4"):
            read_region(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.geojson"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            read_region(path)

    def test_write_read_round_trip(self, tmp_path):
        r = Region(rings=ANNULUS, name="ring")
        path = tmp_path / "rt.geojson"
        write_region(r, path)
        back = read_region(path)
        assert back.rings == r.rings
        assert back.name == "ring"


class TestContains:
    def test_center_of_square(self):
        r = Region(rings=(UNIT_SQUARE,))
        assert contains(r, 0.5, 0.5)
        assert not contains(r, 1.5, 0.5)

    def test_hole_of_annulus(self):
        r = Region(rings=ANNULUS)
        assert contains(r, 0.5, 0.5)
        assert not contains(r, 2.0, 2.0)

    def test_boundary_counts_as_inside(self):
        r = Region(rings=(UNIT_SQUARE,))
        assert contains(r, 0.0, 0.0)      # outer vertex
        assert contains(r, 0.5, 0.0)      # outer edge
        annulus = Region(rings=ANNULUS)
        assert contains(annulus, 1.5, 1.5)  # hole vertex
        assert contains(annulus, 2.0, 1.5)  # hole edge

    def test_matches_winding_number_oracle(self, rng):
        for _ in range(20):
            # random convex polygon: hull of random points
            pts = rng.uniform(-5, 5, (12, 2))
            center = pts.mean(axis=0)
            angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
            hull = pts[np.argsort(angles)]
            region = Region(rings=(tuple(map(tuple, hull)),))
            probes_lon = rng.uniform(-6, 6, 50)
            probes_lat = rng.uniform(-6, 6, 50)
            for lon, lat in zip(probes_lon, probes_lat):
                assert contains(region, lon, lat) == winding_inside(
                    region.rings[0], lon, lat
                )


class TestHaversine:
    def test_against_independent_formula(self, rng):
        for _ in range(200):
            lon1, lon2 = rng.uniform(-179, 179, 2)
            lat1, lat2 = rng.uniform(-85, 85, 2)
            a = haversine_km(lon1, lat1, lon2, lat2)
            b = law_of_cosines_km(lon1, lat1, lon2, lat2)
            assert a == pytest.approx(b, abs=1e-6, rel=1e-9)

    def test_known_distances(self):
        assert haversine_km(0, 60, 1, 60) == pytest.approx(55.59701086493189, abs=1e-9)
        assert haversine_km(0, 0, 0, 0) == 0.0


class TestWithinBuffer:
    def test_interior_with_zero_buffer(self):
        r = Region(rings=(UNIT_SQUARE,))
        assert within_buffer(r, 0.5, 0.5, BufferSpec(0.0))

    def test_one_km_east_with_100km_buffer(self):
        # point 1 km due east of the east edge of the unit square, on the equator
        r = Region(rings=(UNIT_SQUARE,))
        lon = 1.0 + DEG_PER_KM_EQUATOR
        assert not contains(r, lon, 0.5)
        assert boundary_distance_km(r, lon, 0.5) == pytest.approx(1.0, abs=0.01)
        assert within_buffer(r, lon, 0.5, BufferSpec(100.0))

    def test_200km_away_not_within_100km_buffer(self):
        r = Region(rings=(UNIT_SQUARE,))
        lon = 1.0 + 200.0 * DEG_PER_KM_EQUATOR
        assert boundary_distance_km(r, lon, 0.5) == pytest.approx(200.0, rel=0.01)
        assert not within_buffer(r, lon, 0.5, BufferSpec(100.0))

    def test_monotone_in_distance(self, rng):
        r = Region(rings=(UNIT_SQUARE,))
        for _ in range(100):
            lon, lat = rng.uniform(-2, 3, 2)
            d1, d2 = sorted(rng.uniform(0, 300, 2))
            if within_buffer(r, lon, lat, BufferSpec(d1)):
                assert within_buffer(r, lon, lat, BufferSpec(d2))

    def test_zero_buffer_equals_contains_off_boundary(self, rng):
        r = Region(rings=ANNULUS)
        for _ in range(200):
            lon, lat = rng.uniform(-1, 5, 2)
            assert within_buffer(r, lon, lat, BufferSpec(0.0)) == contains(r, lon, lat)


class TestClipPoints:
    def make_points(self, rng, n):
        return PointTable(rng.uniform(-1, 2, n), rng.uniform(-1, 2, n),
                          rng.random(n), np.zeros((n, 0)))

    def test_all_interior_is_identity(self, rng):
        r = Region(rings=(UNIT_SQUARE,))
        pts = PointTable([0.2, 0.8], [0.3, 0.6], [0.1, 0.2], np.zeros((2, 0)))
        out = clip_points(pts, r, BufferSpec(0.0))
        assert out == pts

    def test_zero_buffer_equals_contains_clip(self, rng):
        r = Region(rings=(UNIT_SQUARE,))
        pts = self.make_points(rng, 100)
        out = clip_points(pts, r, BufferSpec(0.0))
        expect = [i for i in range(100) if contains(r, pts.lon[i], pts.lat[i])]
        np.testing.assert_array_equal(out.lon, pts.lon[expect])

    def test_buffer_monotonicity(self, rng):
        r = Region(rings=(UNIT_SQUARE,))
        pts = self.make_points(rng, 150)
        small = clip_points(pts, r, BufferSpec(20.0))
        large = clip_points(pts, r, BufferSpec(120.0))
        assert len(large) >= len(small)
        assert set(small.lon) <= set(large.lon)

    def test_whole_plane_polygon_is_identity(self, rng):
        world = Region(rings=(((-180.0, -89.0), (180.0, -89.0),
                               (180.0, 89.0), (-180.0, 89.0)),))
        pts = self.make_points(rng, 40)
        assert clip_points(pts, world, BufferSpec(0.0)) == pts

    def test_order_preserved(self, rng):
        r = Region(rings=(UNIT_SQUARE,))
        pts = self.make_points(rng, 60)
        out = clip_points(pts, r, BufferSpec(50.0))
        kept = [i for i in range(60)
                if within_buffer(r, pts.lon[i], pts.lat[i], BufferSpec(50.0))]
        np.testing.assert_array_equal(out.lat, pts.lat[kept])
