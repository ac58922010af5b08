"""Planar polygon helpers, checked against shapely."""

import numpy as np
from hypothesis import given, strategies as st
from shapely.geometry import Point, Polygon

from teleop.geometry2d import (clip_convex, convex_overlap_area, ensure_ccw,
                               point_in_polygon, point_strictly_in_convex,
                               polygon_area, polygon_centroid, rect_footprint)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_rect(rng):
    cx, cy = rng.uniform(-1, 1, 2)
    hx, hy = rng.uniform(0.05, 0.8, 2)
    yaw = rng.uniform(-np.pi, np.pi)
    return rect_footprint([cx, cy], hx, hy, yaw)


rects = st.builds(lambda s: random_rect(np.random.default_rng(s)),
                  st.integers(min_value=0, max_value=2**32 - 1))


def test_area_square():
    assert polygon_area(SQUARE) == 1.0
    assert polygon_area(SQUARE[::-1]) == -1.0  # clockwise is negative


@given(rects)
def test_area_matches_shapely(poly):
    assert abs(abs(polygon_area(poly)) - Polygon(poly).area) < 1e-12


def test_ensure_ccw_flips_clockwise():
    out = ensure_ccw(SQUARE[::-1])
    assert polygon_area(out) > 0


@given(rects, st.integers(min_value=0, max_value=2**32 - 1))
def test_point_in_polygon_matches_shapely(poly, seed):
    rng = np.random.default_rng(seed)
    shp = Polygon(poly)
    for _ in range(20):
        pt = rng.uniform(-2, 2, 2)
        # skip points within float fuzz of the boundary: conventions differ
        if abs(shp.exterior.distance(Point(pt))) < 1e-9:
            continue
        assert point_in_polygon(pt, poly) == shp.contains(Point(pt))


def test_point_in_polygon_boundary_is_inside():
    assert point_in_polygon([0.0, 0.5], SQUARE)
    assert point_in_polygon([0.0, 0.0], SQUARE)


def test_strictly_in_convex_margin():
    assert point_strictly_in_convex([0.5, 0.5], SQUARE)
    assert not point_strictly_in_convex([0.0, 0.5], SQUARE)       # on edge
    assert not point_strictly_in_convex([0.004, 0.5], SQUARE, margin=0.005)
    assert point_strictly_in_convex([0.006, 0.5], SQUARE, margin=0.005)


@given(rects, rects)
def test_overlap_area_matches_shapely(a, b):
    want = Polygon(a).intersection(Polygon(b)).area
    assert abs(convex_overlap_area(a, b) - want) < 1e-9


@given(rects, rects)
def test_clip_convex_matches_shapely(a, b):
    clipped = clip_convex(a, b)
    want = Polygon(a).intersection(Polygon(b)).area
    got = abs(polygon_area(clipped)) if len(clipped) >= 3 else 0.0
    assert abs(got - want) < 1e-9


def test_rect_footprint_axes():
    fp = rect_footprint([1.0, 2.0], 0.3, 0.2, 0.0)
    np.testing.assert_allclose(sorted(fp[:, 0]), [0.7, 0.7, 1.3, 1.3])
    np.testing.assert_allclose(sorted(fp[:, 1]), [1.8, 1.8, 2.2, 2.2])
    fp90 = rect_footprint([0.0, 0.0], 0.3, 0.2, np.pi / 2)
    np.testing.assert_allclose(np.max(np.abs(fp90), axis=0), [0.2, 0.3], atol=1e-12)


@given(rects)
def test_centroid_matches_shapely(poly):
    c = polygon_centroid(poly)
    shp = Polygon(poly).centroid
    np.testing.assert_allclose(c, [shp.x, shp.y], atol=1e-9)
