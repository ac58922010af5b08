"""Planar polygon helpers used by the settle model and desktop meshing."""

from __future__ import annotations

import numpy as np


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for counter-clockwise winding."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    return p if polygon_area(p) >= 0 else p[::-1].copy()


def point_in_polygon(pt, poly) -> bool:
    """Ray-casting test, works for any simple polygon. Boundary counts as inside."""
    x, y = float(pt[0]), float(pt[1])
    p = np.asarray(poly, dtype=float)
    n = len(p)
    inside = False
    for i in range(n):
        x1, y1 = p[i]
        x2, y2 = p[(i + 1) % n]
        # on-edge check
        d = abs((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1))
        if d < 1e-12 and min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12 \
                and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def point_strictly_in_convex(pt, poly, margin: float = 0.0) -> bool:
    """True iff pt is inside the convex CCW polygon eroded by `margin`.

    Implemented as a strict half-plane test: the point must clear every
    edge's inward offset by more than zero.
    """
    p = ensure_ccw(poly)
    pt = np.asarray(pt, dtype=float)
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        edge = b - a
        ln = np.linalg.norm(edge)
        if ln < 1e-15:
            continue
        # inward normal of a CCW polygon is the left normal
        normal = np.array([-edge[1], edge[0]]) / ln
        if np.dot(pt - a, normal) <= margin:
            return False
    return True


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman intersection of two convex CCW polygons."""
    out = list(np.asarray(subject, dtype=float))
    clip = ensure_ccw(clip)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        edge = b - a
        inp = out
        out = []
        for j in range(len(inp)):
            cur = inp[j]
            prev = inp[j - 1]
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                t = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / denom
                out.append(prev + t * d)
            if cur_in:
                out.append(cur)
    return np.array(out) if out else np.zeros((0, 2))


def convex_overlap_area(poly_a, poly_b) -> float:
    inter = clip_convex(poly_a, poly_b)
    if len(inter) < 3:
        return 0.0
    return abs(polygon_area(inter))


def rect_footprint(center_xy, half_x: float, half_y: float, yaw: float) -> np.ndarray:
    """CCW corners of a yaw-rotated rectangle centered at center_xy."""
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.array([[c, -s], [s, c]])
    corners = np.array([[half_x, half_y], [-half_x, half_y],
                        [-half_x, -half_y], [half_x, -half_y]])
    return np.asarray(center_xy, dtype=float) + corners @ R.T


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    a = polygon_area(p)
    if abs(a) < 1e-15:
        return p.mean(axis=0)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / (6 * a)
    cy = np.sum((y + yn) * cross) / (6 * a)
    return np.array([cx, cy])
