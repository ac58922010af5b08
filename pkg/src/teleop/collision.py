"""Separating-axis overlap tests for upright (yaw-only) boxes.

Everything the executor and settle model move stays upright (top-down
grasping only), so colliders are z-aligned boxes: a yaw-rotated rectangle
footprint swept over a z interval.
"""

from __future__ import annotations

import numpy as np

from .geometry import Pose, quat_yaw


def interval_overlap(lo_a, hi_a, lo_b, hi_b) -> float:
    return min(hi_a, hi_b) - max(lo_a, lo_b)


def rect_penetration(center_a, half_a, yaw_a, center_b, half_b, yaw_b) -> float:
    """SAT penetration depth of two rotated rectangles (negative: separated).

    Axes tested: the two edge normals of each rectangle.
    """
    center_a = np.asarray(center_a, dtype=float)
    center_b = np.asarray(center_b, dtype=float)
    depth = np.inf
    axes = []
    for yaw in (yaw_a, yaw_b):
        c, s = np.cos(yaw), np.sin(yaw)
        axes.append(np.array([c, s]))
        axes.append(np.array([-s, c]))
    for axis in axes:
        ra = _rect_radius(half_a, yaw_a, axis)
        rb = _rect_radius(half_b, yaw_b, axis)
        dist = abs(float(np.dot(center_b - center_a, axis)))
        overlap = ra + rb - dist
        if overlap < depth:
            depth = overlap
    return float(depth)


def _rect_radius(half, yaw, axis) -> float:
    c, s = np.cos(yaw), np.sin(yaw)
    ux = np.array([c, s])
    uy = np.array([-s, c])
    return half[0] * abs(float(np.dot(ux, axis))) + half[1] * abs(float(np.dot(uy, axis)))


def box_penetration(pose_a: Pose, half_a, pose_b: Pose, half_b) -> float:
    """Penetration depth between two upright boxes; <= 0 means no contact."""
    half_a = np.asarray(half_a, dtype=float)
    half_b = np.asarray(half_b, dtype=float)
    dz = interval_overlap(pose_a.position[2] - half_a[2], pose_a.position[2] + half_a[2],
                          pose_b.position[2] - half_b[2], pose_b.position[2] + half_b[2])
    if dz <= 0:
        return float(dz)
    dxy = rect_penetration(pose_a.position[:2], half_a[:2], quat_yaw(pose_a.orientation),
                           pose_b.position[:2], half_b[:2], quat_yaw(pose_b.orientation))
    return float(min(dz, dxy))
