"""Quasi-static rest-pose prediction for a released box.

The model: snap the box upright (roll/pitch zeroed, yaw kept), drop it
straight down onto the desktop or the first settled box under its
footprint, then, if its center of mass is outside the eroded support
footprint, slide it horizontally away from the support centroid until it
falls onto something that does stabilize it. The desktop always does.

Everything is a pure function of the snapshot, so previews are
deterministic and safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import box_penetration
from .geometry import Pose, quat_from_yaw, quat_yaw
from .geometry2d import (convex_overlap_area, point_strictly_in_convex,
                         polygon_centroid, rect_footprint)
from .scene import CONTACT_TOL, SceneState

DESKTOP = "desktop"

GRAVITY = 9.81
STABILITY_MARGIN = 0.005   # m, erosion of the support footprint
SLIDE_STEP = 0.005         # m per slide increment
SLIDE_SPEED = 0.1          # m/s, only used for trace timestamps
OVERLAP_EPS = 1e-6         # m^2, footprint overlap below this is "not supported"
RELEASE_SINK_TOL = 2e-3    # m; releases this far into a support are snapped up,
                           # deeper ones are rejected (matches the executor's
                           # collision threshold and the IK position tolerance)
MAX_STEPS = 100000


class SettleError(Exception):
    pass


class ReleaseOutsideWorkspaceError(SettleError):
    def __init__(self):
        super().__init__("release outside workspace")


class InvalidReleasePoseError(SettleError):
    def __init__(self, detail="invalid release pose"):
        super().__init__(detail)


@dataclass
class SettleResult:
    final_pose: Pose
    support: str               # DESKTOP or the supporting instance id
    stable: bool
    trace: list                # [(time_s, Pose)]

    @property
    def on_desktop(self) -> bool:
        return self.support == DESKTOP


def snap_upright(pose: Pose) -> Pose:
    return Pose(pose.position.copy(), quat_from_yaw(quat_yaw(pose.orientation)))


def support_check(com_xy, footprint, margin=STABILITY_MARGIN) -> bool:
    """Static stability: COM ground projection strictly inside the eroded
    convex support footprint."""
    return point_strictly_in_convex(com_xy, footprint, margin)


def box_contact_height(position_xy, yaw, half_extents, scene: SceneState,
                       exclude_id=None, below_z=np.inf):
    """Highest support under a falling upright box's footprint.

    Returns (z_contact, support): the desktop plane height or the top face
    of the highest settled box whose footprint overlaps by > OVERLAP_EPS.
    Boxes whose top is above `below_z` (the faller's current bottom) are
    obstacles, not supports, and are ignored here.
    """
    fp = rect_footprint(position_xy, half_extents[0], half_extents[1], yaw)
    z = scene.desktop.height_at(position_xy[0], position_xy[1])
    support = DESKTOP
    for other in scene.objects:
        if other.instance_id == exclude_id or other.held:
            continue
        top = other.top_z()
        if top > below_z + CONTACT_TOL:
            continue
        if convex_overlap_area(fp, other.footprint()) <= OVERLAP_EPS:
            continue
        if top > z:
            z, support = top, other.instance_id
    return z, support


def settle(scene: SceneState, instance_id: str, release_pose: Pose,
           margin=STABILITY_MARGIN, slide_step=SLIDE_STEP) -> SettleResult:
    obj = scene.instance(instance_id)
    half = obj.model.half_extents
    pose = snap_upright(release_pose)
    x, y = pose.position[:2]

    if not scene.desktop.contains_xy(x, y):
        raise ReleaseOutsideWorkspaceError()
    desk_z = scene.desktop.height_at(x, y)
    if pose.position[2] - half[2] < desk_z - RELEASE_SINK_TOL:
        raise InvalidReleasePoseError("release pose below the desktop plane")
    others = [o for o in scene.objects if o.instance_id != instance_id and not o.held]
    for other in others:
        pen = box_penetration(pose, half, other.actual_pose, other.model.half_extents)
        if pen > RELEASE_SINK_TOL:
            raise InvalidReleasePoseError(
                f"release pose interpenetrates {other.instance_id} by {pen:.4f} m")
    # sub-tolerance sinking (executor places with finite IK accuracy): start
    # the drop from the contact height so the trace stays monotone
    z0, _ = box_contact_height(pose.position[:2], quat_yaw(pose.orientation), half, scene,
                               exclude_id=instance_id,
                               below_z=pose.position[2] - half[2] + RELEASE_SINK_TOL)
    if pose.position[2] < z0 + half[2]:
        pose.position[2] = z0 + half[2]

    yaw = quat_yaw(pose.orientation)
    t = 0.0
    trace = [(t, pose.copy())]
    for _ in range(MAX_STEPS):
        bottom = pose.position[2] - half[2]
        z_c, support = box_contact_height(pose.position[:2], yaw, half, scene,
                                          exclude_id=instance_id, below_z=bottom)
        rest_z = z_c + half[2]
        drop = pose.position[2] - rest_z
        if drop > 1e-12:
            t += float(np.sqrt(2.0 * drop / GRAVITY))
            pose.position[2] = rest_z
            trace.append((t, pose.copy()))
        if support == DESKTOP:
            return SettleResult(pose, DESKTOP, True, trace)
        support_obj = scene.instance(support)
        support_fp = support_obj.footprint()
        if support_check(pose.position[:2], support_fp, margin):
            return SettleResult(pose, support, True, trace)
        # unstable: slide horizontally away from the support centroid
        centroid = polygon_centroid(support_fp)
        direction = pose.position[:2] - centroid
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 1e-12 else np.array([1.0, 0.0])
        slid = False
        for _ in range(MAX_STEPS):
            candidate_xy = pose.position[:2] + slide_step * direction
            if not scene.desktop.contains_xy(candidate_xy[0], candidate_xy[1]):
                # ran out of desktop while sliding: rest unstably at the edge
                return SettleResult(pose, support, False, trace)
            bottom = pose.position[2] - half[2]
            z_new, sup_new = box_contact_height(candidate_xy, yaw, half, scene,
                                                exclude_id=instance_id, below_z=bottom)
            if z_new + half[2] > pose.position[2] + 1e-9:
                # blocked sideways by a taller obstacle
                return SettleResult(pose, support, False, trace)
            pose.position[:2] = candidate_xy
            t += slide_step / SLIDE_SPEED
            trace.append((t, pose.copy()))
            slid = True
            fp = rect_footprint(pose.position[:2], half[0], half[1], yaw)
            if convex_overlap_area(fp, support_fp) <= OVERLAP_EPS:
                break  # slid off this support; fall again
        if not slid:
            return SettleResult(pose, support, False, trace)
    raise SettleError("settle did not terminate")
