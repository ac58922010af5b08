"""Authoritative simulated world: object catalog, instances, desktop, arm state.

The scene is single-writer: the executor (or the server's command thread)
mutates the live SceneState, everyone else reads snapshots.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arm import JointState
from .collision import box_penetration
from .fileformats import ParseError, floats, parse_sections
from .geometry import Pose, quat_yaw
from .geometry2d import convex_overlap_area, ensure_ccw, point_in_polygon, polygon_area, rect_footprint

MAX_APERTURE = 0.085  # Robotiq 2f-85 full opening, meters
CONTACT_TOL = 1e-4    # max tolerated interpenetration between settled objects


class SceneError(Exception):
    pass


class ValidationError(SceneError):
    pass


class UnknownInstanceError(SceneError):
    def __init__(self, instance_id):
        super().__init__(f"unknown instance id: {instance_id!r}")
        self.instance_id = instance_id


@dataclass
class ObjectModel:
    model_id: str
    half_extents: np.ndarray  # box half sizes, meters
    mass: float
    grasp_width: float        # finger aperture at contact

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=float).reshape(3)
        if not np.all(self.half_extents > 0):
            raise ValidationError(f"{self.model_id}: half extents must be positive")
        if self.mass <= 0:
            raise ValidationError(f"{self.model_id}: mass must be positive")
        if not (0 < self.grasp_width <= MAX_APERTURE):
            raise ValidationError(
                f"{self.model_id}: grasp_width {self.grasp_width} outside (0, {MAX_APERTURE}]")
        if self.grasp_width > 2 * min(self.half_extents[0], self.half_extents[1]):
            raise ValidationError(
                f"{self.model_id}: grasp_width exceeds twice the smallest horizontal half extent")


@dataclass
class ObjectInstance:
    instance_id: str
    model: ObjectModel
    actual_pose: Pose
    ghost_pose: Pose
    held: bool = False
    support: str | None = None  # "desktop", another instance_id, or unknown

    def top_z(self) -> float:
        return float(self.actual_pose.position[2] + self.model.half_extents[2])

    def footprint(self, pose: Pose | None = None) -> np.ndarray:
        pose = pose or self.actual_pose
        return rect_footprint(pose.position[:2], self.model.half_extents[0],
                              self.model.half_extents[1], quat_yaw(pose.orientation))


@dataclass
class DesktopMesh:
    """Detected work surface: supporting plane, boundary polygon, triangulation.

    The boundary lives in deterministic plane coordinates: origin at the
    plane point closest to the world origin, u-axis from projecting world
    x (or y when the normal is nearly x), v = normal x u.
    """

    normal: np.ndarray        # unit, canonicalized to point up (+z)
    offset: float             # normal . p = offset for on-plane points
    boundary: np.ndarray      # (N, 2) CCW simple polygon, plane coords
    triangles: list           # index triples into boundary vertices

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            self.normal = self.normal / n
        if self.normal[2] < 0:
            self.normal = -self.normal
            self.offset = -self.offset
        self.boundary = ensure_ccw(np.asarray(self.boundary, dtype=float))

    def plane_basis(self):
        n = self.normal
        ref = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0.0, 1, 0])
        u = ref - np.dot(ref, n) * n
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        origin = n * self.offset
        return origin, u, v

    def to_plane_coords(self, points) -> np.ndarray:
        origin, u, v = self.plane_basis()
        d = np.atleast_2d(np.asarray(points, dtype=float)) - origin
        return np.stack([d @ u, d @ v], axis=-1)

    def to_world(self, uv) -> np.ndarray:
        origin, u, v = self.plane_basis()
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        return origin + np.outer(uv[:, 0], u) + np.outer(uv[:, 1], v)

    def height_at(self, x: float, y: float) -> float:
        """Plane z at a world (x, y); requires a non-horizontal-degenerate plane."""
        nx, ny, nz = self.normal
        if abs(nz) < 1e-6:
            raise ValidationError("desktop plane is vertical; no height at (x, y)")
        return float((self.offset - nx * x - ny * y) / nz)

    def contains_xy(self, x: float, y: float) -> bool:
        """Is the vertical line through (x, y) inside the boundary prism?"""
        z = self.height_at(x, y)
        uv = self.to_plane_coords([[x, y, z]])[0]
        return point_in_polygon(uv, self.boundary)

    def area(self) -> float:
        return abs(polygon_area(self.boundary))


@dataclass
class SceneState:
    desktop: DesktopMesh
    catalog: dict                   # model_id -> ObjectModel
    objects: list                   # [ObjectInstance]
    joints: JointState
    gripper_aperture: float = MAX_APERTURE
    sim_time: float = 0.0

    def instance(self, instance_id: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.instance_id == instance_id:
                return obj
        raise UnknownInstanceError(instance_id)

    def held_instance(self) -> ObjectInstance | None:
        for obj in self.objects:
            if obj.held:
                return obj
        return None

    def snapshot(self) -> "SceneState":
        return copy.deepcopy(self)


def set_ghost_pose(scene: SceneState, instance_id: str, pose: Pose) -> SceneState:
    obj = scene.instance(instance_id)
    obj.ghost_pose = Pose(pose.position, pose.orientation)
    return scene


def reset_ghosts(scene: SceneState) -> SceneState:
    for obj in scene.objects:
        obj.ghost_pose = obj.actual_pose.copy()
    return scene


def classify_support(scene: SceneState, obj: ObjectInstance) -> str | None:
    """Name what an object is resting on, by bottom-face contact."""
    pos = obj.actual_pose.position
    bottom = pos[2] - obj.model.half_extents[2]
    best = None
    best_z = -np.inf
    try:
        desk_z = scene.desktop.height_at(pos[0], pos[1])
    except ValidationError:
        desk_z = -np.inf
    if abs(bottom - desk_z) <= CONTACT_TOL:
        best, best_z = "desktop", desk_z
    for other in scene.objects:
        if other is obj:
            continue
        if convex_overlap_area(obj.footprint(), other.footprint()) <= 1e-6:
            continue
        if abs(bottom - other.top_z()) <= CONTACT_TOL and other.top_z() > best_z:
            best, best_z = other.instance_id, other.top_z()
    return best


def validate_scene(scene: SceneState) -> None:
    ids = [o.instance_id for o in scene.objects]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate instance ids: %r" % (ids,))
    for obj in scene.objects:
        if obj.model.model_id not in scene.catalog:
            raise ValidationError(f"{obj.instance_id}: model {obj.model.model_id} not in catalog")
        pos = obj.actual_pose.position
        bottom = pos[2] - obj.model.half_extents[2]
        desk_z = scene.desktop.height_at(pos[0], pos[1])
        if bottom < desk_z - CONTACT_TOL:
            raise ValidationError(
                f"{obj.instance_id}: object bottom {bottom:.4f} below desktop plane {desk_z:.4f}")
    for i, a in enumerate(scene.objects):
        for b in scene.objects[i + 1:]:
            pen = box_penetration(a.actual_pose, a.model.half_extents,
                                  b.actual_pose, b.model.half_extents)
            if pen > CONTACT_TOL:
                raise ValidationError(
                    f"objects {a.instance_id} and {b.instance_id} interpenetrate by {pen:.4f} m")


def load_scene(path) -> SceneState:
    """Parse a scene file; see docs/protocol.md for the format."""
    path = Path(path)
    sections = parse_sections(path)

    catalog = {}
    for line_no, toks in sections.get("catalog", []):
        if len(toks) != 6:
            raise ParseError(path, line_no, "catalog entry needs: model_id hx hy hz mass grasp_width")
        vals = floats(path, line_no, toks[1:], "catalog")
        try:
            model = ObjectModel(toks[0], np.array(vals[:3]), vals[3], vals[4])
        except ValidationError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        catalog[model.model_id] = model

    desktop = _parse_desktop(path, sections)

    objects = []
    for line_no, toks in sections.get("instances", []):
        if len(toks) != 9:
            raise ParseError(path, line_no,
                             "instance needs: instance_id model_id px py pz qw qx qy qz")
        inst_id, model_id = toks[0], toks[1]
        if model_id not in catalog:
            raise ParseError(path, line_no, f"instance {inst_id}: unknown model {model_id!r}")
        pose = Pose.from_list(floats(path, line_no, toks[2:], "instance pose"))
        objects.append(ObjectInstance(inst_id, catalog[model_id], pose, pose.copy()))

    arm_lines = sections.get("arm_start", [])
    if arm_lines:
        line_no, toks = arm_lines[0]
        if len(toks) != 7:
            raise ParseError(path, line_no, "arm_start needs 7 joint angles")
        angles = np.array(floats(path, line_no, toks, "arm_start"))
    else:
        angles = np.zeros(7)
    joints = JointState(angles, np.zeros(7), 0.0)

    scene = SceneState(desktop=desktop, catalog=catalog, objects=objects,
                       joints=joints, gripper_aperture=MAX_APERTURE, sim_time=0.0)
    validate_scene(scene)
    for obj in scene.objects:
        obj.support = classify_support(scene, obj)
    return scene


def _parse_desktop(path, sections) -> DesktopMesh:
    from . import desktop as dd  # lazy: desktop module imports DesktopMesh from here

    lines = sections.get("desktop", [])
    if not lines:
        raise ParseError(path, 0, "missing [desktop] section")
    plane = None
    boundary = None
    cloud = None
    for line_no, toks in lines:
        kind = toks[0]
        if kind == "plane":
            if len(toks) != 5:
                raise ParseError(path, line_no, "plane needs: nx ny nz d")
            vals = floats(path, line_no, toks[1:], "plane")
            plane = (np.array(vals[:3]), vals[3])
        elif kind == "boundary":
            vals = floats(path, line_no, toks[1:], "boundary")
            if len(vals) < 6 or len(vals) % 2:
                raise ParseError(path, line_no, "boundary needs >= 3 x,y pairs")
            boundary = np.array(vals).reshape(-1, 2)
        elif kind == "cloud":
            cloud = path.parent / toks[1]
        else:
            raise ParseError(path, line_no, f"unknown desktop directive {kind!r}")
    if cloud is not None:
        from .fileformats import load_point_cloud
        return dd.detect_desktop(load_point_cloud(cloud), dd.DetectParams())
    if plane is None or boundary is None:
        raise ParseError(path, 0, "desktop needs either `cloud` or both `plane` and `boundary`")
    return dd.make_mesh(boundary, plane[0], plane[1])


def save_scene(scene: SceneState, path) -> None:
    lines = ["[catalog]"]
    for m in scene.catalog.values():
        hx, hy, hz = m.half_extents
        lines.append(f"{m.model_id} {hx:.9g} {hy:.9g} {hz:.9g} {m.mass:.9g} {m.grasp_width:.9g}")
    lines.append("")
    lines.append("[desktop]")
    n = scene.desktop.normal
    lines.append(f"plane {n[0]:.9g} {n[1]:.9g} {n[2]:.9g} {scene.desktop.offset:.9g}")
    lines.append("boundary " + " ".join("%.9g %.9g" % (x, y) for x, y in scene.desktop.boundary))
    lines.append("")
    lines.append("[instances]")
    for o in scene.objects:
        vals = " ".join("%.12g" % v for v in o.actual_pose.to_list())
        lines.append(f"{o.instance_id} {o.model.model_id} {vals}")
    lines.append("")
    lines.append("[arm_start]")
    lines.append(" ".join("%.12g" % q for q in scene.joints.angles))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
