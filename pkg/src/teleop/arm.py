"""7-DoF arm kinematics: FK, geometric Jacobian, damped-least-squares IK,
and trapezoidal joint-space trajectories.

The chain is data-driven (see load_chain); tests can swap in a synthetic
chain with hand-computable geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileformats import ParseError, floats, parse_sections
from .geometry import (Pose, orientation_error, quat_from_axis_angle, quat_from_yaw,
                       quat_multiply, quat_rotate, quat_yaw)

DOF = 7
DEFAULT_VELOCITY_LIMIT = 0.8   # rad/s, per joint
DEFAULT_ACCEL_LIMIT = 2.5      # rad/s^2, per joint
JOINT_RATE_HZ = 50.0           # joint_states publication rate
HOVER_HEIGHT = 0.10            # m above an object's top face
FINGER_ENGAGEMENT = 0.02       # grasp depth below the object top, m

IK_DAMPING = 0.1
IK_STEP_CLAMP = 0.2
IK_MAX_ITERS = 200
IK_POS_TOL = 1e-3
IK_ORI_TOL = 1e-2


class ArmError(Exception):
    pass


class UnreachableError(ArmError):
    pass


class NoConvergenceError(ArmError):
    pass


@dataclass
class JointState:
    angles: np.ndarray
    velocities: np.ndarray
    timestamp: float

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float).reshape(DOF)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(DOF)


@dataclass
class JointTransform:
    displacement: np.ndarray   # fixed offset from the parent frame
    rotation: np.ndarray       # fixed quaternion (w, x, y, z)
    axis: np.ndarray           # unit rotation axis in the joint frame

    def __post_init__(self):
        self.displacement = np.asarray(self.displacement, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(4)
        self.axis = np.asarray(self.axis, dtype=float).reshape(3)
        self.axis = self.axis / np.linalg.norm(self.axis)


@dataclass
class KinematicChain:
    joints: list                # DOF JointTransforms
    tool: Pose                  # fixed tool-frame offset after the last joint
    limits: np.ndarray          # (DOF, 2) joint angle intervals, radians
    velocity_limits: np.ndarray = field(
        default_factory=lambda: np.full(DOF, DEFAULT_VELOCITY_LIMIT))

    def __post_init__(self):
        if len(self.joints) != DOF:
            raise ValueError(f"chain needs {DOF} joints, got {len(self.joints)}")
        self.limits = np.asarray(self.limits, dtype=float).reshape(DOF, 2)
        if np.any(self.limits[:, 0] >= self.limits[:, 1]):
            raise ValueError("each joint limit interval must be non-empty")

    def reach(self) -> float:
        r = sum(np.linalg.norm(j.displacement) for j in self.joints)
        return float(r + np.linalg.norm(self.tool.position))

    def clamp(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.limits[:, 0], self.limits[:, 1])


def joint_frames(chain: KinematicChain, angles):
    """World pose of each joint frame (rotation applied) plus the tool pose."""
    angles = np.asarray(angles, dtype=float).reshape(DOF)
    frames = []
    cur = Pose()
    for jt, q in zip(chain.joints, angles):
        cur = cur.compose(Pose(jt.displacement, jt.rotation))
        frames.append(cur.copy())  # frame the joint rotates about
        cur = cur.compose(Pose(np.zeros(3), quat_from_axis_angle(jt.axis, q)))
    return frames, cur.compose(chain.tool)


def forward_kinematics(chain: KinematicChain, angles) -> Pose:
    if not np.all(np.isfinite(angles)):
        raise ArmError("joint angles must be finite")
    _, tool = joint_frames(chain, angles)
    return tool


def jacobian(chain: KinematicChain, angles) -> np.ndarray:
    """Geometric Jacobian of the tool frame, rows (linear; angular), 6 x 7."""
    frames, tool = joint_frames(chain, angles)
    J = np.zeros((6, DOF))
    for i, (jt, frame) in enumerate(zip(chain.joints, frames)):
        axis_w = quat_rotate(frame.orientation, jt.axis)
        J[:3, i] = np.cross(axis_w, tool.position - frame.position)
        J[3:, i] = axis_w
    return J


def ik_solve(chain: KinematicChain, target: Pose, seed) -> np.ndarray:
    """Damped least squares toward a tool pose; raises on failure."""
    if np.linalg.norm(target.position) > chain.reach():
        raise UnreachableError(
            f"target at {np.linalg.norm(target.position):.3f} m exceeds reach {chain.reach():.3f} m")
    q = chain.clamp(seed)
    lam2 = IK_DAMPING ** 2
    for _ in range(IK_MAX_ITERS + 1):
        tool = forward_kinematics(chain, q)
        e_pos = target.position - tool.position
        e_ori = orientation_error(tool.orientation, target.orientation)
        if np.linalg.norm(e_pos) < IK_POS_TOL and np.linalg.norm(e_ori) < IK_ORI_TOL:
            return q
        e = np.concatenate([e_pos, e_ori])
        J = jacobian(chain, q)
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
        dq = np.clip(dq, -IK_STEP_CLAMP, IK_STEP_CLAMP)
        q = chain.clamp(q + dq)
    raise NoConvergenceError(
        f"no convergence after {IK_MAX_ITERS} iterations "
        f"(pos err {np.linalg.norm(e_pos):.4f} m, ori err {np.linalg.norm(e_ori):.4f} rad)")


def plan_trajectory(q_from, q_to, rate=JOINT_RATE_HZ, velocity_limits=None,
                    accel_limit=DEFAULT_ACCEL_LIMIT, t_start=0.0):
    """Straight joint-space segment under a shared trapezoidal time scaling.

    The scaling s(t) in [0, 1] obeys the tightest per-joint velocity and
    acceleration limit, so no joint ever exceeds its own bounds.
    """
    q_from = np.asarray(q_from, dtype=float).reshape(DOF)
    q_to = np.asarray(q_to, dtype=float).reshape(DOF)
    if velocity_limits is None:
        velocity_limits = np.full(DOF, DEFAULT_VELOCITY_LIMIT)
    delta = q_to - q_from
    moving = np.abs(delta) > 1e-12
    if not moving.any():
        return [JointState(q_from.copy(), np.zeros(DOF), t_start)]
    v_s = float(np.min(velocity_limits[moving] / np.abs(delta[moving])))
    a_s = float(np.min(accel_limit / np.abs(delta[moving])))
    if v_s * v_s / a_s >= 1.0:  # triangular profile: never reaches cruise speed
        v_s = np.sqrt(a_s)
        t_acc = v_s / a_s
        duration = 2 * t_acc
    else:
        t_acc = v_s / a_s
        duration = 1.0 / v_s + t_acc

    def scale(t):
        t = min(max(t, 0.0), duration)
        if t < t_acc:
            return 0.5 * a_s * t * t, a_s * t
        if t < duration - t_acc:
            return 0.5 * a_s * t_acc * t_acc + v_s * (t - t_acc), v_s
        td = duration - t
        return 1.0 - 0.5 * a_s * td * td, a_s * td

    dt = 1.0 / rate
    n = int(np.ceil(duration / dt - 1e-9))
    samples = []
    for k in range(n + 1):
        t = min(k * dt, duration)
        s, sdot = scale(t)
        samples.append(JointState(q_from + s * delta, sdot * delta, t_start + k * dt))
    last = samples[-1]
    if np.max(np.abs(last.angles - q_to)) > 0:
        samples.append(JointState(q_to.copy(), np.zeros(DOF), t_start + (n + 1) * dt))
    else:
        last.velocities = np.zeros(DOF)
    return samples


def top_down_pose(object_pose: Pose, half_height: float, hover: float) -> Pose:
    """Tool pose for a straight-down approach: z-axis down, yaw matched.

    hover > 0 hovers that far above the object's top face; hover == 0 is
    the grasp pose, FINGER_ENGAGEMENT below the top.
    """
    yaw = quat_yaw(object_pose.orientation)
    orient = quat_multiply(quat_from_yaw(yaw), quat_from_axis_angle([1.0, 0, 0], np.pi))
    top = object_pose.position[2] + half_height
    z = top + hover if hover > 0 else top - FINGER_ENGAGEMENT
    return Pose(np.array([object_pose.position[0], object_pose.position[1], z]), orient)


def load_chain(path) -> KinematicChain:
    """Chain config: [joints] rows `dx dy dz qw qx qy qz ax ay az lo hi`,
    then [tool] `dx dy dz qw qx qy qz`."""
    path = Path(path)
    sections = parse_sections(path)
    joints, limits = [], []
    for line_no, toks in sections.get("joints", []):
        if len(toks) != 12:
            raise ParseError(path, line_no,
                             "joint needs: dx dy dz qw qx qy qz ax ay az lo hi")
        vals = floats(path, line_no, toks, "joint")
        joints.append(JointTransform(vals[0:3], vals[3:7], vals[7:10]))
        limits.append(vals[10:12])
    tool_lines = sections.get("tool", [])
    if not tool_lines:
        raise ParseError(path, 0, "missing [tool] section")
    line_no, toks = tool_lines[0]
    if len(toks) != 7:
        raise ParseError(path, line_no, "tool needs: dx dy dz qw qx qy qz")
    tool = Pose.from_list(floats(path, line_no, toks, "tool"))
    return KinematicChain(joints=joints, tool=tool, limits=np.array(limits))


def default_chain() -> KinematicChain:
    """The bundled 7-DoF chain (Kinova Gen3 published parameters)."""
    return load_chain(Path(__file__).parent / "data" / "gen3.chain")
