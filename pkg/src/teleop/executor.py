"""Task execution against the simulated scene.

Two modes, mutually exclusive per scene:
  - batch pick-and-place from an ordered move list (the scene-interaction
    contract: id + initial pose + target pose per move);
  - streamed end-effector control through a fixed-length target queue.

The gripper is simulated with motor-current feedback: current rises
linearly with squeeze once the fingers contact the object, and closing
stops when it crosses the configured threshold.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import settle as settle_mod
from .arm import (DOF, FINGER_ENGAGEMENT, HOVER_HEIGHT, JOINT_RATE_HZ, ArmError,
                  JointState, KinematicChain, forward_kinematics, ik_solve,
                  plan_trajectory, top_down_pose)
from .clock import SimClock
from .collision import box_penetration
from .geometry import Pose, quat_yaw
from .scene import MAX_APERTURE, SceneState, UnknownInstanceError

log = logging.getLogger(__name__)

EE_RATE_HZ = 20.0
QUEUE_CAPACITY = 8
COLLISION_OVERLAP = 0.002      # m; deeper overlap than this counts as a collision
GRIPPER_DT = 1e-3              # closure integration step, s
GRASP_XY_TOL = 0.02            # m, finger sweep radius around the TCP
CORRIDOR_XY_TOL = 0.035        # m, wider zone the open fingers straddle
GRASP_Z_RANGE = 0.05           # m, how far below the object top the TCP may sit
GRIPPER_HALF = np.array([0.04, 0.04, 0.05])   # collision box around the gripper body
GRIPPER_BOX_LIFT = 0.04        # gripper box center sits this far above the TCP

SUCCESS = "success"
COLLISION = "collision"
GRASP_FAILURE = "grasp_failure"
IK_FAILURE = "ik_failure"


@dataclass
class Move:
    instance_id: str
    initial_pose: Pose
    target_pose: Pose


@dataclass
class TaskRequest:
    moves: list  # [Move], execution order; repeated ids are allowed


@dataclass
class GripperConfig:
    close_speed: float = 0.1        # m/s
    current_threshold: float = 0.12  # A
    max_aperture: float = MAX_APERTURE
    current_gain: float = 60.0      # A per meter of squeeze

    def __post_init__(self):
        for name in ("close_speed", "current_threshold", "max_aperture", "current_gain"):
            if getattr(self, name) <= 0:
                raise ValueError(f"gripper {name} must be positive")


@dataclass
class MoveReport:
    instance_id: str
    outcome: str
    phase_times: dict = field(default_factory=dict)
    detail: str = ""


@dataclass
class ExecutionReport:
    moves: list = field(default_factory=list)  # [MoveReport]
    started: float = 0.0
    finished: float = 0.0

    @property
    def success(self) -> bool:
        return all(m.outcome == SUCCESS for m in self.moves)

    def to_payload(self) -> dict:
        return {
            "success": self.success,
            "started": self.started,
            "finished": self.finished,
            "moves": [{"instance_id": m.instance_id, "outcome": m.outcome,
                       "phase_times": m.phase_times, "detail": m.detail}
                      for m in self.moves],
        }


class TargetQueue:
    """Bounded FIFO of tool poses; pushing past capacity drops the oldest."""

    def __init__(self, capacity: int = QUEUE_CAPACITY):
        self.capacity = capacity
        self._dq = deque()
        self._lock = threading.Lock()

    def push(self, pose: Pose) -> None:
        with self._lock:
            if len(self._dq) >= self.capacity:
                self._dq.popleft()
            self._dq.append(pose)

    def pop(self) -> Pose | None:
        with self._lock:
            return self._dq.popleft() if self._dq else None

    def pop_latest(self) -> Pose | None:
        """Drain the queue, returning only the newest entry."""
        with self._lock:
            if not self._dq:
                return None
            latest = self._dq[-1]
            self._dq.clear()
            return latest

    def __len__(self) -> int:
        with self._lock:
            return len(self._dq)


class Executor:
    """Single writer of the live scene; drives the arm, gripper, and objects."""

    def __init__(self, scene: SceneState, chain: KinematicChain, clock=None,
                 gripper: GripperConfig | None = None, on_joint_state=None,
                 on_event=None):
        self.scene = scene
        self.chain = chain
        self.clock = clock or SimClock()
        self.gripper = gripper or GripperConfig()
        self.on_joint_state = on_joint_state
        self.on_event = on_event
        self.queue = TargetQueue()
        self.grasp_transform: Pose | None = None  # tool -> held object
        self._ee_traj = None
        self._ee_index = 0

    # ------------------------------------------------------------------ utils

    def tool_pose(self) -> Pose:
        return forward_kinematics(self.chain, self.scene.joints.angles)

    def _emit(self, event: str) -> None:
        if self.on_event:
            self.on_event(event, self.clock.now())

    def _set_joints(self, state: JointState) -> None:
        self.scene.joints = JointState(state.angles, state.velocities, self.clock.now())
        self.scene.sim_time = self.clock.now()
        held = self.scene.held_instance()
        if held is not None and self.grasp_transform is not None:
            held.actual_pose = self.tool_pose().compose(self.grasp_transform)
        if self.on_joint_state:
            self.on_joint_state(self.scene.joints)

    def _follow(self, traj, check_collisions=True, exclude=None) -> str | None:
        """Step a trajectory at the joint rate; returns COLLISION on abort."""
        dt = 1.0 / JOINT_RATE_HZ
        for k, sample in enumerate(traj):
            if k:
                self.clock.sleep(dt)
            self._set_joints(sample)
            if check_collisions and self._collides(exclude):
                return COLLISION
        return None

    def _collides(self, exclude=None) -> bool:
        tool = self.tool_pose()
        grip_pose = Pose(tool.position + np.array([0, 0, GRIPPER_BOX_LIFT]),
                         tool.orientation)
        held = self.scene.held_instance()
        # the fingers straddle whatever sits in the grasp zone, so the
        # gripper body box does not collide with the object it is aligned
        # over (the vertical approach corridor of a top-down grasp)
        in_corridor = self._aligned_objects(tool)
        movers = [(grip_pose, GRIPPER_HALF, in_corridor)]
        if held is not None:
            movers.append((held.actual_pose, held.model.half_extents, {held.instance_id}))
        for pose, half, own_ids in movers:
            desk_z = self.scene.desktop.height_at(pose.position[0], pose.position[1])
            if desk_z - (pose.position[2] - half[2]) > COLLISION_OVERLAP:
                return True
            for obj in self.scene.objects:
                if obj.held or obj.instance_id == exclude or obj.instance_id in own_ids:
                    continue
                if box_penetration(pose, half, obj.actual_pose, obj.model.half_extents) \
                        > COLLISION_OVERLAP:
                    return True
        return False

    def _goto(self, target: Pose, check_collisions=True, exclude=None):
        """IK + trajectory to a tool pose. Returns failure outcome or None."""
        try:
            q = ik_solve(self.chain, target, self.scene.joints.angles)
        except ArmError as exc:
            log.warning("IK failure: %s", exc)
            return IK_FAILURE
        traj = plan_trajectory(self.scene.joints.angles, q,
                               rate=JOINT_RATE_HZ,
                               velocity_limits=self.chain.velocity_limits,
                               t_start=self.clock.now())
        return self._follow(traj, check_collisions, exclude)

    # ----------------------------------------------------------- batch mode

    def execute_task(self, request: TaskRequest) -> ExecutionReport:
        report = ExecutionReport(started=self.clock.now())
        self._emit("task_started")
        safe_q = self.scene.joints.angles.copy()
        for move in request.moves:
            mr = self._execute_move(move)
            report.moves.append(mr)
            if mr.outcome == COLLISION:
                # abort the whole task; park the arm back at a safe hover
                self.clock.sleep(1.0 / JOINT_RATE_HZ)
                self._release_held_on_abort()
                self._goto_joints(safe_q)
                break
        report.finished = self.clock.now()
        self._emit("task_finished")
        return report

    def _goto_joints(self, q):
        traj = plan_trajectory(self.scene.joints.angles, q,
                               rate=JOINT_RATE_HZ,
                               velocity_limits=self.chain.velocity_limits,
                               t_start=self.clock.now())
        self._follow(traj, check_collisions=False)

    def _release_held_on_abort(self):
        held = self.scene.held_instance()
        if held is None:
            return
        try:
            self.release_service()
        except settle_mod.SettleError:
            held.held = False
            self.grasp_transform = None

    def _execute_move(self, move: Move) -> MoveReport:
        mr = MoveReport(move.instance_id, SUCCESS)
        try:
            obj = self.scene.instance(move.instance_id)
        except UnknownInstanceError as exc:
            mr.outcome = IK_FAILURE
            mr.detail = str(exc)
            return mr
        half_h = float(obj.model.half_extents[2])

        def phase(name, outcome):
            mr.phase_times[name] = self.clock.now()
            if outcome is not None:
                mr.outcome = outcome
                return True
            return False

        steps = [
            ("hover_initial", lambda: self._goto(
                top_down_pose(move.initial_pose, half_h, HOVER_HEIGHT),
                exclude=move.instance_id)),
            ("descend", lambda: self._goto(
                top_down_pose(move.initial_pose, half_h, 0.0), exclude=move.instance_id)),
            ("grasp", lambda: None if self.grasp_service() is not None else GRASP_FAILURE),
            ("ascend", lambda: self._goto(
                top_down_pose(move.initial_pose, half_h, HOVER_HEIGHT),
                exclude=move.instance_id)),
            ("hover_target", lambda: self._goto(
                top_down_pose(move.target_pose, half_h, HOVER_HEIGHT))),
            ("descend_target", lambda: self._goto(
                top_down_pose(move.target_pose, half_h, 0.0))),
            ("release", lambda: self._release_for_move(mr)),
            ("ascend_target", lambda: self._goto(
                top_down_pose(move.target_pose, half_h, HOVER_HEIGHT),
                check_collisions=False)),
        ]
        for name, action in steps:
            if phase(name, action()):
                break
        mr.phase_times["done"] = self.clock.now()
        return mr

    def _release_for_move(self, mr: MoveReport):
        try:
            self.release_service()
            return None
        except settle_mod.SettleError as exc:
            mr.detail = str(exc)
            return COLLISION

    # --------------------------------------------------------- gripper model

    def grasp_service(self):
        """Close the gripper with current feedback; returns the grasped
        instance, or None when the current never crosses the threshold."""
        cfg = self.gripper
        tool = self.tool_pose()
        target = self._graspable_object(tool)
        width = target.model.grasp_width if target is not None else None
        aperture = self.scene.gripper_aperture
        self._emit("grasp_started")
        while aperture > 0:
            aperture = max(0.0, aperture - cfg.close_speed * GRIPPER_DT)
            self.clock.sleep(GRIPPER_DT)
            self.scene.gripper_aperture = aperture
            current = 0.0
            if width is not None and aperture < width:
                current = cfg.current_gain * (width - aperture)
            if current >= cfg.current_threshold:
                target.held = True
                self.grasp_transform = tool.inverse().compose(target.actual_pose)
                self._emit("grasp_succeeded")
                return target
        self._emit("grasp_failed")
        return None

    def _graspable_object(self, tool: Pose):
        for obj in self.scene.objects:
            if obj.held:
                continue
            top = obj.top_z()
            dxy = np.linalg.norm(obj.actual_pose.position[:2] - tool.position[:2])
            if dxy <= GRASP_XY_TOL and top - GRASP_Z_RANGE <= tool.position[2] <= top + 0.005:
                return obj
        return None

    def _aligned_objects(self, tool: Pose) -> set:
        """Ids of objects in the gripper's vertical approach corridor: the
        fingers straddle (or hover directly over) these, so the gripper body
        box does not collide with them."""
        out = set()
        for obj in self.scene.objects:
            if obj.held:
                continue
            dxy = np.linalg.norm(obj.actual_pose.position[:2] - tool.position[:2])
            if dxy <= CORRIDOR_XY_TOL and tool.position[2] >= obj.top_z() - GRASP_Z_RANGE:
                out.add(obj.instance_id)
        return out

    def release_service(self):
        """Open fully; a held object is dropped and settled where it is."""
        self.scene.gripper_aperture = self.gripper.max_aperture
        held = self.scene.held_instance()
        if held is None:
            return None
        held.held = False
        self.grasp_transform = None
        result = settle_mod.settle(self.scene.snapshot(), held.instance_id,
                                   held.actual_pose)
        held.actual_pose = result.final_pose
        held.ghost_pose = result.final_pose.copy()
        held.support = result.support
        self._emit("released")
        return result

    # ------------------------------------------------------------- EE mode

    def ee_push_target(self, pose: Pose) -> None:
        self.queue.push(pose)

    def ee_tick(self) -> None:
        """One control cycle: adopt the newest queued target, advance motion."""
        pose = self.queue.pop_latest()
        if pose is not None:
            try:
                q = ik_solve(self.chain, pose, self.scene.joints.angles)
                self._ee_traj = plan_trajectory(
                    self.scene.joints.angles, q, rate=JOINT_RATE_HZ,
                    velocity_limits=self.chain.velocity_limits,
                    t_start=self.clock.now())
                self._ee_index = 0
            except ArmError as exc:
                log.warning("EE target skipped: %s", exc)
        if self._ee_traj is None:
            self._set_joints(self.scene.joints)  # hold position, refresh stamp
            return
        # consume trajectory samples that fall inside this cycle
        per_tick = int(round(JOINT_RATE_HZ / EE_RATE_HZ))
        for _ in range(per_tick):
            if self._ee_index >= len(self._ee_traj):
                self._ee_traj = None
                break
            self._set_joints(self._ee_traj[self._ee_index])
            self._ee_index += 1
            if self._collides():
                self._emit("collision")

    def ee_run(self, duration: float) -> None:
        """Run the EE loop for a stretch of (simulated) time."""
        cycles = int(round(duration * EE_RATE_HZ))
        for _ in range(cycles):
            self.clock.sleep(1.0 / EE_RATE_HZ)
            self.ee_tick()
