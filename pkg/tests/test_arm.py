"""Arm kinematics: FK vs an independent homogeneous-matrix oracle, Jacobian
vs central finite differences, IK round-trips, trapezoidal trajectories."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from teleop.arm import (DEFAULT_ACCEL_LIMIT, DEFAULT_VELOCITY_LIMIT, DOF,
                        FINGER_ENGAGEMENT, ArmError, JointState,
                        KinematicChain, NoConvergenceError, UnreachableError,
                        default_chain, forward_kinematics, ik_solve, jacobian,
                        load_chain, plan_trajectory, top_down_pose)
from teleop.geometry import (Pose, orientation_error, quat_from_yaw,
                             quat_rotate, quat_to_matrix)

HOME = np.array([0.0, 0.6, 0.0, 1.6, 0.0, 0.9, 1.57])


def _as_scipy(q_wxyz):
    w, x, y, z = q_wxyz
    return Rotation.from_quat([x, y, z, w])


def fk_matrix_oracle(chain, angles):
    """Independent FK: chain of 4x4 homogeneous transforms built with scipy."""
    T = np.eye(4)

    def hom(rot, trans):
        H = np.eye(4)
        H[:3, :3] = rot.as_matrix()
        H[:3, 3] = trans
        return H

    for jt, q in zip(chain.joints, angles):
        T = T @ hom(_as_scipy(jt.rotation), jt.displacement)
        T = T @ hom(Rotation.from_rotvec(q * jt.axis), np.zeros(3))
    T = T @ hom(_as_scipy(chain.tool.orientation), chain.tool.position)
    return T


def random_configs(chain, rng, n):
    qs = rng.uniform(chain.limits[:, 0], chain.limits[:, 1], size=(n, DOF))
    return np.clip(qs, -2.5, 2.5)   # keep clear of the wrap-around extremes


# -------------------------------------------------------------------- FK

def test_fk_home_matches_matrix_oracle(chain):
    tool = forward_kinematics(chain, HOME)
    T = fk_matrix_oracle(chain, HOME)
    np.testing.assert_allclose(tool.position, T[:3, 3], atol=1e-12)
    np.testing.assert_allclose(quat_to_matrix(tool.orientation), T[:3, :3],
                               atol=1e-12)


def test_fk_random_matches_matrix_oracle(chain):
    rng = np.random.default_rng(0)
    for q in random_configs(chain, rng, 25):
        tool = forward_kinematics(chain, q)
        T = fk_matrix_oracle(chain, q)
        np.testing.assert_allclose(tool.position, T[:3, 3], atol=1e-10)
        np.testing.assert_allclose(quat_to_matrix(tool.orientation), T[:3, :3],
                                   atol=1e-10)


def test_fk_rejects_non_finite(chain):
    with pytest.raises(ArmError):
        forward_kinematics(chain, [0, np.nan, 0, 0, 0, 0, 0])


# -------------------------------------------------------------- Jacobian

def finite_difference_jacobian(chain, q, h=1e-6):
    """Central differences: linear rows from tool position, angular rows from
    the relative rotation between the two perturbed tool frames."""
    J = np.zeros((6, DOF))
    for i in range(DOF):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        tp = forward_kinematics(chain, qp)
        tm = forward_kinematics(chain, qm)
        J[:3, i] = (tp.position - tm.position) / (2 * h)
        rel = (_as_scipy(tp.orientation) * _as_scipy(tm.orientation).inv())
        J[3:, i] = rel.as_rotvec() / (2 * h)
    return J


def test_jacobian_matches_central_differences(chain):
    rng = np.random.default_rng(1)
    worst = 0.0
    for q in random_configs(chain, rng, 50):
        J = jacobian(chain, q)
        J_fd = finite_difference_jacobian(chain, q)
        worst = max(worst, float(np.max(np.abs(J - J_fd))))
    assert worst < 1e-5


def test_jacobian_predicts_small_motion(chain):
    rng = np.random.default_rng(2)
    q = random_configs(chain, rng, 1)[0]
    dq = rng.uniform(-1e-5, 1e-5, DOF)
    before = forward_kinematics(chain, q)
    after = forward_kinematics(chain, q + dq)
    predicted = jacobian(chain, q)[:3] @ dq
    np.testing.assert_allclose(after.position - before.position, predicted,
                               atol=1e-9)


# -------------------------------------------------------------------- IK

def test_ik_round_trip_rate(chain):
    rng = np.random.default_rng(77)
    successes = 0
    for q in random_configs(chain, rng, 100):
        target = forward_kinematics(chain, q)
        try:
            sol = ik_solve(chain, target, HOME)
        except ArmError:
            continue
        tool = forward_kinematics(chain, sol)
        pos_err = np.linalg.norm(target.position - tool.position)
        ori_err = np.linalg.norm(orientation_error(tool.orientation,
                                                   target.orientation))
        if pos_err < 1e-3 and ori_err < 1e-2:
            successes += 1
    assert successes >= 95


def test_ik_solution_respects_limits(chain):
    target = forward_kinematics(chain, HOME + 0.1)
    sol = ik_solve(chain, target, HOME)
    assert np.all(sol >= chain.limits[:, 0] - 1e-12)
    assert np.all(sol <= chain.limits[:, 1] + 1e-12)


def test_ik_unreachable_raises(chain):
    with pytest.raises(UnreachableError):
        ik_solve(chain, Pose([10.0, 0, 0], [1, 0, 0, 0]), HOME)


def test_ik_no_convergence_raises(chain):
    # reachable by norm but not attainable: directly below the base
    with pytest.raises((NoConvergenceError, UnreachableError)):
        ik_solve(chain, Pose([0.0, 0.0, -chain.reach() * 0.99], [1, 0, 0, 0]),
                 HOME)


# ------------------------------------------------------------ trajectories

def _check_profile(samples, q_from, q_to, vel_limits, accel_limit):
    assert np.allclose(samples[0].angles, q_from)
    assert np.allclose(samples[-1].angles, q_to)
    assert np.allclose(samples[-1].velocities, 0.0)
    dt = 1.0 / 50.0
    for a, b in zip(samples, samples[1:]):
        assert b.timestamp - a.timestamp == pytest.approx(dt, abs=1e-12)
        assert np.all(np.abs(b.velocities) <= vel_limits + 1e-9)
        # sampled acceleration bounded (one-step finite difference)
        assert np.max(np.abs(b.velocities - a.velocities)) <= \
            accel_limit * dt + 1e-9
    # straight line in joint space: every sample on the segment
    delta = q_to - q_from
    for s in samples:
        alphas = [(s.angles[i] - q_from[i]) / delta[i]
                  for i in range(DOF) if abs(delta[i]) > 1e-12]
        assert max(alphas) - min(alphas) < 1e-9
        assert -1e-12 <= alphas[0] <= 1 + 1e-12


def test_trajectory_long_move():
    q_from = np.zeros(DOF)
    q_to = np.array([1.5, -1.0, 0.5, 2.0, -0.5, 1.0, 0.25])
    samples = plan_trajectory(q_from, q_to)
    _check_profile(samples, q_from, q_to, np.full(DOF, DEFAULT_VELOCITY_LIMIT),
                   DEFAULT_ACCEL_LIMIT)
    # the widest joint should cruise at the shared velocity limit
    peak = max(np.max(np.abs(s.velocities)) for s in samples)
    assert peak == pytest.approx(DEFAULT_VELOCITY_LIMIT, rel=1e-6)


def test_trajectory_short_move_triangular():
    q_from = np.zeros(DOF)
    q_to = np.full(DOF, 0.01)
    samples = plan_trajectory(q_from, q_to)
    _check_profile(samples, q_from, q_to, np.full(DOF, DEFAULT_VELOCITY_LIMIT),
                   DEFAULT_ACCEL_LIMIT)
    peak = max(np.max(np.abs(s.velocities)) for s in samples)
    assert peak < DEFAULT_VELOCITY_LIMIT  # never reaches cruise speed


def test_trajectory_zero_move():
    q = np.linspace(0, 1, DOF)
    samples = plan_trajectory(q, q, t_start=3.0)
    assert len(samples) == 1
    assert samples[0].timestamp == 3.0
    assert np.allclose(samples[0].velocities, 0.0)


def test_trajectory_duration_scales_with_distance():
    short = plan_trajectory(np.zeros(DOF), np.full(DOF, 0.5))
    long = plan_trajectory(np.zeros(DOF), np.full(DOF, 1.5))
    assert long[-1].timestamp > short[-1].timestamp


def test_trajectory_respects_custom_velocity_limit():
    limits = np.full(DOF, 0.2)
    samples = plan_trajectory(np.zeros(DOF), np.ones(DOF),
                              velocity_limits=limits)
    for s in samples:
        assert np.all(np.abs(s.velocities) <= 0.2 + 1e-9)


# ------------------------------------------------------------- tool poses

def test_top_down_pose_geometry():
    obj = Pose([0.4, -0.1, 0.05], quat_from_yaw(0.3))
    hover = top_down_pose(obj, half_height=0.05, hover=0.10)
    np.testing.assert_allclose(hover.position, [0.4, -0.1, 0.20], atol=1e-12)
    # tool z-axis points straight down
    np.testing.assert_allclose(quat_rotate(hover.orientation, [0, 0, 1]),
                               [0, 0, -1], atol=1e-12)
    grasp = top_down_pose(obj, half_height=0.05, hover=0.0)
    assert grasp.position[2] == pytest.approx(0.10 - FINGER_ENGAGEMENT)
    # x-axis follows the object yaw
    np.testing.assert_allclose(quat_rotate(grasp.orientation, [1, 0, 0]),
                               [np.cos(0.3), np.sin(0.3), 0], atol=1e-12)


# ------------------------------------------------------------ chain files

def test_load_chain_round_trip(chain):
    assert len(chain.joints) == DOF
    assert chain.reach() > 0.8   # a tabletop-scale arm


def test_load_chain_missing_tool(tmp_path):
    p = tmp_path / "c.chain"
    p.write_text("[joints]\n" + "0 0 0.1 1 0 0 0 0 0 1 -3 3\n" * 7,
                 encoding="utf-8")
    from teleop.fileformats import ParseError
    with pytest.raises(ParseError):
        load_chain(p)


def test_chain_validation():
    with pytest.raises(ValueError):
        KinematicChain(joints=[], tool=Pose(), limits=np.zeros((0, 2)))
