import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skilltransfer.dualquat import (UnitDualQuaternion, dq_distance, quat_from_axis_angle, sclerp,
                                    translation_distance)
from skilltransfer.errors import DegenerateSupport, DimensionMismatch, NoFeasibleGrasp, NonConvergence, TooShort
from skilltransfer.imitation import (GraspCandidate, Trajectory, align_supports, blend_to_path, build_goal_list,
                                     filter_grasps, final_poses, imitate_path, path_deltas)


def random_udq(rng, scale=0.3):
    q = rng.normal(size=4)
    return UnitDualQuaternion.from_pose(rng.normal(size=3) * scale, q / np.linalg.norm(q))


def smooth_path(rng, n=20):
    a, b = random_udq(rng), random_udq(rng)
    return [sclerp(a, b, float(t)) for t in np.linspace(0, 1, n)]


@given(st.integers(0, 10 ** 6), st.integers(2, 25))
@settings(max_examples=60)
def test_imitated_path_keeps_deltas(seed, n):
    rng = np.random.default_rng(seed)
    X = [random_udq(rng) for _ in range(n)]
    goal = random_udq(rng)
    Y = imitate_path(path_deltas(X), goal)
    assert len(Y) == n
    assert dq_distance(Y[-1], goal) < 1e-12
    for d, e in zip(path_deltas(X), path_deltas(Y)):
        assert dq_distance(d, e) < 1e-10


def test_imitate_at_demo_goal_reproduces_demo():
    rng = np.random.default_rng(1)
    X = [random_udq(rng) for _ in range(15)]
    Y = imitate_path(path_deltas(X), X[-1])
    assert max(dq_distance(a, b) for a, b in zip(X, Y)) < 1e-10


def test_trajectory_needs_two_poses():
    with pytest.raises(TooShort):
        Trajectory([UnitDualQuaternion.identity()])
    with pytest.raises(TooShort):
        path_deltas([UnitDualQuaternion.identity()])
    with pytest.raises(TooShort):
        Trajectory.from_list([])


def test_blend_reaches_goal_and_visits_guides():
    rng = np.random.default_rng(2)
    guide = imitate_path(path_deltas(smooth_path(rng)), random_udq(rng))
    start = random_udq(rng)
    out = blend_to_path(start, guide, tau_step=0.2, capture_radius=0.01)
    assert out[0] is start
    assert out[-1] is guide[-1]
    assert translation_distance(out[-2], guide[-1]) < 0.01


def test_blend_start_on_path_is_near_replay():
    rng = np.random.default_rng(3)
    X = smooth_path(rng, 30)
    out = blend_to_path(X[0], Trajectory(X), tau_step=1.0, capture_radius=1e-9)
    assert len(out) == len(X)
    assert max(dq_distance(a, b) for a, b in zip(out, X)) < 1e-12


def test_blend_arguments_and_stall():
    rng = np.random.default_rng(4)
    X = smooth_path(rng)
    with pytest.raises(ValueError):
        blend_to_path(X[0], X, tau_step=0.0)
    with pytest.raises(ValueError):
        blend_to_path(X[0], X, capture_radius=0.0)
    far = UnitDualQuaternion.from_translation([100.0, 0, 0])
    with pytest.raises(NonConvergence):
        blend_to_path(far, X, tau_step=0.01, capture_radius=1e-6, max_iters=5)


def grasp(rank, tool_z, t=(0, 0, 0)):
    # rotate the tool z axis onto ``tool_z``
    z = np.array([0.0, 0, 1])
    tool_z = np.asarray(tool_z, float) / np.linalg.norm(tool_z)
    axis = np.cross(z, tool_z)
    ang = np.arccos(np.clip(z @ tool_z, -1, 1))
    q = quat_from_axis_angle(axis if np.linalg.norm(axis) > 1e-12 else [1, 0, 0], ang)
    return GraspCandidate(UnitDualQuaternion.from_pose(t, q), rank)


def test_filter_grasps_cone_rank_and_order():
    a_dem = [1.0, 0, 0]
    G = [grasp(0.9, [1, 0, 0]), grasp(1.0, [0, 0, 1]), grasp(0.8, [1, 0.3, 0]), grasp(0.9, [1, 0.1, 0])]
    best = filter_grasps(G, a_dem, np.deg2rad(30))
    assert best is G[0]  # the rank-1 grasp lies outside the cone; tie on 0.9 goes to the smaller angle
    assert filter_grasps(G[::-1], a_dem, np.deg2rad(30)) is G[0]
    assert filter_grasps(G, a_dem, np.deg2rad(30), feasible=lambda g: g is not G[0]) is G[3]
    with pytest.raises(NoFeasibleGrasp):
        filter_grasps(G[1:2], a_dem, np.deg2rad(30))
    with pytest.raises(NoFeasibleGrasp):
        filter_grasps([], a_dem)


def test_grasp_candidate_round_trip():
    g = grasp(0.5, [0, 1, 0], (1, 2, 3))
    back = GraspCandidate.from_dict(g.to_dict())
    assert np.allclose(back.approach, [0, 1, 0])
    assert back.rank == 0.5


def test_align_supports_recovers_transform_with_partial_overlap():
    rng = np.random.default_rng(5)
    Q = rng.uniform(-0.05, 0.05, size=(400, 3)) * [1, 0.6, 0.3]
    x = random_udq(rng, 0.1)
    P = x.conj().transform_point(Q[:250])  # matched support covers part of the selected one
    hist = []
    est = align_supports(P, Q, np.arange(250), history=hist)
    assert dq_distance(est, x) < 1e-9
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_align_supports_degenerate_inputs():
    line = np.outer(np.linspace(0, 1, 10), [1, 2, 3])
    with pytest.raises(DegenerateSupport):
        align_supports(line, line)
    with pytest.raises(DegenerateSupport):
        align_supports(np.zeros((0, 3)), line)
    pts = np.random.default_rng(6).normal(size=(10, 3))
    with pytest.raises(DimensionMismatch):
        align_supports(pts, pts, np.arange(5))


def test_final_poses():
    rng = np.random.default_rng(7)
    init, end, g = random_udq(rng), random_udq(rng), random_udq(rng)
    x_task, x_eff = final_poses(init, end, g)
    assert dq_distance(init * x_task, end) < 1e-12
    assert dq_distance(x_eff, g * x_task) < 1e-15


def test_build_goal_list_segments():
    rng = np.random.default_rng(8)
    demo_a, demo_b = smooth_path(rng, 10), smooth_path(rng, 12)
    goals = [random_udq(rng), random_udq(rng), random_udq(rng)]
    traj = build_goal_list(goals, [demo_a, demo_b], labels=["reach", "carry"])
    assert traj.labels == ["reach", "carry"]
    (a0, a1), (b0, b1) = traj.segments
    assert a0 == 0 and a1 == b0 and b1 == len(traj.poses) - 1
    assert dq_distance(traj.poses[a1], goals[1]) == 0.0
    assert dq_distance(traj.poses[-1], goals[2]) == 0.0
    d = traj.to_dict()
    assert [s["label"] for s in d["segments"]] == ["reach", "carry"]


def test_build_goal_list_identical_goals():
    rng = np.random.default_rng(9)
    g = random_udq(rng)
    traj = build_goal_list([g, g, g], [smooth_path(rng), smooth_path(rng)])
    assert len(traj.poses) == 1 and traj.segments == []
    with pytest.raises(DimensionMismatch):
        build_goal_list([g, g], [])


def test_goal_appended_after_capture():
    rng = np.random.default_rng(10)
    demo = smooth_path(rng, 10)
    start, goal = random_udq(rng), random_udq(rng)
    traj = build_goal_list([start, goal], [demo], tau_step=0.1, capture_radius=0.005)
    # blending stops once the last guide (the goal) is captured, then the goal is appended exactly
    assert translation_distance(traj.poses[-2], goal) < 0.005
    assert traj.poses[-1] is goal


def test_blend_distance_to_guide_non_increasing():
    rng = np.random.default_rng(11)
    X = smooth_path(rng, 15)
    start = UnitDualQuaternion.from_translation([0.1, 0, 0]) * X[0]
    cap = 0.005
    out = blend_to_path(start, Trajectory(X), tau_step=0.1, capture_radius=cap)
    # replay the guide index and check each step gets closer to the pose it targets
    i = 0
    for a, b in zip(out[:-2], out[1:-1]):
        while translation_distance(a, X[i]) < cap:
            i += 1
        assert translation_distance(b, X[i]) <= translation_distance(a, X[i]) + 1e-12
