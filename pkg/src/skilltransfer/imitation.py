"""Task-space path imitation, grasp filtering and support alignment.

Paths are lists of :class:`UnitDualQuaternion` poses. A demonstrated path
is reduced to its relative steps ``delta_i = x_{i-1}* x_i`` and rebuilt
backwards from a new goal, then blended into from an arbitrary start by
screw-linear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dualquat import UnitDualQuaternion, dq_distance, sclerp, translation_distance
from .errors import DegenerateSupport, DimensionMismatch, NoFeasibleGrasp, NonConvergence, TooShort

TAU_STEP = 0.1
CAPTURE_RADIUS = 0.005
MAX_ITERS = 1000
CONE_ANGLE = np.deg2rad(30.0)
ICP_MAX_ITERS = 50
ICP_TOL = 1e-6
SAME_POSE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: list
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        poses = list(self.poses)
        if len(poses) < 2:
            raise TooShort(f"trajectory needs at least 2 poses, got {len(poses)}")
        object.__setattr__(self, "poses", poses)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=float)
            if ts.shape != (len(poses),):
                raise DimensionMismatch("one timestamp per pose expected")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, i):
        return self.poses[i]

    def __iter__(self):
        return iter(self.poses)

    def to_list(self):
        return [p.to_dict() for p in self.poses]

    @classmethod
    def from_list(cls, items):
        """Waypoints ``[{t: [x, y, z], q: [w, x, y, z]}, ...]``; optional per-waypoint ``time``."""
        items = list(items)
        if len(items) < 2:
            raise TooShort(f"trajectory needs at least 2 poses, got {len(items)}")
        poses = [UnitDualQuaternion.from_dict(d) for d in items]
        ts = [d["time"] for d in items] if all("time" in d for d in items) else None
        return cls(poses, ts)


@dataclass(frozen=True, eq=False)
class ExecutableTrajectory:
    """Concatenated imitated segments; ``segments`` holds ``(start, end)`` pose index ranges."""

    poses: list
    segments: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __len__(self):
        return len(self.poses)

    def to_dict(self):
        return {
            "waypoints": [p.to_dict() for p in self.poses],
            "segments": [{"label": lab, "start": int(a), "end": int(b)}
                         for (a, b), lab in zip(self.segments, self.labels)],
        }


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: UnitDualQuaternion
    rank: float
    approach: np.ndarray | None = None

    def __post_init__(self):
        a = self.approach
        if a is None:
            # tool z axis in world coordinates
            a = self.pose.transform_point([0.0, 0.0, 1.0]) - self.pose.translation
        a = np.array(a, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if abs(n - 1) > 1e-9:
            raise ValueError(f"approach vector has norm {n:.12g}")
        a.setflags(write=False)
        object.__setattr__(self, "approach", a)

    def to_dict(self):
        return {"pose": self.pose.to_dict(), "rank": float(self.rank), "approach": self.approach.tolist()}

    @classmethod
    def from_dict(cls, d):
        a = d.get("approach")
        if a is not None:
            a = np.asarray(a, float)
            a = a / np.linalg.norm(a)
        return cls(UnitDualQuaternion.from_dict(d["pose"]), float(d["rank"]), a)


# ---------------------------------------------------------------- TSIA

def path_deltas(X):
    """Relative steps ``delta_i = x_{i-1}* x_i``, ``i = 1..n``."""
    poses = list(X)
    if len(poses) < 2:
        raise TooShort(f"need at least 2 poses, got {len(poses)}")
    return [a.conj() * b for a, b in zip(poses[:-1], poses[1:])]


def imitate_path(deltas, goal):
    """Rebuild a path that ends at ``goal`` with the given relative steps.

    Chains backwards, ``x'_{i-1} = x'_i delta_i*``, so every step of the
    output equals the corresponding demonstrated step.
    """
    out = [goal]
    for d in reversed(deltas):
        out.append(out[-1] * d.conj())
    return Trajectory(out[::-1])


def blend_to_path(current, imitated, tau_step=TAU_STEP, capture_radius=CAPTURE_RADIUS, max_iters=MAX_ITERS):
    """Reference poses from ``current`` onto the imitated path.

    Each step moves ``tau_step`` of the way along the screw towards the guide
    pose ``x'_i``. The guide index advances once the translation is within
    ``capture_radius`` of it. The output starts at ``current`` and ends with
    the last imitated pose, appended exactly.

    Parameters
    ----------
    current : UnitDualQuaternion
        start pose ``x''_0``
    imitated : Trajectory or list
        guide poses ``x'_0 .. x'_n``
    tau_step : float in (0, 1]
    capture_radius : float, meters
    max_iters : int
        steps allowed towards a single guide before giving up

    Output
    ------
    list of UnitDualQuaternion
    """
    if not 0 < tau_step <= 1:
        raise ValueError(f"tau_step must lie in (0, 1], got {tau_step}")
    if not capture_radius > 0:
        raise ValueError("capture_radius must be positive")
    guides = list(imitated)
    goal = guides[-1]
    out = [current]
    x = current
    i = 0
    stall = 0
    while True:
        while i < len(guides) and translation_distance(x, guides[i]) < capture_radius:
            i += 1
            stall = 0
        if i == len(guides):
            break
        if stall >= max_iters:
            raise NonConvergence(f"guide pose {i} not reached within {max_iters} steps")
        x = sclerp(x, guides[i], tau_step)
        out.append(x)
        stall += 1
    if dq_distance(out[-1], goal) != 0.0:
        out.append(goal)
    return out


# ---------------------------------------------------------------- grasps

def _pose_key(p):
    return tuple(np.round(np.r_[p.translation, p.rotation * np.sign(p.rotation[0] or 1.0)], 12))


def angle_between(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def filter_grasps(G, a_dem, theta=CONE_ANGLE, feasible=None):
    """Top-ranked grasp inside the approach cone that passes ``feasible``.

    ``feasible`` is a predicate on :class:`GraspCandidate` standing in for
    collision and reachability checks; by default every grasp passes. Equal
    ranks are broken by the smaller cone angle and then by pose, so the
    result does not depend on the order of ``G``.
    """
    G = list(G)
    if not G:
        raise NoFeasibleGrasp("no grasp candidates")
    feasible = feasible or (lambda g: True)
    kept = [g for g in G if feasible(g)]
    kept = [(g, angle_between(g.approach, a_dem)) for g in kept]
    kept = [(g, ang) for g, ang in kept if ang <= theta]
    if not kept:
        raise NoFeasibleGrasp(f"none of {len(G)} grasps is feasible within {np.rad2deg(theta):.1f} deg of the demonstrated approach")
    return min(kept, key=lambda ga: (-ga[0].rank, ga[1], _pose_key(ga[0].pose)))[0]


# ---------------------------------------------------------------- alignment

def _horn(P, Q, w=None):
    """Rigid ``(R, t)`` minimizing ``sum w |R p + t - q|^2`` via the quaternion eigenproblem."""
    w = np.ones(len(P)) if w is None else np.asarray(w, float)
    w = w / w.sum()
    cp, cq = w @ P, w @ Q
    S = (P - cp).T @ (w[:, None] * (Q - cq))
    Sxx, Sxy, Sxz = S[0]
    Syx, Syy, Syz = S[1]
    Szx, Szy, Szz = S[2]
    N = np.array([
        [Sxx + Syy + Szz, Syz - Szy, Szx - Sxz, Sxy - Syx],
        [Syz - Szy, Sxx - Syy - Szz, Sxy + Syx, Szx + Sxz],
        [Szx - Sxz, Sxy + Syx, -Sxx + Syy - Szz, Syz + Szy],
        [Sxy - Syx, Szx + Sxz, Syz + Szy, -Sxx - Syy + Szz],
    ])
    _, vecs = np.linalg.eigh(N)
    q = vecs[:, -1]
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    x = UnitDualQuaternion.from_rotation(q)
    t = cq - x.transform_point(cp)
    return UnitDualQuaternion.from_translation(t) * x


def _check_support(P, name):
    if len(P) == 0:
        raise DegenerateSupport(f"{name} support is empty")
    c = P - P.mean(0)
    s = np.linalg.svd(c, compute_uv=False) if len(P) > 1 else np.zeros(1)
    scale = max(np.abs(P).max(), 1.0)
    if len(s) < 2 or s[0] <= 1e-12 * scale or s[1] <= 1e-9 * s[0]:
        raise DegenerateSupport(f"{name} support points are coincident or collinear")


def align_supports(match_points, sel_points, correspondence=None, max_iters=ICP_MAX_ITERS, tol=ICP_TOL, history=None):
    """Rigid transform taking the matched support onto the selected support.

    Closed-form quaternion fit on the corresponded pairs, then point-to-point
    ICP against ``sel_points``.

    Parameters
    ----------
    match_points : (n, 3) array
    sel_points : (m, 3) array
    correspondence : (n,) int array or PointToPointMap, optional
        index into ``sel_points`` for every matched point. Without it the
        initial fit is the centroid shift.
    max_iters, tol :
        ICP stops after ``max_iters`` or once the RMS changes by less than
        ``tol`` (meters).
    history : list, optional
        receives the nearest-neighbor RMS after the initial fit and after
        every ICP iteration; it is non-increasing.

    Output
    ------
    UnitDualQuaternion
    """
    P = np.asarray(match_points, float).reshape(-1, 3)
    Q = np.asarray(sel_points, float).reshape(-1, 3)
    _check_support(P, "matched")
    _check_support(Q, "selected")
    if correspondence is None:
        x = UnitDualQuaternion.from_translation(Q.mean(0) - P.mean(0))
    else:
        idx = np.asarray(getattr(correspondence, "assignment", correspondence), dtype=np.int64)
        if len(idx) != len(P):
            raise DimensionMismatch(f"{len(idx)} correspondences for {len(P)} points")
        x = _horn(P, Q[idx])

    tree = cKDTree(Q)
    d, nn = tree.query(x.transform_point(P))
    rms = float(np.sqrt(np.mean(d ** 2)))
    if history is not None:
        history.append(rms)
    for _ in range(max_iters):
        cand = _horn(P, Q[nn])
        d_new, nn_new = tree.query(cand.transform_point(P))
        rms_new = float(np.sqrt(np.mean(d_new ** 2)))
        if rms_new > rms:  # rounding-level rise: keep the previous iterate
            break
        x, nn, change, rms = cand, nn_new, rms - rms_new, rms_new
        if history is not None:
            history.append(rms)
        if change < tol:
            break
    return x


def final_poses(x_o_init, x_o_end, g_eff):
    """Object displacement ``x_task = init* end`` and end-effector pose ``g_eff x_task``."""
    x_task = x_o_init.conj() * x_o_end
    return x_task, g_eff * x_task


# ---------------------------------------------------------------- goal list

def build_goal_list(goals, demo_segments, tau_step=TAU_STEP, capture_radius=CAPTURE_RADIUS,
                    labels=None, max_iters=MAX_ITERS):
    """Executable trajectory through ``goals``.

    Segment ``j`` imitates ``demo_segments[j]`` towards ``goals[j + 1]`` and
    blends into it from ``goals[j]``. Consecutive identical goals are merged
    together with their segment, so a skill whose goals all coincide gives a
    single-pose trajectory.
    """
    goals = list(goals)
    demo_segments = list(demo_segments)
    labels = list(labels) if labels is not None else [f"segment_{j}" for j in range(len(demo_segments))]
    if len(demo_segments) != len(goals) - 1:
        raise DimensionMismatch(f"{len(goals)} goals need {len(goals) - 1} demonstrated segments, got {len(demo_segments)}")
    poses = [goals[0]]
    segments, seg_labels = [], []
    for j, demo in enumerate(demo_segments):
        start, goal = poses[-1], goals[j + 1]
        if dq_distance(start, goal) <= SAME_POSE_TOL:
            continue
        guide = imitate_path(path_deltas(demo), goal)
        seg = blend_to_path(start, guide, tau_step, capture_radius, max_iters)
        a = len(poses) - 1
        poses.extend(seg[1:])
        segments.append((a, len(poses) - 1))
        seg_labels.append(labels[j])
    return ExecutableTrajectory(poses, segments, seg_labels)
