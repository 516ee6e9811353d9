"""Robot and environment interaction functions on a demonstration object."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BundleInconsistent, EmptyScene, InvalidThreshold, TooShort
from .fmap import SurfaceFunction

LAMBDA_D = 0.03
LAMBDA_P = 0.005
CONTACT_TOLERANCE = 0.005


def point_mesh_distance(points, mesh):
    """Unsigned distance from each point to the nearest triangle of ``mesh``."""
    points = np.atleast_2d(np.asarray(points, float))
    A, B, C = (mesh.vertices[mesh.faces[:, i]] for i in range(3))
    return np.array([_point_triangles(p, A, B, C).min() for p in points])


def _point_triangles(p, A, B, C):
    # closest point on each triangle, region tests after Ericson (2004)
    ab, ac, ap = B - A, C - A, p - A
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    bp = p - B
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    cp = p - C
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        Q = A + v[:, None] * ab + w[:, None] * ac
        # edges
        t_ab = np.clip(d1 / (d1 - d3), 0, 1)
        t_ac = np.clip(d2 / (d2 - d6), 0, 1)
        t_bc = np.clip((d4 - d3) / ((d4 - d3) + (d5 - d6)), 0, 1)
    e_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    e_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    e_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    Q = np.where(e_ab[:, None], A + np.nan_to_num(t_ab)[:, None] * ab, Q)
    Q = np.where(e_ac[:, None], A + np.nan_to_num(t_ac)[:, None] * ac, Q)
    Q = np.where(e_bc[:, None], B + np.nan_to_num(t_bc)[:, None] * (C - B), Q)
    # vertices
    Q = np.where(((d1 <= 0) & (d2 <= 0))[:, None], A, Q)
    Q = np.where(((d3 >= 0) & (d4 <= d3))[:, None], B, Q)
    Q = np.where(((d6 >= 0) & (d5 <= d6))[:, None], C, Q)
    return np.linalg.norm(Q - p, axis=1)


@dataclass(frozen=True, eq=False)
class ContactSet:
    """Finger contact points, ``{finger: (m, 3) array}``."""

    fingers: dict

    def __post_init__(self):
        fingers = {}
        for name, pts in self.fingers.items():
            a = np.array(pts, dtype=float).reshape(-1, 3)
            if len(a) == 0:
                raise BundleInconsistent(f"finger {name!r} has no contact points")
            a.setflags(write=False)
            fingers[str(name)] = a
        if not fingers:
            raise BundleInconsistent("contact set is empty")
        object.__setattr__(self, "fingers", fingers)

    @property
    def n_fingers(self):
        return len(self.fingers)

    def centroids(self):
        """Mean contact point of each finger, in sorted finger-name order."""
        return np.array([self.fingers[k].mean(axis=0) for k in sorted(self.fingers)])

    def all_points(self):
        return np.vstack([self.fingers[k] for k in sorted(self.fingers)])

    def transformed(self, x):
        return ContactSet({k: x.transform_point(v) for k, v in self.fingers.items()})

    def validate(self, mesh, tol=CONTACT_TOLERANCE):
        d = point_mesh_distance(self.all_points(), mesh)
        if d.max() > tol:
            raise BundleInconsistent(f"contact point {d.max() * 1e3:.2f} mm from surface of {mesh.id!r}")
        return self

    def to_dict(self):
        return {k: self.fingers[k].tolist() for k in sorted(self.fingers)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d))


def snap_contacts(mesh, contacts):
    """Replace every contact point by its nearest mesh vertex."""
    V = mesh.vertices
    out = {}
    for k, pts in contacts.fingers.items():
        d2 = ((pts[:, None, :] - V[None]) ** 2).sum(-1)
        out[k] = V[np.argmin(d2, axis=1)]
    return ContactSet(out)


@dataclass(frozen=True, eq=False)
class PlaneModel:
    """Plane through ``origin``; ``normal`` points out of the environment (into free space)."""

    origin: np.ndarray
    normal: np.ndarray
    id: str = "plane"

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        n = np.array(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1) > 1e-9:
            raise BundleInconsistent(f"plane {self.id!r}: normal has norm {np.linalg.norm(n):.12g}")
        o.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "normal", n)

    def signed_distance(self, points):
        return (np.asarray(points, float) - self.origin) @ self.normal

    def to_dict(self):
        return {"id": self.id, "origin": self.origin.tolist(), "normal": self.normal.tolist(),
                "normal_points": "out_of_environment"}

    @classmethod
    def from_dict(cls, d, normalize=False):
        """Read ``{origin, normal, normal_points}``.

        ``normal_points`` must be ``"out_of_environment"`` (e.g. a table's
        upward normal) or ``"into_environment"``; the latter is flipped.
        """
        orient = d.get("normal_points")
        if orient not in ("out_of_environment", "into_environment"):
            raise BundleInconsistent("plane must declare normal_points as out_of_environment or into_environment")
        n = np.asarray(d["normal"], float)
        if normalize:
            n = n / np.linalg.norm(n)
        if orient == "into_environment":
            n = -n
        return cls(d["origin"], n, d.get("id", "plane"))


@dataclass(frozen=True, eq=False)
class SkillRecord:
    """One demonstrated operation.

    ``kind`` is ``"grasp"`` for an approach that ends in a grasp,
    ``"manipulate"`` for motion with the object held, ``"press"`` for a
    closed-gripper contact and ``"post_contact"`` for the motion after it.
    """

    name: str
    kind: str
    trajectory: list
    object_id: str
    functions: list = field(default_factory=list)
    approach: np.ndarray | None = None
    planes: list = field(default_factory=list)
    lambda_d: float = LAMBDA_D
    lambda_p: float = LAMBDA_P

    def __post_init__(self):
        if len(self.trajectory) < 2:
            raise TooShort(f"operation {self.name!r}: trajectory needs at least 2 poses, got {len(self.trajectory)}")
        if self.kind not in ("grasp", "manipulate", "press", "post_contact"):
            raise BundleInconsistent(f"unknown operation kind {self.kind!r}")
        for f in self.functions:
            if f.mesh_id != self.object_id:
                raise BundleInconsistent(f"function on {f.mesh_id!r} attached to operation on {self.object_id!r}")
        if self.approach is not None:
            a = np.array(self.approach, dtype=float).reshape(3)
            a.setflags(write=False)
            object.__setattr__(self, "approach", a)

    def function(self, kind):
        for f in self.functions:
            if f.kind == kind:
                return f
        return None


def select_demo_object(scene, last_pose):
    """Id of the mesh whose nearest vertex is closest to the end-effector position."""
    if not scene:
        raise EmptyScene("demonstration scene has no objects")
    p = last_pose.translation
    d = [np.sqrt(((m.vertices - p) ** 2).sum(1).min()) for m in scene]
    return scene[int(np.argmin(d))].id


def compute_rif(mesh, contacts, lambda_d=LAMBDA_D):
    """Robot interaction function.

    ``max(1 - |Qf - p| / lambda_d, 0)`` for each finger centroid ``Qf``,
    combined across fingers by the pointwise maximum. Distances are
    Euclidean.
    """
    if not lambda_d > 0:
        raise InvalidThreshold(f"lambda_D must be positive, got {lambda_d}")
    Q = contacts.centroids()
    V = mesh.vertices
    vals = np.zeros(len(V))
    for q in Q:
        d = np.sqrt(((V - q) ** 2).sum(1))
        vals = np.maximum(vals, np.maximum(1.0 - d / lambda_d, 0.0))
    return SurfaceFunction(vals, "RIF", mesh.id, {"lambda_d": float(lambda_d)})


def world_displacement(x_rel, frame=None):
    """World-frame motion of an object carried by the gripper.

    ``x_rel = x0* xn`` is expressed in the gripper frame at ``x0``; the world
    displacement is ``x0 x_rel x0*``. With ``frame=None`` ``x_rel`` is taken
    as already in world coordinates.
    """
    if frame is None:
        return x_rel
    return frame * x_rel * frame.conj()


def apply_task_displacement(mesh, x_rel, frame=None):
    """Rigidly move ``mesh`` by ``x_rel`` (see :func:`world_displacement`)."""
    x = world_displacement(x_rel, frame)
    return mesh.with_vertices(x.transform_point(mesh.vertices))


def compute_eif(mesh, plane, lambda_p=LAMBDA_P):
    """Environment interaction function: 1 where ``(p - o) . n <= lambda_p``."""
    if not lambda_p > 0:
        raise InvalidThreshold(f"lambda_p must be positive, got {lambda_p}")
    vals = (plane.signed_distance(mesh.vertices) <= lambda_p).astype(float)
    return SurfaceFunction(vals, "EIF", mesh.id, {"plane": plane.id, "lambda_p": float(lambda_p)})


def contacting_planes(mesh, planes, lambda_p=LAMBDA_P):
    """Planes that at least one vertex of ``mesh`` lies within ``lambda_p`` of."""
    return [pl for pl in planes if np.any(np.abs(pl.signed_distance(mesh.vertices)) <= lambda_p)]


def approach_vector(pose, axis=(0.0, 0.0, 1.0)):
    """Tool-frame ``axis`` expressed in world coordinates."""
    return pose.transform_point(np.asarray(axis, float)) - pose.translation


__all__ = [
    "ContactSet", "PlaneModel", "SkillRecord",
    "select_demo_object", "compute_rif", "apply_task_displacement", "compute_eif",
    "snap_contacts", "point_mesh_distance", "contacting_planes", "approach_vector",
    "world_displacement", "LAMBDA_D", "LAMBDA_P",
]
