"""Synthetic demonstrations and test scenes with known ground truth.

Bottles and cylinders are generated with a shared vertex layout, so the
vertex with a given index is the corresponding point on every instance. The
per-vertex ground-truth functions written next to each new scene follow
from that correspondence.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import shapes
from .dualquat import UnitDualQuaternion, quat_from_axis_angle, sclerp
from .interaction import LAMBDA_D, LAMBDA_P, PlaneModel, compute_eif, compute_rif, ContactSet
from .mesh import save_off
from .pipeline import save_function_csv, write_json

BOTTLE_RINGS = (8, 30, 10, 10, 4)
BOTTLE_THETA = 48
BOTTLE_DENT = 0.3

DEMO_BOTTLE = dict(height=0.25, radius=0.04, neck_radius=0.014, body_fraction=0.6)
SIMILAR_BOTTLE = dict(height=0.24, radius=0.042, neck_radius=0.015, body_fraction=0.58)
OTHER_BOTTLE = dict(height=0.31, radius=0.032, neck_radius=0.012, body_fraction=0.7, neck_fraction=0.15)

TABLE = PlaneModel([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], "table")
SHELF = PlaneModel([0.5, 0.45, 0.2], [0.0, 0.0, 1.0], "shelf")


def make_bottle(params, seed, id):
    rng = np.random.default_rng(seed)
    m = shapes.bottle(dent=BOTTLE_DENT, n_theta=BOTTLE_THETA, rings=BOTTLE_RINGS, id=id, **params)
    return shapes.jitter(m, rng)


def make_cylinder(seed, scale=1.0, id="cylinder"):
    rng = np.random.default_rng(seed)
    m = shapes.jitter(shapes.cylinder(id=id), rng)
    return m.with_vertices(m.vertices * scale)


def yaw(angle):
    return UnitDualQuaternion.from_rotation(quat_from_axis_angle([0, 0, 1], angle))


def place(mesh, position, angle=0.0):
    """Rotate ``mesh`` about z by ``angle`` and move its base centre to ``position``."""
    x = UnitDualQuaternion.from_translation(position) * yaw(angle)
    return mesh.with_vertices(x.transform_point(mesh.vertices)), x


def _pose(t, axis=(0, 1, 0), angle=np.pi / 2):
    return UnitDualQuaternion.from_pose(t, quat_from_axis_angle(axis, angle))


def _waypoints(poses):
    return [p.to_dict() for p in poses]


def _curve(a, b, n, bump):
    """ScLERP from ``a`` to ``b`` with a sideways sine bump of amplitude ``bump`` (m)."""
    out = []
    for s in np.linspace(0, 1, n):
        p = sclerp(a, b, float(s))
        off = UnitDualQuaternion.from_translation(np.asarray(bump) * np.sin(np.pi * s))
        out.append(off * p)
    return out


def _finger_contacts(mesh, centre, direction, n=3):
    """Indices of the ``n`` vertices nearest the surface point hit from ``centre`` along ``direction``."""
    V = mesh.vertices
    d = V - centre
    along = d @ direction
    perp = np.linalg.norm(d - np.outer(along, direction), axis=1)
    hit = np.argmax(np.where(perp < 0.006, along, -np.inf))
    return np.argsort(np.linalg.norm(V - V[hit], axis=1), kind="stable")[:n]


# ---------------------------------------------------------------- stirring (grasp + place)

def stirring_demo(directory, seed=0):
    """Write a grasp-and-place demonstration on a bottle.

    The gripper approaches the bottle body from -x, grasps it between two
    fingers, lifts it, swirls it and lays it on its side on a shelf. Returns
    the manifest path and a dict with the contact vertex indices.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    local = make_bottle(DEMO_BOTTLE, seed, "demo_bottle")
    bottle, _ = place(local, [0.5, 0.0, 0.0])
    cup, _ = place(shapes.torus(0.03, 0.012, 24, 10, id="ring"), [0.3, -0.25, 0.012])
    save_off(bottle, directory / "demo_bottle.off")
    save_off(cup, directory / "ring.off")

    zg = 0.6 * DEMO_BOTTLE["body_fraction"] * DEMO_BOTTLE["height"]
    centre = np.array([0.5, 0.0, zg])
    fingers = {f: _finger_contacts(bottle, centre, np.array([0.0, s, 0.0])) for f, s in (("left", 1.0), ("right", -1.0))}
    write_json(directory / "contacts.json", {f: bottle.vertices[i].tolist() for f, i in fingers.items()})

    g_dem = _pose(centre)  # tool z along +x
    x0 = _pose(centre + [-0.25, 0.05, 0.18], angle=np.pi / 4)
    approach = _curve(x0, g_dem, 30, [0.0, 0.04, 0.0])

    # object motion: lift, swirl, lay on the shelf
    lift = UnitDualQuaternion.from_translation([0, 0, 0.12])
    tip = UnitDualQuaternion.from_rotation(quat_from_axis_angle([1, 0, 0], np.pi / 2))
    c = UnitDualQuaternion.from_translation(centre)
    lay = c * tip * c.conj()
    laid = lay.transform_point(bottle.vertices)
    shift = np.array([0.5, 0.45, SHELF.origin[2]]) - [laid[:, 0].mean(), laid[:, 1].mean(), laid[:, 2].min()]
    D_end = UnitDualQuaternion.from_translation(shift) * lay
    motion = [UnitDualQuaternion.identity()]
    motion += [sclerp(UnitDualQuaternion.identity(), lift, float(s)) for s in np.linspace(0, 1, 12)[1:]]
    for s in np.linspace(0, 1, 25)[1:]:
        a = 2 * np.pi * 2 * s
        swirl = UnitDualQuaternion.from_translation([0.02 * np.sin(a), 0.02 * (1 - np.cos(a)), 0.0])
        motion.append(swirl * lift)
    motion += [sclerp(lift, D_end, float(s)) for s in np.linspace(0, 1, 30)[1:]]
    carry = [D * g_dem for D in motion]

    write_json(directory / "approach.json", {"waypoints": _waypoints(approach)})
    write_json(directory / "carry.json", {"waypoints": _waypoints(carry)})
    manifest = {
        "skill": "stirring",
        "objects": ["demo_bottle.off", "ring.off"],
        "planes": [TABLE.to_dict(), SHELF.to_dict()],
        "thresholds": {"lambda_d": LAMBDA_D, "lambda_p": LAMBDA_P},
        "operations": [
            {"name": "grasp", "kind": "grasp", "trajectory": "approach.json", "contacts": "contacts.json"},
            {"name": "carry", "kind": "manipulate", "trajectory": "carry.json"},
        ],
    }
    write_json(directory / "manifest.json", manifest)
    return directory / "manifest.json", {"fingers": {f: i.tolist() for f, i in fingers.items()},
                                         "placement": D_end, "grasp": g_dem}


def ground_truth_functions(demo_mesh, target_mesh, finger_indices, demo_eif=None, lambda_d=LAMBDA_D):
    """Annotated functions on ``target_mesh`` by vertex-index correspondence.

    RIF: the finger centroids are the target positions of the demonstrated
    contact vertices. EIF: the demonstrated support carried index by index.
    """
    if demo_mesh.n_vertices != target_mesh.n_vertices:
        raise ValueError("ground truth needs meshes with a shared vertex layout")
    contacts = ContactSet({f: target_mesh.vertices[np.asarray(i)] for f, i in finger_indices.items()})
    out = {"RIF": compute_rif(target_mesh, contacts, lambda_d).values}
    if demo_eif is not None:
        out["EIF"] = np.asarray(demo_eif, float).copy()
    return out


def stirring_scene(directory, demo_dir, seed=0, kind="category", n_distractors=2):
    """Write a new scene for the stirring demonstration.

    ``kind="category"`` puts a similar bottle among distractors of other
    categories; ``"two_bottles"`` holds the similar bottle and a less
    similar one; ``"copy"`` holds the demonstration bottle itself.
    Ground-truth CSVs are written for the expected match, whose id is
    returned.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(1000 + seed)
    demo_local = make_bottle(DEMO_BOTTLE, 0, "demo_bottle")
    objs = []
    if kind == "copy":
        target, _ = place(demo_local.with_id("bottle_copy"), [0.5, 0.0, 0.0])
        objs.append(target)
    else:
        params = {k: v * (1 + 0.03 * rng.uniform(-1, 1)) for k, v in SIMILAR_BOTTLE.items()}
        target, _ = place(make_bottle(params, 10 + seed, "bottle_a"), [0.45, -0.05, 0.0], rng.uniform(-0.3, 0.3))
        objs.append(target)
        if kind == "two_bottles":
            other, _ = place(make_bottle(OTHER_BOTTLE, 20 + seed, "bottle_b"), [0.45, 0.2, 0.0], rng.uniform(-0.3, 0.3))
            objs.append(other)
        else:
            for j, m in enumerate(distractors(rng)[:n_distractors]):
                objs.append(place(m, [0.25 + 0.15 * j, -0.3, 0.0], rng.uniform(0, 2 * np.pi))[0])
    for m in objs:
        save_off(m, directory / f"{m.id}.off")
    write_json(directory / "scene.json", {"planes": [TABLE.to_dict(), SHELF.to_dict()]})
    return target.id


def distractors(rng):
    """Objects of other categories, a box and a torus, with seeded proportions."""
    b = shapes.box(size=rng.uniform(0.06, 0.1, 3), n=8, id="box")
    b = shapes.jitter(b, rng, 0.02)
    t = shapes.jitter(shapes.torus(rng.uniform(0.035, 0.05), rng.uniform(0.012, 0.018), 40, 16, id="torus"), rng)
    t = t.with_vertices(t.vertices - [0, 0, t.vertices[:, 2].min()])
    return [b, t]


def write_ground_truth(directory, bundle, target_mesh, finger_indices, prefix="gt"):
    """Ground-truth per-vertex CSVs for every function of ``bundle`` on ``target_mesh``."""
    from .fmap import SurfaceFunction

    directory = Path(directory)
    demo_mesh = bundle.scene[bundle.object_id]
    written = {}
    for r in bundle.records:
        for f in r.functions:
            name = f"{r.name}.{f.kind}" + (f".{f.meta['plane']}" if f.kind == "EIF" else "")
            if f.kind == "RIF":
                vals = ground_truth_functions(demo_mesh, target_mesh, finger_indices, lambda_d=r.lambda_d)["RIF"]
            else:
                vals = np.asarray(f.values, float)
            path = directory / f"{prefix}.{name}.csv"
            save_function_csv(SurfaceFunction(vals, f.kind, target_mesh.id), path)
            written[name] = path
    return written


# ---------------------------------------------------------------- pressing

def pressing_demo(directory, seed=0):
    """Closed-gripper press on the side of a cylinder, then a short retreat."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cyl, _ = place(make_cylinder(seed, id="demo_cylinder"), [0.5, 0.0, 0.0])
    save_off(cyl, directory / "demo_cylinder.off")
    centre = np.array([0.5, 0.0, 0.14])
    idx = _finger_contacts(cyl, centre, np.array([-1.0, 0.0, 0.0]), n=4)
    write_json(directory / "contacts.json", {"tip": cyl.vertices[idx].tolist()})
    press = _pose(cyl.vertices[idx].mean(0) + [-0.005, 0, 0])
    x0 = _pose(centre + [-0.3, -0.1, 0.1], angle=np.pi / 3)
    approach = _curve(x0, press, 25, [0.0, 0.0, 0.03])
    retreat = [UnitDualQuaternion.from_translation([-0.1 * s, 0.0, 0.03 * s]) * press for s in np.linspace(0, 1, 10)]
    write_json(directory / "approach.json", {"waypoints": _waypoints(approach)})
    write_json(directory / "retreat.json", {"waypoints": _waypoints(retreat)})
    manifest = {
        "skill": "pressing",
        "objects": ["demo_cylinder.off"],
        "planes": [],
        "thresholds": {"lambda_d": LAMBDA_D, "lambda_p": LAMBDA_P},
        "operations": [
            {"name": "press", "kind": "press", "trajectory": "approach.json", "contacts": "contacts.json"},
            {"name": "retreat", "kind": "post_contact", "trajectory": "retreat.json"},
        ],
    }
    write_json(directory / "manifest.json", manifest)
    return directory / "manifest.json", {"fingers": {"tip": idx.tolist()}}


def pressing_scene(directory, seed=0, scale=1.15, with_distractors=True):
    """Scene with the demonstration cylinder scaled by ``scale`` and optional distractors."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2000 + seed)
    target, _ = place(make_cylinder(0, scale, id="cylinder_scaled"), [0.4, 0.1, 0.0])
    objs = [target]
    if with_distractors:
        for j, m in enumerate(distractors(rng)):
            objs.append(place(m, [0.25 + 0.15 * j, -0.3, 0.0], rng.uniform(0, 2 * np.pi))[0])
    for m in objs:
        save_off(m, directory / f"{m.id}.off")
    return target.id
