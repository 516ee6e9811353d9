import numpy as np
import pytest

from skilltransfer import shapes
from skilltransfer.dualquat import UnitDualQuaternion, quat_from_axis_angle
from skilltransfer.errors import BundleInconsistent, EmptyScene, InvalidThreshold, TooShort
from skilltransfer.fmap import SurfaceFunction
from skilltransfer.interaction import (ContactSet, PlaneModel, SkillRecord, apply_task_displacement, approach_vector,
                                       compute_eif, compute_rif, contacting_planes, point_mesh_distance,
                                       select_demo_object, world_displacement)


def test_point_mesh_distance_against_dense_sampling():
    rng = np.random.default_rng(0)
    m = shapes.jitter(shapes.icosphere(1), rng, 0.1)
    pts = rng.normal(size=(20, 3))
    # dense barycentric samples of every triangle
    u, v = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41))
    keep = u + v <= 1
    u, v = u[keep], v[keep]
    A, B, C = (m.vertices[m.faces[:, i]] for i in range(3))
    S = (A[:, None] + u[None, :, None] * (B - A)[:, None] + v[None, :, None] * (C - A)[:, None]).reshape(-1, 3)
    dense = np.sqrt(((pts[:, None] - S[None]) ** 2).sum(-1)).min(1)
    exact = point_mesh_distance(pts, m)
    assert np.all(exact <= dense + 1e-12)
    assert np.allclose(exact, dense, atol=2e-2)


def test_rif_linear_falloff_and_max_over_fingers():
    V = np.array([[0.0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.04, 0, 0], [0.1, 0, 0], [0.1, 0.01, 0]])
    m = shapes.box(n=1).with_vertices(np.vstack([V, [[1.0, 1, 1], [2.0, 2, 2]]]))
    c = ContactSet({"a": [[0.0, 0, 0]], "b": [[0.1, 0, 0], [0.1, 0.0, 0.0]]})
    f = compute_rif(m, c, lambda_d=0.04).values
    assert np.allclose(f[:6], [1.0, 0.75, 0.5, 0.0, 1.0, 0.75], atol=1e-12)
    assert np.all(f[6:] == 0)
    with pytest.raises(InvalidThreshold):
        compute_rif(m, c, 0.0)


def test_contact_validation():
    m = shapes.box(n=2)
    ContactSet({"f": [m.vertices[3]]}).validate(m)
    with pytest.raises(BundleInconsistent):
        ContactSet({"f": [[5.0, 5, 5]]}).validate(m)
    with pytest.raises(BundleInconsistent):
        ContactSet({})


def test_plane_orientation_declaration():
    up = PlaneModel.from_dict({"origin": [0, 0, 0], "normal": [0, 0, 1], "normal_points": "out_of_environment"})
    down = PlaneModel.from_dict({"origin": [0, 0, 0], "normal": [0, 0, -1], "normal_points": "into_environment"})
    assert np.array_equal(up.normal, down.normal)
    with pytest.raises(BundleInconsistent):
        PlaneModel.from_dict({"origin": [0, 0, 0], "normal": [0, 0, 1]})
    with pytest.raises(BundleInconsistent):
        PlaneModel([0, 0, 0], [0, 0, 2])


def test_eif_slab_and_contacting_planes():
    cube = shapes.box((1, 1, 1), n=4)
    table = PlaneModel([0, 0, 0], [0, 0, 1], "table")
    wall = PlaneModel([5, 0, 0], [-1, 0, 0], "wall")
    f = compute_eif(cube, table, 0.3)
    assert f.kind == "EIF" and f.meta == {"plane": "table", "lambda_p": 0.3}
    assert np.array_equal(f.values.astype(bool), cube.vertices[:, 2] <= 0.3)
    assert [p.id for p in contacting_planes(cube, [table, wall])] == ["table"]
    with pytest.raises(InvalidThreshold):
        compute_eif(cube, table, -1)


def test_select_demo_object():
    a = shapes.box(n=1, id="a")
    b = shapes.box(n=1, id="b").with_vertices(shapes.box(n=1).vertices + [3, 0, 0])
    pose = UnitDualQuaternion.from_translation([3.2, 0.5, 0.5])
    assert select_demo_object([a, b], pose) == "b"
    with pytest.raises(EmptyScene):
        select_demo_object([], pose)


def test_task_displacement_in_gripper_frame():
    # gripper at x0 rotated about z; relative motion expressed in the gripper frame
    x0 = UnitDualQuaternion.from_pose([1.0, 0, 0], quat_from_axis_angle([0, 0, 1], np.pi / 2))
    xn = x0 * UnitDualQuaternion.from_translation([0.2, 0, 0])
    x_rel = x0.conj() * xn
    D = world_displacement(x_rel, frame=x0)
    # the object rides with the gripper: D x0 = xn
    assert np.allclose((D * x0).as_matrix(), xn.as_matrix())
    m = shapes.box(n=1)
    moved = apply_task_displacement(m, x_rel, frame=x0)
    assert np.allclose(moved.vertices, m.vertices + [0, 0.2, 0])


def test_approach_vector():
    pose = UnitDualQuaternion.from_pose([1, 2, 3], quat_from_axis_angle([0, 1, 0], np.pi / 2))
    assert np.allclose(approach_vector(pose), [1, 0, 0])


def test_skill_record_checks():
    poses = [UnitDualQuaternion.identity(), UnitDualQuaternion.from_translation([0, 0, 1])]
    with pytest.raises(TooShort):
        SkillRecord("x", "grasp", poses[:1], "obj")
    with pytest.raises(BundleInconsistent):
        SkillRecord("x", "grasp", poses, "obj", [SurfaceFunction([0.0], "RIF", "other")])
    with pytest.raises(BundleInconsistent):
        SkillRecord("x", "wave", poses, "obj")
    r = SkillRecord("x", "grasp", poses, "obj", [SurfaceFunction([0.5], "RIF", "obj")])
    assert r.function("RIF").values[0] == 0.5 and r.function("EIF") is None
