import struct

import numpy as np
import pytest

from skilltransfer import shapes
from skilltransfer.errors import EmptyMesh, ParseError
from skilltransfer.mesh import (TriangleMesh, clean_mesh, cotangent_laplacian, load_mesh, save_off,
                                spectral_basis)

TETRA_V = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
TETRA_F = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_off_round_trip(tmp_path):
    m = shapes.jitter(shapes.icosphere(2), np.random.default_rng(0))
    save_off(m, tmp_path / "s.off")
    back = load_mesh(tmp_path / "s.off")
    assert back.id == "s"
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)


def test_off_polygon_fan_and_comments(tmp_path):
    (tmp_path / "q.off").write_text("OFF\n# a quad\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    m = load_mesh(tmp_path / "q.off")
    assert m.n_faces == 2 and m.n_vertices == 4


def test_obj_with_slashes_and_negative_indices(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nf 1//1 3//1 2//1\nf -4 -3 -1\n"
    (tmp_path / "t.obj").write_text(text)
    m = load_mesh(tmp_path / "t.obj")
    assert m.n_faces == 2
    assert m.n_vertices == 4


def test_ply_ascii_and_binary_agree(tmp_path):
    head = "ply\nformat {fmt} 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n" \
           "element face 4\nproperty list uchar int vertex_indices\nend_header\n"
    body = "".join(f"{x} {y} {z}\n" for x, y, z in TETRA_V) + "".join(f"3 {a} {b} {c}\n" for a, b, c in TETRA_F)
    (tmp_path / "a.ply").write_text(head.format(fmt="ascii") + body)
    raw = b"".join(struct.pack("<3f", *v) for v in TETRA_V)
    raw += b"".join(struct.pack("<B3i", 3, *f) for f in TETRA_F)
    (tmp_path / "b.ply").write_bytes(head.format(fmt="binary_little_endian").encode() + raw)
    a, b = load_mesh(tmp_path / "a.ply"), load_mesh(tmp_path / "b.ply")
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.faces, b.faces)


@pytest.mark.parametrize("text", [
    "OFF\n4 1 0\n0 0 0\n1 0 0\n",  # truncated
    "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n",  # index out of range
    "NOPE\n",
])
def test_malformed_off(tmp_path, text):
    (tmp_path / "bad.off").write_text(text)
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "bad.off")


def test_unknown_format_and_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "x.stl")
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "missing.off")


def test_clean_merges_duplicates_and_drops_degenerate():
    v = np.vstack([TETRA_V, TETRA_V[1] + 1e-12, [[5.0, 5, 5]]])
    f = np.vstack([TETRA_F, [[0, 4, 1]], [[0, 2, 4]]])  # a sliver, and a face using the duplicate
    m = clean_mesh(v, f)
    assert m.n_vertices == 4  # duplicate merged, unreferenced vertex dropped
    assert m.n_faces == 5


def test_clean_rejects_nothing_left():
    with pytest.raises(EmptyMesh):
        clean_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_laplacian_properties():
    m = shapes.jitter(shapes.icosphere(2), np.random.default_rng(1))
    W, mass = cotangent_laplacian(m)
    W = W.toarray()
    assert np.allclose(W, W.T)
    assert np.allclose(W.sum(1), 0, atol=1e-12)
    assert np.linalg.eigvalsh(W).max() < 1e-10  # negative semi-definite
    assert np.isclose(mass.sum(), m.area)


def test_unit_sphere_spectrum():
    m = shapes.icosphere(4)
    b = spectral_basis(m, 16)
    # 0, then 2 (x3), then 6 (x5), 12 (x7) on the unit sphere
    assert abs(b.eigenvalues[0]) < 1e-8
    assert np.allclose(b.eigenvalues[1:4], 2, rtol=1e-2)
    assert np.allclose(b.eigenvalues[4:9], 6, rtol=2e-2)
    G = b.eigenfunctions.T @ (b.mass[:, None] * b.eigenfunctions)
    assert np.allclose(G, np.eye(16), atol=1e-10)


def test_dense_and_sparse_solvers_agree():
    m = shapes.jitter(shapes.ellipsoid((1, 0.7, 0.5), 3), np.random.default_rng(2))
    a = spectral_basis(m, 12)
    b = spectral_basis(m, 12, dense_limit=10)
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-8, atol=1e-10)
    # simple spectrum after jitter: eigenvectors agree after the sign fix
    assert np.allclose(a.eigenfunctions[:, 1:], b.eigenfunctions[:, 1:], atol=1e-6)


def test_spectrum_invariant_to_rigid_motion():
    rng = np.random.default_rng(3)
    m = shapes.jitter(shapes.torus(), rng)
    R = shapes.random_rotation(rng)
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = [1, -2, 3]
    assert np.allclose(spectral_basis(m, 10).eigenvalues, spectral_basis(m.transformed(T), 10).eigenvalues,
                       rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("k", [0, 12])
def test_spectral_basis_k_out_of_range(k):
    m = shapes.box(n=1)
    with pytest.raises(ValueError):
        spectral_basis(m, k)


def test_mesh_validation():
    with pytest.raises(ValueError):
        TriangleMesh(TETRA_V, [[0, 1, 9]])


def test_generalized_eigen_residual():
    m = shapes.jitter(shapes.torus(), np.random.default_rng(4))
    W, mass = cotangent_laplacian(m)
    b = spectral_basis(m, 20)
    for lam, phi in zip(b.eigenvalues, b.eigenfunctions.T):
        r = np.linalg.norm(-W @ phi - lam * mass * phi) / np.linalg.norm(mass * phi)
        assert r < 1e-6
