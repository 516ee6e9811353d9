"""Triangle meshes, file ingestion and the cotangent Laplace-Beltrami spectrum."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg
from scipy.spatial import cKDTree

from .errors import EmptyMesh, NumericalDegeneracy, ParseError, SolverFailure

logger = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-9
MAX_COTANGENT = 1e8
DENSE_EIGEN_LIMIT = 2000
SHIFT = -1e-8


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangle mesh with vertices in meters.

    Parameters
    ----------
    vertices : (n, 3) array_like
    faces : (m, 3) array_like of int
    id : str
        Shape label, used to reference the mesh from bundles and reports.
    """

    vertices: np.ndarray
    faces: np.ndarray
    id: str = "mesh"

    def __post_init__(self):
        v = _readonly(self.vertices, np.float64)
        f = _readonly(self.faces, np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def face_areas(self):
        v0, v1, v2 = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    @property
    def vertex_areas(self):
        """Lumped (barycentric) mass: a third of each incident triangle area."""
        a = np.repeat(self.face_areas / 3.0, 3)
        return np.bincount(self.faces.ravel(), weights=a, minlength=self.n_vertices)

    @property
    def area(self):
        return float(self.face_areas.sum())

    @property
    def vertex_normals(self):
        v0, v1, v2 = (self.vertices[self.faces[:, i]] for i in range(3))
        fn = np.cross(v1 - v0, v2 - v0)  # area weighted
        n = np.zeros_like(self.vertices)
        for i in range(3):
            np.add.at(n, self.faces[:, i], fn)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    @property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def with_vertices(self, vertices, id=None):
        return TriangleMesh(vertices, self.faces, self.id if id is None else id)

    def with_id(self, id):
        return TriangleMesh(self.vertices, self.faces, id)

    def transformed(self, matrix):
        """Apply a 4x4 homogeneous transform to every vertex."""
        matrix = np.asarray(matrix, dtype=float)
        v = self.vertices @ matrix[:3, :3].T + matrix[:3, 3]
        return self.with_vertices(v)


def clean_mesh(vertices, faces, id="mesh", tol=MERGE_TOLERANCE):
    """Merge near-duplicate vertices, drop degenerate faces and unused vertices.

    Surviving vertices keep their original relative order; each merged cluster
    is represented by its lowest index.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    n = len(vertices)
    if not np.all(np.isfinite(vertices)):
        raise ParseError("non-finite vertex coordinates")

    rep = np.arange(n)
    if n > 1:
        pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
        if len(pairs):
            g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
            _, labels = sparse.csgraph.connected_components(g, directed=False)
            first = np.full(labels.max() + 1, n)
            np.minimum.at(first, labels, np.arange(n))
            rep = first[labels]
    faces = rep[faces]

    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[keep]
    if len(faces):
        v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
        area2 = np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
        edge2 = np.max([np.sum((v1 - v0) ** 2, 1), np.sum((v2 - v1) ** 2, 1), np.sum((v0 - v2) ** 2, 1)], axis=0)
        faces = faces[area2 > 1e-12 * edge2]
    if len(faces) == 0:
        raise EmptyMesh("no faces survive cleanup")

    used = np.zeros(n, dtype=bool)
    used[faces.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(vertices[used], remap[faces], id)


# ---------------------------------------------------------------- readers

def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _data_lines(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _read_off(path):
    tokens = []
    lines = _data_lines(Path(path).read_text())
    try:
        head = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if not head.upper().startswith("OFF"):
        raise ParseError(f"{path}: missing OFF header")
    rest = head[3:].split()
    for line in lines:
        tokens.extend(line.split())
    tokens = rest + tokens
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
        pos = 3
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            cnt = int(tokens[pos])
            poly = [int(t) for t in tokens[pos + 1:pos + 1 + cnt]]
            if len(poly) != cnt or cnt < 3:
                raise ParseError(f"{path}: truncated face record")
            faces.extend(_fan(poly))
            pos += 1 + cnt
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path):
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a PLY file")
    nl = raw.find(b"\n", end)
    header = raw[:end].decode("ascii", "replace").splitlines()
    body = raw[nl + 1:]

    fmt = None
    elements = []  # (name, count, [(prop, type, list_count_type)])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], parts[3], parts[2]))
            else:
                elements[-1][2].append((parts[2], parts[1], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")

    verts, faces = None, []
    try:
        if fmt == "ascii":
            tokens = body.decode("ascii").split()
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    rec = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            rec[pname] = float(tokens[pos])
                            pos += 1
                        else:
                            c = int(tokens[pos])
                            rec[pname] = [int(float(t)) for t in tokens[pos + 1:pos + 1 + c]]
                            pos += 1 + c
                    rows.append(rec)
                verts, faces = _ply_collect(name, rows, verts, faces)
        else:
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    rec = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            code = "<" + _PLY_TYPES[ptype]
                            (rec[pname],) = struct.unpack_from(code, body, pos)
                            pos += struct.calcsize(code)
                        else:
                            ccode = "<" + _PLY_TYPES[ltype]
                            (c,) = struct.unpack_from(ccode, body, pos)
                            pos += struct.calcsize(ccode)
                            icode = "<%d%s" % (c, _PLY_TYPES[ptype])
                            rec[pname] = list(struct.unpack_from(icode, body, pos))
                            pos += struct.calcsize(icode)
                    rows.append(rec)
                verts, faces = _ply_collect(name, rows, verts, faces)
    except (IndexError, ValueError, KeyError, struct.error) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if verts is None:
        raise ParseError(f"{path}: no vertex element")
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _ply_collect(name, rows, verts, faces):
    if name == "vertex":
        verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=float).reshape(-1, 3)
    elif name == "face":
        for r in rows:
            poly = r.get("vertex_indices", r.get("vertex_index"))
            if poly is None:
                raise KeyError("face element without vertex_indices")
            faces.extend(_fan(poly))
    return verts, faces


def _read_obj(path):
    verts, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif parts[0] == "f":
                poly = []
                for p in parts[1:]:
                    i = int(p.split("/")[0])
                    poly.append(i - 1 if i > 0 else len(verts) + i)
                if len(poly) < 3:
                    raise ValueError("face needs 3 vertices")
                faces.extend(_fan(poly))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


_READERS = {"OFF": _read_off, "PLY": _read_ply, "OBJ": _read_obj}


def load_mesh(path, format=None, id=None):
    """Read an OFF, PLY or OBJ file and return the cleaned mesh.

    The format defaults to the file suffix and the id to the file stem.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt not in _READERS:
        raise ParseError(f"{path}: unknown mesh format {fmt!r}")
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    verts, faces = _READERS[fmt](path)
    if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
        raise ParseError(f"{path}: face index out of range")
    return clean_mesh(verts, faces, id=id or path.stem)


def save_off(mesh, path):
    """Write ``mesh`` as ASCII OFF with round-trip exact coordinates."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += ["3 %d %d %d" % tuple(f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- spectrum

def cotangent_laplacian(mesh):
    """Cotangent weight matrix and lumped vertex masses.

    Returns ``(W, mass)`` where ``W`` is sparse symmetric with
    ``w_ij = (cot a_ij + cot b_ij) / 2`` off the diagonal (one term on
    boundary edges) and ``w_ii = -sum_j w_ij``, so ``W`` is negative
    semi-definite and ``-W`` is the stiffness matrix.
    """
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    I, J, S = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        dot = np.einsum("ij,ij->i", e1, e2)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = dot / cross
        if not np.all(np.isfinite(cot)) or np.abs(cot).max() > MAX_COTANGENT:
            raise NumericalDegeneracy(f"{mesh.id}: cotangent exceeds {MAX_COTANGENT:g}")
        I.append(i)
        J.append(j)
        S.append(0.5 * cot)
    I, J, S = np.concatenate(I), np.concatenate(J), np.concatenate(S)
    W = sparse.coo_matrix((np.r_[S, S], (np.r_[I, J], np.r_[J, I])), shape=(n, n)).tocsr()
    W = W - sparse.diags(np.asarray(W.sum(axis=1)).ravel())
    return W.tocsr(), mesh.vertex_areas


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``k`` Laplace-Beltrami eigenpairs of a mesh.

    ``eigenfunctions`` are mass-orthonormal in physical units, so
    ``Phi.T @ diag(mass) @ Phi == I``.
    """

    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    mass: np.ndarray
    mesh_id: str = "mesh"
    _pinv: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenfunctions", _readonly(self.eigenfunctions, np.float64))
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues, np.float64))
        object.__setattr__(self, "mass", _readonly(self.mass, np.float64))

    @property
    def k(self):
        return self.eigenfunctions.shape[1]

    @property
    def n_vertices(self):
        return self.eigenfunctions.shape[0]

    @property
    def area(self):
        return float(self.mass.sum())

    def truncated(self, k):
        if k > self.k:
            raise ValueError(f"basis has {self.k} columns, asked for {k}")
        return SpectralBasis(self.eigenfunctions[:, :k], self.eigenvalues[:k], self.mass, self.mesh_id)

    def scaled(self):
        """Eigenpairs rescaled to a unit-area copy of the surface.

        Functional maps are estimated in this frame so that uniformly scaled
        copies of a shape produce the identity map.
        """
        a = self.area
        return self.eigenfunctions * np.sqrt(a), self.eigenvalues * a

    def project(self, values, k=None):
        """Mass-weighted coefficients ``Phi.T M f`` of per-vertex values."""
        phi = self.eigenfunctions if k is None else self.eigenfunctions[:, :k]
        values = np.asarray(values, dtype=float)
        w = self.mass[:, None] if values.ndim == 2 else self.mass
        return phi.T @ (w * values)

    def pinv(self, k=None):
        """Moore-Penrose pseudoinverse of the first ``k`` eigenfunctions (cached)."""
        k = self.k if k is None else k
        if k not in self._pinv:
            self._pinv[k] = np.linalg.pinv(self.eigenfunctions[:, :k])
        return self._pinv[k]


def _fix_signs(phi):
    scale = np.abs(phi).max(axis=0)
    for j in range(phi.shape[1]):
        nz = np.flatnonzero(np.abs(phi[:, j]) > 1e-8 * scale[j])
        if len(nz) and phi[nz[0], j] < 0:
            phi[:, j] = -phi[:, j]
    return phi


def spectral_basis(mesh, k, seed=0, dense_limit=DENSE_EIGEN_LIMIT):
    """Solve ``-W phi = lambda M phi`` for the ``k`` smallest eigenpairs.

    Small meshes use a dense symmetric solve; larger ones use shift-invert
    Lanczos around a tiny negative shift. Eigenvector signs are fixed so the
    first clearly nonzero entry of every column is positive.
    """
    n = mesh.n_vertices
    if n < 4:
        raise ValueError("spectral basis needs at least 4 vertices")
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    W, mass = cotangent_laplacian(mesh)
    L = -W
    if np.any(mass <= 0):
        raise NumericalDegeneracy(f"{mesh.id}: vertex with zero mass")

    if n <= dense_limit:
        s = 1.0 / np.sqrt(mass)
        A = (s[:, None] * L.toarray()) * s[None, :]
        evals, evecs = scipy.linalg.eigh(A, subset_by_index=[0, k - 1])
        evecs = s[:, None] * evecs
    else:
        M = sparse.diags(mass)
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            evals, evecs = scipy.sparse.linalg.eigsh(
                L.tocsc(), k=k, M=M.tocsc(), sigma=SHIFT, which="LM", v0=v0, maxiter=20 * n
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverFailure(f"{mesh.id}: eigensolver did not converge") from exc
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
        # re-orthonormalize against M; degenerate pairs may come back skewed
        G = evecs.T @ (mass[:, None] * evecs)
        evecs = evecs @ np.linalg.inv(np.linalg.cholesky(G)).T

    evals = np.maximum(evals, 0.0)
    evecs = _fix_signs(np.ascontiguousarray(evecs))
    logger.debug("%s: %d eigenpairs, lambda_max=%.4g", mesh.id, k, evals[-1])
    return SpectralBasis(evecs, evals, mass, mesh.id)
