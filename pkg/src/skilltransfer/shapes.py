"""Procedural test shapes.

Surfaces of revolution share one vertex layout for a given set of ring
counts, so two bottles built with the same counts are in vertex-index
correspondence. Tests and the synthetic demo data rely on that for ground
truth.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosphere(subdivisions=3, radius=1.0, id="icosphere"):
    t = (1 + 5 ** 0.5) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return TriangleMesh(radius * np.array(verts), np.array(faces), id)


def ellipsoid(axes=(1.0, 1.0, 1.0), subdivisions=3, id="ellipsoid"):
    s = icosphere(subdivisions)
    return TriangleMesh(s.vertices * np.asarray(axes, float), s.faces, id)


def box(size=(1.0, 1.0, 1.0), n=4, id="box"):
    """Closed axis-aligned box with an ``n x n`` grid on each face, min corner at 0."""
    size = np.asarray(size, float)
    verts, faces, index = [], [], {}

    def vid(p):
        key = tuple(int(round(c)) for c in p)
        if key not in index:
            index[key] = len(verts)
            verts.append(np.array(key, float) / n * size)
        return index[key]

    for axis in range(3):
        u, w = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, n):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0, 0, 0]
                        p[axis], p[u], p[w] = side, i + di, j + dj
                        quad.append(vid(p))
                    if side == 0:
                        quad = quad[::-1]
                    a, b, c, d = quad
                    faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(np.array(verts), np.array(faces), id)


def torus(major=1.0, minor=0.3, n_major=40, n_minor=16, id="torus"):
    u = np.linspace(0, 2 * np.pi, n_major, endpoint=False)
    v = np.linspace(0, 2 * np.pi, n_minor, endpoint=False)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(V)) * np.cos(U)
    y = (major + minor * np.cos(V)) * np.sin(U)
    z = minor * np.sin(V)
    verts = np.stack([x, y, z], -1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(verts, np.array(faces), id)


def revolution(profile, n_theta=32, ellipticity=0.0, id="revolution"):
    """Closed surface of revolution about +z.

    ``profile`` is a sequence of ``(r, z)`` samples from the bottom pole to
    the top pole; the first and last must have ``r == 0``. ``ellipticity``
    stretches the cross-section to semi-axes ``(1 + e, 1 - e)``.
    """
    profile = np.asarray(profile, float)
    if profile[0, 0] != 0 or profile[-1, 0] != 0:
        raise ValueError("profile must start and end on the axis")
    rings = profile[1:-1]
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    cx, cy = (1 + ellipticity) * np.cos(th), (1 - ellipticity) * np.sin(th)
    verts = [[0.0, 0.0, profile[0, 1]]]
    for r, z in rings:
        verts += np.stack([r * cx, r * cy, np.full(n_theta, z)], -1).tolist()
    verts.append([0.0, 0.0, profile[-1, 1]])
    verts = np.array(verts)
    top = len(verts) - 1
    faces = []
    for j in range(n_theta):  # bottom fan, outward normal -z
        faces.append([0, 1 + (j + 1) % n_theta, 1 + j])
    for k in range(len(rings) - 1):
        base0, base1 = 1 + k * n_theta, 1 + (k + 1) * n_theta
        for j in range(n_theta):
            a, b = base0 + j, base0 + (j + 1) % n_theta
            c, d = base1 + (j + 1) % n_theta, base1 + j
            if (j + k) % 2:
                faces += [[a, b, c], [a, c, d]]
            else:
                faces += [[a, b, d], [b, c, d]]
    last = 1 + (len(rings) - 1) * n_theta
    for j in range(n_theta):
        faces.append([top, last + j, last + (j + 1) % n_theta])
    return TriangleMesh(verts, np.array(faces), id)


def _segment(p, q, n, include_end=False):
    t = np.linspace(0, 1, n + 1)
    t = t if include_end else t[:-1]
    return np.outer(1 - t, p) + np.outer(t, q)


def cylinder(radius=0.04, height=0.2, n_theta=32, n_cap=5, n_side=20, id="cylinder"):
    pts = np.vstack([
        _segment([0, 0], [radius, 0], n_cap),
        _segment([radius, 0], [radius, height], n_side),
        _segment([radius, height], [0, height], n_cap, include_end=True),
    ])
    return revolution(pts, n_theta, id=id)


def bottle(height=0.25, radius=0.04, neck_radius=0.014, body_fraction=0.6, neck_fraction=0.2,
           ellipticity=0.0, dent=0.0, dent_angle=np.pi / 6, neck_offset=0.0,
           n_theta=40, rings=(6, 24, 8, 8, 3), id="bottle"):
    """Bottle-like surface with base, body, shoulder, neck and cap.

    ``rings`` gives the number of profile samples on each of the five
    segments; bottles built with equal ``rings`` and ``n_theta`` share a
    vertex layout. ``dent`` presses a grip/label hollow of that relative
    depth into the body at ``dent_angle``, and ``neck_offset`` shifts the neck
    along +x; together they remove every symmetry of the surface.
    """
    n_base, n_body, n_sh, n_neck, n_top = rings
    zb = body_fraction * height
    zn = (1 - neck_fraction) * height
    # smooth shoulder: cosine blend between body and neck radius
    s = np.linspace(0, 1, n_sh + 1)[:-1]
    shoulder = np.stack([neck_radius + (radius - neck_radius) * 0.5 * (1 + np.cos(np.pi * s)),
                         zb + (zn - zb) * s], -1)
    pts = np.vstack([
        _segment([0, 0], [radius, 0], n_base),
        _segment([radius, 0], [radius, zb], n_body),
        shoulder,
        _segment([neck_radius, zn], [neck_radius, height], n_neck),
        _segment([neck_radius, height], [0, height], n_top, include_end=True),
    ])
    m = revolution(pts, n_theta, ellipticity=ellipticity, id=id)
    if not dent and not neck_offset:
        return m
    v = m.vertices.copy()
    th = np.arctan2(v[:, 1], v[:, 0])
    dth = np.angle(np.exp(1j * (th - dent_angle)))
    zc, zw = 0.5 * zb, 0.25 * zb
    scale = 1 - dent * np.exp(-dth ** 2 / (2 * 0.35 ** 2) - (v[:, 2] - zc) ** 2 / (2 * zw ** 2))
    # smaller second hollow, off the first one's mirror plane
    dth2 = np.angle(np.exp(1j * (th - dent_angle - 2.2)))
    scale -= 0.6 * dent * np.exp(-dth2 ** 2 / (2 * 0.3 ** 2) - (v[:, 2] - 0.85 * zb) ** 2 / (2 * (0.12 * zb) ** 2))
    v[:, :2] *= scale[:, None]
    ramp = np.clip((v[:, 2] - zb) / (zn - zb), 0, 1)
    v[:, 0] += neck_offset * ramp * ramp * (3 - 2 * ramp)
    return TriangleMesh(v, m.faces, id)


def sheet(width=1.0, depth=0.5, nu=24, nv=12, bend_radius=None, id="sheet"):
    """Flat rectangular grid; with ``bend_radius`` rolled isometrically about the y axis."""
    u = np.linspace(0, width, nu + 1)
    v = np.linspace(0, depth, nv + 1)
    U, V = np.meshgrid(u, v, indexing="ij")
    if bend_radius is None:
        X, Z = U, np.zeros_like(U)
    else:
        ang = (U - width / 2) / bend_radius
        X = bend_radius * np.sin(ang) + width / 2
        Z = bend_radius * (1 - np.cos(ang))
    verts = np.stack([X, V, Z], -1).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * (nv + 1) + j
            b, c, d = a + nv + 1, a + nv + 2, a + 1
            faces += [[a, b, c], [a, c, d]] if (i + j) % 2 else [[a, b, d], [b, c, d]]
    return TriangleMesh(verts, np.array(faces), id)


def rigid_transform(mesh, rotation=None, translation=None, id=None):
    R = np.eye(3) if rotation is None else np.asarray(rotation, float)
    t = np.zeros(3) if translation is None else np.asarray(translation, float)
    return TriangleMesh(mesh.vertices @ R.T + t, mesh.faces, mesh.id if id is None else id)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def jitter(mesh, rng, scale=0.05, id=None):
    """Displace vertices by Gaussian noise of ``scale`` times the mean edge length.

    Breaks the exact discrete symmetry of generated meshes, which otherwise
    leaves degenerate eigenvalue pairs that descriptors cannot resolve.
    """
    f = mesh.faces
    e = mesh.vertices[f[:, [1, 2, 0]]] - mesh.vertices[f]
    h = np.linalg.norm(e, axis=2).mean()
    v = mesh.vertices + rng.normal(scale=scale * h, size=mesh.vertices.shape)
    return TriangleMesh(v, mesh.faces, mesh.id if id is None else id)
