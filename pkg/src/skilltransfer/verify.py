"""Quick invariant suite behind ``skilltransfer verify``.

Each check returns ``(name, passed, detail)``. The suite uses small
generated shapes so it finishes in a few seconds.
"""

from __future__ import annotations

import numpy as np

from . import fmap as fm
from . import shapes
from .descriptors import project_descriptors, wks
from .dualquat import UnitDualQuaternion, quat_from_axis_angle, sclerp
from .imitation import align_supports, imitate_path, path_deltas
from .interaction import ContactSet, PlaneModel, compute_eif, compute_rif
from .mesh import spectral_basis


def random_udq(rng, scale=1.0):
    q = rng.normal(size=4)
    return UnitDualQuaternion.from_pose(rng.normal(size=3) * scale, q / np.linalg.norm(q))


def check_screw_algebra(rng, n=200):
    worst = 0.0
    for _ in range(n):
        a, b = random_udq(rng), random_udq(rng)
        h = a.pow(0.5)
        worst = max(worst, _gap(h * h, a), _gap(sclerp(a, b, 0.0), a), _gap(sclerp(a, b, 1.0), b))
    x = UnitDualQuaternion.identity()
    step = random_udq(rng, 0.01)
    for _ in range(1000):
        x = x * step
    drift = abs(np.linalg.norm(x.real) - 1)
    return "screw_algebra", worst < 1e-10 and drift < 1e-9, f"max gap {worst:.2e}, drift {drift:.2e}"


def _gap(a, b):
    return min(max(np.abs(a.real - b.real).max(), np.abs(a.dual - b.dual).max()),
               max(np.abs(a.real + b.real).max(), np.abs(a.dual + b.dual).max()))


def check_tsia(rng, n=20):
    worst = 0.0
    for _ in range(n):
        X = [random_udq(rng) for _ in range(rng.integers(2, 12))]
        goal = random_udq(rng)
        D = path_deltas(X)
        Y = imitate_path(D, goal)
        worst = max(worst, _gap(Y[-1], goal))
        for d, e in zip(D, path_deltas(Y)):
            worst = max(worst, _gap(d, e))
    return "tsia", worst < 1e-10, f"max gap {worst:.2e}"


def check_interaction(rng):
    m = shapes.box(n=2)
    q = m.vertices[0]
    c = ContactSet({"f": [q]})
    f = compute_rif(m, c, 0.3).values
    ok = abs(f[0] - 1) < 1e-12 and np.all((f >= 0) & (f <= 1))
    table = PlaneModel([0, 0, 0], [0, 0, 1], "table")
    e = compute_eif(m, table, 0.01).values
    ok &= np.array_equal(e.astype(bool), np.abs(m.vertices[:, 2]) < 1e-12)
    return "interaction_functions", bool(ok), f"{int(e.sum())} bottom vertices"


def check_alignment(rng):
    P = rng.normal(size=(60, 3))
    x = random_udq(rng)
    Q = x.transform_point(P)
    hist = []
    est = align_supports(Q, P, np.arange(60), history=hist)
    err = np.abs(est.transform_point(Q) - P).max()
    mono = all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))
    return "alignment", err < 1e-6 and mono, f"max residual {err:.2e}"


def check_self_map(rng, k=30):
    m = shapes.ellipsoid((1.0, 0.8, 0.6), subdivisions=3)
    m = shapes.jitter(m, rng)
    basis = spectral_basis(m, k + 10)
    F = project_descriptors(basis, wks(basis.truncated(k)), k)
    C = fm.solve_fmap(basis, F, basis, F, k_src=k, k_tgt=k)
    C, T = fm.zoomout_refine(C, basis, basis, k, k + 10)
    ident = float(np.mean(T.assignment == np.arange(m.n_vertices)))
    return "self_map", ident >= 0.99, f"identity on {ident:.1%} of vertices"


CHECKS = (check_screw_algebra, check_tsia, check_interaction, check_alignment, check_self_map)


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    return [(name, bool(ok), detail) for name, ok, detail in (check(rng) for check in CHECKS)]
