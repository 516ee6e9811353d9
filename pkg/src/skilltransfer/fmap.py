"""Functional maps between spectral bases.

Maps are estimated between unit-area rescalings of the two bases (see
:meth:`SpectralBasis.scaled`); spectral coefficients of mass-normalized
descriptors are unchanged by that rescaling, so callers pass ordinary
``project_descriptors`` output.

Convention: ``C`` has shape ``(k_tgt, k_src)`` and carries coefficients of a
function on the source shape to coefficients on the target shape. The
point-to-point map assigns every target vertex a source vertex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BasisTooSmall, DimensionMismatch, EmptyScene, RankDeficiency, ShapeMismatch

logger = logging.getLogger(__name__)

ALPHA_DESC = 1.0
ALPHA_LAPLACIAN = 1e-2
ZOOMOUT_STEP = 5
BRUTE_FORCE_LIMIT = 20000
RCOND = 1e-12
FUNCTION_KINDS = ("RIF", "EIF", "generic")


@dataclass(frozen=True, eq=False)
class FunctionalMap:
    C: np.ndarray
    source_id: str = "source"
    target_id: str = "target"
    k_init: int = 0
    k_final: int = 0

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        if C.ndim != 2 or not np.all(np.isfinite(C)):
            raise ValueError("C must be a finite 2-D matrix")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)
        if not self.k_init:
            object.__setattr__(self, "k_init", C.shape[0])
        if not self.k_final:
            object.__setattr__(self, "k_final", C.shape[0])

    @property
    def shape(self):
        return self.C.shape

    def to_dict(self):
        return {
            "source_id": self.source_id,
            "target_id": self.target_id,
            "k_init": int(self.k_init),
            "k_final": int(self.k_final),
            "shape": list(self.C.shape),
            "C": [float(x) for x in self.C.ravel()],
        }

    @classmethod
    def from_dict(cls, d):
        C = np.asarray(d["C"], float).reshape(d["shape"])
        return cls(C, d["source_id"], d["target_id"], d["k_init"], d["k_final"])


@dataclass(frozen=True, eq=False)
class PointToPointMap:
    assignment: np.ndarray  # per target vertex, a source vertex index
    source_id: str = "source"
    target_id: str = "target"
    n_source: int | None = None

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignment must be 1-D")
        if len(a) and a.min() < 0:
            raise ValueError("negative source index")
        if self.n_source is not None and len(a) and a.max() >= self.n_source:
            raise ValueError("source index out of range")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def __len__(self):
        return len(self.assignment)

    def pull_back(self, values):
        """Transport per-vertex values from the source to the target."""
        return np.asarray(values)[self.assignment]

    def to_dict(self):
        return {
            "source_id": self.source_id,
            "target_id": self.target_id,
            "assignment": [int(i) for i in self.assignment],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["assignment"], d["source_id"], d["target_id"])


@dataclass(frozen=True, eq=False)
class SurfaceFunction:
    """Per-vertex scalar field; RIF lives in [0, 1], EIF in {0, 1}."""

    values: np.ndarray
    kind: str = "generic"
    mesh_id: str = "mesh"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("surface function values must be 1-D")
        if self.kind not in FUNCTION_KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}")
        if self.kind == "RIF" and (v.min(initial=0) < 0 or v.max(initial=0) > 1):
            raise ValueError("RIF values must lie in [0, 1]")
        if self.kind == "EIF" and not np.all((v == 0) | (v == 1)):
            raise ValueError("EIF values must be 0 or 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @property
    def support(self):
        return np.flatnonzero(self.values > 0)


# ---------------------------------------------------------------- estimation

def laplacian_penalty(src_evals, tgt_evals):
    """Squared eigenvalue differences ``(lambda_src_j - lambda_tgt_i)^2``, (k_tgt, k_src)."""
    return (np.asarray(src_evals)[None, :] - np.asarray(tgt_evals)[:, None]) ** 2


def solve_fmap(src_basis, F, tgt_basis, H, alpha1=ALPHA_DESC, alpha2=ALPHA_LAPLACIAN, k_src=None, k_tgt=None):
    """Minimize ``a1 |CF - H|^2 + a2 |C L1 - L2 C|^2`` row by row.

    The Laplacian-commutativity term is diagonal in the entries of ``C``, so
    each row of ``C`` is an independent linear least-squares problem. The
    squared eigenvalue differences are scaled to a unit maximum, which keeps
    ``a2`` meaningful across basis sizes and shape scales. A row whose
    system is numerically singular raises :class:`RankDeficiency`.
    """
    F = np.asarray(F, float)
    H = np.asarray(H, float)
    k_src = F.shape[0] if k_src is None else k_src
    k_tgt = H.shape[0] if k_tgt is None else k_tgt
    F, H = F[:k_src], H[:k_tgt]
    if F.shape[1] != H.shape[1]:
        raise DimensionMismatch(f"descriptor counts differ: {F.shape[1]} vs {H.shape[1]}")
    if k_src < 2 or k_tgt < 2:
        raise DimensionMismatch("need at least two basis functions per shape")
    if k_src > src_basis.k or k_tgt > tgt_basis.k:
        raise BasisTooSmall("descriptor coefficients exceed available eigenpairs")

    _, lam_s = src_basis.scaled()
    _, lam_t = tgt_basis.scaled()
    D = laplacian_penalty(lam_s[:k_src], lam_t[:k_tgt])
    if D.max() > 0:
        D = D / D.max()
    a1, a2 = np.sqrt(alpha1), np.sqrt(alpha2)
    A_data = a1 * F.T  # (d, k_src)
    C = np.empty((k_tgt, k_src))
    for i in range(k_tgt):
        A = np.vstack([A_data, np.diag(a2 * np.sqrt(D[i]))])
        b = np.concatenate([a1 * H[i], np.zeros(k_src)])
        sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=RCOND)
        if rank < k_src:
            ratio = sv[-1] / sv[0] if sv[0] > 0 else 0.0
            raise RankDeficiency(
                f"row {i}: least-squares system has rank {rank} < {k_src} "
                f"(smallest/largest singular value {ratio:.2e})"
            )
        C[i] = sol
    return FunctionalMap(C, src_basis.mesh_id, tgt_basis.mesh_id, k_init=k_tgt, k_final=k_tgt)


def fmap_residual(fmap, F, H):
    k_t, k_s = fmap.C.shape
    return float(np.linalg.norm(fmap.C @ np.asarray(F)[:k_s] - np.asarray(H)[:k_t]))


def nearest_neighbors(query, reference, chunk=2048):
    """Index of the nearest ``reference`` row for each ``query`` row, and the squared distance."""
    query = np.ascontiguousarray(query)
    reference = np.ascontiguousarray(reference)
    if len(reference) > BRUTE_FORCE_LIMIT or len(query) > BRUTE_FORCE_LIMIT:
        d, idx = cKDTree(reference).query(query)
        return idx.astype(np.int64), d ** 2
    ref_sq = np.einsum("ij,ij->i", reference, reference)
    idx = np.empty(len(query), dtype=np.int64)
    dist = np.empty(len(query))
    for s in range(0, len(query), chunk):
        q = query[s:s + chunk]
        d2 = ref_sq[None, :] - 2.0 * q @ reference.T
        j = np.argmin(d2, axis=1)
        idx[s:s + chunk] = j
        dist[s:s + chunk] = np.maximum(d2[np.arange(len(q)), j] + np.einsum("ij,ij->i", q, q), 0.0)
    return idx, dist


def spectral_assignment(C, src_basis, tgt_basis):
    """Point-to-point map from ``C`` plus its mass-weighted embedding cost."""
    k_t, k_s = C.shape
    phi_s, _ = src_basis.scaled()
    phi_t, _ = tgt_basis.scaled()
    emb = phi_t[:, :k_t] @ C
    T, d2 = nearest_neighbors(emb, phi_s[:, :k_s])
    w = tgt_basis.mass / tgt_basis.area
    return T, float(w @ d2)


def pointmap_to_fmap(T, src_basis, tgt_basis, k_src, k_tgt=None):
    """Least-squares ``C`` (mass-weighted on the target) from a point map."""
    k_tgt = k_src if k_tgt is None else k_tgt
    phi_s, _ = src_basis.scaled()
    phi_t, _ = tgt_basis.scaled()
    w = tgt_basis.mass / tgt_basis.area
    return phi_t[:, :k_tgt].T @ (w[:, None] * phi_s[T, :k_src])


def _rank_aware_assignment(C, src_basis, tgt_basis, rtol=1e-2):
    """First ZoomOut assignment when ``C`` may be numerically low-rank.

    Source embedding rows are projected onto the row space of ``C`` (singular
    values above ``rtol`` of the largest) before the nearest-neighbor search,
    so directions that ``C`` annihilates do not bias the match. Equivalent to
    :func:`spectral_assignment` when ``C`` is well conditioned.
    """
    k_t, k_s = C.shape
    phi_s, _ = src_basis.scaled()
    phi_t, _ = tgt_basis.scaled()
    _, s, Vt = np.linalg.svd(C, full_matrices=False)
    keep = s > rtol * s[0] if s[0] > 0 else np.zeros(len(s), bool)
    if keep.all() and len(s) == k_s:
        return spectral_assignment(C, src_basis, tgt_basis)
    P = Vt[keep].T @ Vt[keep]
    T, d2 = nearest_neighbors(phi_t[:, :k_t] @ C, phi_s[:, :k_s] @ P)
    w = tgt_basis.mass / tgt_basis.area
    return T, float(w @ d2)


def zoomout_refine(fmap, src_basis, tgt_basis, k_start=None, k_end=200, step=ZOOMOUT_STEP,
                   history=None, rank_aware=True):
    """Spectral upsampling of ``fmap`` from ``k_start`` to ``k_end``.

    Alternates nearest-neighbor recovery of the point map in the spectral
    embedding with a least-squares re-estimate of ``C`` one step larger.
    If ``history`` is a list, ``(k, cost)`` of each assignment is appended.

    Parameters
    ----------
    fmap : FunctionalMap
        initial map, at least ``k_start`` square
    k_start, k_end, step : int
        dimensions of the first and last map and the increment
    rank_aware : bool
        project out the null space of the initial ``C`` in the first
        assignment (see :func:`_rank_aware_assignment`)

    Output
    ------
    (FunctionalMap of size ``k_end``, PointToPointMap)
    """
    k = min(fmap.C.shape) if k_start is None else k_start
    if k > min(fmap.C.shape):
        raise BasisTooSmall(f"map has dimension {fmap.C.shape}, cannot start at {k}")
    if k_end > src_basis.k or k_end > tgt_basis.k:
        raise BasisTooSmall(f"k_end={k_end} exceeds precomputed eigenpairs ({src_basis.k}, {tgt_basis.k})")
    if step < 1:
        raise ValueError("step must be positive")
    C = fmap.C[:k, :k]
    first = True
    while True:
        if first and rank_aware:
            T, cost = _rank_aware_assignment(C, src_basis, tgt_basis)
        else:
            T, cost = spectral_assignment(C, src_basis, tgt_basis)
        first = False
        if history is not None:
            history.append((k, cost))
        if k >= k_end:
            break
        k = min(k + step, k_end)
        C = pointmap_to_fmap(T, src_basis, tgt_basis, k)
    out = FunctionalMap(C, fmap.source_id, fmap.target_id, k_init=fmap.k_init, k_final=k)
    return out, PointToPointMap(T, fmap.source_id, fmap.target_id, src_basis.n_vertices)


# ---------------------------------------------------------------- transfer

def transfer_function(f, fmap, src_basis, tgt_basis, kind=None, raw=False):
    """Carry a surface function across ``fmap``: ``g = Phi_t C pinv(Phi_s) f``.

    RIF results are clamped to [0, 1] and EIF results thresholded at 0.5,
    unless ``raw`` is set.
    """
    if isinstance(f, SurfaceFunction):
        kind = f.kind if kind is None else kind
        values = f.values
    else:
        values = np.asarray(f, float)
    kind = kind or "generic"
    if len(values) != src_basis.n_vertices:
        raise ShapeMismatch(f"function has {len(values)} values, source has {src_basis.n_vertices} vertices")
    k_t, k_s = fmap.C.shape
    if k_s > src_basis.k or k_t > tgt_basis.k:
        raise BasisTooSmall("map dimension exceeds basis size")
    coeffs = src_basis.pinv(k_s) @ values / np.sqrt(src_basis.area)
    g = np.sqrt(tgt_basis.area) * (tgt_basis.eigenfunctions[:, :k_t] @ (fmap.C @ coeffs))
    if raw:
        return g
    if kind == "RIF":
        g = np.clip(g, 0.0, 1.0)
    elif kind == "EIF":
        g = (g >= 0.5).astype(float)
    return SurfaceFunction(g, kind, tgt_basis.mesh_id)


# ---------------------------------------------------------------- scoring

def weight_matrix(shape, sigma=None):
    """Gaussian band around the diagonal, ``w_ik = exp(-(i-k)^2 / 2 sigma^2)``, max 1."""
    r, c = shape
    sigma = min(r, c) / 20.0 if sigma is None else sigma
    i = np.arange(r)[:, None]
    k = np.arange(c)[None, :]
    W = np.exp(-((i - k) ** 2) / (2 * sigma ** 2))
    return W / W.max()


def _normalized_abs(C):
    A = np.abs(np.asarray(C, float))
    m = A.max()
    return A / m if m > 0 else A


def matching_score(C, W=None):
    """``R(C) = sum (1-w)|c| - sum w|c|`` on ``|C|`` scaled to max 1.

    Lower is more diagonal. Ranking uses :func:`diagonal_dominance`, the
    negation, so that the arg-max picks the most diagonal map.
    """
    C = C.C if isinstance(C, FunctionalMap) else np.asarray(C, float)
    W = weight_matrix(C.shape) if W is None else np.asarray(W, float)
    if W.shape != C.shape:
        raise DimensionMismatch(f"weights {W.shape} vs map {C.shape}")
    A = _normalized_abs(C)
    return float(np.sum((1 - W) * A) - np.sum(W * A))


def diagonal_dominance(C, W=None):
    return -matching_score(C, W)


@dataclass(frozen=True)
class MatchResult:
    index: int
    fmap: FunctionalMap
    score: float  # diagonal dominance, higher is better
    literal_score: float  # R(C) itself, lower is more diagonal
    residual: float


def select_match(src_basis, F, candidates, k=None, alpha1=ALPHA_DESC, alpha2=ALPHA_LAPLACIAN, W=None):
    """Map ``src`` onto every candidate and pick the most diagonal map.

    ``candidates`` is a sequence of ``(basis, H)`` pairs. Returns the winning
    :class:`MatchResult` and the full list in candidate order. Ties on the
    score go to the lower descriptor residual, then the lower index.
    """
    if not candidates:
        raise EmptyScene("no candidate objects")
    k = F.shape[0] if k is None else k
    results = []
    for j, (basis, H) in enumerate(candidates):
        fm = solve_fmap(src_basis, F, basis, H, alpha1, alpha2, k_src=k, k_tgt=k)
        lit = matching_score(fm.C, W)
        results.append(MatchResult(j, fm, -lit, lit, fmap_residual(fm, F, H)))
        logger.info("candidate %d (%s): score %.4f residual %.4g", j, basis.mesh_id, -lit, results[-1].residual)
    best = min(results, key=lambda r: (-r.score, r.residual, r.index))
    return best, results
