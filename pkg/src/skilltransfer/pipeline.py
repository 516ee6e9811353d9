"""Demonstration and imitation workflow.

A demonstration bundle is a directory holding ``bundle.json`` and the scene
meshes. ``record_bundle`` builds one from a manifest of raw inputs;
``imitate`` transfers it onto a new scene and emits an executable
trajectory plus an evaluation report.
"""

from __future__ import annotations

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fmap as fm
from .descriptors import NUM_ENERGIES, VARIANCE_SCALE, project_descriptors, wks
from .dualquat import UnitDualQuaternion
from .errors import (BundleInconsistent, DegenerateSupport, EmptyScene, LengthMismatch, ParseError,
                     SkillTransferError, StageError)
from .imitation import (CAPTURE_RADIUS, CONE_ANGLE, TAU_STEP, ExecutableTrajectory, GraspCandidate, Trajectory,
                        align_supports, build_goal_list, blend_to_path, filter_grasps, final_poses, imitate_path,
                        path_deltas)
from .interaction import (LAMBDA_D, LAMBDA_P, ContactSet, PlaneModel, SkillRecord, apply_task_displacement,
                          approach_vector, compute_eif, compute_rif, contacting_planes, select_demo_object)
from .mesh import load_mesh, save_off, spectral_basis

logger = logging.getLogger(__name__)

BUNDLE_FILE = "bundle.json"
DELTA = 0.5
FM_STAGES = ("spectral_bases", "descriptors", "select_match", "refine")


# ---------------------------------------------------------------- json

def dumps(obj):
    """Canonical JSON: sorted keys, fixed indent, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: {e}") from e


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


# ---------------------------------------------------------------- config

@dataclass
class PipelineConfig:
    k_init: int = 85
    k_final: int = 200
    step: int = fm.ZOOMOUT_STEP
    alpha1: float = fm.ALPHA_DESC
    alpha2: float = fm.ALPHA_LAPLACIAN
    num_energies: int = NUM_ENERGIES
    variance_scale: float = VARIANCE_SCALE
    delta: float = DELTA
    theta_deg: float = float(np.rad2deg(CONE_ANGLE))
    tau_step: float = TAU_STEP
    capture_radius: float = CAPTURE_RADIUS
    seed: int = 0
    start_pose: dict | None = None  # {t, q}; default: first demonstrated pose

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise BundleInconsistent(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    def updated(self, **kw):
        d = asdict(self)
        d.update({k: v for k, v in kw.items() if v is not None})
        return PipelineConfig(**d)


# ---------------------------------------------------------------- types

@dataclass(frozen=True, eq=False)
class Scene:
    objects: list
    planes: list = field(default_factory=list)
    id: str = "scene"

    def __post_init__(self):
        ids = [m.id for m in self.objects]
        if len(set(ids)) != len(ids):
            raise BundleInconsistent(f"object ids not unique in scene {self.id!r}: {ids}")

    def __getitem__(self, mesh_id):
        for m in self.objects:
            if m.id == mesh_id:
                return m
        raise KeyError(mesh_id)

    @property
    def ids(self):
        return [m.id for m in self.objects]

    @classmethod
    def from_dir(cls, path, id=None):
        """Every ``.off/.ply/.obj`` file in ``path`` (sorted by name) plus planes from ``scene.json``."""
        path = Path(path)
        if not path.is_dir():
            raise ParseError(f"scene directory {path} not found")
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".off", ".ply", ".obj"))
        planes = []
        if (path / "scene.json").exists():
            meta = read_json(path / "scene.json")
            planes = [PlaneModel.from_dict(p) for p in meta.get("planes", [])]
        if not files:
            raise EmptyScene(f"no mesh files in {path}")
        return cls([load_mesh(f) for f in files], planes, id or path.name)


@dataclass(frozen=True, eq=False)
class DemonstrationBundle:
    scene: Scene
    records: list
    metadata: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.records:
            if r.object_id not in self.scene.ids:
                raise BundleInconsistent(f"operation {r.name!r} refers to unknown object {r.object_id!r}")

    @property
    def object_id(self):
        return self.records[0].object_id

    @property
    def scenario(self):
        return "press" if any(r.kind == "press" for r in self.records) else "grasp"

    def functions(self):
        return [f for r in self.records for f in r.functions]

    # persistence
    def to_dict(self):
        return {
            "metadata": self.metadata,
            "thresholds": self.thresholds,
            "scene": {"id": self.scene.id, "objects": [f"{m.id}.off" for m in self.scene.objects],
                      "planes": [p.to_dict() for p in self.scene.planes]},
            "operations": [_record_to_dict(r) for r in self.records],
        }

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for m in self.scene.objects:
            save_off(m, directory / f"{m.id}.off")
        write_json(directory / BUNDLE_FILE, self.to_dict())
        return directory / BUNDLE_FILE

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        d = read_json(directory / BUNDLE_FILE)
        objects = [load_mesh(directory / f) for f in d["scene"]["objects"]]
        planes = [PlaneModel.from_dict(p) for p in d["scene"]["planes"]]
        scene = Scene(objects, planes, d["scene"]["id"])
        return cls(scene, [_record_from_dict(r) for r in d["operations"]], d["metadata"], d["thresholds"])


def _function_to_dict(f):
    return {"kind": f.kind, "mesh_id": f.mesh_id, "meta": f.meta, "values": [float(x) for x in f.values]}


def _function_from_dict(d):
    return fm.SurfaceFunction(d["values"], d["kind"], d["mesh_id"], dict(d.get("meta", {})))


def _record_to_dict(r):
    return {
        "name": r.name,
        "kind": r.kind,
        "object_id": r.object_id,
        "trajectory": [p.to_dict() for p in r.trajectory],
        "functions": [_function_to_dict(f) for f in r.functions],
        "approach": None if r.approach is None else [float(x) for x in r.approach],
        "planes": [p.to_dict() for p in r.planes],
        "lambda_d": r.lambda_d,
        "lambda_p": r.lambda_p,
    }


def _record_from_dict(d):
    return SkillRecord(
        d["name"], d["kind"], [UnitDualQuaternion.from_dict(p) for p in d["trajectory"]], d["object_id"],
        [_function_from_dict(f) for f in d["functions"]], d["approach"],
        [PlaneModel.from_dict(p) for p in d["planes"]], d["lambda_d"], d["lambda_p"],
    )


@dataclass
class EvaluationReport:
    functions: dict = field(default_factory=dict)  # name -> {"mae", "std"}
    timings: dict = field(default_factory=dict)
    success: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, v in self.functions.items():
            for key in ("mae", "std"):
                if not 0.0 <= v[key] <= 1.0:
                    raise ValueError(f"{name}: {key}={v[key]} outside [0, 1]")

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- demonstration stage

def record_bundle(manifest_path, out_dir=None):
    """Build a :class:`DemonstrationBundle` from a demonstration manifest.

    The manifest (JSON) lists ``objects`` (mesh files), ``planes``,
    ``thresholds`` (``lambda_d``, ``lambda_p``) and ``operations``; each
    operation has a ``kind`` (``grasp``, ``manipulate``, ``press``,
    ``post_contact``), a ``trajectory`` file and, for grasp/press, a
    ``contacts`` file. An optional ``config`` section holds imitation
    parameters (:class:`PipelineConfig` fields) and is kept in the bundle
    metadata. Paths are relative to the manifest. If ``out_dir`` is given
    the bundle is persisted there.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    man = read_json(manifest_path)
    thr = {"lambda_d": LAMBDA_D, "lambda_p": LAMBDA_P}
    thr.update(man.get("thresholds", {}))
    meshes = [load_mesh(base / f) for f in man.get("objects", [])]
    if not meshes:
        raise EmptyScene("manifest lists no objects")
    planes = [PlaneModel.from_dict(p) for p in man.get("planes", [])]
    scene = Scene(meshes, planes, man.get("scene_id", "demonstration"))

    records = []
    held = None  # (object id, gripper pose at grasp) while the object is carried
    for op in man.get("operations", []):
        name, kind = op.get("name", op["kind"]), op["kind"]
        traj = Trajectory.from_list(_load_trajectory(base / op["trajectory"])).poses
        functions, approach, used_planes = [], None, []
        if kind in ("grasp", "press"):
            obj = select_demo_object(scene.objects, traj[-1])
            mesh = scene[obj]
            contacts = ContactSet.from_dict(read_json(base / op["contacts"])).validate(mesh)
            functions.append(compute_rif(mesh, contacts, thr["lambda_d"]))
            approach = approach_vector(traj[-1])
            held = obj if kind == "grasp" else None
        elif kind == "manipulate":
            if held is None:
                raise BundleInconsistent(f"operation {name!r}: manipulation without a preceding grasp")
            obj = held
            x_rel = traj[0].conj() * traj[-1]
            moved = apply_task_displacement(scene[obj], x_rel, frame=traj[0])
            used_planes = contacting_planes(moved, planes, thr["lambda_p"])
            functions.extend(compute_eif(moved, pl, thr["lambda_p"]) for pl in used_planes)
        elif kind == "post_contact":
            if not records or records[-1].kind != "press":
                raise BundleInconsistent(f"operation {name!r}: post-contact motion must follow a press")
            obj = records[-1].object_id
        else:
            raise BundleInconsistent(f"unknown operation kind {kind!r}")
        records.append(SkillRecord(name, kind, traj, obj, functions, approach, used_planes,
                                   thr["lambda_d"], thr["lambda_p"]))
    if not records:
        raise BundleInconsistent("manifest has no operations")
    if len({r.object_id for r in records}) != 1:
        raise BundleInconsistent("all operations must act on one object")
    meta = {"skill": man.get("skill", "skill")}
    if "date" in man:
        meta["date"] = man["date"]
    if man.get("config"):
        PipelineConfig.from_dict(man["config"])  # validate keys early
        meta["config"] = dict(man["config"])
    bundle = DemonstrationBundle(scene, records, meta, thr)
    if out_dir is not None:
        bundle.save(out_dir)
    return bundle


def _load_trajectory(path):
    d = read_json(path)
    return d["waypoints"] if isinstance(d, dict) else d


# ---------------------------------------------------------------- imitation stage

class _Stages:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except (SkillTransferError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise StageError(name, e) from e
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class ImitationResult:
    trajectory: ExecutableTrajectory
    report: EvaluationReport
    goals: list
    matched_id: str
    fmap: fm.FunctionalMap
    pointmap: fm.PointToPointMap
    transferred: dict  # function name -> SurfaceFunction on the matched object
    grasp: GraspCandidate | None = None
    placement: UnitDualQuaternion | None = None


def _function_name(record, f):
    return f"{record.name}.{f.kind}" + (f".{f.meta['plane']}" if f.kind == "EIF" else "")


@dataclass
class TransferResult:
    """Output of the matching stages: the chosen object, its maps and the transferred functions."""

    src_mesh: object
    match_mesh: object
    src_basis: object
    match_basis: object
    fmap: fm.FunctionalMap
    pointmap: fm.PointToPointMap
    candidates: list  # MatchResult per scene object
    transferred: dict  # function name -> SurfaceFunction on match_mesh

    def selection(self, scene):
        return {
            "matched": self.match_mesh.id,
            "candidates": [{"id": scene.objects[r.index].id, "score": r.score, "literal_score": r.literal_score,
                            "residual": r.residual} for r in self.candidates],
        }


def transfer_skill(bundle, scene, config=None, stage=None):
    """Spectral bases, descriptors, object selection, ZoomOut refinement and function transfer."""
    cfg = config or PipelineConfig()
    stage = stage or _Stages()
    if not scene.objects:
        raise EmptyScene("new scene has no objects")
    src_mesh = bundle.scene[bundle.object_id]
    k_basis = cfg.k_final

    with stage("spectral_bases"):
        src_basis = spectral_basis(src_mesh, min(k_basis, src_mesh.n_vertices - 1), seed=cfg.seed)
        bases = [spectral_basis(m, min(k_basis, m.n_vertices - 1), seed=cfg.seed) for m in scene.objects]

    with stage("descriptors"):
        k = min(cfg.k_init, src_basis.k, *(b.k for b in bases))
        F = project_descriptors(src_basis, wks(src_basis.truncated(k), cfg.num_energies, cfg.variance_scale), k)
        cands = [(b, project_descriptors(b, wks(b.truncated(k), cfg.num_energies, cfg.variance_scale), k))
                 for b in bases]

    with stage("select_match"):
        best, results = fm.select_match(src_basis, F, cands, k, cfg.alpha1, cfg.alpha2)
    match_mesh = scene.objects[best.index]
    match_basis = bases[best.index]
    logger.info("matched %s (score %.4f)", match_mesh.id, best.score)

    with stage("refine"):
        k_end = min(cfg.k_final, src_basis.k, match_basis.k)
        C, T = fm.zoomout_refine(best.fmap, src_basis, match_basis, k, k_end, cfg.step)

    transferred = {}
    with stage("transfer"):
        for r in bundle.records:
            for f in r.functions:
                transferred[_function_name(r, f)] = fm.transfer_function(f, C, src_basis, match_basis)
    return TransferResult(src_mesh, match_mesh, src_basis, match_basis, C, T, results, transferred)


def imitate(bundle, scene, config=None, grasps=None, ground_truth=None, feasible=None):
    """Transfer ``bundle`` onto ``scene``.

    Parameters
    ----------
    bundle : DemonstrationBundle
    scene : Scene
        new scene, at least one object
    config : PipelineConfig, optional
    grasps : list of GraspCandidate, optional
        externally planned candidates on the matched object; by default the
        demonstrated grasp is carried over by aligning the grasp regions
    ground_truth : dict, optional
        function name -> per-vertex values on the object expected to match
    feasible : callable, optional
        collision / reachability predicate on grasp candidates

    Output
    ------
    ImitationResult
    """
    cfg = config or PipelineConfig()
    stage = _Stages()
    tr = transfer_skill(bundle, scene, cfg, stage)
    src_mesh, match_mesh, C, T, transferred = tr.src_mesh, tr.match_mesh, tr.fmap, tr.pointmap, tr.transferred

    grasp = placement = None
    x_start = (UnitDualQuaternion.from_dict(cfg.start_pose) if cfg.start_pose
               else bundle.records[0].trajectory[0])
    rif_rec = bundle.records[0]
    f_rif = rif_rec.function("RIF")
    g_rif = transferred[_function_name(rif_rec, f_rif)]

    with stage("grasp_region"):
        region_sel = np.flatnonzero(f_rif.values > cfg.delta)
        peak = float(g_rif.values.max())
        if peak <= 0:
            raise DegenerateSupport("transferred RIF has no positive support")
        scale = 1.0
        if peak <= cfg.delta:
            # spectral transfer smooths the peak; restore the unit maximum of a RIF
            logger.warning("transferred RIF peaks at %.3f <= delta=%g, thresholding relative to the peak",
                           peak, cfg.delta)
            scale = 1.0 / peak
        region_match = np.flatnonzero(g_rif.values * scale > cfg.delta)

    if bundle.scenario == "press":
        with stage("grasp_selection"):
            press = rif_rec.trajectory[-1]
            shift = _weighted_peak(match_mesh, g_rif, region_match) - _weighted_peak(src_mesh, f_rif, region_sel)
            goal = UnitDualQuaternion.from_translation(shift) * press
        with stage("goal_list"):
            goals = [x_start, goal]
            traj = build_goal_list(goals, [rif_rec.trajectory], cfg.tau_step, cfg.capture_radius, labels=[rif_rec.name])
            post = [r for r in bundle.records if r.kind == "post_contact"]
            if post:
                traj = _continue(traj, goal, post[0], cfg)
    else:
        manip = [r for r in bundle.records if r.kind == "manipulate"]
        if not manip:
            raise BundleInconsistent("grasp skill without a manipulation operation")
        manip = manip[0]
        with stage("grasp_selection"):
            if grasps is None:
                grasps = propose_grasps(src_mesh, match_mesh, T, region_sel, region_match, rif_rec.trajectory[-1])
            grasp = filter_grasps(grasps, rif_rec.approach, np.deg2rad(cfg.theta_deg), feasible)
        with stage("align_supports"):
            placement = _placement(bundle, manip, transferred, src_mesh, match_mesh, T)
        with stage("final_poses"):
            g_eff = grasp.pose
            _, x_eff = final_poses(g_eff, placement * g_eff, g_eff)
        with stage("goal_list"):
            goals = [x_start, g_eff, x_eff]
            traj = build_goal_list(goals, [rif_rec.trajectory, manip.trajectory], cfg.tau_step,
                                   cfg.capture_radius, labels=[rif_rec.name, manip.name])

    report = EvaluationReport(seed=cfg.seed)
    report.timings = timing_report(stage.timings)
    report.selection = tr.selection(scene)
    if ground_truth:
        for name, gt in ground_truth.items():
            if name in transferred:
                mae, std = evaluate_transfer(transferred[name], gt)
                report.functions[name] = {"mae": mae, "std": std}
    report.success = {"trajectory_ends_at_goal": bool(len(traj.poses) >= 1)}
    return ImitationResult(traj, report, goals, match_mesh.id, C, T, transferred, grasp, placement)


def _weighted_peak(mesh, f, region):
    w = f.values[region]
    return w @ mesh.vertices[region] / w.sum()


def _continue(traj, start, record, cfg):
    """Append the demonstrated post-contact motion, replayed relative to ``start``."""
    demo = record.trajectory
    goal = start * (demo[0].conj() * demo[-1])
    guide = imitate_path(path_deltas(demo), goal)
    seg = blend_to_path(start, guide, cfg.tau_step, cfg.capture_radius)
    poses = list(traj.poses)
    a = len(poses) - 1
    poses.extend(seg[1:])
    return ExecutableTrajectory(poses, traj.segments + [(a, len(poses) - 1)], traj.labels + [record.name])


def _aligned_pair(sel_vertices, match_vertices, T, region_sel, region_match):
    """Point sets and correspondence for :func:`align_supports`.

    Selected points are the union of the selected region and the images of
    the matched region under the point map; the correspondence indexes into
    that union.
    """
    src_idx = np.union1d(region_sel, T.assignment[region_match])
    pos = {int(v): i for i, v in enumerate(src_idx)}
    corr = np.array([pos[int(v)] for v in T.assignment[region_match]])
    return match_vertices[region_match], sel_vertices[src_idx], corr


def propose_grasps(src_mesh, match_mesh, T, region_sel, region_match, g_dem, n_around=12):
    """Built-in grasp proposals around the transferred grasp region.

    The grasp regions are aligned rigidly (see :func:`align_supports`) and
    the demonstrated grasp is moved with the same transform (rank 1). Further
    candidates turn it about the vertical through the region centroid in
    ``360 / n_around`` degree steps, ranked lower the further they turn.
    Stands in for an external grasp planner working on the region.
    """
    P, Q, corr = _aligned_pair(src_mesh.vertices, match_mesh.vertices, T, region_sel, region_match)
    to_sel = align_supports(P, Q, corr)
    g = to_sel.conj() * g_dem
    c = UnitDualQuaternion.from_translation(P.mean(0))
    out = [GraspCandidate(g, 1.0)]
    for j in range(1, n_around):
        ang = 2 * np.pi * j / n_around
        turn = c * UnitDualQuaternion.from_rotation([np.cos(ang / 2), 0.0, 0.0, np.sin(ang / 2)]) * c.conj()
        out.append(GraspCandidate(turn * g, 1.0 - min(j, n_around - j) / n_around))
    return out


def _placement(bundle, manip, transferred, src_mesh, match_mesh, T):
    """World motion taking the matched object onto the demonstrated final configuration."""
    traj = manip.trajectory
    moved = apply_task_displacement(src_mesh, traj[0].conj() * traj[-1], frame=traj[0])
    sel = np.zeros(src_mesh.n_vertices, bool)
    match = np.zeros(match_mesh.n_vertices, bool)
    for f in manip.functions:
        sel |= f.values > 0
        match |= transferred[_function_name(manip, f)].values > 0
    if not match.any():
        raise DegenerateSupport("transferred EIF is empty")
    P, Q, corr = _aligned_pair(moved.vertices, match_mesh.vertices, T, np.flatnonzero(sel), np.flatnonzero(match))
    return align_supports(P, Q, corr)


# ---------------------------------------------------------------- evaluation

def evaluate_transfer(transferred, ground_truth):
    """Mean and standard deviation of the absolute per-vertex error."""
    g = np.asarray(getattr(transferred, "values", transferred), float)
    gt = np.asarray(getattr(ground_truth, "values", ground_truth), float)
    if g.shape != gt.shape:
        raise LengthMismatch(f"{len(g)} transferred values vs {len(gt)} ground-truth values")
    err = np.abs(g - gt)
    return float(err.mean()), float(err.std())


def timing_report(timings):
    """Per-stage and total wall time; the functional-map stages are also summed."""
    stages = {k: float(v) for k, v in timings.items()}
    total = float(sum(stages.values()))
    fm_time = float(sum(v for k, v in stages.items() if k in FM_STAGES))
    return {"stages": stages, "total": total, "functional_map": fm_time,
            "functional_map_fraction": fm_time / total if total > 0 else 0.0}


def save_trajectory(traj, path):
    write_json(path, traj.to_dict())


def save_function_csv(f, path):
    with open(path, "w") as fh:
        fh.write("vertex,value\n")
        for i, v in enumerate(f.values):
            fh.write(f"{i},{float(v)!r}\n")


def load_function_csv(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e
    order = np.argsort(data[:, 0], kind="stable")
    return data[order, 1]


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
