import json
import shutil

import numpy as np
import pytest

from skilltransfer import shapes, synth
from skilltransfer.dualquat import UnitDualQuaternion, dq_distance, translation_distance
from skilltransfer.errors import (BundleInconsistent, LengthMismatch, NoFeasibleGrasp, ParseError, StageError,
                                  TooShort)
from skilltransfer.imitation import GraspCandidate
from skilltransfer.interaction import LAMBDA_D
from skilltransfer.mesh import save_off
from skilltransfer.pipeline import (BUNDLE_FILE, DemonstrationBundle, EvaluationReport, PipelineConfig, Scene,
                                    evaluate_transfer, imitate, read_json, record_bundle, timing_report, write_json)


@pytest.fixture(scope="module")
def pressing(tmp_path_factory):
    root = tmp_path_factory.mktemp("pressing")
    manifest, info = synth.pressing_demo(root / "demo")
    bundle = record_bundle(manifest, root / "bundle")
    return root, manifest, bundle, info


@pytest.fixture(scope="module")
def stirring(tmp_path_factory):
    root = tmp_path_factory.mktemp("stirring")
    manifest, info = synth.stirring_demo(root / "demo")
    return root, manifest, record_bundle(manifest, root / "bundle"), info


def test_record_stirring_functions(stirring):
    _, _, b, _ = stirring
    assert b.scenario == "grasp"
    assert [(r.kind, [f.kind for f in r.functions]) for r in b.records] == [("grasp", ["RIF"]), ("manipulate", ["EIF"])]
    assert b.records[1].functions[0].meta["plane"] == "shelf"
    assert b.object_id == "demo_bottle"
    rif = b.records[0].function("RIF").values
    assert rif.max() == pytest.approx(1.0, abs=0.2) and rif.min() == 0.0


def test_record_pressing_functions(pressing):
    _, _, b, _ = pressing
    assert b.scenario == "press"
    assert [f.kind for f in b.functions()] == ["RIF"]
    assert [r.kind for r in b.records] == ["press", "post_contact"]


def test_bundle_round_trip_is_byte_identical(stirring, tmp_path):
    root, _, _, _ = stirring
    first = (root / "bundle" / BUNDLE_FILE).read_bytes()
    DemonstrationBundle.load(root / "bundle").save(tmp_path)
    assert (tmp_path / BUNDLE_FILE).read_bytes() == first
    for f in (root / "bundle").glob("*.off"):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def _copy_demo(pressing, tmp_path):
    root, manifest, _, _ = pressing
    d = tmp_path / "demo"
    shutil.copytree(manifest.parent, d)
    return d, read_json(d / "manifest.json")


def test_record_rejects_short_trajectory(pressing, tmp_path):
    d, man = _copy_demo(pressing, tmp_path)
    write_json(d / "approach.json", {"waypoints": []})
    with pytest.raises(TooShort):
        record_bundle(d / "manifest.json")


def test_record_rejects_floating_contacts(pressing, tmp_path):
    d, man = _copy_demo(pressing, tmp_path)
    write_json(d / "contacts.json", {"tip": [[9.0, 9.0, 9.0]]})
    with pytest.raises(BundleInconsistent):
        record_bundle(d / "manifest.json")


def test_record_rejects_orphan_post_contact(pressing, tmp_path):
    d, man = _copy_demo(pressing, tmp_path)
    man["operations"] = man["operations"][1:]
    write_json(d / "manifest.json", man)
    with pytest.raises(BundleInconsistent):
        record_bundle(d / "manifest.json")


def test_record_config_section(pressing, tmp_path):
    d, man = _copy_demo(pressing, tmp_path)
    man["config"] = {"k_final": 120, "delta": 0.4}
    write_json(d / "manifest.json", man)
    assert record_bundle(d / "manifest.json").metadata["config"] == {"k_final": 120, "delta": 0.4}
    man["config"] = {"bogus": 1}
    write_json(d / "manifest.json", man)
    with pytest.raises(BundleInconsistent):
        record_bundle(d / "manifest.json")


def test_read_json_errors(tmp_path):
    (tmp_path / "x.json").write_text("{nope")
    with pytest.raises(ParseError):
        read_json(tmp_path / "x.json")
    with pytest.raises(ParseError):
        read_json(tmp_path / "missing.json")


def test_scene_ids_unique():
    with pytest.raises(BundleInconsistent):
        Scene([shapes.box(n=1, id="a"), shapes.box(n=1, id="a")])


def test_evaluate_transfer_examples():
    gt = np.linspace(0, 0.8, 50)
    assert evaluate_transfer(gt, gt) == (0.0, 0.0)
    mae, std = evaluate_transfer(gt + 0.1, gt)
    assert mae == pytest.approx(0.1) and std == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(LengthMismatch):
        evaluate_transfer(gt[:-1], gt)
    with pytest.raises(ValueError):
        EvaluationReport(functions={"f": {"mae": 1.5, "std": 0.0}})


def test_timing_report():
    r = timing_report({"spectral_bases": 2.0, "refine": 1.0, "goal_list": 1.0})
    assert r["total"] == 4.0 and r["functional_map"] == 3.0 and r["functional_map_fraction"] == 0.75


def test_press_on_scaled_cylinder(pressing, tmp_path):
    root, _, bundle, info = pressing
    tid = synth.pressing_scene(tmp_path / "scene")
    scene = Scene.from_dir(tmp_path / "scene")
    res = imitate(bundle, scene)
    assert res.matched_id == tid
    target = scene[tid]
    contact = target.vertices[info["fingers"]["tip"]].mean(0)
    rif = res.transferred["press.RIF"].values
    assert np.linalg.norm(target.vertices[np.argmax(rif)] - contact) <= 2 * LAMBDA_D
    assert res.trajectory.labels == ["press", "retreat"]
    # the press goal sits at the transferred contact
    press_end = res.trajectory.segments[0][1]
    assert translation_distance(res.trajectory.poses[press_end], res.goals[-1]) == 0.0
    assert np.linalg.norm(res.goals[-1].translation - contact) < 2 * LAMBDA_D


def test_copy_scene_reproduces_demonstration(stirring, tmp_path):
    root, _, bundle, info = stirring
    synth.stirring_scene(tmp_path / "copy", root / "demo", kind="copy")
    res = imitate(bundle, Scene.from_dir(tmp_path / "copy"))
    assert res.matched_id == "bottle_copy"
    sel = res.report.selection["candidates"][0]
    assert sel["score"] == pytest.approx(85.0, abs=1e-6)  # |C| = I, the whole Gaussian band mass
    grasp_end = res.trajectory.segments[0][1]
    demo_grasp, demo_end = bundle.records[0].trajectory[-1], bundle.records[1].trajectory[-1]
    assert translation_distance(res.trajectory.poses[grasp_end], demo_grasp) < 1e-3
    assert translation_distance(res.trajectory.poses[-1], demo_end) < 1e-3
    assert dq_distance(res.trajectory.poses[-1], demo_end) < 1e-2
    assert res.report.timings["functional_map_fraction"] > 0.5


def test_self_match_dominance(stirring, tmp_path):
    root, _, bundle, _ = stirring
    d = tmp_path / "mixed"
    d.mkdir()
    for f in ("demo_bottle.off",):
        shutil.copy(root / "demo" / f, d / f)
    rng = np.random.default_rng(0)
    for m in synth.distractors(rng):
        save_off(m, d / f"{m.id}.off")
    write_json(d / "scene.json", {"planes": [synth.SHELF.to_dict()]})
    res = imitate(bundle, Scene.from_dir(d), ground_truth={
        "grasp.RIF": bundle.records[0].function("RIF").values,
        "carry.EIF.shelf": bundle.records[1].functions[0].values})
    assert res.matched_id == "demo_bottle"
    assert res.report.functions["grasp.RIF"]["mae"] < 0.02


def test_stage_errors_name_the_stage(pressing, stirring, tmp_path):
    root, _, bundle, _ = stirring
    synth.stirring_scene(tmp_path / "copy", root / "demo", kind="copy")
    g = GraspCandidate(UnitDualQuaternion.identity(), 1.0)  # approach +z, demo approach is +x
    with pytest.raises(StageError) as e:
        imitate(bundle, Scene.from_dir(tmp_path / "copy"), grasps=[g])
    assert e.value.stage == "grasp_selection"
    assert isinstance(e.value.cause, NoFeasibleGrasp) and e.value.exit_code == 4


def test_config_overrides():
    cfg = PipelineConfig.from_dict({"k_init": 40})
    assert cfg.k_init == 40 and cfg.k_final == 200
    assert cfg.updated(k_final=90, seed=None).k_final == 90
    with pytest.raises(BundleInconsistent):
        PipelineConfig.from_dict({"kinit": 40})


def test_trajectory_json_schema(pressing, tmp_path):
    root, _, bundle, _ = pressing
    synth.pressing_scene(tmp_path / "scene", with_distractors=False)
    res = imitate(bundle, Scene.from_dir(tmp_path / "scene"))
    d = json.loads(json.dumps(res.trajectory.to_dict()))
    assert set(d) == {"waypoints", "segments"}
    assert all(set(w) == {"t", "q"} and len(w["t"]) == 3 and len(w["q"]) == 4 for w in d["waypoints"])
    assert d["segments"][-1]["end"] == len(d["waypoints"]) - 1
