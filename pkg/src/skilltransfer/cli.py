"""Command-line interface.

Verbs: ``record``, ``match``, ``transfer``, ``imitate``, ``eval``, ``verify``
and ``synth`` (writes a synthetic demonstration and new scene). Exit codes:
0 success, 2 input error, 3 numerical failure, 4 no feasible grasp.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import synth
from .errors import InputError, SkillTransferError
from .imitation import GraspCandidate
from .pipeline import (DemonstrationBundle, PipelineConfig, Scene, dumps, ensure_dir, evaluate_transfer, imitate,
                       load_function_csv, read_json, record_bundle, save_function_csv, save_trajectory,
                       transfer_skill, write_json)
from .verify import run_checks

logger = logging.getLogger("skilltransfer")

CONFIG_FLAGS = {
    "k_init": int, "k_final": int, "step": int, "alpha1": float, "alpha2": float,
    "delta": float, "theta_deg": float, "tau_step": float, "capture_radius": float, "seed": int,
}


def _add_config(p):
    p.add_argument("--config", type=Path, help="JSON file of pipeline parameters")
    for name, typ in CONFIG_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)


def _config(args, bundle=None):
    """Bundle defaults, then ``--config``, then individual flags."""
    d = dict(bundle.metadata.get("config", {})) if bundle is not None else {}
    if args.config is not None:
        d.update(read_json(args.config))
    cfg = PipelineConfig.from_dict(d)
    return cfg.updated(**{k: getattr(args, k) for k in CONFIG_FLAGS})


def _load(args):
    bundle = DemonstrationBundle.load(args.bundle)
    scene = Scene.from_dir(args.scene)
    return bundle, scene, _config(args, bundle)


def cmd_record(args):
    bundle = record_bundle(args.manifest, args.out)
    funcs = [f"{r.name}.{f.kind}" for r in bundle.records for f in r.functions]
    print(f"recorded {len(bundle.records)} operations on {bundle.object_id!r}: {', '.join(funcs)}")


def _map_json(tr, scene):
    return {"selection": tr.selection(scene), "fmap": tr.fmap.to_dict(), "pointmap": tr.pointmap.to_dict()}


def cmd_match(args):
    bundle, scene, cfg = _load(args)
    tr = transfer_skill(bundle, scene, cfg)
    out = _map_json(tr, scene)
    if args.out:
        write_json(args.out, out)
    print(json.dumps(out["selection"], indent=1))


def cmd_transfer(args):
    bundle, scene, cfg = _load(args)
    tr = transfer_skill(bundle, scene, cfg)
    out = ensure_dir(args.out)
    write_json(out / "map.json", _map_json(tr, scene))
    for name, f in tr.transferred.items():
        save_function_csv(f, out / f"{name}.csv")
    print(f"matched {tr.match_mesh.id!r}; wrote {len(tr.transferred)} functions to {out}")


def cmd_imitate(args):
    bundle, scene, cfg = _load(args)
    grasps = None
    if args.grasps is not None:
        grasps = [GraspCandidate.from_dict(g) for g in read_json(args.grasps)]
    gt = None
    if args.ground_truth is not None:
        gt = {p.name[len("gt."):-len(".csv")]: load_function_csv(p) for p in sorted(args.ground_truth.glob("gt.*.csv"))}
    res = imitate(bundle, scene, cfg, grasps=grasps, ground_truth=gt)
    out = ensure_dir(args.out)
    save_trajectory(res.trajectory, out / "trajectory.json")
    report = res.report.to_dict()
    if not args.timings:
        report.pop("timings")  # wall times differ run to run
    write_json(out / "report.json", report)
    write_json(out / "map.json", {"selection": res.report.selection, "fmap": res.fmap.to_dict(),
                                  "pointmap": res.pointmap.to_dict()})
    for name, f in res.transferred.items():
        save_function_csv(f, out / f"{name}.csv")
    print(f"matched {res.matched_id!r}; {len(res.trajectory.poses)} waypoints in {out / 'trajectory.json'}")
    for name, v in res.report.functions.items():
        print(f"  {name}: MAE {v['mae']:.4f} STD {v['std']:.4f}")


def cmd_eval(args):
    mae, std = evaluate_transfer(load_function_csv(args.transferred), load_function_csv(args.ground_truth))
    print(dumps({"mae": mae, "std": std}), end="")


def cmd_verify(args):
    results = run_checks(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        raise SystemExit(1)


def cmd_synth(args):
    out = Path(args.out)
    if args.skill == "stirring":
        manifest, info = synth.stirring_demo(out / "demo", args.seed)
        bundle = record_bundle(manifest, out / "bundle")
        tid = synth.stirring_scene(out / "scene", out / "demo", args.seed, kind=args.scene_kind)
    else:
        manifest, info = synth.pressing_demo(out / "demo", args.seed)
        bundle = record_bundle(manifest, out / "bundle")
        tid = synth.pressing_scene(out / "scene", args.seed)
    scene = Scene.from_dir(out / "scene")
    synth.write_ground_truth(out / "scene", bundle, scene[tid], info["fingers"])
    print(f"demonstration in {out / 'demo'}, bundle in {out / 'bundle'}, scene in {out / 'scene'} "
          f"(expected match {tid!r})")


def build_parser():
    p = argparse.ArgumentParser(prog="skilltransfer", description="One-shot skill transfer between similar objects.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("record", help="build a demonstration bundle from a manifest")
    s.add_argument("manifest", type=Path)
    s.add_argument("-o", "--out", type=Path, required=True, help="bundle directory")
    s.set_defaults(func=cmd_record)

    for name, func, helptext in (("match", cmd_match, "select the best-matching object and write the maps"),
                                 ("transfer", cmd_transfer, "transfer the bundle's functions to the matched object"),
                                 ("imitate", cmd_imitate, "run the full imitation pipeline")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("bundle", type=Path)
        s.add_argument("scene", type=Path)
        s.add_argument("-o", "--out", type=Path, required=name != "match")
        _add_config(s)
        s.set_defaults(func=func)
        if name == "imitate":
            s.add_argument("--grasps", type=Path, help="JSON list of grasp candidates {pose, rank, approach}")
            s.add_argument("--ground-truth", type=Path, help="directory of gt.<function>.csv files")
            s.add_argument("--timings", action="store_true", help="include wall times in report.json")

    s = sub.add_parser("eval", help="MAE and STD of a transferred function against ground truth")
    s.add_argument("transferred", type=Path)
    s.add_argument("ground_truth", type=Path)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("verify", help="run the invariant suite")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("synth", help="write a synthetic demonstration, bundle and new scene")
    s.add_argument("skill", choices=("stirring", "pressing"))
    s.add_argument("out", type=Path)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scene-kind", choices=("category", "two_bottles", "copy"), default="category")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SkillTransferError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (KeyError, TypeError) as e:
        # malformed JSON content (missing or mistyped fields)
        print(f"error: malformed input: {e!r}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
