"""Command-line front end: plan, refine, bench, gen, validate.

Exit codes: 0 on success, 1 when planning fails (timeout or iteration limit),
2 on any input error (unknown flags, missing or invalid files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from .bench import ExperimentSpecError, load_specs, rows_to_csv, rows_to_json, run_sweep
from .cspace import build_state_graph
from .demo import DemonstrationError, load_demonstration, save_demonstration
from .ocp import Trajectory, refine, verify_trajectory
from .planner import (PlannerParams, PlannerInputError, check_path, metrics,
                      path_from_json, path_to_json, plan, plan_unguided, shortcut)
from .scenes import TASKS, build_scene, scene_from_json, scene_to_json


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return FsPath(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from None


def _outdir(path: str) -> FsPath:
    out = FsPath(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_instance(args):
    """Scene + demonstration from --task or from --scene/--demo files."""
    if args.scene or args.demo:
        if not (args.scene and args.demo):
            raise InputError("--scene and --demo must be given together")
        scene = scene_from_json(_read(args.scene))
        demo = load_demonstration(_read(args.demo))
        return scene, demo
    if not args.task:
        raise InputError("either --task or --scene/--demo is required")
    if args.task not in TASKS:
        raise InputError(f"unknown task {args.task!r}; expected one of {TASKS}")
    return build_scene(args.task, getattr(args, "robot", None))


def cmd_gen(args) -> int:
    scene, demo = _load_instance(args)
    out = _outdir(args.out)
    (out / "scene.json").write_text(scene_to_json(scene))
    (out / "demo.json").write_text(save_demonstration(demo))
    print(f"wrote {out / 'scene.json'} and {out / 'demo.json'}")
    return 0


def cmd_plan(args) -> int:
    scene, demo = _load_instance(args)
    handles = [h for hs in scene.handles.values() for h in hs]
    graph = build_state_graph(demo, handles)
    world = scene.collision_world()
    params = PlannerParams(eta_sample_tree=args.eta, delta=args.delta,
                           max_time=args.time_limit, seed=args.seed)
    if args.unguided:
        path, report = plan_unguided(
            world, scene.q_start, scene.q_goal, dict(graph.start_state.fixed),
            dict(graph.goal_state.fixed), scene.world_regions(),
            {o: list(h) for o, h in scene.handles.items()}, params)
    else:
        path, report = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
    if path is not None and args.shortcut > 0:
        path = shortcut(path, args.shortcut, np.random.default_rng(args.seed),
                        world, delta=args.delta)
    out = _outdir(args.out)
    doc = report.to_dict()
    if path is not None:
        doc.update(metrics(path, report))
        (out / "path.json").write_text(path_to_json(path))
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0 if path is not None else 1


def cmd_refine(args) -> int:
    scene, demo = _load_instance(args)
    world = scene.collision_world()
    path = path_from_json(_read(args.path), scene.handles)
    traj, info = refine(path, world.model, world, dt=args.dt, spacing=args.spacing)
    states = {w.state.sid: w.state for w in path.waypoints}
    report = verify_trajectory(traj, world, world.model, states)
    report["converged"] = info.converged
    report["warning"] = info.warning
    report["planned_length_rad"] = path.length()
    out = _outdir(args.out)
    (out / "trajectory.json").write_text(traj.to_json())
    (out / "verify.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    specs = load_specs(_read(args.spec))
    rows = run_sweep(specs)
    out = _outdir(args.out)
    (out / "results.csv").write_text(rows_to_csv(rows))
    (out / "results.json").write_text(rows_to_json(rows))
    for row in rows:
        agg = row.aggregates()
        print(f"{row.spec.task}/{row.spec.robot}/{row.spec.method}/{row.spec.scenario}: "
              f"success {agg['success_rate']:.2f}")
    return 0


def cmd_validate(args) -> int:
    if args.demo and not (args.path or args.traj):
        load_demonstration(_read(args.demo))
        print("demonstration valid")
        return 0
    scene, demo = _load_instance(args)
    world = scene.collision_world()
    if args.path and not args.traj:
        path = path_from_json(_read(args.path), scene.handles)
        problems = check_path(path, world, args.delta)
        for p in problems:
            print(p)
        print("path valid" if not problems else f"{len(problems)} violations")
        return 0 if not problems else 2
    if args.traj:
        if not args.path:
            raise InputError("--traj needs --path for the manifold definitions")
        path = path_from_json(_read(args.path), scene.handles)
        traj = Trajectory.from_json(_read(args.traj))
        states = {w.state.sid: w.state for w in path.waypoints}
        report = verify_trajectory(traj, world, world.model, states)
        print(json.dumps(report, indent=2, sort_keys=True))
        ok = report["rollout_error"] < 1e-9 and report["min_clearance"] >= 0.0
        print("trajectory valid" if ok else "trajectory invalid")
        return 0 if ok else 2
    raise InputError("nothing to validate: give --demo, --path, or --traj")


def _add_instance_args(p: argparse.ArgumentParser, with_robot: bool = True):
    p.add_argument("--task", help=f"benchmark task, one of {', '.join(TASKS)}")
    if with_robot:
        p.add_argument("--robot", help="robot model override (panda7, ur5ish, kmr)")
    p.add_argument("--scene", help="scene JSON file (with --demo)")
    p.add_argument("--demo", help="demonstration JSON file (with --scene)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidedtamp",
        description="Demonstration-guided task-and-motion planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit scene and demonstration fixtures")
    _add_instance_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("plan", help="single planning query")
    _add_instance_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--eta", type=float, default=0.3, help="tree-sampling probability")
    p.add_argument("--delta", type=float, default=0.2, help="joint-space step size")
    p.add_argument("--unguided", action="store_true", help="surface-sampling baseline")
    p.add_argument("--shortcut", type=int, default=0, metavar="N",
                   help="random shortcut attempts after planning")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("refine", help="optimal-control trajectory refinement")
    _add_instance_args(p)
    p.add_argument("--path", required=True, help="path JSON from plan")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--spacing", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("bench", help="run an experiment spec file")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="check demo/path/trajectory files")
    _add_instance_args(p)
    p.add_argument("--path", help="path JSON")
    p.add_argument("--traj", help="trajectory JSON")
    p.add_argument("--delta", type=float, default=0.2)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (InputError, ExperimentSpecError, DemonstrationError, PlannerInputError,
            KeyError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
