"""Experiment harness: seeded sweeps over tasks, methods, and generalization.

One experiment cell fixes (task, robot, method, scenario) and runs a list of
seeds. Each seed rebuilds the scene, applies the scenario's random variation
under the declared bounds with the graspability resampling rule, plans,
optionally shortcuts and refines, and records metrics. Per-seed failures
become rows; the sweep never aborts.

The CSV is byte-stable across runs: every reported quantity is deterministic
(the planner clock is collision-check based), floats are written in shortest
round-trip form, and seeds enumerate independent generator streams.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .cspace import CollisionWorld, StateGraph, build_state_graph, sample_on_transition
from .demo import Demonstration, PoseVariation, swap_object, vary_poses, reanchor
from .geom import Box, Pose
from .planner import (CHECKS_PER_SECOND, Path, PlannerParams, PlanReport,
                      metrics, plan, plan_unguided, shortcut)
from .ocp import OcpWeights, refine
from .scenes import CATALOGUE, Scene, box_handles, build_scene

METHODS = ("guided", "guided+shortcut", "unguided", "unguided+shortcut")
SCENARIOS = ("none", "start-pose", "goal-pose", "object", "environment", "combined")

CSV_HEADER = "task,robot,method,scenario,seed,status,time_s,path_len_rad,grasps"

# furniture displacement bounds per task (meters, added to the frame origin)
ENV_BOUNDS = {
    "shelf": ("shelf", (-0.5, 0.5), (0.0, 0.3), (-0.5, 0.5)),
    "tunnel": ("tunnel", (-0.1, 0.1), (-0.5, 0.1), (0.0, 0.0)),
    "waiter": ("table2", (-1.0, 1.0), (-2.0, 0.0), (-0.2, 0.0)),
}

# start/goal displacement bounds per task, chosen so objects stay on their surface
POSE_BOUNDS = {
    "shelf": {"start": (0.12, 0.08), "goal": (0.10, 0.04)},
    "tunnel": {"start": (0.02, 0.03), "goal": (0.02, 0.03)},
    "waiter": {"start": (0.12, 0.08), "goal": (0.12, 0.08)},
}

GRASPABILITY_ATTEMPTS = 20
MAX_RESAMPLES = 100


class ExperimentSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    task: str
    robot: str = "panda7"
    method: str = "guided"
    refinement: bool = False
    seeds: tuple[int, ...] = tuple(range(10))
    time_limit: float = 60.0
    scenario: str = "none"
    shortcut_attempts: int = 200
    eta: float = 0.3
    delta: float = 0.2
    checks_per_second: float = CHECKS_PER_SECOND

    def __post_init__(self):
        if self.method not in METHODS:
            raise ExperimentSpecError(f"unknown method {self.method!r}")
        if self.scenario not in SCENARIOS:
            raise ExperimentSpecError(f"unknown scenario {self.scenario!r}")
        if self.time_limit <= 0:
            raise ExperimentSpecError("time limit must be positive")
        if self.task == "waiter" and self.robot != "kmr":
            raise ExperimentSpecError("the waiter task runs only on the kmr robot")
        if self.task == "tunnel" and self.scenario == "object":
            raise ExperimentSpecError(
                "object variation is not evaluated on the tunnel task")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def to_dict(self) -> dict:
        return {"task": self.task, "robot": self.robot, "method": self.method,
                "refinement": self.refinement, "seeds": list(self.seeds),
                "time_limit": self.time_limit, "scenario": self.scenario,
                "shortcut_attempts": self.shortcut_attempts, "eta": self.eta,
                "delta": self.delta, "checks_per_second": self.checks_per_second}

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentSpec":
        known = {f for f in ExperimentSpec.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ExperimentSpecError(f"unknown spec fields: {sorted(extra)}")
        if "task" not in doc:
            raise ExperimentSpecError("spec needs a task")
        doc = dict(doc)
        if "seeds" in doc:
            doc["seeds"] = tuple(doc["seeds"])
        return ExperimentSpec(**doc)


def load_specs(data: str | bytes) -> list[ExperimentSpec]:
    """A spec file holds one cell or {"experiments": [cells...]}."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ExperimentSpecError(f"not valid JSON: {e}") from None
    if isinstance(doc, dict) and "experiments" in doc:
        return [ExperimentSpec.from_dict(d) for d in doc["experiments"]]
    return [ExperimentSpec.from_dict(doc)]


@dataclass
class SeedResult:
    seed: int
    status: str
    time_s: float
    path_len_rad: float | None
    grasps: int | None
    detail: dict = field(default_factory=dict)


@dataclass
class ResultRow:
    spec: ExperimentSpec
    results: list[SeedResult]

    @property
    def success_rate(self) -> float:
        if not self.results:
            return 0.0
        return sum(1 for r in self.results if r.status == "success") / len(self.results)

    def _mean(self, key) -> float | None:
        vals = [getattr(r, key) for r in self.results if r.status == "success"]
        return float(np.mean(vals)) if vals else None

    def aggregates(self) -> dict:
        return {"success_rate": self.success_rate,
                "mean_time_s": self._mean("time_s"),
                "mean_path_len_rad": self._mean("path_len_rad"),
                "mean_grasps": self._mean("grasps")}

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(),
                "results": [{"seed": r.seed, "status": r.status, "time_s": r.time_s,
                             "path_len_rad": r.path_len_rad, "grasps": r.grasps,
                             **r.detail} for r in self.results],
                "aggregates": self.aggregates()}


# -- generalization ------------------------------------------------------------------

def _task_family(task: str) -> str:
    return "shelf" if task.startswith("shelf") else task


def _sample_pose_variation(task: str, target: str, objects, rng) -> PoseVariation:
    bx, by = POSE_BOUNDS[_task_family(task)][target]
    deltas = {o: (float(rng.uniform(-bx, bx)), float(rng.uniform(-by, by)),
                  float(rng.uniform(-np.pi, np.pi))) for o in sorted(objects)}
    return PoseVariation(target, deltas)


def _apply_scenario(scene: Scene, demo: Demonstration, scenario: str,
                    rng: np.random.Generator) -> tuple[Scene, Demonstration]:
    task = scene.name
    if scenario in ("start-pose", "combined"):
        demo = vary_poses(demo, _sample_pose_variation(task, "start", scene.objects, rng))
    if scenario in ("goal-pose", "combined"):
        demo = vary_poses(demo, _sample_pose_variation(task, "goal", scene.objects, rng))
    if scenario in ("object", "combined") and task != "tunnel":
        objects = dict(scene.objects)
        handles = dict(scene.handles)
        for o in sorted(objects):
            alternatives = [n for n in sorted(CATALOGUE) if CATALOGUE[n] != objects[o]]
            pick = alternatives[int(rng.integers(len(alternatives)))]
            shape = CATALOGUE[pick]
            labels = tuple(h.label for h in handles[o])
            objects[o] = shape
            handles[o] = box_handles(o, shape, labels)
            demo = swap_object(demo, o, shape)
        scene = replace(scene.with_objects(objects), handles=handles)
    if scenario in ("environment", "combined"):
        frame, bx, by, bz = ENV_BOUNDS[_task_family(task)]
        delta = np.array([rng.uniform(*bx), rng.uniform(*by), rng.uniform(*bz)])
        old = scene.frames[frame]
        moved = Pose(old.translation + delta, old.quaternion)
        scene = scene.with_frame(frame, moved)
        demo = reanchor(demo, frame, moved)
    return scene, demo


def _graspable(graph: StateGraph, demo: Demonstration, world: CollisionWorld,
               rng: np.random.Generator) -> bool:
    """Every transition event admits a feasible pregrasp within a few tries."""
    model = world.model
    for ev in demo.events:
        if ev.index not in graph.event_transitions:
            continue
        for _ in range(GRASPABILITY_ATTEMPTS):
            pair = sample_on_transition(ev, graph, model, rng)
            if pair is None:
                continue
            if world.is_free(pair[0].state, pair[0].q) \
                    and world.is_free(pair[1].state, pair[1].q):
                break
        else:
            return False
    return True


def generalized_instance(task: str, robot: str, scenario: str,
                         rng: np.random.Generator
                         ) -> tuple[Scene, Demonstration, StateGraph, CollisionWorld, int]:
    """Scene and demonstration for one run, resampled per the graspability rule.

    Returns the instance plus the number of rejected samples. Raises when no
    feasible variation is found within MAX_RESAMPLES.
    """
    base_scene, base_demo = build_scene(task, robot)
    rejected = 0
    for _ in range(MAX_RESAMPLES):
        scene, demo = base_scene, base_demo
        if scenario != "none":
            scene, demo = _apply_scenario(scene, demo, scenario, rng)
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        if not (world.is_free(graph.start_state, scene.q_start)
                and world.is_free(graph.goal_state, scene.q_goal)):
            rejected += 1
            continue
        if not _graspable(graph, demo, world, rng):
            rejected += 1
            continue
        return scene, demo, graph, world, rejected
    raise RuntimeError(
        f"no graspable {scenario} variation of {task} in {MAX_RESAMPLES} samples")


# -- running -----------------------------------------------------------------------

def run_seed(spec: ExperimentSpec, seed: int) -> SeedResult:
    rng = np.random.default_rng([seed, 0xB0B])
    try:
        scene, demo, graph, world, rejected = generalized_instance(
            spec.task, spec.robot, spec.scenario, rng)
    except RuntimeError as e:
        return SeedResult(seed, "infeasible", 0.0, None, None, {"error": str(e)})
    params = PlannerParams(eta_sample_tree=spec.eta, delta=spec.delta,
                           max_time=spec.time_limit, seed=seed,
                           checks_per_second=spec.checks_per_second)
    detail: dict = {"resamples": rejected}
    try:
        if spec.method.startswith("unguided"):
            path, report = plan_unguided(
                world, scene.q_start, scene.q_goal,
                dict(graph.start_state.fixed), dict(graph.goal_state.fixed),
                scene.world_regions(), {o: list(h) for o, h in scene.handles.items()},
                params)
        else:
            path, report = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
    except Exception as e:
        return SeedResult(seed, "error", 0.0, None, None, {"error": repr(e)})
    detail.update(report.to_dict())
    time_s = report.time_s
    if path is None:
        return SeedResult(seed, report.status, time_s, None, None, detail)
    if spec.method.endswith("+shortcut"):
        stats: dict = {}
        path = shortcut(path, spec.shortcut_attempts,
                        np.random.default_rng([seed, 0x5C]), world,
                        delta=spec.delta, stats=stats)
        time_s += stats["checks"] / spec.checks_per_second
    length = path.length()
    grasps = path.grasp_count()
    if spec.refinement:
        traj, info = refine(path, world.model, world, OcpWeights())
        detail["refined"] = {"converged": info.converged, "warning": info.warning,
                             "iterations": info.iterations,
                             "planned_len": length, "refined_len": traj.length()}
        length = traj.length()
    return SeedResult(seed, "success", round(time_s, 6), length, grasps, detail)


def run_experiment(spec: ExperimentSpec) -> ResultRow:
    """All seeds of one cell; failures are recorded rows, never raised."""
    return ResultRow(spec, [run_seed(spec, s) for s in spec.seeds])


def run_sweep(specs: list[ExperimentSpec]) -> list[ResultRow]:
    return [run_experiment(s) for s in specs]


# -- emission ----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[ResultRow]) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for row in rows:
        s = row.spec
        for r in row.results:
            out.write(",".join([s.task, s.robot, s.method, s.scenario, str(r.seed),
                                r.status, _fmt(r.time_s), _fmt(r.path_len_rad),
                                _fmt(r.grasps)]) + "\n")
    return out.getvalue()


def rows_to_json(rows: list[ResultRow]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True)
