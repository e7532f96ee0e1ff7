"""Multi-tree RRT guided by demonstrated contact transitions.

The planner grows a forest of trees: one rooted at the start configuration,
one at the goal, and new trees spawned on the manifold transitions observed
in the demonstration. Each iteration is a Bernoulli choice between spawning a
tree at a random transition and growing a random manifold's trees toward a
uniform sample; every new configuration then tries to link to the other trees
through straight joint-space walks, merging trees on full connection.

Resource accounting is deterministic: the time budget is charged in collision
checks through a declared calibration constant, so identical (query, params,
seed) triples reproduce the same path and report bit for bit. Measured wall
time is reported alongside, but never drives termination.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .cspace import (CollisionWorld, Configuration, FixedPose, Handle,
                     StateGraph, StateManifold, GRASPK, PLACEMENT, project,
                     sample_configuration, sample_on_transition)
from .demo import Demonstration, WORLD_FRAME
from .geom import Box, Pose, Sphere, quat_from_axis_angle

# calibration of the deterministic clock: collision checks per virtual second
CHECKS_PER_SECOND = 2000.0

SUCCESS = "success"
TIMEOUT = "timeout"
ITERATION_LIMIT = "iteration-limit"


class PlannerInputError(ValueError):
    """Start or goal configuration violates the query preconditions."""


@dataclass(frozen=True)
class PlannerParams:
    """Knobs of the planner; defaults are desk-scale, all overridable."""

    eta_sample_tree: float = 0.3
    delta: float = 0.2
    max_time: float = 60.0
    max_iterations: int = 1_000_000
    seed: int = 0
    checks_per_second: float = CHECKS_PER_SECOND
    goal_bias: float = 0.5  # unguided mode: odds of placing at the goal pose

    def __post_init__(self):
        if not 0.0 < self.eta_sample_tree < 1.0:
            raise ValueError("eta_sample_tree must be in (0, 1)")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.max_time <= 0.0:
            raise ValueError("max_time must be positive")


@dataclass
class PlanReport:
    status: str
    time_s: float = 0.0        # deterministic: collision checks / calibration
    wall_time_s: float = 0.0   # measured; informational only
    iterations: int = 0
    tree_count: int = 0
    node_count: int = 0
    collision_checks: int = 0

    def to_dict(self) -> dict:
        return {"status": self.status, "time_s": self.time_s,
                "wall_time_s": self.wall_time_s, "iterations": self.iterations,
                "tree_count": self.tree_count, "node_count": self.node_count,
                "collision_checks": self.collision_checks}


@dataclass(frozen=True)
class Path:
    """Waypoints from start to goal; state changes occur on coordinate twins."""

    waypoints: tuple[Configuration, ...]

    def __len__(self) -> int:
        return len(self.waypoints)

    def length(self) -> float:
        qs = [w.q for w in self.waypoints]
        return float(sum(np.linalg.norm(qs[i + 1] - qs[i]) for i in range(len(qs) - 1)))

    def transition_count(self) -> int:
        return sum(1 for a, b in zip(self.waypoints, self.waypoints[1:])
                   if a.state.sid != b.state.sid)

    def grasp_count(self) -> int:
        return sum(1 for a, b in zip(self.waypoints, self.waypoints[1:])
                   if a.state.kind == PLACEMENT and b.state.kind == GRASPK)


def metrics(path: Path, report: PlanReport) -> dict:
    """Planning time, joint-space path length, and number of grasps."""
    return {"time_s": report.time_s,
            "path_len_rad": path.length(),
            "grasps": path.grasp_count()}


def path_to_json(path: Path) -> str:
    """Serialize waypoints plus the manifolds they reference."""
    states = {}
    for w in path.waypoints:
        s = w.state
        if s.sid in states:
            continue
        entry = {"kind": s.kind,
                 "fixed": {o: {"frame": fp.frame, **fp.rel.to_dict()}
                           for o, fp in sorted(s.fixed.items())}}
        if s.grasped is not None:
            entry["grasped"] = {"object": s.grasped[0], "label": s.grasped[1].label}
        states[s.sid] = entry
    return json.dumps({
        "waypoints": [{"q": [float(v) for v in w.q], "sid": w.state.sid}
                      for w in path.waypoints],
        "states": states,
    }, indent=2, sort_keys=True)


def path_from_json(data: str | bytes, handles: dict[str, tuple[Handle, ...]]) -> Path:
    """Rebuild a path; grasp-state handles are resolved from the scene by label."""
    doc = json.loads(data)
    states: dict[str, StateManifold] = {}
    for sid, entry in doc["states"].items():
        fixed = {o: FixedPose(d["frame"], Pose.from_dict(d))
                 for o, d in entry["fixed"].items()}
        grasped = None
        if "grasped" in entry:
            obj = entry["grasped"]["object"]
            label = entry["grasped"]["label"]
            matches = [h for h in handles.get(obj, ()) if h.label == label]
            if not matches:
                raise KeyError(f"state {sid}: no handle {label!r} for object {obj!r}")
            grasped = (obj, matches[0])
        states[sid] = StateManifold(entry["kind"], sid, fixed, grasped=grasped)
    return Path(tuple(Configuration(np.array(w["q"], dtype=float), states[w["sid"]])
                      for w in doc["waypoints"]))


# -- forest ---------------------------------------------------------------------

class _Tree:
    __slots__ = ("tid", "qs", "sids", "parents")

    def __init__(self, tid: int):
        self.tid = tid
        self.qs: list[np.ndarray] = []
        self.sids: list[str] = []
        self.parents: list[int] = []


class _StateIndex:
    """Per-manifold node registry for vectorized nearest-neighbor scans."""

    __slots__ = ("Q", "tids", "nids", "n")

    def __init__(self, dof: int):
        self.Q = np.empty((64, dof))
        self.tids = np.empty(64, dtype=np.int64)
        self.nids = np.empty(64, dtype=np.int64)
        self.n = 0

    def add(self, q: np.ndarray, ref: tuple[int, int]):
        if self.n == len(self.Q):
            self.Q = np.vstack([self.Q, np.empty_like(self.Q)])
            self.tids = np.concatenate([self.tids, np.empty_like(self.tids)])
            self.nids = np.concatenate([self.nids, np.empty_like(self.nids)])
        self.Q[self.n] = q
        self.tids[self.n] = ref[0]
        self.nids[self.n] = ref[1]
        self.n += 1


class Forest:
    """Trees plus a union-find over tree ids recording merges."""

    def __init__(self, dof: int):
        self.dof = dof
        self.trees: list[_Tree] = []
        self._uf: list[int] = []
        self._root_map: np.ndarray | None = None
        self.by_state: dict[str, _StateIndex] = {}
        self.states: dict[str, StateManifold] = {}
        self.adjacency: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self.node_count = 0

    def find(self, tid: int) -> int:
        root = tid
        while self._uf[root] != root:
            root = self._uf[root]
        while self._uf[tid] != root:
            self._uf[tid], tid = root, self._uf[tid]
        return root

    def merge(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self._uf[max(ra, rb)] = min(ra, rb)
            self._root_map = None

    def _roots(self) -> np.ndarray:
        """Root of every tree id, as a vectorized lookup table."""
        if self._root_map is None or len(self._root_map) != len(self._uf):
            self._root_map = np.fromiter((self.find(t) for t in range(len(self._uf))),
                                         dtype=np.int64, count=len(self._uf))
        return self._root_map

    def new_tree(self, q: np.ndarray, state: StateManifold) -> tuple[int, int]:
        tree = _Tree(len(self.trees))
        self.trees.append(tree)
        self._uf.append(tree.tid)
        return self._add_node(tree, q, state, -1)

    def _add_node(self, tree: _Tree, q: np.ndarray, state: StateManifold,
                  parent: int) -> tuple[int, int]:
        q = np.asarray(q, dtype=float)
        tree.qs.append(q)
        tree.sids.append(state.sid)
        tree.parents.append(parent)
        ref = (tree.tid, len(tree.qs) - 1)
        idx = self.by_state.get(state.sid)
        if idx is None:
            idx = self.by_state[state.sid] = _StateIndex(self.dof)
            self.states[state.sid] = state
        idx.add(q, ref)
        self.adjacency[ref] = []
        if parent >= 0:
            pref = (tree.tid, parent)
            self.adjacency[pref].append(ref)
            self.adjacency[ref].append(pref)
        self.node_count += 1
        return ref

    def add_child(self, parent_ref: tuple[int, int], q: np.ndarray,
                  state: StateManifold) -> tuple[int, int]:
        tid, nid = parent_ref
        return self._add_node(self.trees[tid], q, state, nid)

    def link(self, a: tuple[int, int], b: tuple[int, int]):
        """Equality edge between coincident nodes of two merged trees."""
        self.adjacency[a].append(b)
        self.adjacency[b].append(a)
        self.merge(a[0], b[0])

    def node_state(self, ref: tuple[int, int]) -> str:
        return self.trees[ref[0]].sids[ref[1]]

    def node_q(self, ref: tuple[int, int]) -> np.ndarray:
        return self.trees[ref[0]].qs[ref[1]]

    def roots_with_nodes(self, sid: str) -> list[int]:
        idx = self.by_state.get(sid)
        if idx is None:
            return []
        return [int(r) for r in np.unique(self._roots()[idx.tids[:idx.n]])]

    def states_with_nodes(self) -> list[str]:
        return sorted(self.by_state.keys())

    def root_count(self) -> int:
        return len({self.find(t.tid) for t in self.trees})

    def nearest(self, q: np.ndarray, sid: str,
                root: int | None = None) -> tuple[int, int] | None:
        """Closest node in a manifold, optionally restricted to one merged tree.

        Ties break toward the lowest (tree id, node index).
        """
        idx = self.by_state.get(sid)
        if idx is None or idx.n == 0:
            return None
        Q = idx.Q[:idx.n]
        d2 = np.einsum("ij,ij->i", Q - q, Q - q)
        if root is not None:
            mask = self._roots()[idx.tids[:idx.n]] == root
            if not mask.any():
                return None
            d2 = np.where(mask, d2, np.inf)
        dmin = d2.min()
        if not np.isfinite(dmin):
            return None
        ties = np.flatnonzero(d2 == dmin)
        if len(ties) == 1:
            k = int(ties[0])
        else:
            pairs = sorted((int(idx.tids[i]), int(idx.nids[i]), int(i)) for i in ties)
            k = pairs[0][2]
        return int(idx.tids[k]), int(idx.nids[k])


def nearest_neighbor(q: np.ndarray, state: StateManifold,
                     forest: Forest) -> Configuration:
    """Exact joint-space nearest node among all trees restricted to a manifold."""
    ref = forest.nearest(np.asarray(q, dtype=float), state.sid)
    if ref is None:
        raise ValueError(f"no nodes in state {state.sid}")
    return Configuration(forest.node_q(ref), forest.states[state.sid])


# -- the planning loop ------------------------------------------------------------

class _Budget:
    """Deterministic resource meter charged per collision check."""

    def __init__(self, params: PlannerParams):
        self.checks = 0
        self.limit = int(params.max_time * params.checks_per_second)
        self.rate = params.checks_per_second

    def charge(self, n: int = 1):
        self.checks += n

    @property
    def exhausted(self) -> bool:
        return self.checks >= self.limit

    @property
    def time_s(self) -> float:
        return self.checks / self.rate


class _Checker:
    def __init__(self, world: CollisionWorld, budget: _Budget, delta: float):
        self.world = world
        self.budget = budget
        self.resolution = delta / 4.0

    def point_free(self, state: StateManifold, q: np.ndarray) -> bool:
        self.budget.charge()
        return self.world.is_free(state, q)

    def edge_free(self, state: StateManifold, qa: np.ndarray, qb: np.ndarray,
                  check_endpoint: bool = True) -> bool:
        """Subdivided straight-segment check; qa is assumed already free."""
        dist = float(np.linalg.norm(qb - qa))
        steps = max(1, int(np.ceil(dist / self.resolution)))
        for s in range(1, steps + 1):
            if s == steps:
                if not check_endpoint:
                    return True
                qx = qb
            else:
                qx = qa + (s / steps) * (qb - qa)
            if not self.point_free(state, qx):
                return False
        return True


def attempt_link(ref: tuple[int, int], forest: Forest, delta: float,
                 checker: _Checker) -> int:
    """Walk from each other tree's nearest node toward ref, merging on contact.

    Intermediate collision-free steps are retained as nodes of the other tree
    even when the walk is cut short. Returns the number of merges performed.
    """
    q = forest.node_q(ref)
    sid = forest.node_state(ref)
    state = forest.states[sid]
    merges = 0
    for root in forest.roots_with_nodes(sid):
        if root == forest.find(ref[0]):
            continue
        nn = forest.nearest(q, sid, root=root)
        if nn is None:
            continue
        qn = forest.node_q(nn)
        dist = float(np.linalg.norm(q - qn))
        if dist == 0.0:
            forest.link(nn, ref)
            merges += 1
            continue
        steps = max(1, int(np.ceil(dist / delta)))
        parent = nn
        reached = True
        for s in range(1, steps + 1):
            q_step = q if s == steps else qn + (s / steps) * (q - qn)
            if not checker.edge_free(state, forest.node_q(parent), q_step):
                reached = False
                break
            parent = forest.add_child(parent, q_step, state)
        if reached:
            forest.link(parent, ref)
            merges += 1
    return merges


def _extract_path(forest: Forest, start_ref, goal_ref) -> Path:
    """Breadth-first walk over forest edges (parent links plus merge links)."""
    from collections import deque
    prev: dict[tuple[int, int], tuple[int, int]] = {start_ref: start_ref}
    dq = deque([start_ref])
    while dq:
        cur = dq.popleft()
        if cur == goal_ref:
            break
        for nxt in forest.adjacency[cur]:
            if nxt not in prev:
                prev[nxt] = cur
                dq.append(nxt)
    if goal_ref not in prev:
        raise RuntimeError("forest is merged but no path was found")
    refs = [goal_ref]
    while refs[-1] != start_ref:
        refs.append(prev[refs[-1]])
    refs.reverse()
    waypoints: list[Configuration] = []
    for ref in refs:
        cfg = Configuration(forest.node_q(ref), forest.states[forest.node_state(ref)])
        if waypoints and np.array_equal(waypoints[-1].q, cfg.q) \
                and waypoints[-1].state.sid == cfg.state.sid:
            continue  # merge twins collapse to one waypoint
        waypoints.append(cfg)
    return Path(tuple(waypoints))


def _run(transition_sampler, world: CollisionWorld, start: Configuration,
         goal: Configuration, params: PlannerParams) -> tuple[Path | None, PlanReport]:
    """Core loop shared by the guided planner and the unguided baseline."""
    t_wall = time.perf_counter()
    rng = np.random.default_rng(params.seed)
    budget = _Budget(params)
    checker = _Checker(world, budget, params.delta)

    for name, cfg in (("start", start), ("goal", goal)):
        if not world.is_free(cfg.state, cfg.q):
            raise PlannerInputError(f"{name} configuration is not collision-free")

    forest = Forest(world.model.dof)
    start_ref = forest.new_tree(start.q, start.state)
    goal_ref = forest.new_tree(goal.q, goal.state)

    def report(status: str, iterations: int) -> PlanReport:
        return PlanReport(status=status, time_s=budget.time_s,
                          wall_time_s=time.perf_counter() - t_wall,
                          iterations=iterations, tree_count=forest.root_count(),
                          node_count=forest.node_count,
                          collision_checks=budget.checks)

    if start.state.sid == goal.state.sid and np.array_equal(start.q, goal.q):
        return Path((start,)), report(SUCCESS, 0)

    iterations = 0
    while forest.find(start_ref[0]) != forest.find(goal_ref[0]):
        if budget.exhausted:
            return None, report(TIMEOUT, iterations)
        if iterations >= params.max_iterations:
            return None, report(ITERATION_LIMIT, iterations)
        iterations += 1
        if rng.random() < params.eta_sample_tree:
            pair = transition_sampler(rng, forest)
            if pair is None:
                continue
            q_from, q_to = pair
            if not checker.point_free(q_from.state, q_from.q):
                continue
            if not checker.point_free(q_to.state, q_to.q):
                continue
            ref_from = forest.new_tree(q_from.q, q_from.state)
            ref_to = forest.add_child(ref_from, q_to.q, q_to.state)
            attempt_link(ref_from, forest, params.delta, checker)
            attempt_link(ref_to, forest, params.delta, checker)
        else:
            sids = forest.states_with_nodes()
            sid = sids[int(rng.integers(len(sids)))]
            state = forest.states[sid]
            q_rand = sample_configuration(state, world.model, rng)
            nn = forest.nearest(q_rand.q, sid)
            qn = forest.node_q(nn)
            diff = q_rand.q - qn
            dist = float(np.linalg.norm(diff))
            if dist == 0.0:
                continue
            q_step = q_rand.q if dist <= params.delta else qn + (params.delta / dist) * diff
            if not checker.edge_free(state, qn, q_step):
                continue
            ref = forest.add_child(nn, q_step, state)
            attempt_link(ref, forest, params.delta, checker)

    path = _extract_path(forest, start_ref, goal_ref)
    return path, report(SUCCESS, iterations)


def plan(graph: StateGraph, demo: Demonstration, world: CollisionWorld,
         q_start: np.ndarray, q_goal: np.ndarray,
         params: PlannerParams) -> tuple[Path | None, PlanReport]:
    """Demonstration-guided multi-step planning between the first and last placement."""
    start = Configuration(q_start, graph.start_state)
    goal = Configuration(q_goal, graph.goal_state)
    events = demo.events

    def sampler(rng: np.random.Generator, _forest: Forest):
        ev = events[int(rng.integers(len(events)))]
        if ev.index not in graph.event_transitions:
            return None
        return sample_on_transition(ev, graph, world.model, rng)

    return _run(sampler, world, start, goal, params)


def check_path(path: Path, world: CollisionWorld, delta: float,
               q_start: np.ndarray | None = None,
               q_goal: np.ndarray | None = None) -> list[str]:
    """Violated path invariants, as human-readable strings (empty means valid).

    Checks endpoint identity (when given), per-edge step bound, state changes
    occurring only on coordinate twins, edge-subdivision collision freedom at
    delta/4, and collision freedom of every waypoint.
    """
    problems: list[str] = []
    wps = path.waypoints
    if not wps:
        return ["path has no waypoints"]
    if q_start is not None and not np.array_equal(wps[0].q, np.asarray(q_start, dtype=float)):
        problems.append("first waypoint differs from the query start")
    if q_goal is not None and not np.array_equal(wps[-1].q, np.asarray(q_goal, dtype=float)):
        problems.append("last waypoint differs from the query goal")
    resolution = delta / 4.0
    for i, w in enumerate(wps):
        if not world.is_free(w.state, w.q):
            problems.append(f"waypoint {i} is not collision-free")
    for i, (a, b) in enumerate(zip(wps, wps[1:])):
        if a.state.sid != b.state.sid:
            if not np.array_equal(a.q, b.q):
                problems.append(f"edge {i}: state change with differing coordinates")
            continue
        dist = float(np.linalg.norm(b.q - a.q))
        if dist > delta + 1e-9:
            problems.append(f"edge {i}: step {dist:.4f} exceeds delta")
        steps = max(1, int(np.ceil(dist / resolution)))
        for s in range(1, steps):
            qx = a.q + (s / steps) * (b.q - a.q)
            if not world.is_free(a.state, qx):
                problems.append(f"edge {i}: collision at subdivision {s}/{steps}")
                break
    return problems


def shortcut(path: Path, n_attempts: int, rng: np.random.Generator,
             world: CollisionWorld, delta: float = 0.2,
             stats: dict | None = None) -> Path:
    """Random shortcut: splice straight segments between same-state waypoints.

    Candidate pairs are drawn inside one contiguous same-state run, so
    transition waypoints are never removed and the grasp sequence is
    preserved. Path length is monotone non-increasing. When given, stats
    collects the number of collision checks spent.
    """
    waypoints = list(path.waypoints)
    checks = 0

    def edge_free(state: StateManifold, qa: np.ndarray, qb: np.ndarray) -> bool:
        nonlocal checks
        dist = float(np.linalg.norm(qb - qa))
        steps = max(1, int(np.ceil(dist / (delta / 4.0))))
        for s in range(1, steps + 1):
            qx = qb if s == steps else qa + (s / steps) * (qb - qa)
            checks += 1
            if not world.is_free(state, qx):
                return False
        return True

    for _ in range(n_attempts):
        runs = []
        run_start = 0
        for i in range(1, len(waypoints)):
            if waypoints[i].state.sid != waypoints[run_start].state.sid:
                runs.append((run_start, i - 1))
                run_start = i
        runs.append((run_start, len(waypoints) - 1))
        runs = [r for r in runs if r[1] - r[0] >= 2]
        if not runs:
            break
        a, b = runs[int(rng.integers(len(runs)))]
        i = int(rng.integers(a, b + 1))
        j = int(rng.integers(a, b + 1))
        if abs(i - j) < 2:
            continue
        i, j = min(i, j), max(i, j)
        state = waypoints[i].state
        qa, qb = waypoints[i].q, waypoints[j].q
        straight = float(np.linalg.norm(qb - qa))
        current = sum(float(np.linalg.norm(waypoints[k + 1].q - waypoints[k].q))
                      for k in range(i, j))
        if straight >= current - 1e-12:
            continue
        if not edge_free(state, qa, qb):
            continue
        steps = max(1, int(np.ceil(straight / delta)))
        middle = [Configuration(qa + (s / steps) * (qb - qa), state)
                  for s in range(1, steps)]
        waypoints[i + 1:j] = middle
    if stats is not None:
        stats["checks"] = checks
    return Path(tuple(waypoints))


# -- unguided baseline -------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceRegion:
    """Rectangle on a horizontal contact surface, in world coordinates."""

    name: str
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    z: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"region {self.name}: empty rectangle")


class _UnguidedStates:
    """Placement and grasp manifolds discovered on the fly, unified by content."""

    def __init__(self, handles: dict[str, tuple[Handle, ...]]):
        self.handles = handles
        self._cache: dict[tuple, StateManifold] = {}
        self._counter = 0

    def _key(self, fixed: dict[str, FixedPose], grasped) -> tuple:
        fk = tuple(sorted((o, fp.frame, fp.rel.translation.tobytes(),
                           fp.rel.quaternion.tobytes()) for o, fp in fixed.items()))
        gk = None if grasped is None else (grasped[0], grasped[1].label)
        return fk, gk

    def placement(self, fixed: dict[str, FixedPose]) -> StateManifold:
        key = self._key(fixed, None)
        state = self._cache.get(key)
        if state is None:
            self._counter += 1
            state = StateManifold(PLACEMENT, f"U{self._counter}", dict(fixed))
            self._cache[key] = state
        return state

    def grasp(self, fixed: dict[str, FixedPose], obj: str, handle: Handle) -> StateManifold:
        key = self._key(fixed, (obj, handle))
        state = self._cache.get(key)
        if state is None:
            self._counter += 1
            state = StateManifold(GRASPK, f"U{self._counter}:{obj}:{handle.label}",
                                  dict(fixed), grasped=(obj, handle))
            self._cache[key] = state
        return state


def _rest_pose(shape, x: float, y: float, yaw: float, z_surface: float) -> Pose:
    half_z = shape.half_extents[2] if isinstance(shape, Box) else shape.radius
    return Pose(np.array([x, y, z_surface + half_z + 1e-3]),
                quat_from_axis_angle([0.0, 0.0, 1.0], yaw))


def plan_unguided(world: CollisionWorld, q_start: np.ndarray, q_goal: np.ndarray,
                  start_poses: dict[str, FixedPose], goal_poses: dict[str, FixedPose],
                  regions: list[SurfaceRegion], handles: dict[str, list[Handle]],
                  params: PlannerParams) -> tuple[Path | None, PlanReport]:
    """Baseline without demonstration guidance.

    Transition roots come from placements sampled uniformly on the declared
    contact surfaces (with a goal-pose bias so exact goals are reachable),
    mirroring classical manipulation-RRT behavior. Output contract matches
    plan().
    """
    if not regions:
        raise PlannerInputError("unguided planning needs at least one surface region")
    states = _UnguidedStates({o: tuple(hs) for o, hs in handles.items()})
    start_state = states.placement(dict(start_poses))
    goal_state = states.placement(dict(goal_poses))
    start = Configuration(q_start, start_state)
    goal = Configuration(q_goal, goal_state)
    model = world.model
    movable = sorted(handles.keys())

    def sampler(rng: np.random.Generator, forest: Forest):
        sids = forest.states_with_nodes()
        sid = sids[int(rng.integers(len(sids)))]
        state = forest.states[sid]
        if state.kind == PLACEMENT:
            obj = movable[int(rng.integers(len(movable)))]
            hs = handles[obj]
            handle = hs[int(rng.integers(len(hs)))]
            obj_pose = state.fixed[obj]
            fixed_rest = {o: p for o, p in state.fixed.items() if o != obj}
            grasp_state = states.grasp(fixed_rest, obj, handle)
            target = obj_pose.compose(handle.grip)
            q, ok, _ = project(model, rng.uniform(model.lower, model.upper), target)
            if not ok:
                return None
            return Configuration(q, state), Configuration(q, grasp_state)
        obj, handle = state.grasped
        if rng.random() < params.goal_bias:
            place = goal_poses[obj]
        else:
            region = regions[int(rng.integers(len(regions)))]
            x = rng.uniform(region.xmin, region.xmax)
            y = rng.uniform(region.ymin, region.ymax)
            yaw = rng.uniform(-np.pi, np.pi)
            place = FixedPose(WORLD_FRAME, _rest_pose(world.objects[obj], x, y, yaw, region.z))
        fixed = dict(state.fixed)
        fixed[obj] = place
        placement = states.placement(fixed)
        target = place.compose(handle.grip)
        q, ok, _ = project(model, rng.uniform(model.lower, model.upper), target)
        if not ok:
            return None
        return Configuration(q, state), Configuration(q, placement)

    return _run(sampler, world, start, goal, params)
