"""Admissible configuration space: placement/grasp manifolds, projection, sampling.

A configuration couples the robot joint vector with the pose of every movable
object. Object poses are derived state, never free variables: placement
manifolds pin them to fixed anchored poses, and in a grasp manifold the
grasped object hangs rigidly from the gripper frame. The planner therefore
searches joint space only, and every in-manifold configuration satisfies its
constraints by construction; a numerical projection is needed only on the
transitions between neighboring manifolds, where the gripper must meet a
handle at the demonstrated object pose.

Anchors: a fixed pose lives either in the world frame or in the reserved
"robot" frame (surfaces that ride on a mobile base, e.g. a tray); the latter
resolve against the base placement of the current joint vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fast import (box_box_sat, dls_project, min_spheres_vs_box,
                    min_spheres_vs_sphere, sphere_box_distance,
                    sphere_centers as _sphere_centers_kernel)
from .demo import ContactEvent, Demonstration, DemonstrationError, GRASP, ROBOT_FRAME, WORLD_FRAME
from .geom import Box, Pose, Shape, matrix_to_quat, quat_to_rotvec
from .robot import RobotModel, within_limits

PROJ_TOL_T = 1e-4   # translational residual bound, meters
PROJ_TOL_R = 1e-3   # rotational residual bound, radians
PROJ_MAX_ITERS = 100
PROJ_DAMPING = 1e-6

PLACEMENT = "placement"
GRASPK = "grasp"


@dataclass(frozen=True)
class Handle:
    """One way to hold an object: the gripper frame expressed in the object frame."""

    object_id: str
    grip: Pose
    label: str = ""


@dataclass(frozen=True)
class FixedPose:
    """Pose anchored to the world or to the robot base frame."""

    frame: str
    rel: Pose

    def __post_init__(self):
        if self.frame not in (WORLD_FRAME, ROBOT_FRAME):
            raise ValueError(f"fixed poses must be world- or robot-anchored, got {self.frame!r}")

    def resolve(self, base: Pose) -> Pose:
        return self.rel if self.frame == WORLD_FRAME else base @ self.rel

    def compose(self, local: Pose) -> "FixedPose":
        return FixedPose(self.frame, self.rel @ local)


@dataclass(frozen=True)
class StateManifold:
    """A placement or grasp manifold, identified by its state id."""

    kind: str
    sid: str
    fixed: dict[str, FixedPose]
    grasped: tuple[str, Handle] | None = None

    def __post_init__(self):
        if self.kind == PLACEMENT:
            if self.grasped is not None:
                raise ValueError(f"{self.sid}: placement state cannot hold an object")
        elif self.kind == GRASPK:
            if self.grasped is None:
                raise ValueError(f"{self.sid}: grasp state needs a grasped object")
            if self.grasped[0] in self.fixed:
                raise ValueError(f"{self.sid}: grasped object also has a fixed pose")
        else:
            raise ValueError(f"bad state kind {self.kind!r}")

    def __eq__(self, other) -> bool:
        return isinstance(other, StateManifold) and self.sid == other.sid

    def __hash__(self) -> int:
        return hash(self.sid)


@dataclass(frozen=True)
class Transition:
    """Neighboring placement/grasp pair sharing the pregrasp constraint set."""

    placement: StateManifold
    grasp: StateManifold
    kind: str              # "pick": placement -> grasp; "place": grasp -> placement
    obj: str
    handle: Handle
    object_pose: FixedPose  # placement-side pose of the moved object
    event_index: int

    @property
    def from_state(self) -> StateManifold:
        return self.placement if self.kind == "pick" else self.grasp

    @property
    def to_state(self) -> StateManifold:
        return self.grasp if self.kind == "pick" else self.placement

    def gripper_target(self) -> FixedPose:
        return self.object_pose.compose(self.handle.grip)


@dataclass(frozen=True)
class Configuration:
    """Robot joint vector tagged with the manifold it lives on."""

    q: np.ndarray
    state: StateManifold

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).copy()
        q.flags.writeable = False
        object.__setattr__(self, "q", q)


class StateGraph:
    """Ordered placement states with the grasp states and transitions between them."""

    def __init__(self, placements, grasp_states, transitions, event_transitions, handles):
        self.placements = tuple(placements)
        self.grasp_states = tuple(grasp_states)
        self.transitions = tuple(transitions)
        self.event_transitions = {k: tuple(v) for k, v in event_transitions.items()}
        self.handles = {o: tuple(hs) for o, hs in handles.items()}
        self.states = {s.sid: s for s in self.placements + self.grasp_states}

    @property
    def start_state(self) -> StateManifold:
        return self.placements[0]

    @property
    def goal_state(self) -> StateManifold:
        return self.placements[-1]


def build_state_graph(demo: Demonstration, handles: list[Handle]) -> StateGraph:
    """Enumerate manifolds from the contact sequence.

    One placement state per object arrangement (1 + number of releases), one
    grasp state per (move, handle of the moved object), and the pick/place
    transition pair for each grasp state. Placement poses are taken from the
    first event and from each release event, which keeps the chain consistent
    when start or goal poses were replaced by a generalization transform.
    """
    by_object: dict[str, list[Handle]] = {}
    for h in handles:
        by_object.setdefault(h.object_id, []).append(h)

    def anchored(ev: ContactEvent, obj: str) -> FixedPose:
        frame, rel = ev.poses[obj]
        if frame == ROBOT_FRAME:
            return FixedPose(ROBOT_FRAME, rel)
        return FixedPose(WORLD_FRAME, demo.frame_pose(frame) @ rel)

    current = {obj: anchored(demo.events[0], obj) for obj in demo.objects}
    placements = [StateManifold(PLACEMENT, "P1", dict(current))]
    grasp_states: list[StateManifold] = []
    transitions: list[Transition] = []
    event_transitions: dict[int, list[Transition]] = {}
    pending: tuple[str, int] | None = None  # (object, grasp event index)

    for ev in demo.events:
        active = ev.active_object()
        if active is None:
            continue
        obj, state = active
        if state == GRASP:
            if pending is not None:
                raise DemonstrationError(
                    f"event {ev.index}: grasp of {obj!r} while {pending[0]!r} is held")
            if not by_object.get(obj):
                raise ValueError(f"moved object {obj!r} has no handles")
            pending = (obj, ev.index)
        else:
            if pending is None or pending[0] != obj:
                raise DemonstrationError(f"event {ev.index}: release without grasp")
            k_grasp = pending[1]
            pending = None
            j = len(placements)
            pick_pose = current[obj]
            fixed_rest = {o: p for o, p in current.items() if o != obj}
            current = dict(current)
            current[obj] = anchored(ev, obj)
            nxt = StateManifold(PLACEMENT, f"P{j + 1}", dict(current))
            placements.append(nxt)
            picks, places = [], []
            for h in by_object[obj]:
                label = h.label or str(by_object[obj].index(h))
                g = StateManifold(GRASPK, f"G{j}>{j + 1}:{obj}:{label}",
                                  dict(fixed_rest), grasped=(obj, h))
                grasp_states.append(g)
                picks.append(Transition(placements[j - 1], g, "pick", obj, h,
                                        pick_pose, k_grasp))
                places.append(Transition(nxt, g, "place", obj, h,
                                         current[obj], ev.index))
            transitions.extend(picks)
            transitions.extend(places)
            event_transitions[k_grasp] = picks
            event_transitions[ev.index] = places
    return StateGraph(placements, grasp_states, transitions, event_transitions, by_object)


# -- collision world -----------------------------------------------------------

@dataclass(frozen=True)
class WorldBody:
    name: str
    shape: Shape
    pose: FixedPose


class CollisionWorld:
    """Scene bodies plus the robot; answers clearance queries per manifold.

    Active pairs: robot links against furniture and non-grasped objects,
    object against object, object against furniture. The grasped object is
    excluded against the gripper links only. Bodies anchored to the robot
    frame (e.g. a tray) are excluded against the base spheres they rigidly
    ride on; pairs whose relative pose is constant are checked once per state.
    """

    def __init__(self, model: RobotModel, furniture: list[WorldBody],
                 objects: dict[str, Shape]):
        self.model = model
        self.furniture = list(furniture)
        self.objects = dict(objects)
        self.static_furniture = [b for b in self.furniture if b.pose.frame == WORLD_FRAME]
        self.riding_furniture = [b for b in self.furniture if b.pose.frame == ROBOT_FRAME]
        self._sf_bodies = [(b.name, b.shape, (b.pose.rel @ b.shape.local).rotation,
                            (b.pose.rel @ b.shape.local).translation)
                           for b in self.static_furniture]
        self._rf_bodies = [(b.name, b.shape, (b.pose.rel @ b.shape.local).rotation,
                            (b.pose.rel @ b.shape.local).translation)
                           for b in self.riding_furniture]
        self._state_cache: dict[str, dict] = {}

    # -- derived poses --

    def base_pose(self, q: np.ndarray) -> Pose:
        Rb, tb = self.model._base_frame(np.asarray(q, dtype=float))
        return Pose.from_matrix(Rb, tb)

    def object_poses(self, state: StateManifold, q: np.ndarray) -> dict[str, Pose]:
        """World pose of every movable object at q, per the manifold constraints."""
        base = self.base_pose(q)
        poses = {o: fp.resolve(base) for o, fp in state.fixed.items()}
        if state.grasped is not None:
            obj, handle = state.grasped
            poses[obj] = self.model.gripper_pose(q) @ handle.grip.inverse()
        return poses

    # -- clearance machinery --

    @staticmethod
    def _pair(shape_a: Shape, Ra, ta, shape_b: Shape, Rb, tb) -> float:
        """Signed distance between two placed shapes given as matrices."""
        if isinstance(shape_a, Box):
            if isinstance(shape_b, Box):
                return float(box_box_sat(Ra, ta, shape_a.half_extents,
                                         Rb, tb, shape_b.half_extents))
            return float(sphere_box_distance(tb, shape_b.radius, Ra, ta,
                                             shape_a.half_extents))
        if isinstance(shape_b, Box):
            return float(sphere_box_distance(ta, shape_a.radius, Rb, tb,
                                             shape_b.half_extents))
        return float(np.linalg.norm(ta - tb) - shape_a.radius - shape_b.radius)

    def _spheres_vs_body(self, centers, radii, shape: Shape, R, t) -> float:
        if len(centers) == 0:
            return np.inf
        if isinstance(shape, Box):
            return float(min_spheres_vs_box(centers, radii, R, t, shape.half_extents))
        return float(min_spheres_vs_sphere(centers, radii, t, shape.radius))

    def _prep(self, state: StateManifold) -> dict:
        """Per-manifold constants: resolved matrices and the static clearance."""
        cached = self._state_cache.get(state.sid)
        if cached is not None:
            return cached
        wfixed = []
        riding = []
        for o, fp in sorted(state.fixed.items()):
            entry = (o, self.objects[o], fp.rel.rotation, fp.rel.translation)
            (wfixed if fp.frame == WORLD_FRAME else riding).append(entry)
        grip_inv = None
        if state.grasped is not None:
            inv = state.grasped[1].grip.inverse()
            grip_inv = (inv.rotation, inv.translation)

        best = np.inf
        # world-fixed objects against each other and against static furniture
        for i, (oa, sa, Ra, ta) in enumerate(wfixed):
            for ob, sb, Rb, tb in wfixed[i + 1:]:
                best = min(best, self._pair(sa, Ra, ta, sb, Rb, tb))
            for name, sb, Rb, tb in self._sf_bodies:
                best = min(best, self._pair(sa, Ra, ta, sb, Rb, tb))
        # bodies riding the robot frame: constant relative to each other and
        # to the base spheres, so checked here once (at base identity)
        base_mask = self.model._sph_link < 0
        for i, (oa, sa, Ra, ta) in enumerate(riding):
            for ob, sb, Rb, tb in riding[i + 1:]:
                best = min(best, self._pair(sa, Ra, ta, sb, Rb, tb))
            for name, sb, Rb, tb in self._rf_bodies:
                best = min(best, self._pair(sa, Ra, ta, sb, Rb, tb))
            if base_mask.any():
                best = min(best, self._spheres_vs_body(
                    self.model._sph_local[base_mask],
                    self.model._sph_radius[base_mask], sa, Ra, ta))
        cached = {"wfixed": wfixed, "riding": riding, "grip_inv": grip_inv,
                  "static_min": best}
        self._state_cache[state.sid] = cached
        return cached

    def _eval(self, state: StateManifold, q: np.ndarray,
              stop_below: float | None = None,
              collect: list | None = None) -> float:
        def note(name: str, d: float) -> bool:
            nonlocal best
            best = min(best, d)
            if collect is not None:
                collect.append((name, d))
            return stop_below is not None and collect is None and best < stop_below

        prep = self._prep(state)
        best = prep["static_min"]
        if collect is not None:
            collect.append(("static", best))
        elif stop_below is not None and best < stop_below:
            return best

        q = np.asarray(q, dtype=float)
        (Rb, tb), Rs, ts, (Rg, tg) = self.model.frames(q)
        centers = _sphere_centers_kernel(Rb, tb, Rs, ts,
                                         self.model._sph_link, self.model._sph_local)
        radii = self.model._sph_radius
        link_mask = self.model._sph_link >= 0
        non_grip = ~self.model._sph_on_gripper

        # robot spheres vs static furniture
        for name, shape, R, t in self._sf_bodies:
            if note(f"robot|{name}", self._spheres_vs_body(centers, radii, shape, R, t)):
                return best
        # robot spheres vs world-fixed objects
        for o, shape, R, t in prep["wfixed"]:
            if note(f"robot|{o}", self._spheres_vs_body(centers, radii, shape, R, t)):
                return best
        # arm spheres (base excluded: rigid) vs bodies riding the base
        riding_world = [(o, shape, Rb @ R, Rb @ t + tb) for o, shape, R, t in prep["riding"]]
        rf_world = [(n, shape, Rb @ R, Rb @ t + tb) for n, shape, R, t in self._rf_bodies]
        for o, shape, R, t in riding_world + rf_world:
            d = self._spheres_vs_body(centers[link_mask], radii[link_mask], shape, R, t)
            if note(f"robot|{o}", d):
                return best
        # grasped object vs non-gripper robot spheres and everything else
        if state.grasped is not None:
            obj = state.grasped[0]
            shape = self.objects[obj]
            Ri, ti = prep["grip_inv"]
            Ro = Rg @ Ri
            to = Rg @ ti + tg
            d = self._spheres_vs_body(centers[non_grip], radii[non_grip], shape, Ro, to)
            if note(f"robot|{obj}", d):
                return best
            others = (self._sf_bodies + prep["wfixed"] + riding_world + rf_world)
            for name, sb, Rx, tx in others:
                if note(f"{obj}|{name}", self._pair(shape, Ro, to, sb, Rx, tx)):
                    return best
        # riding objects vs the static world
        for o, shape, R, t in riding_world:
            for name, sb, Rx, tx in self._sf_bodies + prep["wfixed"]:
                if note(f"{o}|{name}", self._pair(shape, R, t, sb, Rx, tx)):
                    return best
        return best

    def is_free(self, state: StateManifold, q: np.ndarray) -> bool:
        if not within_limits(self.model, q):
            return False
        return self._eval(state, q, stop_below=0.0) >= 0.0

    def min_clearance(self, state: StateManifold, q: np.ndarray) -> float:
        return self._eval(state, q)

    def clearance_pairs(self, state: StateManifold, q: np.ndarray) -> list[tuple[str, float]]:
        """Per-pair clearances in a fixed deterministic order (for barrier costs)."""
        out: list[tuple[str, float]] = []
        self._eval(state, q, collect=out)
        return out


def is_free(config: Configuration, world: CollisionWorld) -> bool:
    """Joint limits plus non-negative clearance over all active pairs."""
    return world.is_free(config.state, config.q)


# -- constraint projection -------------------------------------------------------

def _pose_error(Rc, tc, Rt, tt) -> np.ndarray:
    return np.concatenate([tt - tc, quat_to_rotvec(matrix_to_quat(Rt @ Rc.T))])


def _target_frame(model: RobotModel, q: np.ndarray, target: FixedPose):
    if target.frame == WORLD_FRAME:
        return target.rel.rotation, target.rel.translation
    Rb, tb = model._base_frame(q)
    return Rb @ target.rel.rotation, tb + Rb @ target.rel.translation


def _gripper_error(model: RobotModel, q: np.ndarray, target: FixedPose) -> np.ndarray:
    _, _, _, (Rc, tc) = model.frames(q)
    Rt, tt = _target_frame(model, q, target)
    return _pose_error(Rc, tc, Rt, tt)


def project(model: RobotModel, q_seed: np.ndarray, target: FixedPose, *,
            tol_t: float = PROJ_TOL_T, tol_r: float = PROJ_TOL_R,
            max_iters: int = PROJ_MAX_ITERS,
            damping: float = PROJ_DAMPING) -> tuple[np.ndarray, bool, int]:
    """Damped-least-squares Newton driving the gripper onto a target pose.

    Each iteration backtracks the step until the residual drops; when even the
    shortest step fails, the damping factor grows tenfold and relaxes back to
    its floor on progress. Rank-deficient Jacobians are absorbed by the
    damping and never raise. Returns (joints, converged, iterations).
    """
    q, ok, it = dls_project(
        np.asarray(q_seed, dtype=float), model.nbase, model._mount_R, model._mount_t,
        model._R_off, model._t_off, model._axes, model._types, model._W, model._W2,
        model._R_grip, model._t_grip, model.lower, model.upper,
        target.rel.rotation, target.rel.translation, target.frame == ROBOT_FRAME,
        tol_t, tol_r, max_iters, damping)
    return q, bool(ok), int(it)


def transition_residual(q: np.ndarray, transition: Transition,
                        model: RobotModel) -> tuple[float, float]:
    """Translational and rotational gripper error against the transition target."""
    _, _, _, (Rc, tc) = model.frames(np.asarray(q, dtype=float))
    Rt, tt = _target_frame(model, np.asarray(q, dtype=float), transition.gripper_target())
    e = _pose_error(Rc, tc, Rt, tt)
    return float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))


# -- sampling --------------------------------------------------------------------

def sample_on_transition(event: ContactEvent, graph: StateGraph, model: RobotModel,
                         rng: np.random.Generator
                         ) -> tuple[Configuration, Configuration] | None:
    """Twin configurations on a transition consistent with the given event.

    A handle is drawn uniformly among the event's transitions, a random joint
    seed is projected onto the pregrasp constraint, and the same coordinates
    are returned tagged with the two neighboring state ids. None on
    projection failure (the caller simply resamples).
    """
    choices = graph.event_transitions.get(event.index)
    if not choices:
        raise KeyError(f"event {event.index} has no transition in the graph")
    tr = choices[int(rng.integers(len(choices)))]
    q_seed = rng.uniform(model.lower, model.upper)
    q, ok, _ = project(model, q_seed, tr.gripper_target())
    if not ok:
        return None
    return Configuration(q, tr.from_state), Configuration(q, tr.to_state)


def sample_configuration(state: StateManifold, model: RobotModel,
                         rng: np.random.Generator) -> Configuration:
    """Uniform joint sample on a manifold.

    Object poses are derived from the manifold constraints, so the projection
    step is the identity here and sampling cannot fail.
    """
    return Configuration(rng.uniform(model.lower, model.upper), state)


def linear_interpolate(a: Configuration, b: Configuration, t: float) -> Configuration:
    """Straight-line interpolation in joint space within one manifold."""
    if a.state.sid != b.state.sid:
        raise ValueError(f"cannot interpolate across states {a.state.sid} -> {b.state.sid}")
    return Configuration(a.q + t * (b.q - a.q), a.state)
