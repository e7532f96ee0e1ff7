"""Demonstration ingestion and the generalization transforms.

A demonstration is an ordered sequence of contact events. Each event carries a
per-object contact state (grasp / release / none) and the pose of every
movable object, stored relative to an anchor frame (a contact surface or the
reserved "robot" frame for surfaces that ride on the robot). At most one
object changes contact per event, and grasp/release strictly alternate, both
globally and per object.

File format: JSON with objects, frames and events sections; quaternions are
(w, x, y, z). Serialization uses shortest round-trip floats, so a
save/load cycle is bit-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Box, Pose, Shape, Sphere, quat_from_axis_angle, quat_mul

GRASP = "grasp"
RELEASE = "release"
NONE = "none"

WORLD_FRAME = "world"
ROBOT_FRAME = "robot"


class DemonstrationError(ValueError):
    """Raised for demonstrations violating the contact-sequence contract."""


@dataclass(frozen=True)
class ContactEvent:
    """One recognized contact change: per-object states plus all object poses."""

    index: int
    contacts: dict[str, str]
    poses: dict[str, tuple[str, Pose]]  # object id -> (anchor frame id, relative pose)

    def active_object(self) -> tuple[str, str] | None:
        """The (object, state) pair that changes contact here, if any."""
        active = [(o, s) for o, s in self.contacts.items() if s != NONE]
        if len(active) > 1:
            raise DemonstrationError(
                f"event {self.index}: {len(active)} objects change contact at once")
        return active[0] if active else None


@dataclass(frozen=True)
class Demonstration:
    """Validated contact-event sequence with object catalogue and anchor frames."""

    objects: dict[str, Shape]
    frames: dict[str, Pose]
    events: tuple[ContactEvent, ...]

    def frame_pose(self, frame_id: str) -> Pose:
        if frame_id == WORLD_FRAME:
            return Pose.identity()
        return self.frames[frame_id]

    def world_pose(self, k: int, obj: str) -> Pose:
        """World pose of obj at event k; undefined for robot-anchored poses."""
        frame, rel = self.events[k - 1].poses[obj]
        if frame == ROBOT_FRAME:
            raise ValueError(f"object {obj} is robot-anchored at event {k}")
        return self.frame_pose(frame) @ rel

    def first_grasp_event(self, obj: str) -> int | None:
        for ev in self.events:
            if ev.contacts.get(obj) == GRASP:
                return ev.index
        return None

    def last_release_event(self, obj: str) -> int | None:
        for ev in reversed(self.events):
            if ev.contacts.get(obj) == RELEASE:
                return ev.index
        return None


@dataclass(frozen=True)
class PoseVariation:
    """Planar displacement plus yaw, applied per object to the start or goal poses."""

    target: str  # "start" | "goal"
    deltas: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.target not in ("start", "goal"):
            raise ValueError(f"target must be start or goal, got {self.target!r}")
        for obj, (_, _, dth) in self.deltas.items():
            if not -np.pi <= dth <= np.pi:
                raise ValueError(f"{obj}: yaw delta outside [-pi, pi]")


def _validate(demo: Demonstration) -> Demonstration:
    if not demo.events:
        raise DemonstrationError("T >= 1 required: demonstration has no events")
    held: str | None = None
    last_state: dict[str, str] = {}
    for pos, ev in enumerate(demo.events, start=1):
        if ev.index != pos:
            raise DemonstrationError(f"event {pos}: index {ev.index} out of order")
        for obj in demo.objects:
            if obj not in ev.poses:
                raise DemonstrationError(f"event {pos}: no pose for object {obj!r}")
        for obj in ev.poses:
            if obj not in demo.objects:
                raise DemonstrationError(f"event {pos}: pose for unknown object {obj!r}")
        for obj, (frame, _) in ev.poses.items():
            if frame not in (WORLD_FRAME, ROBOT_FRAME) and frame not in demo.frames:
                raise DemonstrationError(f"event {pos}: unknown anchor frame {frame!r}")
        active = ev.active_object()
        if active is None:
            continue
        obj, state = active
        if state == GRASP:
            if held is not None:
                raise DemonstrationError(
                    f"event {pos}: grasp of {obj!r} while {held!r} is held")
            if last_state.get(obj) == GRASP:
                raise DemonstrationError(
                    f"event {pos}: {obj!r} grasped twice without release")
            held = obj
        elif state == RELEASE:
            if held != obj:
                raise DemonstrationError(
                    f"event {pos}: release of {obj!r} which is not held")
            held = None
        else:
            raise DemonstrationError(f"event {pos}: bad contact state {state!r}")
        last_state[obj] = state
    if held is not None:
        raise DemonstrationError(f"object {held!r} is never released")
    return demo


def make_demonstration(objects: dict[str, Shape], frames: dict[str, Pose],
                       events: list[ContactEvent]) -> Demonstration:
    """Assemble and validate a demonstration."""
    return _validate(Demonstration(dict(objects), dict(frames), tuple(events)))


# -- serialization ------------------------------------------------------------

def shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Sphere):
        return {"kind": "sphere", "radius": s.radius}
    if isinstance(s, Box):
        return {"kind": "box", "half_extents": [float(v) for v in s.half_extents]}
    raise TypeError(f"unsupported shape {type(s).__name__}")


def shape_from_dict(d: dict) -> Shape:
    if d["kind"] == "sphere":
        return Sphere(float(d["radius"]))
    if d["kind"] == "box":
        return Box(np.array(d["half_extents"], dtype=float))
    raise DemonstrationError(f"unknown shape kind {d['kind']!r}")


def save_demonstration(demo: Demonstration) -> str:
    doc = {
        "objects": [{"id": oid, "shape": shape_to_dict(s)}
                    for oid, s in sorted(demo.objects.items())],
        "frames": [{"id": fid, **p.to_dict()} for fid, p in sorted(demo.frames.items())],
        "events": [{
            "k": ev.index,
            "contacts": {o: s for o, s in sorted(ev.contacts.items()) if s != NONE},
            "poses": {o: {"frame": frame, **rel.to_dict()}
                      for o, (frame, rel) in sorted(ev.poses.items())},
        } for ev in demo.events],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def load_demonstration(data: str | bytes) -> Demonstration:
    """Parse and validate a *.demo.json document.

    Quaternions within 1e-6 of unit norm are renormalized; anything further
    off is rejected. Every contract violation reports the offending event.
    """
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise DemonstrationError(f"not valid JSON: {e}") from None
    try:
        objects = {o["id"]: shape_from_dict(o["shape"]) for o in doc["objects"]}
        frames = {f["id"]: Pose.from_dict(f) for f in doc["frames"]}
        events = []
        for ev in doc["events"]:
            contacts = {o: NONE for o in objects}
            contacts.update(ev.get("contacts", {}))
            poses = {}
            for o, p in ev["poses"].items():
                try:
                    rel = Pose.from_dict(p)
                except ValueError as e:
                    raise DemonstrationError(f"event {ev['k']}: object {o!r}: {e}") from None
                poses[o] = (p.get("frame", WORLD_FRAME), rel)
            events.append(ContactEvent(int(ev["k"]), contacts, poses))
    except (KeyError, TypeError) as e:
        raise DemonstrationError(f"malformed demonstration document: {e!r}") from None
    for ev in events:
        for o, s in ev.contacts.items():
            if s not in (GRASP, RELEASE, NONE):
                raise DemonstrationError(f"event {ev.index}: bad contact state {s!r}")
    return _validate(Demonstration(objects, frames, tuple(events)))


# -- generalization transforms -------------------------------------------------

def _shift_rel_pose(rel: Pose, dx: float, dy: float, dth: float) -> Pose:
    # displacement in the anchor frame; yaw about the anchor's z axis through
    # the object origin, so the translation is unaffected by the rotation
    q = quat_mul(quat_from_axis_angle([0.0, 0.0, 1.0], dth), rel.quaternion)
    return Pose(rel.translation + np.array([dx, dy, 0.0]), q)


def vary_poses(demo: Demonstration, variation: PoseVariation) -> Demonstration:
    """Displace start or goal object poses.

    The start placement of an object spans every event up to and including its
    first grasp; the goal placement spans its last release onward. Only those
    events are rewritten, so intermediate placements (for instance a waypoint
    inside a tunnel) are untouched. Objects that are never grasped have a
    single resting pose, rewritten in every event.
    """
    new_events = list(demo.events)
    for obj, (dx, dy, dth) in variation.deltas.items():
        if obj not in demo.objects:
            raise KeyError(f"unknown object {obj!r}")
        if variation.target == "start":
            stop = demo.first_grasp_event(obj)
            touched = range(1, (stop or len(demo.events)) + 1)
        else:
            start = demo.last_release_event(obj)
            touched = range(start or 1, len(demo.events) + 1)
        for k in touched:
            ev = new_events[k - 1]
            frame, rel = ev.poses[obj]
            poses = dict(ev.poses)
            poses[obj] = (frame, _shift_rel_pose(rel, dx, dy, dth))
            new_events[k - 1] = replace(ev, poses=poses)
    return _validate(replace(demo, events=tuple(new_events)))


def swap_object(demo: Demonstration, obj: str, shape: Shape) -> Demonstration:
    """Exchange the catalogue shape of one object; all poses are retained."""
    if obj not in demo.objects:
        raise KeyError(f"unknown object {obj!r}")
    objects = dict(demo.objects)
    objects[obj] = shape
    return replace(demo, objects=objects)


def reanchor(demo: Demonstration, frame_id: str, pose: Pose) -> Demonstration:
    """Move an anchor frame; poses stored relative to it ride along rigidly."""
    if frame_id not in demo.frames:
        raise KeyError(f"unknown frame {frame_id!r}")
    frames = dict(demo.frames)
    frames[frame_id] = pose
    return replace(demo, frames=frames)
