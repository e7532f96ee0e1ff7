"""Benchmark scenes and their synthetic demonstrations.

Three tasks: rearranging boxes between a table and a shelf, pushing-free
transfer of a box through a tunnel (place inside from one mouth, regrasp from
the other), and a waiter run where a mobile robot ferries objects between two
tables on a body-mounted tray. Dimensions are fixtures chosen at desk scale;
each generator is deterministic and doubles as the reference producer of the
demonstration files consumed by the planner.

All placement poses rest 1 mm proud of their support surface so contact never
flips the binary collision test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .cspace import CollisionWorld, FixedPose, Handle, WorldBody
from .demo import (ContactEvent, Demonstration, GRASP, NONE, RELEASE,
                   ROBOT_FRAME, WORLD_FRAME, make_demonstration, shape_from_dict,
                   shape_to_dict)
from .geom import Box, Pose, Shape, quat_from_axis_angle
from .planner import SurfaceRegion
from .robot import RobotModel, builtin_model

TASKS = ("shelf-1", "shelf-2", "shelf-3", "tunnel", "waiter")

REST_EPS = 1e-3

# object catalogue, half extents in meters
CATALOGUE: dict[str, Box] = {
    "crackers": Box([0.030, 0.079, 0.105]),
    "sugar": Box([0.024, 0.047, 0.088]),
    "soup": Box([0.033, 0.033, 0.051]),
    "block": Box([0.045, 0.045, 0.045]),
}


@dataclass(frozen=True)
class FurnitureSpec:
    name: str
    shape: Shape
    frame: str
    rel: Pose


@dataclass(frozen=True)
class RegionSpec:
    name: str
    frame: str
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    z: float  # surface height relative to the frame


@dataclass(frozen=True)
class Scene:
    """Static task description; world poses resolve through the frames map."""

    name: str
    frames: dict[str, Pose]
    furniture: tuple[FurnitureSpec, ...]
    regions: tuple[RegionSpec, ...]
    objects: dict[str, Shape]
    handles: dict[str, tuple[Handle, ...]]
    robot_name: str
    robot_mount: Pose
    q_start: np.ndarray
    q_goal: np.ndarray

    def frame_pose(self, frame_id: str) -> Pose:
        if frame_id == WORLD_FRAME:
            return Pose.identity()
        return self.frames[frame_id]

    def with_frame(self, frame_id: str, pose: Pose) -> "Scene":
        if frame_id not in self.frames:
            raise KeyError(f"unknown frame {frame_id!r}")
        frames = dict(self.frames)
        frames[frame_id] = pose
        return replace(self, frames=frames)

    def with_objects(self, objects: dict[str, Shape]) -> "Scene":
        return replace(self, objects=dict(objects))

    def world_furniture(self) -> list[WorldBody]:
        out = []
        for f in self.furniture:
            if f.frame == ROBOT_FRAME:
                out.append(WorldBody(f.name, f.shape, FixedPose(ROBOT_FRAME, f.rel)))
            else:
                out.append(WorldBody(f.name, f.shape,
                                     FixedPose(WORLD_FRAME, self.frame_pose(f.frame) @ f.rel)))
        return out

    def world_regions(self) -> list[SurfaceRegion]:
        out = []
        for r in self.regions:
            base = self.frame_pose(r.frame).translation
            out.append(SurfaceRegion(r.name, base[0] + r.xmin, base[0] + r.xmax,
                                     base[1] + r.ymin, base[1] + r.ymax, base[2] + r.z))
        return out

    def robot(self) -> RobotModel:
        return builtin_model(self.robot_name).with_mount(self.robot_mount)

    def collision_world(self, robot: RobotModel | None = None) -> CollisionWorld:
        return CollisionWorld(robot or self.robot(), self.world_furniture(),
                              dict(self.objects))


GRIP_STANDOFF = 0.04  # gripper-origin gap off the grasped face, meters


def box_handles(obj: str, shape: Box, labels: tuple[str, ...]) -> tuple[Handle, ...]:
    """Canonical grasp transforms for an upright box.

    The gripper origin hovers GRIP_STANDOFF off the grasped face with the
    approach axis (+z) pointing into the object; the gap stands in for the
    unmodeled fingers, and keeps the hand spheres clear of the object in
    placement states where the pair is collision-active.
    """
    hx, hy, hz = (float(v) for v in shape.half_extents)
    s = GRIP_STANDOFF
    defs = {
        "top": Pose.from_axis_angle([1, 0, 0], np.pi, t=[0.0, 0.0, hz + s]),
        "side_xp": Pose.from_axis_angle([0, 1, 0], -np.pi / 2, t=[hx + s, 0.0, 0.25 * hz]),
        "side_xm": Pose.from_axis_angle([0, 1, 0], np.pi / 2, t=[-hx - s, 0.0, 0.25 * hz]),
        "side_yp": Pose.from_axis_angle([1, 0, 0], np.pi / 2, t=[0.0, hy + s, 0.25 * hz]),
        "side_ym": Pose.from_axis_angle([1, 0, 0], -np.pi / 2, t=[0.0, -hy - s, 0.25 * hz]),
    }
    return tuple(Handle(obj, defs[label], label) for label in labels)


def rest(shape: Shape, x: float, y: float, z_surface: float, yaw: float = 0.0) -> Pose:
    """Upright pose resting on a horizontal surface at local height z_surface."""
    hz = float(shape.half_extents[2]) if isinstance(shape, Box) else shape.radius
    return Pose(np.array([x, y, z_surface + hz + REST_EPS]),
                quat_from_axis_angle([0, 0, 1], yaw))


def _pick_place_events(moves: list[tuple[str, tuple[str, Pose], tuple[str, Pose]]],
                       all_objects: list[str],
                       initial: dict[str, tuple[str, Pose]]) -> list[ContactEvent]:
    """Grasp/release event pairs for a sequence of single-object moves."""
    poses = dict(initial)
    events: list[ContactEvent] = []
    k = 0
    for obj, _, dst in moves:
        k += 1
        events.append(ContactEvent(k, {o: (GRASP if o == obj else NONE) for o in all_objects},
                                   dict(poses)))
        poses[obj] = dst
        k += 1
        events.append(ContactEvent(k, {o: (RELEASE if o == obj else NONE) for o in all_objects},
                                   dict(poses)))
    return events


# -- task generators ----------------------------------------------------------------

_TABLE_TOP = 0.75


def _table(frame: str = "table") -> FurnitureSpec:
    return FurnitureSpec("table_slab", Box([0.60, 0.40, 0.015]), frame,
                         Pose.from_translation([0.0, 0.0, -0.015]))


def _shelf_scene(n_objects: int) -> tuple[Scene, Demonstration]:
    frames = {
        "table": Pose.from_translation([0.0, 0.0, _TABLE_TOP]),
        "shelf": Pose.from_translation([0.0, 0.40, _TABLE_TOP]),
    }
    furniture = [
        _table(),
        FurnitureSpec("board1", Box([0.35, 0.14, 0.01]), "shelf",
                      Pose.from_translation([0.0, 0.0, 0.30])),
        FurnitureSpec("board2", Box([0.35, 0.14, 0.01]), "shelf",
                      Pose.from_translation([0.0, 0.0, 0.60])),
        FurnitureSpec("back", Box([0.35, 0.01, 0.36]), "shelf",
                      Pose.from_translation([0.0, 0.15, 0.35])),
        FurnitureSpec("side_l", Box([0.01, 0.15, 0.36]), "shelf",
                      Pose.from_translation([-0.36, 0.0, 0.35])),
        FurnitureSpec("side_r", Box([0.01, 0.15, 0.36]), "shelf",
                      Pose.from_translation([0.36, 0.0, 0.35])),
    ]
    regions = [
        RegionSpec("table", "table", -0.45, 0.45, -0.25, 0.22, 0.0),
        RegionSpec("board1", "shelf", -0.30, 0.30, -0.10, 0.10, 0.31),
        RegionSpec("board2", "shelf", -0.30, 0.30, -0.10, 0.10, 0.61),
    ]
    picks = [("sugar", (-0.18, 0.06), ("shelf", (-0.15, 0.0, 0.31))),
             ("block", (0.16, 0.02), ("shelf", (0.14, 0.0, 0.61))),
             ("soup", (-0.02, 0.16), ("table", (0.30, 0.12, 0.0)))]
    objects, handles, moves, initial = {}, {}, [], {}
    for i in range(n_objects):
        name, (sx, sy), (gframe, (gx, gy, gz)) = picks[i]
        shape = CATALOGUE[name]
        objects[name] = shape
        handles[name] = box_handles(name, shape, ("top", "side_ym"))
        src = ("table", rest(shape, sx, sy, 0.0))
        dst = (gframe, rest(shape, gx, gy, gz))
        initial[name] = src
        moves.append((name, src, dst))
    events = _pick_place_events(moves, list(objects), initial)
    demo = make_demonstration(objects, frames, events)
    robot_mount = Pose.from_translation([0.0, -0.32, _TABLE_TOP])
    model = builtin_model("panda7")
    scene = Scene(f"shelf-{n_objects}", frames, tuple(furniture), tuple(regions),
                  objects, {o: tuple(h) for o, h in handles.items()},
                  "panda7", robot_mount, model.home.copy(), model.home.copy())
    return scene, demo


def _tunnel_scene() -> tuple[Scene, Demonstration]:
    frames = {
        "table": Pose.from_translation([0.0, 0.0, _TABLE_TOP]),
        "tunnel": Pose.from_translation([0.10, 0.10, _TABLE_TOP]),
    }
    # Square tube along x: interior 0.25 wide, 0.25 tall, 0.50 long. Two short
    # backstop walls make the start graspable only from the west and the goal
    # only from the east; with exact placement equality, the only way to swap
    # sides is an intermediate placement, and the demonstrated one is inside
    # the tunnel bore.
    furniture = [
        _table(),
        FurnitureSpec("wall_l", Box([0.25, 0.02, 0.125]), "tunnel",
                      Pose.from_translation([0.0, 0.145, 0.125])),
        FurnitureSpec("wall_r", Box([0.25, 0.02, 0.125]), "tunnel",
                      Pose.from_translation([0.0, -0.145, 0.125])),
        FurnitureSpec("roof", Box([0.25, 0.165, 0.02]), "tunnel",
                      Pose.from_translation([0.0, 0.0, 0.27])),
        FurnitureSpec("backstop_start", Box([0.02, 0.10, 0.10]), "table",
                      Pose.from_translation([-0.178, -0.16, 0.10])),
        FurnitureSpec("cheek_start_n", Box([0.07, 0.02, 0.08]), "table",
                      Pose.from_translation([-0.24, -0.055, 0.08])),
        FurnitureSpec("cheek_start_s", Box([0.07, 0.02, 0.08]), "table",
                      Pose.from_translation([-0.24, -0.265, 0.08])),
        FurnitureSpec("backstop_goal", Box([0.02, 0.07, 0.06]), "table",
                      Pose.from_translation([0.438, -0.18, 0.06])),
        FurnitureSpec("cheek_goal_n", Box([0.07, 0.02, 0.08]), "table",
                      Pose.from_translation([0.50, -0.075, 0.08])),
        FurnitureSpec("cheek_goal_s", Box([0.07, 0.02, 0.08]), "table",
                      Pose.from_translation([0.50, -0.285, 0.08])),
    ]
    # declared contact surfaces: the start and goal nooks behind their
    # backstops plus the tunnel floor (the rest of the tabletop is not a
    # placement surface in this task)
    regions = [
        RegionSpec("start_nook", "table", -0.265, -0.215, -0.18, -0.14, 0.0),
        RegionSpec("goal_nook", "table", 0.475, 0.525, -0.20, -0.16, 0.0),
        RegionSpec("tunnel_floor", "tunnel", -0.20, 0.20, -0.08, 0.08, 0.0),
    ]
    obj = "sugar"
    shape = CATALOGUE[obj]
    objects = {obj: shape}
    handles = {obj: box_handles(obj, shape, ("side_xp", "side_xm"))}
    start = ("table", rest(shape, -0.24, -0.16, 0.0))
    inside = ("tunnel", rest(shape, 0.0, 0.0, 0.0))
    goal = ("table", rest(shape, 0.50, -0.18, 0.0))
    events = _pick_place_events([(obj, start, inside), (obj, inside, goal)],
                                [obj], {obj: start})
    demo = make_demonstration(objects, frames, events)
    robot_mount = Pose.from_translation([0.10, -0.35, _TABLE_TOP])
    model = builtin_model("panda7")
    scene = Scene("tunnel", frames, tuple(furniture), tuple(regions), objects,
                  handles, "panda7", robot_mount, model.home.copy(), model.home.copy())
    return scene, demo


def _waiter_scene() -> tuple[Scene, Demonstration]:
    frames = {
        "table": Pose.from_translation([0.0, 0.0, _TABLE_TOP]),
        "table2": Pose.from_translation([0.0, -2.50, _TABLE_TOP]),
    }
    furniture = [
        _table("table"),
        FurnitureSpec("leg_box", Box([0.50, 0.30, 0.36]), "table",
                      Pose.from_translation([0.0, 0.0, -0.39])),
        _table("table2"),
        FurnitureSpec("leg_box2", Box([0.50, 0.30, 0.36]), "table2",
                      Pose.from_translation([0.0, 0.0, -0.39])),
        FurnitureSpec("tray", Box([0.20, 0.15, 0.012]), ROBOT_FRAME,
                      Pose.from_translation([-0.38, 0.0, 0.60])),
    ]
    regions = [
        RegionSpec("table", "table", -0.45, 0.45, -0.30, 0.30, 0.0),
        RegionSpec("table2", "table2", -0.45, 0.45, -0.30, 0.30, 0.0),
    ]
    names = ["soup", "block"]
    objects = {n: CATALOGUE[n] for n in names}
    handles = {n: box_handles(n, objects[n], ("top", "side_ym", "side_yp"))
               for n in names}
    tray_top = 0.612  # in the robot base frame
    starts = {"soup": ("table", rest(objects["soup"], -0.15, 0.05, 0.0)),
              "block": ("table", rest(objects["block"], 0.15, 0.08, 0.0))}
    on_tray = {"soup": (ROBOT_FRAME, rest(objects["soup"], -0.42, 0.06, tray_top)),
               "block": (ROBOT_FRAME, rest(objects["block"], -0.31, -0.06, tray_top))}
    goals = {"soup": ("table2", rest(objects["soup"], -0.12, 0.10, 0.0)),
             "block": ("table2", rest(objects["block"], 0.16, 0.06, 0.0))}
    moves = [("soup", starts["soup"], on_tray["soup"]),
             ("block", starts["block"], on_tray["block"]),
             ("soup", on_tray["soup"], goals["soup"]),
             ("block", on_tray["block"], goals["block"])]
    events = _pick_place_events(moves, names, dict(starts))
    demo = make_demonstration(objects, frames, events)
    model = builtin_model("kmr")
    q_start = model.home.copy()
    q_start[:3] = [0.0, -1.05, np.pi / 2]
    q_goal = model.home.copy()
    q_goal[:3] = [0.0, -1.55, np.pi / 2]
    scene = Scene("waiter", frames, tuple(furniture), tuple(regions), objects,
                  handles, "kmr", Pose.identity(), q_start, q_goal)
    return scene, demo


def scene_to_json(scene: Scene) -> str:
    """Serialize a scene, including handle definitions, to the file schema."""
    return json.dumps({
        "name": scene.name,
        "frames": [{"id": fid, **p.to_dict()} for fid, p in sorted(scene.frames.items())],
        "furniture": [{"name": f.name, "shape": shape_to_dict(f.shape),
                       "frame": f.frame, **f.rel.to_dict()} for f in scene.furniture],
        "regions": [{"name": r.name, "frame": r.frame, "xmin": r.xmin, "xmax": r.xmax,
                     "ymin": r.ymin, "ymax": r.ymax, "z": r.z} for r in scene.regions],
        "objects": [{"id": oid, "shape": shape_to_dict(shape),
                     "handles": [{"label": h.label, **h.grip.to_dict()}
                                 for h in scene.handles.get(oid, ())]}
                    for oid, shape in sorted(scene.objects.items())],
        "robot": {"model": scene.robot_name, "mount": scene.robot_mount.to_dict()},
        "q_start": [float(v) for v in scene.q_start],
        "q_goal": [float(v) for v in scene.q_goal],
    }, indent=2, sort_keys=True)


def scene_from_json(data: str | bytes) -> Scene:
    doc = json.loads(data)
    frames = {f["id"]: Pose.from_dict(f) for f in doc["frames"]}
    furniture = tuple(FurnitureSpec(f["name"], shape_from_dict(f["shape"]), f["frame"],
                                    Pose.from_dict(f)) for f in doc["furniture"])
    regions = tuple(RegionSpec(r["name"], r["frame"], r["xmin"], r["xmax"],
                               r["ymin"], r["ymax"], r["z"]) for r in doc["regions"])
    objects = {}
    handles = {}
    for o in doc["objects"]:
        objects[o["id"]] = shape_from_dict(o["shape"])
        handles[o["id"]] = tuple(Handle(o["id"], Pose.from_dict(h), h["label"])
                                 for h in o["handles"])
    mount = Pose.from_dict(doc["robot"]["mount"])
    return Scene(doc["name"], frames, furniture, regions, objects, handles,
                 doc["robot"]["model"], mount,
                 np.array(doc["q_start"], dtype=float),
                 np.array(doc["q_goal"], dtype=float))


def build_scene(task: str, robot: str | None = None) -> tuple[Scene, Demonstration]:
    """Deterministic scene + demonstration for one benchmark task."""
    if task == "shelf-1":
        scene, demo = _shelf_scene(1)
    elif task == "shelf-2":
        scene, demo = _shelf_scene(2)
    elif task == "shelf-3":
        scene, demo = _shelf_scene(3)
    elif task == "tunnel":
        scene, demo = _tunnel_scene()
    elif task == "waiter":
        scene, demo = _waiter_scene()
    else:
        raise KeyError(f"unknown task {task!r}; expected one of {TASKS}")
    if robot is not None and robot != scene.robot_name:
        if task == "waiter" and robot != "kmr":
            raise ValueError("the waiter task runs only on the kmr robot")
        model = builtin_model(robot)
        mount = scene.robot_mount if robot != "kmr" else Pose.identity()
        q_start = model.home.copy()
        q_goal = model.home.copy()
        if robot == "kmr":
            q_start[:3] = [0.0, -1.05, np.pi / 2]
            q_goal[:3] = [0.0, -1.05, np.pi / 2]
        scene = replace(scene, robot_name=robot, robot_mount=mount,
                        q_start=q_start, q_goal=q_goal)
    return scene, demo
