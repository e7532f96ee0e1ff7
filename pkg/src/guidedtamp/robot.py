"""Serial-chain robot model: forward kinematics, geometric Jacobian, joint limits.

Models are loaded from a small declarative text format (see load_robot_model)
and are immutable after construction. An optional planar base prepends three
holonomic degrees of freedom (x, y, yaw) to the joint vector. Link collision
geometry is a chain of spheres per link, which keeps every distance query
against boxes and spheres analytic.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ._fast import fk_chain, sphere_centers as _sphere_centers_kernel
from .geom import Pose, Sphere, hat, quat_from_axis_angle

REVOLUTE = 0
PRISMATIC = 1

_JOINT_TYPES = {"revolute": REVOLUTE, "prismatic": PRISMATIC}


@dataclass(frozen=True)
class Joint:
    name: str
    jtype: int
    axis: np.ndarray
    offset: Pose
    lower: float
    upper: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if n == 0.0:
            raise ValueError(f"joint {self.name}: zero axis")
        a = a / n
        a.flags.writeable = False
        object.__setattr__(self, "axis", a)
        if not self.lower < self.upper:
            raise ValueError(f"joint {self.name}: limits must satisfy lo < hi")


class RobotModel:
    """Kinematic chain with link sphere geometry; immutable after load."""

    def __init__(self, name: str, joints: list[Joint], *,
                 planar_base: bool = False,
                 base_limits: np.ndarray | None = None,
                 base_spheres: list[Sphere] | None = None,
                 gripper_offset: Pose = Pose.identity(),
                 gripper_links: tuple[str, ...] = (),
                 link_spheres: dict[str, list[Sphere]] | None = None,
                 home: np.ndarray | None = None,
                 mount: Pose = Pose.identity()):
        if not joints:
            raise ValueError("a robot needs at least one joint")
        self.name = name
        self.joints = tuple(joints)
        self.planar_base = planar_base
        self.base_spheres = tuple(base_spheres or ())
        self.gripper_offset = gripper_offset
        self.gripper_links = tuple(gripper_links)
        self.mount = mount
        link_spheres = link_spheres or {}
        for j in joints:
            if not link_spheres.get(j.name):
                raise ValueError(f"link {j.name} has no collision sphere")
        self.link_spheres = {j.name: tuple(link_spheres[j.name]) for j in joints}

        self.nbase = 3 if planar_base else 0
        self.dof = self.nbase + len(joints)
        lo = [j.lower for j in joints]
        hi = [j.upper for j in joints]
        if planar_base:
            bl = np.asarray(base_limits if base_limits is not None
                            else [[-2, 2], [-2, 2], [-np.pi, np.pi]], dtype=float)
            lo = list(bl[:, 0]) + lo
            hi = list(bl[:, 1]) + hi
        self.lower = np.array(lo)
        self.upper = np.array(hi)
        self.home = (np.asarray(home, dtype=float).copy() if home is not None
                     else 0.5 * (self.lower + self.upper))
        if self.home.shape != (self.dof,):
            raise ValueError(f"home has {self.home.size} values, model has {self.dof} DoFs")
        for arr in (self.lower, self.upper, self.home):
            arr.flags.writeable = False

        self._link_index = {j.name: i for i, j in enumerate(joints)}
        self._precompute()

    def _precompute(self):
        n = len(self.joints)
        self._R_off = np.stack([j.offset.rotation for j in self.joints])
        self._t_off = np.stack([j.offset.translation for j in self.joints])
        self._axes = np.stack([j.axis for j in self.joints])
        self._W = np.stack([hat(j.axis) for j in self.joints])
        self._W2 = np.stack([self._W[i] @ self._W[i] for i in range(n)])
        self._types = np.array([j.jtype for j in self.joints])
        self._R_grip = self.gripper_offset.rotation
        self._t_grip = self.gripper_offset.translation
        self._mount_R = self.mount.rotation
        self._mount_t = self.mount.translation
        # flat sphere arrays: link index -1 is the base body
        links, locs, rads = [], [], []
        for s in self.base_spheres:
            links.append(-1)
            locs.append(s.local.translation)
            rads.append(s.radius)
        for name, spheres in self.link_spheres.items():
            for s in spheres:
                links.append(self._link_index[name])
                locs.append(s.local.translation)
                rads.append(s.radius)
        self._sph_link = np.array(links, dtype=int)
        self._sph_local = np.array(locs, dtype=float).reshape(-1, 3)
        self._sph_radius = np.array(rads, dtype=float)
        self._grip_link_idx = {self._link_index[g] for g in self.gripper_links}
        self._sph_on_gripper = np.array(
            [li in self._grip_link_idx for li in self._sph_link], dtype=bool)

    def with_mount(self, mount: Pose) -> "RobotModel":
        return RobotModel(self.name, list(self.joints), planar_base=self.planar_base,
                          base_limits=np.stack([self.lower[:3], self.upper[:3]], axis=1)
                          if self.planar_base else None,
                          base_spheres=list(self.base_spheres),
                          gripper_offset=self.gripper_offset,
                          gripper_links=self.gripper_links,
                          link_spheres={k: list(v) for k, v in self.link_spheres.items()},
                          home=self.home, mount=mount)

    # -- kinematics ---------------------------------------------------------

    def _base_frame(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Rm, tm = self._mount_R, self._mount_t
        if not self.planar_base:
            return Rm, tm
        x, y, yaw = q[0], q[1], q[2]
        c, s = np.cos(yaw), np.sin(yaw)
        Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Rm @ Rz, tm + Rm @ np.array([x, y, 0.0])

    def frames(self, q: np.ndarray):
        """World frames (R, t) of the base, every link, and the gripper."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint values, got {q.shape}")
        Rb, tb, Rs, ts, Rg, tg = fk_chain(
            q, self.nbase, self._mount_R, self._mount_t,
            self._R_off, self._t_off, self._axes, self._types,
            self._W, self._W2, self._R_grip, self._t_grip)
        return ((Rb, tb), Rs, ts, (Rg, tg))

    def gripper_pose(self, q: np.ndarray) -> Pose:
        Rg, tg = self.frames(q)[3]
        return Pose.from_matrix(Rg, tg)

    def sphere_centers(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World centers and radii of all link collision spheres."""
        (Rb, tb), Rs, ts, _ = self.frames(q)
        centers = _sphere_centers_kernel(Rb, tb, Rs, ts, self._sph_link, self._sph_local)
        return centers, self._sph_radius


def forward_kinematics(model: RobotModel, q: np.ndarray) -> tuple[list[Pose], Pose]:
    """Poses of every link frame plus the gripper frame, in order."""
    _, Rs, ts, (Rg, tg) = model.frames(q)
    links = [Pose.from_matrix(Rs[i], ts[i]) for i in range(len(model.joints))]
    return links, Pose.from_matrix(Rg, tg)


def jacobian(model: RobotModel, q: np.ndarray, frame: str = "gripper") -> np.ndarray:
    """World-frame geometric Jacobian (linear rows stacked over angular rows).

    Columns of joints beyond the requested frame are zero.
    """
    (Rb, tb), Rs, ts, (Rg, tg) = model.frames(q)
    if frame == "gripper":
        last = len(model.joints) - 1
        p = tg
    else:
        if frame not in model._link_index:
            raise KeyError(f"unknown frame {frame!r}")
        last = model._link_index[frame]
        p = ts[last]
    J = np.zeros((6, model.dof))
    if model.planar_base:
        zb = model.mount.rotation @ np.array([0.0, 0.0, 1.0])
        J[:3, 0] = model.mount.rotation @ np.array([1.0, 0.0, 0.0])
        J[:3, 1] = model.mount.rotation @ np.array([0.0, 1.0, 0.0])
        J[:3, 2] = np.cross(zb, p - tb)
        J[3:, 2] = zb
    for i in range(last + 1):
        col = model.nbase + i
        z = Rs[i] @ model._axes[i]
        if model._types[i] == REVOLUTE:
            J[:3, col] = np.cross(z, p - ts[i])
            J[3:, col] = z
        else:
            J[:3, col] = z
    return J


def within_limits(model: RobotModel, q: np.ndarray) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(q >= model.lower) and np.all(q <= model.upper))


def reach_estimate(model: RobotModel) -> float:
    """Upper bound on gripper distance from the arm root: summed offset lengths."""
    total = float(np.linalg.norm(model.gripper_offset.translation))
    for j in model.joints:
        total += float(np.linalg.norm(j.offset.translation))
    return total


def sample_base_pose(model: RobotModel, targets: list[Pose], rng: np.random.Generator,
                     xy_bounds: tuple[float, float, float, float], z: float,
                     max_tries: int = 200) -> Pose | None:
    """Rejection-sample a fixed mount pose from which all targets look reachable.

    Heuristic acceptance: every target origin lies inside the annulus
    [0.25, 0.9] * reach_estimate around the mount. Returns None when no pose
    passes within max_tries.
    """
    reach = reach_estimate(model)
    xmin, xmax, ymin, ymax = xy_bounds
    for _ in range(max_tries):
        x = rng.uniform(xmin, xmax)
        y = rng.uniform(ymin, ymax)
        yaw = rng.uniform(-np.pi, np.pi)
        base = np.array([x, y, z])
        dists = [np.linalg.norm(t.translation - base) for t in targets]
        if all(0.25 * reach <= d <= 0.9 * reach for d in dists):
            return Pose.from_axis_angle([0, 0, 1], yaw, base)
    return None


# -- model file parsing ------------------------------------------------------

def _parse_pose(tokens: list[str]) -> Pose:
    vals = [float(v) for v in tokens]
    if len(vals) == 3:
        return Pose.from_translation(vals)
    if len(vals) == 7:
        return Pose(np.array(vals[:3]), np.array(vals[3:]))
    raise ValueError(f"pose needs 3 or 7 numbers, got {len(vals)}")


def load_robot_model(text: str) -> RobotModel:
    """Parse the declarative robot description format.

    Top-level directives: ``name``, ``base fixed|planar``, ``base_limits``
    (three lo/hi pairs when planar), ``base_sphere x y z r``, ``home``,
    ``gripper_offset tx ty tz qw qx qy qz``, ``gripper_links`` and ordered
    ``joint <name> revolute|prismatic`` blocks carrying ``axis``, ``offset``,
    ``limits lo hi`` and one or more ``sphere x y z r`` lines.
    """
    name = "unnamed"
    planar = False
    base_limits = None
    base_spheres: list[Sphere] = []
    gripper_offset = Pose.identity()
    gripper_links: tuple[str, ...] = ()
    home = None
    joints: list[Joint] = []
    link_spheres: dict[str, list[Sphere]] = {}
    current: dict | None = None

    def finish(block):
        if block is None:
            return
        joints.append(Joint(block["name"], block["type"], block.get("axis", [0, 0, 1]),
                            block.get("offset", Pose.identity()),
                            block["limits"][0], block["limits"][1]))
        link_spheres[block["name"]] = block.get("spheres", [])

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "joint":
            finish(current)
            if len(rest) != 2 or rest[1] not in _JOINT_TYPES:
                raise ValueError(f"bad joint header: {line!r}")
            current = {"name": rest[0], "type": _JOINT_TYPES[rest[1]]}
        elif current is not None and key in ("axis", "offset", "limits", "sphere"):
            if key == "axis":
                current["axis"] = [float(v) for v in rest]
            elif key == "offset":
                current["offset"] = _parse_pose(rest)
            elif key == "limits":
                current["limits"] = (float(rest[0]), float(rest[1]))
            else:
                x, y, z, r = (float(v) for v in rest)
                current.setdefault("spheres", []).append(
                    Sphere(r, Pose.from_translation([x, y, z])))
        elif key == "name":
            name = rest[0]
        elif key == "base":
            planar = rest[0] == "planar"
        elif key == "base_limits":
            vals = [float(v) for v in rest]
            base_limits = np.array(vals).reshape(3, 2)
        elif key == "base_sphere":
            x, y, z, r = (float(v) for v in rest)
            base_spheres.append(Sphere(r, Pose.from_translation([x, y, z])))
        elif key == "gripper_offset":
            gripper_offset = _parse_pose(rest)
        elif key == "gripper_links":
            gripper_links = tuple(rest)
        elif key == "home":
            home = np.array([float(v) for v in rest])
        else:
            raise ValueError(f"unknown directive {key!r}")
    finish(current)
    return RobotModel(name, joints, planar_base=planar, base_limits=base_limits,
                      base_spheres=base_spheres, gripper_offset=gripper_offset,
                      gripper_links=gripper_links, link_spheres=link_spheres, home=home)


def builtin_model(name: str) -> RobotModel:
    """Load one of the shipped robot fixtures: panda7, ur5ish or kmr."""
    path = resources.files("guidedtamp.models").joinpath(f"{name}.robot")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise KeyError(f"no builtin robot model {name!r}") from None
    return load_robot_model(text)
