"""Rigid transforms, SE(3) log/exp, and analytic distance queries for primitive shapes.

Conventions: quaternions are (w, x, y, z), translations in meters, angles in
radians. The relative log between two poses is log(a^-1 * b); distances are
positive for separation and negative for penetration depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fast import box_box_sat


class UnsupportedShapePairError(TypeError):
    """Raised for shape pairs with no analytic distance routine."""


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero-length vector")
    return v / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method).

    The branch is selected by the largest of trace and diagonal elements,
    which keeps the extraction well-conditioned at rotation angle pi.
    """
    t = np.trace(R)
    if t > max(R[0, 0], R[1, 1], R[2, 2]):
        r = np.sqrt(1.0 + t)
        s = 0.5 / r
        q = np.array([0.5 * r, (R[2, 1] - R[1, 2]) * s,
                      (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        r = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        s = 0.5 / r
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) * s
        q[1 + i] = 0.5 * r
        q[1 + j] = (R[j, i] + R[i, j]) * s
        q[1 + k] = (R[k, i] + R[i, k]) * s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = _unit(np.asarray(axis, dtype=float))
    h = 0.5 * angle
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


def hat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rotvec_to_matrix(w: np.ndarray) -> np.ndarray:
    """SO(3) exponential by the Rodrigues formula, with a small-angle series."""
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < 1e-8:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = np.sin(th) / th
    b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * W + b * (W @ W)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Canonical rotation vector with angle in [0, pi]."""
    if q[0] < 0.0:
        q = -q
    n = float(np.linalg.norm(q[1:]))
    if n < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(n, q[0])
    return (angle / n) * q[1:]


@dataclass(frozen=True)
class Pose:
    """Rigid transform in SE(3): rotation quaternion (w,x,y,z) plus translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        q = np.asarray(self.quaternion, dtype=float).reshape(4).copy()
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n:.2e} too far from 1")
        q /= n
        t.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(t) -> "Pose":
        return Pose(np.asarray(t, dtype=float))

    @staticmethod
    def from_axis_angle(axis, angle: float, t=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(np.asarray(t, dtype=float), quat_from_axis_angle(axis, angle))

    @staticmethod
    def from_matrix(R: np.ndarray, t) -> "Pose":
        return Pose(np.asarray(t, dtype=float), matrix_to_quat(R))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.translation + self.rotation @ other.translation,
                    quat_mul(self.quaternion, other.quaternion))

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.quaternion)
        return Pose(-(quat_to_matrix(qi) @ self.translation), qi)

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def is_close(self, other: "Pose", tol: float = 1e-9) -> bool:
        if np.linalg.norm(self.translation - other.translation) > tol:
            return False
        # q and -q encode the same rotation
        return (np.linalg.norm(self.quaternion - other.quaternion) <= tol
                or np.linalg.norm(self.quaternion + other.quaternion) <= tol)

    def to_dict(self) -> dict:
        return {"t": [float(v) for v in self.translation],
                "q": [float(v) for v in self.quaternion]}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.array(d["t"], dtype=float), np.array(d["q"], dtype=float))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.translation, other.translation)
                and np.array_equal(self.quaternion, other.quaternion))

    def __hash__(self) -> int:
        return hash((self.translation.tobytes(), self.quaternion.tobytes()))


@dataclass(frozen=True)
class Twist:
    """SE(3) log coordinates: linear part rho and angular part omega."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    def squared_norm(self) -> float:
        return float(self.linear @ self.linear + self.angular @ self.angular)


def _v_inverse(w: np.ndarray) -> np.ndarray:
    """Inverse of the left Jacobian V of SO(3), mapping translation to rho."""
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < 1e-6:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    c = (1.0 / (th * th)) - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) - 0.5 * W + c * (W @ W)


def _v_matrix(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < 1e-6:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    a = (1.0 - np.cos(th)) / (th * th)
    b = (th - np.sin(th)) / (th ** 3)
    return np.eye(3) + a * W + b * (W @ W)


def se3_log(a: Pose, b: Pose) -> Twist:
    """Relative twist log(a^-1 * b); zero iff a equals b.

    At rotation angle exactly pi the axis sign follows the quaternion
    extracted by Shepperd's largest-diagonal branch.
    """
    rel = a.inverse() @ b
    w = quat_to_rotvec(rel.quaternion)
    rho = _v_inverse(w) @ rel.translation
    return Twist(rho, w)


def se3_exp(t: Twist) -> Pose:
    """Exponential of a twist; inverse of se3_log for angles below pi."""
    R = rotvec_to_matrix(t.angular)
    return Pose.from_matrix(R, _v_matrix(t.angular) @ t.linear)


def pose_distance_sq(a: Pose, b: Pose) -> float:
    """Squared norm of the relative SE(3) log between two poses."""
    return se3_log(a, b).squared_norm()


# --------------------------------------------------------------------------
# Collision primitives
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    """Sphere primitive; the local pose offsets it inside its owning body frame."""

    radius: float
    local: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in its own frame, given by half extents."""

    half_extents: np.ndarray
    local: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float).reshape(3).copy()
        if np.any(h <= 0.0):
            raise ValueError("box half extents must be positive")
        h.flags.writeable = False
        object.__setattr__(self, "half_extents", h)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.half_extents, other.half_extents) and self.local == other.local

    def __hash__(self) -> int:
        return hash((self.half_extents.tobytes(), self.local))


Shape = Sphere | Box


def point_box_signed_distance(p: np.ndarray, half: np.ndarray) -> float:
    """Signed distance from a point to a box centered at the origin.

    Negative inside, with magnitude equal to the distance to the nearest face.
    """
    d = np.abs(p) - half
    outside = np.maximum(d, 0.0)
    return float(np.linalg.norm(outside) + min(np.max(d), 0.0))


def points_box_signed_distance(pts: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Vectorized point_box_signed_distance over an (n, 3) array."""
    d = np.abs(pts) - half
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
    inside = np.minimum(np.max(d, axis=1), 0.0)
    return outside + inside


def _box_box_distance(h1: np.ndarray, pose1: Pose, h2: np.ndarray, pose2: Pose) -> float:
    """Separating-axis distance over face normals and edge cross products.

    Exact for separation along face normals; otherwise a lower bound on the
    separation (and an upper-bound estimate of penetration depth).
    """
    return float(box_box_sat(pose1.rotation, pose1.translation, h1,
                             pose2.rotation, pose2.translation, h2))


def signed_distance(shape1: Shape, pose1: Pose, shape2: Shape, pose2: Pose) -> float:
    """Distance between two placed shapes; negative values are penetration depth.

    Supported pairs: sphere-sphere and sphere-box (both exact), box-box
    (separating-axis approximation, see _box_box_distance).
    """
    p1 = pose1 @ shape1.local
    p2 = pose2 @ shape2.local
    if isinstance(shape1, Sphere) and isinstance(shape2, Sphere):
        return float(np.linalg.norm(p1.translation - p2.translation)
                     - shape1.radius - shape2.radius)
    if isinstance(shape1, Sphere) and isinstance(shape2, Box):
        center_local = p2.inverse().apply(p1.translation)
        return point_box_signed_distance(center_local, shape2.half_extents) - shape1.radius
    if isinstance(shape1, Box) and isinstance(shape2, Sphere):
        return signed_distance(shape2, pose2, shape1, pose1)
    if isinstance(shape1, Box) and isinstance(shape2, Box):
        return _box_box_distance(shape1.half_extents, p1, shape2.half_extents, p2)
    raise UnsupportedShapePairError(
        f"no distance routine for {type(shape1).__name__}-{type(shape2).__name__}")
