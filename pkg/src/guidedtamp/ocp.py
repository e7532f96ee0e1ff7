"""Trajectory refinement: from a planned path to smooth torque-parameterized motion.

The planned path is resampled to equal joint-distance spacing, time-stamped
at a fixed dt, and refined by an iterative LQR solver over double-integrator
dynamics with zero gravity and a configurable diagonal inertia. The running
cost regularizes state (toward the planned path) and control, penalizes
joint-limit violations, and applies a squared barrier on clearances below a
safety margin; manifold-transition instants are keyframes whose gripper pose
is pulled toward the plan by a squared SE(3)-log distance. The state
regularizer starts strong so the solver follows the plan, then decays
geometrically so smoothness and clearance take over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cspace import CollisionWorld, StateManifold
from .geom import Pose, se3_log
from .planner import Path
from .robot import RobotModel

DEFAULT_DT = 0.05
DEFAULT_SPACING = 0.1

# collision pairs farther than d_safe + this margin contribute no derivatives
_COLLISION_SKIP_MARGIN = 0.05
_FD_STEP = 1e-5


class OcpDivergenceError(RuntimeError):
    """Cost became non-finite; carries the last iterate for inspection."""

    def __init__(self, message: str, qs: np.ndarray, us: np.ndarray):
        super().__init__(message)
        self.qs = qs
        self.us = us


@dataclass(frozen=True)
class OcpWeights:
    """Cost weights; relax_* control the geometric decay of the state regularizer."""

    w_d: float = 100.0
    w_x: float = 10.0
    w_u: float = 1e-3
    w_c: float = 50.0
    w_b: float = 100.0
    d_safe: float = 0.01
    relax_factor: float = 0.5
    relax_every: int = 10
    relax_floor: float = 1e-3  # floor as a fraction of the initial w_x

    def __post_init__(self):
        for name in ("w_d", "w_x", "w_u", "w_c", "w_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_safe <= 0:
            raise ValueError("d_safe must be positive")


@dataclass(frozen=True)
class OcpState:
    """Joint positions plus velocities."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.q.shape != self.v.shape:
            raise ValueError("q and v dimensions differ")


@dataclass(frozen=True)
class Trajectory:
    """Discrete states, controls, keyframes, and per-step manifold tags."""

    dt: float
    qs: np.ndarray                       # (H+1, n)
    vs: np.ndarray                       # (H+1, n)
    us: np.ndarray                       # (H, n)
    keyframes: tuple[tuple[int, Pose], ...]
    sids: tuple[str, ...]                # manifold id per time index

    @property
    def horizon(self) -> int:
        return len(self.us)

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.qs, axis=0), axis=1)))

    def to_json(self) -> str:
        return json.dumps({
            "dt": self.dt,
            "states": [{"q": list(map(float, q)), "v": list(map(float, v))}
                       for q, v in zip(self.qs, self.vs)],
            "controls": [list(map(float, u)) for u in self.us],
            "keyframes": [{"index": i, **pose.to_dict()} for i, pose in self.keyframes],
            "state_ids": list(self.sids),
        }, indent=2)

    @staticmethod
    def from_json(data: str | bytes) -> "Trajectory":
        doc = json.loads(data)
        qs = np.array([s["q"] for s in doc["states"]])
        vs = np.array([s["v"] for s in doc["states"]])
        us = np.array(doc["controls"]).reshape(len(doc["controls"]), qs.shape[1])
        kfs = tuple((int(k["index"]), Pose.from_dict(k)) for k in doc["keyframes"])
        return Trajectory(float(doc["dt"]), qs, vs, us, kfs, tuple(doc["state_ids"]))


def dynamics_step(x: OcpState, u: np.ndarray, dt: float,
                  inertia: np.ndarray | None = None) -> OcpState:
    """Semi-implicit Euler on a double integrator with diagonal inertia."""
    u = np.asarray(u, dtype=float)
    acc = u if inertia is None else u / inertia
    v = x.v + dt * acc
    return OcpState(x.q + dt * v, v)


def _limit_cost(q: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    lo = np.maximum(0.0, lower - q)
    hi = np.maximum(0.0, q - upper)
    return float(lo @ lo + hi @ hi)


def _clearance_vector(world: CollisionWorld, state: StateManifold,
                      q: np.ndarray) -> np.ndarray:
    # the "static" entry is constant in q and owned by the planner's feasibility
    pairs = world.clearance_pairs(state, q)
    return np.array([d for name, d in pairs if name != "static"])


def _collision_cost_from_vector(d: np.ndarray, d_safe: float) -> float:
    r = np.maximum(0.0, d_safe - d)
    return float(r @ r)


def running_cost(x: OcpState, u: np.ndarray | None, x_ref: OcpState,
                 weights: OcpWeights, world: CollisionWorld, model: RobotModel,
                 state: StateManifold, w_x: float | None = None) -> float:
    """Running cost of one timestep; pass u=None for the terminal step."""
    wx = weights.w_x if w_x is None else w_x
    dx = np.concatenate([x.q - x_ref.q, x.v - x_ref.v])
    total = wx * float(dx @ dx)
    if u is not None:
        u = np.asarray(u, dtype=float)
        total += weights.w_u * float(u @ u)
    if weights.w_c > 0:
        total += weights.w_c * _collision_cost_from_vector(
            _clearance_vector(world, state, x.q), weights.d_safe)
    if weights.w_b > 0:
        total += weights.w_b * _limit_cost(x.q, model.lower, model.upper)
    return total


# -- path preparation ---------------------------------------------------------------

def resample_path(path: Path, spacing: float = DEFAULT_SPACING
                  ) -> tuple[np.ndarray, list[str], list[int]]:
    """Equal joint-distance resampling, preserving transition waypoints.

    Returns the waypoint matrix, the manifold id per row, and the row indices
    of the transitions (state-change instants). Each same-state run is
    resampled independently so transition configurations stay exact.
    """
    wps = path.waypoints
    runs: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(wps)):
        if wps[i].state.sid != wps[start].state.sid:
            runs.append((start, i - 1))
            start = i
    runs.append((start, len(wps) - 1))

    rows: list[np.ndarray] = [wps[0].q]
    sids: list[str] = [wps[0].state.sid]
    kf_idx: list[int] = []
    for r, (a, b) in enumerate(runs):
        if r > 0:
            # transition twin: same coordinates, new manifold; one row
            kf_idx.append(len(rows) - 1)
            sids[-1] = wps[a].state.sid
        for i in range(a, b):
            qa, qb = wps[i].q, wps[i + 1].q
            seg = float(np.linalg.norm(qb - qa))
            steps = max(1, int(np.ceil(seg / spacing)))
            for s in range(1, steps + 1):
                rows.append(qa + (s / steps) * (qb - qa) if s < steps else qb)
                sids.append(wps[a].state.sid)
    return np.array(rows), sids, kf_idx


def extract_keyframes(path: Path, model: RobotModel,
                      spacing: float = DEFAULT_SPACING
                      ) -> tuple[list[int], dict[int, Pose]]:
    """Keyframe time indices and gripper targets after time parameterization.

    Transitions become keyframes; the final index is always one, so a path
    without transitions is held at its goal pose.
    """
    qs, _, kf_idx = resample_path(path, spacing)
    indices = list(kf_idx)
    last = len(qs) - 1
    if last not in indices:
        indices.append(last)
    targets = {i: model.gripper_pose(qs[i]) for i in indices}
    return indices, targets


# -- the iLQR solver ----------------------------------------------------------------

@dataclass
class RefineInfo:
    converged: bool
    warning: str | None
    iterations: int
    cost_history: list[float] = field(default_factory=list)

    @property
    def initial_cost(self) -> float:
        return self.cost_history[0]

    @property
    def final_cost(self) -> float:
        return self.cost_history[-1]


class _OcpProblem:
    """Cost and derivative evaluation for one refinement problem."""

    def __init__(self, model: RobotModel, world: CollisionWorld,
                 weights: OcpWeights, dt: float, q_ref: np.ndarray,
                 sids: list[str], keyframes: dict[int, Pose]):
        self.model = model
        self.world = world
        self.w = weights
        self.dt = dt
        self.n = model.dof
        self.H = len(q_ref) - 1
        self.sids = sids
        self.manifolds: list[StateManifold] = []
        self.keyframes = keyframes
        # backward-difference reference velocities: with semi-implicit Euler the
        # induced control warm start reproduces q_ref exactly, and v_ref[0] = 0
        # matches the initial state; the terminal reference velocity is zeroed
        # so the trajectory is asked to end at rest on the goal
        v_ref = np.zeros_like(q_ref)
        v_ref[1:] = np.diff(q_ref, axis=0) / dt
        v_ref[-1] = 0.0
        self.x_ref = np.hstack([q_ref, v_ref])
        n = self.n
        self.A = np.eye(2 * n)
        self.A[:n, n:] = dt * np.eye(n)
        self.B = np.vstack([dt * dt * np.eye(n), dt * np.eye(n)])

    def set_manifolds(self, states: dict[str, StateManifold]):
        self.manifolds = [states[s] for s in self.sids]

    def rollout(self, x0: np.ndarray, us: np.ndarray) -> np.ndarray:
        xs = np.empty((len(us) + 1, 2 * self.n))
        xs[0] = x0
        for t in range(len(us)):
            xs[t + 1] = self.A @ xs[t] + self.B @ us[t]
        return xs

    def _collision_terms(self, t: int, q: np.ndarray):
        """Value, gradient and Gauss-Newton Hessian of the barrier at one step."""
        state = self.manifolds[t]
        d = _clearance_vector(self.world, state, q)
        r = np.maximum(0.0, self.w.d_safe - d)
        value = float(r @ r)
        if np.min(d) > self.w.d_safe + _COLLISION_SKIP_MARGIN:
            return value, np.zeros(self.n), np.zeros((self.n, self.n))
        D = np.empty((len(d), self.n))
        for j in range(self.n):
            qp = q.copy()
            qp[j] += _FD_STEP
            qm = q.copy()
            qm[j] -= _FD_STEP
            D[:, j] = (_clearance_vector(self.world, state, qp)
                       - _clearance_vector(self.world, state, qm)) / (2 * _FD_STEP)
        active = r > 0.0
        grad = -2.0 * D[active].T @ r[active]
        hess = 2.0 * D[active].T @ D[active]
        return value, grad, hess

    def _keyframe_terms(self, t: int, q: np.ndarray):
        target = self.keyframes.get(t)
        if target is None:
            return 0.0, np.zeros(self.n), np.zeros((self.n, self.n))
        def residual(qq):
            return se3_log(self.model.gripper_pose(qq), target).as_vector()
        r = residual(q)
        J = np.empty((6, self.n))
        for j in range(self.n):
            qp = q.copy()
            qp[j] += _FD_STEP
            qm = q.copy()
            qm[j] -= _FD_STEP
            J[:, j] = (residual(qp) - residual(qm)) / (2 * _FD_STEP)
        value = float(r @ r)
        return value, 2.0 * J.T @ r, 2.0 * J.T @ J

    def _limit_terms(self, q: np.ndarray):
        lo = np.maximum(0.0, self.model.lower - q)
        hi = np.maximum(0.0, q - self.model.upper)
        value = float(lo @ lo + hi @ hi)
        grad = 2.0 * (hi - lo)
        hess = np.diag(2.0 * ((lo > 0) | (hi > 0)).astype(float))
        return value, grad, hess

    def stage_cost(self, t: int, x: np.ndarray, u: np.ndarray | None,
                   w_x: float) -> float:
        if t == self.H:
            w_x = self.w.w_x  # terminal anchor never relaxes: end at rest on goal
        dx = x - self.x_ref[t]
        c = w_x * float(dx @ dx)
        if u is not None:
            c += self.w.w_u * float(u @ u)
        q = x[:self.n]
        if self.w.w_c > 0:
            d = _clearance_vector(self.world, self.manifolds[t], q)
            c += self.w.w_c * _collision_cost_from_vector(d, self.w.d_safe)
        if self.w.w_b > 0:
            c += self.w.w_b * _limit_cost(q, self.model.lower, self.model.upper)
        if t in self.keyframes:
            r = se3_log(self.model.gripper_pose(q), self.keyframes[t]).as_vector()
            c += self.w.w_d * float(r @ r)
        return c

    def total_cost(self, xs: np.ndarray, us: np.ndarray, w_x: float) -> float:
        total = 0.0
        for t in range(self.H):
            total += self.stage_cost(t, xs[t], us[t], w_x)
        return total + self.stage_cost(self.H, xs[self.H], None, w_x)

    def stage_derivatives(self, t: int, x: np.ndarray, u: np.ndarray | None,
                          w_x: float):
        n = self.n
        if t == self.H:
            w_x = self.w.w_x
        dx = x - self.x_ref[t]
        lx = 2.0 * w_x * dx
        lxx = 2.0 * w_x * np.eye(2 * n)
        q = x[:n]
        if self.w.w_c > 0:
            _, g, h = self._collision_terms(t, q)
            lx[:n] += self.w.w_c * g
            lxx[:n, :n] += self.w.w_c * h
        if self.w.w_b > 0:
            _, g, h = self._limit_terms(q)
            lx[:n] += self.w.w_b * g
            lxx[:n, :n] += self.w.w_b * h
        if t in self.keyframes:
            _, g, h = self._keyframe_terms(t, q)
            lx[:n] += self.w.w_d * g
            lxx[:n, :n] += self.w.w_d * h
        if u is None:
            return lx, lxx, None, None
        lu = 2.0 * self.w.w_u * u
        luu = 2.0 * self.w.w_u * np.eye(n)
        return lx, lxx, lu, luu


def refine(path: Path, model: RobotModel, world: CollisionWorld,
           weights: OcpWeights = OcpWeights(), dt: float = DEFAULT_DT,
           spacing: float = DEFAULT_SPACING, max_iters: int = 120
           ) -> tuple[Trajectory, RefineInfo]:
    """Solve the refinement OCP with iterative LQR.

    The solver is initialized to track the resampled planned path under the
    full state regularizer, which then decays per the relaxation schedule.
    Accepted-iteration costs are monotone non-increasing (weight switches
    re-evaluate the unchanged iterate under the smaller regularizer, which
    cannot increase it). Raises OcpDivergenceError on non-finite cost;
    returns the best iterate with a warning when the iteration cap is hit
    before convergence.
    """
    q_ref, sids, kf_idx = resample_path(path, spacing)
    indices = list(kf_idx)
    last = len(q_ref) - 1
    if last not in indices:
        indices.append(last)
    keyframes = {i: model.gripper_pose(q_ref[i]) for i in indices}
    states = {w.state.sid: w.state for w in path.waypoints}
    prob = _OcpProblem(model, world, weights, dt, q_ref, sids, keyframes)
    prob.set_manifolds(states)

    n, H = prob.n, prob.H
    x0 = np.concatenate([q_ref[0], np.zeros(n)])
    # warm start: accelerations that track the reference velocities
    us = np.diff(prob.x_ref[:, n:], axis=0) / dt
    xs = prob.rollout(x0, us)

    w_x = weights.w_x
    floor = weights.relax_floor * weights.w_x
    mu = 1e-6
    cost = prob.total_cost(xs, us, w_x)
    if not np.isfinite(cost):
        raise OcpDivergenceError("initial cost is not finite", xs[:, :n], us)
    history = [cost]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if weights.relax_factor < 1.0 and it % weights.relax_every == 0 and w_x > floor:
            w_x = max(floor, w_x * weights.relax_factor)
            cost = prob.total_cost(xs, us, w_x)
            history.append(cost)
        # backward pass
        derivs = [prob.stage_derivatives(t, xs[t], us[t], w_x) for t in range(H)]
        lxH, lxxH, _, _ = prob.stage_derivatives(H, xs[H], None, w_x)
        while True:
            Vx, Vxx = lxH, lxxH
            ks: list[np.ndarray] = [None] * H
            Ks: list[np.ndarray] = [None] * H
            ok = True
            for t in range(H - 1, -1, -1):
                lx, lxx, lu, luu = derivs[t]
                Qx = lx + prob.A.T @ Vx
                Qu = lu + prob.B.T @ Vx
                Qxx = lxx + prob.A.T @ Vxx @ prob.A
                Qux = prob.B.T @ Vxx @ prob.A
                Quu = luu + prob.B.T @ Vxx @ prob.B + mu * np.eye(n)
                try:
                    np.linalg.cholesky(Quu)  # positive-definiteness gate
                except np.linalg.LinAlgError:
                    ok = False
                    break
                k = -np.linalg.solve(Quu, Qu)
                K = -np.linalg.solve(Quu, Qux)
                ks[t], Ks[t] = k, K
                Vx = Qx + K.T @ Quu @ k + K.T @ Qu + Qux.T @ k
                Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
                Vxx = 0.5 * (Vxx + Vxx.T)
            if ok:
                break
            mu *= 10.0
            if mu > 1e10:
                return _pack(prob, xs, us, keyframes, sids, dt), RefineInfo(
                    False, "backward pass failed to regularize", it, history)
        # forward pass with backtracking line search
        accepted = False
        for alpha in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125):
            xs_new = np.empty_like(xs)
            us_new = np.empty_like(us)
            xs_new[0] = x0
            for t in range(H):
                du = alpha * ks[t] + Ks[t] @ (xs_new[t] - xs[t])
                us_new[t] = us[t] + du
                xs_new[t + 1] = prob.A @ xs_new[t] + prob.B @ us_new[t]
            new_cost = prob.total_cost(xs_new, us_new, w_x)
            if not np.isfinite(new_cost):
                raise OcpDivergenceError(f"cost diverged at iteration {it}",
                                         xs_new[:, :n], us_new)
            if new_cost < cost - 1e-12:
                xs, us, cost = xs_new, us_new, new_cost
                history.append(cost)
                accepted = True
                mu = max(1e-8, mu * 0.3)
                break
        if not accepted:
            mu *= 10.0
            if mu > 1e9 and w_x <= floor:
                converged = True
                break
            if mu > 1e10:
                break
        else:
            improvement = (history[-2] - history[-1]) / max(abs(history[-2]), 1e-12)
            if w_x <= floor and improvement < 1e-9:
                converged = True
                break
    warning = None if converged else "iteration cap reached before convergence"
    return _pack(prob, xs, us, keyframes, sids, dt), RefineInfo(
        converged, warning, it, history)


def _pack(prob: _OcpProblem, xs: np.ndarray, us: np.ndarray,
          keyframes: dict[int, Pose], sids: list[str], dt: float) -> Trajectory:
    n = prob.n
    return Trajectory(dt, xs[:, :n].copy(), xs[:, n:].copy(), us.copy(),
                      tuple(sorted(keyframes.items())), tuple(sids))


def verify_trajectory(traj: Trajectory, world: CollisionWorld, model: RobotModel,
                      states: dict[str, StateManifold]) -> dict:
    """Rollout consistency, clearance, keyframe accuracy, and magnitude checks."""
    n = model.dof
    x = OcpState(traj.qs[0], traj.vs[0])
    rollout_err = 0.0
    for t in range(traj.horizon):
        x = dynamics_step(x, traj.us[t], traj.dt)
        rollout_err = max(rollout_err,
                          float(np.max(np.abs(x.q - traj.qs[t + 1]))),
                          float(np.max(np.abs(x.v - traj.vs[t + 1]))))
    clearances = [world.min_clearance(states[traj.sids[t]], traj.qs[t])
                  for t in range(len(traj.qs))]
    kf_errors = {int(i): float(se3_log(model.gripper_pose(traj.qs[i]), pose)
                               .squared_norm())
                 for i, pose in traj.keyframes}
    return {
        "rollout_error": rollout_err,
        "min_clearance": float(min(clearances)),
        "keyframe_errors": kf_errors,
        "max_keyframe_error": max(kf_errors.values()) if kf_errors else 0.0,
        "max_abs_control": float(np.max(np.abs(traj.us))) if len(traj.us) else 0.0,
        "max_abs_velocity": float(np.max(np.abs(traj.vs))),
        "length_rad": traj.length(),
    }
