"""Independent reference computations used by several test modules.

These deliberately avoid the library's own code paths: the pose logarithm
comes from a dense matrix log, distances from surface sampling, and the
optimal-control value from a Riccati recursion.
"""

import numpy as np
import scipy.linalg

from guidedtamp.geom import Pose


def pose_to_matrix(p: Pose) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = p.rotation
    T[:3, 3] = p.translation
    return T


def matrix_log_twist(a: Pose, b: Pose) -> np.ndarray:
    """Relative twist [linear, angular] via scipy's dense matrix logarithm."""
    rel = np.linalg.inv(pose_to_matrix(a)) @ pose_to_matrix(b)
    L = scipy.linalg.logm(rel)
    L = np.real(L)
    w = np.array([L[2, 1], L[0, 2], L[1, 0]])
    return np.concatenate([L[:3, 3], w])


def box_surface_points(half: np.ndarray, n_total: int = 100_000) -> np.ndarray:
    """Deterministic grid over all six faces, densities proportional to area."""
    hx, hy, hz = half
    faces = [
        (0, hx, (1, 2)), (0, -hx, (1, 2)),
        (1, hy, (0, 2)), (1, -hy, (0, 2)),
        (2, hz, (0, 1)), (2, -hz, (0, 1)),
    ]
    areas = [4 * half[u] * half[v] for _, _, (u, v) in faces]
    total = sum(areas)
    pts = []
    for (axis, value, (u, v)), area in zip(faces, areas):
        n_face = max(4, int(n_total * area / total))
        n_side = max(2, int(np.sqrt(n_face)))
        us = np.linspace(-half[u], half[u], n_side)
        vs = np.linspace(-half[v], half[v], n_side)
        U, V = np.meshgrid(us, vs)
        P = np.zeros((U.size, 3))
        P[:, axis] = value
        P[:, u] = U.ravel()
        P[:, v] = V.ravel()
        pts.append(P)
    return np.vstack(pts)


def sphere_box_distance_oracle(radius: float, sphere_pose: Pose, half: np.ndarray,
                               box_pose: Pose, n: int = 100_000) -> float:
    """Signed sphere-box distance from dense box-surface sampling."""
    center = box_pose.inverse().apply(sphere_pose.translation)
    surface = box_surface_points(np.asarray(half, dtype=float), n)
    d_surf = float(np.min(np.linalg.norm(surface - center, axis=1)))
    inside = bool(np.all(np.abs(center) <= half))
    if inside:
        return -(d_surf + radius)
    return d_surf - radius


def lqr_tracking_controls(A, B, x0, Qs, qlins, R, H):
    """Exact minimizer of a linear-quadratic tracking problem.

    Cost: sum_{t=0..H} (x_t' Q_t x_t + 2 qlin_t' x_t) + sum_{t<H} u_t' R u_t,
    subject to x_{t+1} = A x_t + B u_t. Solved in closed form as a dense
    least-squares problem in the stacked controls, which is the same optimum
    the Riccati recursion produces; cross-checked against it in the tests.
    """
    n = A.shape[0]
    m = B.shape[1]
    # X = G U + f, stacked over t = 0..H
    G = np.zeros(((H + 1) * n, H * m))
    f = np.zeros((H + 1) * n)
    Apow = [np.eye(n)]
    for _ in range(H):
        Apow.append(A @ Apow[-1])
    for t in range(H + 1):
        f[t * n:(t + 1) * n] = Apow[t] @ x0
        for i in range(t):
            G[t * n:(t + 1) * n, i * m:(i + 1) * m] = Apow[t - 1 - i] @ B
    Qblk = np.zeros(((H + 1) * n, (H + 1) * n))
    qblk = np.zeros((H + 1) * n)
    for t in range(H + 1):
        Qblk[t * n:(t + 1) * n, t * n:(t + 1) * n] = Qs[t]
        qblk[t * n:(t + 1) * n] = qlins[t]
    Rblk = np.kron(np.eye(H), R)
    Hess = G.T @ Qblk @ G + Rblk
    rhs = -G.T @ (Qblk @ f + qblk)
    U = np.linalg.solve(Hess, rhs)
    return U.reshape(H, m)


def riccati_tracking_controls(A, B, x0, Qs, qlins, R, H):
    """The same optimum via the affine Riccati recursion (independent route)."""
    P = Qs[H].copy()
    p = qlins[H].copy()
    Ks, ks = [None] * H, [None] * H
    for t in range(H - 1, -1, -1):
        Quu = R + B.T @ P @ B
        K = -np.linalg.solve(Quu, B.T @ P @ A)
        k = -np.linalg.solve(Quu, B.T @ p)
        Ks[t], ks[t] = K, k
        P = Qs[t] + A.T @ P @ A - K.T @ Quu @ K
        P = 0.5 * (P + P.T)
        p = qlins[t] + A.T @ p - K.T @ Quu @ k
    us = []
    x = x0.copy()
    for t in range(H):
        u = Ks[t] @ x + ks[t]
        us.append(u)
        x = A @ x + B @ u
    return np.array(us)
