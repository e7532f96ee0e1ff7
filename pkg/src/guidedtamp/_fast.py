"""Numba kernels for the hot paths: chain kinematics and sphere queries."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def fk_chain(q, nbase, mount_R, mount_t, R_off, t_off, axes, types, W, W2,
             grip_R, grip_t):
    """Frames of every link plus base and gripper for one joint vector."""
    n = types.shape[0]
    Rs = np.empty((n, 3, 3))
    ts = np.empty((n, 3))
    Rb = mount_R.copy()
    tb = mount_t.copy()
    if nbase == 3:
        c = np.cos(q[2])
        s = np.sin(q[2])
        Rz = np.empty((3, 3))
        Rz[0, 0] = c; Rz[0, 1] = -s; Rz[0, 2] = 0.0
        Rz[1, 0] = s; Rz[1, 1] = c; Rz[1, 2] = 0.0
        Rz[2, 0] = 0.0; Rz[2, 1] = 0.0; Rz[2, 2] = 1.0
        off = np.empty(3)
        off[0] = q[0]; off[1] = q[1]; off[2] = 0.0
        tb = mount_t + mount_R @ off
        Rb = mount_R @ Rz
    R = Rb.copy()
    t = tb.copy()
    for i in range(n):
        t = t + R @ t_off[i]
        R = R @ R_off[i]
        v = q[nbase + i]
        if types[i] == 0:
            sv = np.sin(v)
            cv = 1.0 - np.cos(v)
            Rj = np.eye(3) + sv * W[i] + cv * W2[i]
            R = R @ Rj
        else:
            t = t + R @ (axes[i] * v)
        Rs[i] = R
        ts[i] = t
    Rg = R @ grip_R
    tg = t + R @ grip_t
    return Rb, tb, Rs, ts, Rg, tg


@njit(cache=True)
def sphere_centers(Rb, tb, Rs, ts, sph_link, sph_local):
    m = sph_link.shape[0]
    centers = np.empty((m, 3))
    for k in range(m):
        li = sph_link[k]
        if li < 0:
            centers[k] = Rb @ sph_local[k] + tb
        else:
            centers[k] = Rs[li] @ sph_local[k] + ts[li]
    return centers


@njit(cache=True)
def min_spheres_vs_box(centers, radii, R, t, half):
    """Min signed distance of spheres against one oriented box."""
    best = np.inf
    for k in range(centers.shape[0]):
        lx = 0.0
        ly = 0.0
        lz = 0.0
        for r in range(3):
            d = centers[k, r] - t[r]
            lx += d * R[r, 0]
            ly += d * R[r, 1]
            lz += d * R[r, 2]
        dx = abs(lx) - half[0]
        dy = abs(ly) - half[1]
        dz = abs(lz) - half[2]
        ox = dx if dx > 0.0 else 0.0
        oy = dy if dy > 0.0 else 0.0
        oz = dz if dz > 0.0 else 0.0
        outside = np.sqrt(ox * ox + oy * oy + oz * oz)
        inside = dx
        if dy > inside:
            inside = dy
        if dz > inside:
            inside = dz
        if inside > 0.0:
            inside = 0.0
        d = outside + inside - radii[k]
        if d < best:
            best = d
    return best


@njit(cache=True)
def box_box_sat(R1, t1, h1, R2, t2, h2):
    """Separating-axis distance over face normals and edge cross products.

    Exact for face-normal separation; otherwise a lower bound on separation
    and an upper-bound estimate of penetration depth.
    """
    d = np.empty(3)
    for r in range(3):
        d[r] = t2[r] - t1[r]
    best = -np.inf
    axis = np.empty(3)
    for src in range(2):
        for i in range(3):
            for r in range(3):
                axis[r] = R1[r, i] if src == 0 else R2[r, i]
            r1 = 0.0
            r2 = 0.0
            for c in range(3):
                a1 = abs(axis[0] * R1[0, c] + axis[1] * R1[1, c] + axis[2] * R1[2, c])
                a2 = abs(axis[0] * R2[0, c] + axis[1] * R2[1, c] + axis[2] * R2[2, c])
                r1 += a1 * h1[c]
                r2 += a2 * h2[c]
            sep = abs(axis[0] * d[0] + axis[1] * d[1] + axis[2] * d[2]) - r1 - r2
            if sep > best:
                best = sep
    for i in range(3):
        for j in range(3):
            cx = R1[1, i] * R2[2, j] - R1[2, i] * R2[1, j]
            cy = R1[2, i] * R2[0, j] - R1[0, i] * R2[2, j]
            cz = R1[0, i] * R2[1, j] - R1[1, i] * R2[0, j]
            n = np.sqrt(cx * cx + cy * cy + cz * cz)
            if n <= 1e-12:
                continue
            axis[0] = cx / n
            axis[1] = cy / n
            axis[2] = cz / n
            r1 = 0.0
            r2 = 0.0
            for c in range(3):
                a1 = abs(axis[0] * R1[0, c] + axis[1] * R1[1, c] + axis[2] * R1[2, c])
                a2 = abs(axis[0] * R2[0, c] + axis[1] * R2[1, c] + axis[2] * R2[2, c])
                r1 += a1 * h1[c]
                r2 += a2 * h2[c]
            sep = abs(axis[0] * d[0] + axis[1] * d[1] + axis[2] * d[2]) - r1 - r2
            if sep > best:
                best = sep
    return best


@njit(cache=True)
def sphere_box_distance(c, r, R, t, half):
    lx = 0.0
    ly = 0.0
    lz = 0.0
    for k in range(3):
        d = c[k] - t[k]
        lx += d * R[k, 0]
        ly += d * R[k, 1]
        lz += d * R[k, 2]
    dx = abs(lx) - half[0]
    dy = abs(ly) - half[1]
    dz = abs(lz) - half[2]
    ox = dx if dx > 0.0 else 0.0
    oy = dy if dy > 0.0 else 0.0
    oz = dz if dz > 0.0 else 0.0
    outside = np.sqrt(ox * ox + oy * oy + oz * oz)
    inside = max(dx, max(dy, dz))
    if inside > 0.0:
        inside = 0.0
    return outside + inside - r


@njit(cache=True)
def _rotvec_of_matrix(R):
    """Canonical rotation vector; Shepperd branch keeps angle pi stable."""
    t = R[0, 0] + R[1, 1] + R[2, 2]
    q = np.empty(4)
    if t > max(R[0, 0], max(R[1, 1], R[2, 2])):
        r = np.sqrt(1.0 + t)
        s = 0.5 / r
        q[0] = 0.5 * r
        q[1] = (R[2, 1] - R[1, 2]) * s
        q[2] = (R[0, 2] - R[2, 0]) * s
        q[3] = (R[1, 0] - R[0, 1]) * s
    else:
        i = 0
        if R[1, 1] > R[0, 0]:
            i = 1
        if R[2, 2] > R[i, i]:
            i = 2
        j = (i + 1) % 3
        k = (i + 2) % 3
        r = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        s = 0.5 / r
        q[0] = (R[k, j] - R[j, k]) * s
        q[1 + i] = 0.5 * r
        q[1 + j] = (R[j, i] + R[i, j]) * s
        q[1 + k] = (R[k, i] + R[i, k]) * s
    if q[0] < 0.0:
        q = -q
    n = np.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    out = np.empty(3)
    if n < 1e-12:
        out[0] = 2.0 * q[1]
        out[1] = 2.0 * q[2]
        out[2] = 2.0 * q[3]
        return out
    angle = 2.0 * np.arctan2(n, q[0])
    out[0] = (angle / n) * q[1]
    out[1] = (angle / n) * q[2]
    out[2] = (angle / n) * q[3]
    return out


@njit(cache=True)
def _task_error(q, nbase, mount_R, mount_t, R_off, t_off, axes, types, W, W2,
                grip_R, grip_t, rel_R, rel_t, riding):
    """Gripper pose error [t_target - t; rotvec(R_target R^T)] and frames."""
    Rb, tb, Rs, ts, Rg, tg = fk_chain(q, nbase, mount_R, mount_t, R_off, t_off,
                                      axes, types, W, W2, grip_R, grip_t)
    if riding:
        Rt = Rb @ rel_R
        tt = tb + Rb @ rel_t
    else:
        Rt = rel_R
        tt = rel_t
    e = np.empty(6)
    e[:3] = tt - tg
    e[3:] = _rotvec_of_matrix(Rt @ Rg.T)
    return e, Rb, tb, Rs, ts, Rg, tg, tt


@njit(cache=True)
def dls_project(q0, nbase, mount_R, mount_t, R_off, t_off, axes, types, W, W2,
                grip_R, grip_t, lower, upper, rel_R, rel_t, riding,
                tol_t, tol_r, max_iters, damping):
    """Damped least-squares projection onto a gripper pose target.

    Backtracks each step until the residual drops; tenfold damping growth on
    a rejected step, relaxed back on progress. Joints pinned at a limit that
    push outward are dropped from the solve.
    """
    n = q0.shape[0]
    narm = types.shape[0]
    q = np.minimum(np.maximum(q0, lower), upper)
    lam = damping
    err, Rb, tb, Rs, ts, Rg, tg, tt = _task_error(
        q, nbase, mount_R, mount_t, R_off, t_off, axes, types, W, W2,
        grip_R, grip_t, rel_R, rel_t, riding)
    it = 0
    for it in range(max_iters):
        et = np.sqrt(err[0] ** 2 + err[1] ** 2 + err[2] ** 2)
        er = np.sqrt(err[3] ** 2 + err[4] ** 2 + err[5] ** 2)
        if et <= tol_t and er <= tol_r:
            return q, True, it
        # world-frame geometric Jacobian at the gripper
        J = np.zeros((6, n))
        if nbase == 3:
            zb = mount_R[:, 2]
            J[0, 0] = mount_R[0, 0]; J[1, 0] = mount_R[1, 0]; J[2, 0] = mount_R[2, 0]
            J[0, 1] = mount_R[0, 1]; J[1, 1] = mount_R[1, 1]; J[2, 1] = mount_R[2, 1]
            arm = tg - tb
            J[0, 2] = zb[1] * arm[2] - zb[2] * arm[1]
            J[1, 2] = zb[2] * arm[0] - zb[0] * arm[2]
            J[2, 2] = zb[0] * arm[1] - zb[1] * arm[0]
            J[3, 2] = zb[0]; J[4, 2] = zb[1]; J[5, 2] = zb[2]
            if riding:
                # target rides the base: subtract its base-frame Jacobian
                J[0, 0] -= mount_R[0, 0]; J[1, 0] -= mount_R[1, 0]; J[2, 0] -= mount_R[2, 0]
                J[0, 1] -= mount_R[0, 1]; J[1, 1] -= mount_R[1, 1]; J[2, 1] -= mount_R[2, 1]
                armt = tt - tb
                J[0, 2] -= zb[1] * armt[2] - zb[2] * armt[1]
                J[1, 2] -= zb[2] * armt[0] - zb[0] * armt[2]
                J[2, 2] -= zb[0] * armt[1] - zb[1] * armt[0]
                J[3, 2] -= zb[0]; J[4, 2] -= zb[1]; J[5, 2] -= zb[2]
        for i in range(narm):
            col = nbase + i
            z = Rs[i] @ axes[i]
            if types[i] == 0:
                arm = tg - ts[i]
                J[0, col] = z[1] * arm[2] - z[2] * arm[1]
                J[1, col] = z[2] * arm[0] - z[0] * arm[2]
                J[2, col] = z[0] * arm[1] - z[1] * arm[0]
                J[3, col] = z[0]; J[4, col] = z[1]; J[5, col] = z[2]
            else:
                J[0, col] = z[0]; J[1, col] = z[1]; J[2, col] = z[2]
        # clamped driving error keeps early iterates in a sane region
        e = err.copy()
        if et > 0.3:
            for r in range(3):
                e[r] *= 0.3 / et
        if er > 0.6:
            for r in range(3, 6):
                e[r] *= 0.6 / er
        dq = np.zeros(n)
        for _ in range(2):
            A = J @ J.T + lam * np.eye(6)
            y = np.linalg.solve(A, e)
            dq = J.T @ y
            npinned = 0
            for c in range(n):
                if (q[c] <= lower[c] and dq[c] < 0.0) or (q[c] >= upper[c] and dq[c] > 0.0):
                    for r in range(6):
                        J[r, c] = 0.0
                    npinned += 1
            if npinned == 0:
                break
        norm_err = np.sqrt((err * err).sum())
        improved = False
        for ai in range(4):
            alpha = (1.0, 0.5, 0.25, 0.1)[ai]
            q_new = np.minimum(np.maximum(q + alpha * dq, lower), upper)
            err_new, Rb, tb, Rs2, ts2, Rg2, tg2, tt2 = _task_error(
                q_new, nbase, mount_R, mount_t, R_off, t_off, axes, types, W, W2,
                grip_R, grip_t, rel_R, rel_t, riding)
            if np.sqrt((err_new * err_new).sum()) < norm_err:
                q = q_new
                err = err_new
                Rs = Rs2; ts = ts2; Rg = Rg2; tg = tg2; tt = tt2
                lam = max(damping, lam * 0.1)
                improved = True
                break
        if not improved:
            lam *= 10.0
            if lam > 1e6:
                break
    et = np.sqrt(err[0] ** 2 + err[1] ** 2 + err[2] ** 2)
    er = np.sqrt(err[3] ** 2 + err[4] ** 2 + err[5] ** 2)
    return q, et <= tol_t and er <= tol_r, it + 1


@njit(cache=True)
def min_spheres_vs_sphere(centers, radii, c, r):
    best = np.inf
    for k in range(centers.shape[0]):
        dx = centers[k, 0] - c[0]
        dy = centers[k, 1] - c[1]
        dz = centers[k, 2] - c[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz) - radii[k] - r
        if d < best:
            best = d
    return best
