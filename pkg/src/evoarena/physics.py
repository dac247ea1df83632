"""Deterministic fixed-timestep rigid-body simulation of boxes and motorized hinges.

Bodies are boxes falling under gravity onto an infinite ground plane at y = 0.
Joints are motorized hinges solved together with ground contacts by sequential
impulses (Baumgarte stabilization, two-direction friction pyramid, zero
restitution), followed by semi-implicit Euler integration and quaternion
renormalization. The same world stepped twice produces bit-identical state on
the same build; cross-platform runs agree only to floating-point tolerances.

State is stored packed in numpy arrays on the World so the numba step kernel
can run allocation-light; Body and HingeJoint are live handles into it.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from numba import njit

GRAVITY_DEFAULT = (0.0, -9.81, 0.0)
DT_DEFAULT = 1.0 / 240.0
SOLVER_ITERATIONS_DEFAULT = 10
BAUMGARTE = 0.2
PENETRATION_SLOP = 0.005
GROUND_FRICTION = 0.8
MOTOR_MAX_SPEED = 10.0  # rad/s cap on the hinge servo's commanded velocity


class SimulationDivergedError(RuntimeError):
    """Raised when a body's state becomes NaN/Inf during a step."""

    def __init__(self, body_name: str, body_id: int, step: int):
        super().__init__(
            f"simulation diverged: body {body_id} ({body_name!r}) non-finite at step {step}"
        )
        self.body_name = body_name
        self.body_id = body_id
        self.step = step


def box_inertia(mass: float, half_extents) -> np.ndarray:
    """Diagonal inertia of a solid box about its center, in the body frame.

    I = (m/3) * (hy^2 + hz^2, hx^2 + hz^2, hx^2 + hy^2) for half-extents h.
    """
    m = float(mass)
    h = np.asarray(half_extents, dtype=np.float64)
    if h.shape != (3,):
        raise ValueError(f"half_extents must be a 3-vector, got shape {h.shape}")
    if not math.isfinite(m) or m <= 0.0:
        raise ValueError(f"mass must be positive and finite, got {m}")
    if not np.all(np.isfinite(h)) or np.any(h <= 0.0):
        raise ValueError(f"half_extents must be positive and finite, got {h.tolist()}")
    hx2, hy2, hz2 = h[0] * h[0], h[1] * h[1], h[2] * h[2]
    return (m / 3.0) * np.array([hy2 + hz2, hx2 + hz2, hx2 + hy2])


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z), python side
# ---------------------------------------------------------------------------

def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=np.float64)
    n = math.sqrt(float(a @ a))
    if n == 0.0:
        raise ValueError("axis must be nonzero")
    s = math.sin(0.5 * angle) / n
    return np.array([math.cos(0.5 * angle), a[0] * s, a[1] * s, a[2] * s])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


# ---------------------------------------------------------------------------
# numba kernel helpers
# ---------------------------------------------------------------------------

@njit(cache=True)
def _nb_rot_from_quat(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - w * z)
    out[0, 2] = 2.0 * (x * z + w * y)
    out[1, 0] = 2.0 * (x * y + w * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - w * x)
    out[2, 0] = 2.0 * (x * z - w * y)
    out[2, 1] = 2.0 * (y * z + w * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def _nb_twist_angle(qp, qc, qref, axis_local):
    """Signed hinge rotation of child vs parent about the parent-local axis.

    Swing-twist projection of (parent^-1 * child) * ref^-1; range (-pi, pi].
    """
    # r = conj(qp) * qc
    pw, px, py, pz = qp[0], -qp[1], -qp[2], -qp[3]
    cw, cx, cy, cz = qc[0], qc[1], qc[2], qc[3]
    rw = pw * cw - px * cx - py * cy - pz * cz
    rx = pw * cx + px * cw + py * cz - pz * cy
    ry = pw * cy - px * cz + py * cw + pz * cx
    rz = pw * cz + px * cy - py * cx + pz * cw
    # x = r * conj(qref)
    fw, fx, fy, fz = qref[0], -qref[1], -qref[2], -qref[3]
    xw = rw * fw - rx * fx - ry * fy - rz * fz
    xx = rw * fx + rx * fw + ry * fz - rz * fy
    xy = rw * fy - rx * fz + ry * fw + rz * fx
    xz = rw * fz + rx * fy - ry * fx + rz * fw
    d = xx * axis_local[0] + xy * axis_local[1] + xz * axis_local[2]
    theta = 2.0 * math.atan2(d, xw)
    if theta > math.pi:
        theta -= 2.0 * math.pi
    elif theta <= -math.pi:
        theta += 2.0 * math.pi
    return theta


@njit(cache=True)
def _step_core(pos, quat, linvel, angvel, inv_mass, inv_ib, hext,
               jp, jc, jap, jac, jxp, jxc, jlo, jhi, jtq, jtg, jref,
               gravity, dt, iters, beta, slop, mu, omega_max):
    """One fixed timestep over packed world state. Returns -1, or the index of
    the first body whose state went non-finite."""
    n = pos.shape[0]
    nj = jp.shape[0]
    inv_dt = 1.0 / dt

    # gravity on dynamic bodies
    for i in range(n):
        if inv_mass[i] > 0.0:
            linvel[i, 0] += gravity[0] * dt
            linvel[i, 1] += gravity[1] * dt
            linvel[i, 2] += gravity[2] * dt

    # world rotation matrices and world-space inverse inertia tensors
    rot = np.empty((n, 3, 3))
    iinv = np.empty((n, 3, 3))
    for i in range(n):
        _nb_rot_from_quat(quat[i], rot[i])
        for a in range(3):
            for b in range(3):
                s = 0.0
                for k in range(3):
                    s += rot[i, a, k] * inv_ib[i, k] * rot[i, b, k]
                iinv[i, a, b] = s

    # --- ground contacts (box vertices below y = 0; statics cannot move, skip)
    max_c = 8 * n
    c_body = np.empty(max_c, np.int64)
    c_r = np.empty((max_c, 3))
    c_kn = np.empty(max_c)
    c_kt1 = np.empty(max_c)
    c_kt2 = np.empty(max_c)
    c_bias = np.empty(max_c)
    c_pn = np.zeros(max_c)
    c_pt1 = np.zeros(max_c)
    c_pt2 = np.zeros(max_c)
    nc = 0
    for i in range(n):
        if inv_mass[i] == 0.0:
            continue
        hx, hy, hz = hext[i, 0], hext[i, 1], hext[i, 2]
        for k in range(8):
            lx = hx if (k & 1) else -hx
            ly = hy if (k & 2) else -hy
            lz = hz if (k & 4) else -hz
            rx = rot[i, 0, 0] * lx + rot[i, 0, 1] * ly + rot[i, 0, 2] * lz
            ry = rot[i, 1, 0] * lx + rot[i, 1, 1] * ly + rot[i, 1, 2] * lz
            rz = rot[i, 2, 0] * lx + rot[i, 2, 1] * ly + rot[i, 2, 2] * lz
            if pos[i, 1] + ry >= 0.0:
                continue
            pen = -(pos[i, 1] + ry)
            c_body[nc] = i
            c_r[nc, 0] = rx
            c_r[nc, 1] = ry
            c_r[nc, 2] = rz
            # effective mass along d: inv_m + (r x d)' Iinv (r x d)
            # n=(0,1,0): u=(-rz,0,rx); t1=(1,0,0): u=(0,rz,-ry); t2=(0,0,1): u=(ry,-rx,0)
            im = inv_mass[i]
            ux, uy, uz = -rz, 0.0, rx
            c_kn[nc] = im + (ux * (iinv[i, 0, 0] * ux + iinv[i, 0, 1] * uy + iinv[i, 0, 2] * uz)
                             + uy * (iinv[i, 1, 0] * ux + iinv[i, 1, 1] * uy + iinv[i, 1, 2] * uz)
                             + uz * (iinv[i, 2, 0] * ux + iinv[i, 2, 1] * uy + iinv[i, 2, 2] * uz))
            ux, uy, uz = 0.0, rz, -ry
            c_kt1[nc] = im + (ux * (iinv[i, 0, 0] * ux + iinv[i, 0, 1] * uy + iinv[i, 0, 2] * uz)
                              + uy * (iinv[i, 1, 0] * ux + iinv[i, 1, 1] * uy + iinv[i, 1, 2] * uz)
                              + uz * (iinv[i, 2, 0] * ux + iinv[i, 2, 1] * uy + iinv[i, 2, 2] * uz))
            ux, uy, uz = ry, -rx, 0.0
            c_kt2[nc] = im + (ux * (iinv[i, 0, 0] * ux + iinv[i, 0, 1] * uy + iinv[i, 0, 2] * uz)
                              + uy * (iinv[i, 1, 0] * ux + iinv[i, 1, 1] * uy + iinv[i, 1, 2] * uz)
                              + uz * (iinv[i, 2, 0] * ux + iinv[i, 2, 1] * uy + iinv[i, 2, 2] * uz))
            over = pen - slop
            c_bias[nc] = beta * inv_dt * over if over > 0.0 else 0.0
            nc += 1

    # --- hinge joint constraint setup
    j_act = np.zeros(nj, np.int64)
    j_rp = np.empty((nj, 3))
    j_rc = np.empty((nj, 3))
    j_bias = np.empty((nj, 3))
    j_kinv = np.empty((nj, 3, 3))
    j_axis = np.empty((nj, 3))
    j_b1 = np.empty((nj, 3))
    j_b2 = np.empty((nj, 3))
    j_ksw1 = np.empty(nj)
    j_ksw2 = np.empty(nj)
    j_bsw1 = np.empty(nj)
    j_bsw2 = np.empty(nj)
    j_kax = np.empty(nj)
    j_wt = np.empty(nj)
    j_maximp = np.empty(nj)
    j_limstate = np.zeros(nj, np.int64)
    j_limc = np.empty(nj)
    j_pmotor = np.zeros(nj)
    j_plim = np.zeros(nj)
    K = np.empty((3, 3))
    for j in range(nj):
        p = jp[j]
        c = jc[j]
        imp = inv_mass[p]
        imc = inv_mass[c]
        if imp == 0.0 and imc == 0.0:
            continue
        j_act[j] = 1
        for a in range(3):
            j_rp[j, a] = rot[p, a, 0] * jap[j, 0] + rot[p, a, 1] * jap[j, 1] + rot[p, a, 2] * jap[j, 2]
            j_rc[j, a] = rot[c, a, 0] * jac[j, 0] + rot[c, a, 1] * jac[j, 1] + rot[c, a, 2] * jac[j, 2]
        for a in range(3):
            cpos = (pos[c, a] + j_rc[j, a]) - (pos[p, a] + j_rp[j, a])
            j_bias[j, a] = -beta * inv_dt * cpos
        # K = (imp+imc) E - S(rp) Iinv_p S(rp) - S(rc) Iinv_c S(rc)
        for a in range(3):
            for b in range(3):
                K[a, b] = (imp + imc) if a == b else 0.0
        for side in range(2):
            bi = p if side == 0 else c
            rx = j_rp[j, 0] if side == 0 else j_rc[j, 0]
            ry = j_rp[j, 1] if side == 0 else j_rc[j, 1]
            rz = j_rp[j, 2] if side == 0 else j_rc[j, 2]
            # B = S(r) @ Iinv, then K -= B @ S(r)
            for a in range(3):
                if a == 0:
                    b0 = -rz * iinv[bi, 1, 0] + ry * iinv[bi, 2, 0]
                    b1v = -rz * iinv[bi, 1, 1] + ry * iinv[bi, 2, 1]
                    b2v = -rz * iinv[bi, 1, 2] + ry * iinv[bi, 2, 2]
                elif a == 1:
                    b0 = rz * iinv[bi, 0, 0] - rx * iinv[bi, 2, 0]
                    b1v = rz * iinv[bi, 0, 1] - rx * iinv[bi, 2, 1]
                    b2v = rz * iinv[bi, 0, 2] - rx * iinv[bi, 2, 2]
                else:
                    b0 = -ry * iinv[bi, 0, 0] + rx * iinv[bi, 1, 0]
                    b1v = -ry * iinv[bi, 0, 1] + rx * iinv[bi, 1, 1]
                    b2v = -ry * iinv[bi, 0, 2] + rx * iinv[bi, 1, 2]
                K[a, 0] -= b1v * rz - b2v * ry
                K[a, 1] -= -b0 * rz + b2v * rx
                K[a, 2] -= b0 * ry - b1v * rx
        det = (K[0, 0] * (K[1, 1] * K[2, 2] - K[1, 2] * K[2, 1])
               - K[0, 1] * (K[1, 0] * K[2, 2] - K[1, 2] * K[2, 0])
               + K[0, 2] * (K[1, 0] * K[2, 1] - K[1, 1] * K[2, 0]))
        if abs(det) < 1e-14:
            j_act[j] = 0
            continue
        inv_det = 1.0 / det
        j_kinv[j, 0, 0] = (K[1, 1] * K[2, 2] - K[1, 2] * K[2, 1]) * inv_det
        j_kinv[j, 0, 1] = (K[0, 2] * K[2, 1] - K[0, 1] * K[2, 2]) * inv_det
        j_kinv[j, 0, 2] = (K[0, 1] * K[1, 2] - K[0, 2] * K[1, 1]) * inv_det
        j_kinv[j, 1, 0] = (K[1, 2] * K[2, 0] - K[1, 0] * K[2, 2]) * inv_det
        j_kinv[j, 1, 1] = (K[0, 0] * K[2, 2] - K[0, 2] * K[2, 0]) * inv_det
        j_kinv[j, 1, 2] = (K[0, 2] * K[1, 0] - K[0, 0] * K[1, 2]) * inv_det
        j_kinv[j, 2, 0] = (K[1, 0] * K[2, 1] - K[1, 1] * K[2, 0]) * inv_det
        j_kinv[j, 2, 1] = (K[0, 1] * K[2, 0] - K[0, 0] * K[2, 1]) * inv_det
        j_kinv[j, 2, 2] = (K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]) * inv_det
        # world hinge axis from the parent, child axis for the alignment error
        ax = rot[p, 0, 0] * jxp[j, 0] + rot[p, 0, 1] * jxp[j, 1] + rot[p, 0, 2] * jxp[j, 2]
        ay = rot[p, 1, 0] * jxp[j, 0] + rot[p, 1, 1] * jxp[j, 1] + rot[p, 1, 2] * jxp[j, 2]
        az = rot[p, 2, 0] * jxp[j, 0] + rot[p, 2, 1] * jxp[j, 1] + rot[p, 2, 2] * jxp[j, 2]
        cx = rot[c, 0, 0] * jxc[j, 0] + rot[c, 0, 1] * jxc[j, 1] + rot[c, 0, 2] * jxc[j, 2]
        cy = rot[c, 1, 0] * jxc[j, 0] + rot[c, 1, 1] * jxc[j, 1] + rot[c, 1, 2] * jxc[j, 2]
        cz = rot[c, 2, 0] * jxc[j, 0] + rot[c, 2, 1] * jxc[j, 1] + rot[c, 2, 2] * jxc[j, 2]
        j_axis[j, 0], j_axis[j, 1], j_axis[j, 2] = ax, ay, az
        if abs(ax) < 0.9:
            rx0, ry0, rz0 = 1.0, 0.0, 0.0
        else:
            rx0, ry0, rz0 = 0.0, 1.0, 0.0
        b1x = ay * rz0 - az * ry0
        b1y = az * rx0 - ax * rz0
        b1z = ax * ry0 - ay * rx0
        b1n = math.sqrt(b1x * b1x + b1y * b1y + b1z * b1z)
        b1x /= b1n
        b1y /= b1n
        b1z /= b1n
        b2x = ay * b1z - az * b1y
        b2y = az * b1x - ax * b1z
        b2z = ax * b1y - ay * b1x
        j_b1[j, 0], j_b1[j, 1], j_b1[j, 2] = b1x, b1y, b1z
        j_b2[j, 0], j_b2[j, 1], j_b2[j, 2] = b2x, b2y, b2z
        # swing alignment error: relative angular velocity along e = a_child x a_parent
        # realigns the child axis onto the parent axis
        ex = cy * az - cz * ay
        ey = cz * ax - cx * az
        ez = cx * ay - cy * ax
        j_bsw1[j] = beta * inv_dt * (b1x * ex + b1y * ey + b1z * ez)
        j_bsw2[j] = beta * inv_dt * (b2x * ex + b2y * ey + b2z * ez)
        isum00 = iinv[p, 0, 0] + iinv[c, 0, 0]
        isum01 = iinv[p, 0, 1] + iinv[c, 0, 1]
        isum02 = iinv[p, 0, 2] + iinv[c, 0, 2]
        isum11 = iinv[p, 1, 1] + iinv[c, 1, 1]
        isum12 = iinv[p, 1, 2] + iinv[c, 1, 2]
        isum22 = iinv[p, 2, 2] + iinv[c, 2, 2]

        def _quad(ux, uy, uz):
            return (ux * (isum00 * ux + isum01 * uy + isum02 * uz)
                    + uy * (isum01 * ux + isum11 * uy + isum12 * uz)
                    + uz * (isum02 * ux + isum12 * uy + isum22 * uz))

        j_ksw1[j] = _quad(b1x, b1y, b1z)
        j_ksw2[j] = _quad(b2x, b2y, b2z)
        j_kax[j] = _quad(ax, ay, az)
        theta = _nb_twist_angle(quat[p], quat[c], jref[j], jxp[j])
        if jtq[j] > 0.0 and j_kax[j] > 0.0:
            wt = (jtg[j] - theta) * inv_dt
            if wt > omega_max:
                wt = omega_max
            elif wt < -omega_max:
                wt = -omega_max
            j_wt[j] = wt
            j_maximp[j] = jtq[j] * dt
        else:
            j_wt[j] = 0.0
            j_maximp[j] = 0.0
        if theta < jlo[j]:
            j_limstate[j] = -1
            j_limc[j] = theta - jlo[j]
        elif theta > jhi[j]:
            j_limstate[j] = 1
            j_limc[j] = theta - jhi[j]

    # --- sequential impulse iterations
    for _ in range(iters):
        for j in range(nj):
            if j_act[j] == 0:
                continue
            p = jp[j]
            c = jc[j]
            imp = inv_mass[p]
            imc = inv_mass[c]
            rpx, rpy, rpz = j_rp[j, 0], j_rp[j, 1], j_rp[j, 2]
            rcx, rcy, rcz = j_rc[j, 0], j_rc[j, 1], j_rc[j, 2]
            # point-to-point: relative anchor velocity driven to the Baumgarte bias
            cdx = (linvel[c, 0] + angvel[c, 1] * rcz - angvel[c, 2] * rcy
                   - linvel[p, 0] - angvel[p, 1] * rpz + angvel[p, 2] * rpy)
            cdy = (linvel[c, 1] + angvel[c, 2] * rcx - angvel[c, 0] * rcz
                   - linvel[p, 1] - angvel[p, 2] * rpx + angvel[p, 0] * rpz)
            cdz = (linvel[c, 2] + angvel[c, 0] * rcy - angvel[c, 1] * rcx
                   - linvel[p, 2] - angvel[p, 0] * rpy + angvel[p, 1] * rpx)
            gx = j_bias[j, 0] - cdx
            gy = j_bias[j, 1] - cdy
            gz = j_bias[j, 2] - cdz
            dlx = j_kinv[j, 0, 0] * gx + j_kinv[j, 0, 1] * gy + j_kinv[j, 0, 2] * gz
            dly = j_kinv[j, 1, 0] * gx + j_kinv[j, 1, 1] * gy + j_kinv[j, 1, 2] * gz
            dlz = j_kinv[j, 2, 0] * gx + j_kinv[j, 2, 1] * gy + j_kinv[j, 2, 2] * gz
            linvel[c, 0] += imc * dlx
            linvel[c, 1] += imc * dly
            linvel[c, 2] += imc * dlz
            linvel[p, 0] -= imp * dlx
            linvel[p, 1] -= imp * dly
            linvel[p, 2] -= imp * dlz
            tx = rcy * dlz - rcz * dly
            ty = rcz * dlx - rcx * dlz
            tz = rcx * dly - rcy * dlx
            angvel[c, 0] += iinv[c, 0, 0] * tx + iinv[c, 0, 1] * ty + iinv[c, 0, 2] * tz
            angvel[c, 1] += iinv[c, 1, 0] * tx + iinv[c, 1, 1] * ty + iinv[c, 1, 2] * tz
            angvel[c, 2] += iinv[c, 2, 0] * tx + iinv[c, 2, 1] * ty + iinv[c, 2, 2] * tz
            tx = rpy * dlz - rpz * dly
            ty = rpz * dlx - rpx * dlz
            tz = rpx * dly - rpy * dlx
            angvel[p, 0] -= iinv[p, 0, 0] * tx + iinv[p, 0, 1] * ty + iinv[p, 0, 2] * tz
            angvel[p, 1] -= iinv[p, 1, 0] * tx + iinv[p, 1, 1] * ty + iinv[p, 1, 2] * tz
            angvel[p, 2] -= iinv[p, 2, 0] * tx + iinv[p, 2, 1] * ty + iinv[p, 2, 2] * tz
            # two swing constraints keep the rotation on the hinge axis
            for sw in range(2):
                if sw == 0:
                    ux, uy, uz = j_b1[j, 0], j_b1[j, 1], j_b1[j, 2]
                    keff = j_ksw1[j]
                    bias = j_bsw1[j]
                else:
                    ux, uy, uz = j_b2[j, 0], j_b2[j, 1], j_b2[j, 2]
                    keff = j_ksw2[j]
                    bias = j_bsw2[j]
                if keff <= 0.0:
                    continue
                cd = (ux * (angvel[c, 0] - angvel[p, 0])
                      + uy * (angvel[c, 1] - angvel[p, 1])
                      + uz * (angvel[c, 2] - angvel[p, 2]))
                dl = (bias - cd) / keff
                tx, ty, tz = ux * dl, uy * dl, uz * dl
                angvel[c, 0] += iinv[c, 0, 0] * tx + iinv[c, 0, 1] * ty + iinv[c, 0, 2] * tz
                angvel[c, 1] += iinv[c, 1, 0] * tx + iinv[c, 1, 1] * ty + iinv[c, 1, 2] * tz
                angvel[c, 2] += iinv[c, 2, 0] * tx + iinv[c, 2, 1] * ty + iinv[c, 2, 2] * tz
                angvel[p, 0] -= iinv[p, 0, 0] * tx + iinv[p, 0, 1] * ty + iinv[p, 0, 2] * tz
                angvel[p, 1] -= iinv[p, 1, 0] * tx + iinv[p, 1, 1] * ty + iinv[p, 1, 2] * tz
                angvel[p, 2] -= iinv[p, 2, 0] * tx + iinv[p, 2, 1] * ty + iinv[p, 2, 2] * tz
            ax, ay, az = j_axis[j, 0], j_axis[j, 1], j_axis[j, 2]
            kax = j_kax[j]
            # motor: servo the joint rate toward the clamped target velocity
            if j_maximp[j] > 0.0:
                cd = (ax * (angvel[c, 0] - angvel[p, 0])
                      + ay * (angvel[c, 1] - angvel[p, 1])
                      + az * (angvel[c, 2] - angvel[p, 2]))
                dl = (j_wt[j] - cd) / kax
                acc = j_pmotor[j] + dl
                if acc > j_maximp[j]:
                    acc = j_maximp[j]
                elif acc < -j_maximp[j]:
                    acc = -j_maximp[j]
                dl = acc - j_pmotor[j]
                j_pmotor[j] = acc
                tx, ty, tz = ax * dl, ay * dl, az * dl
                angvel[c, 0] += iinv[c, 0, 0] * tx + iinv[c, 0, 1] * ty + iinv[c, 0, 2] * tz
                angvel[c, 1] += iinv[c, 1, 0] * tx + iinv[c, 1, 1] * ty + iinv[c, 1, 2] * tz
                angvel[c, 2] += iinv[c, 2, 0] * tx + iinv[c, 2, 1] * ty + iinv[c, 2, 2] * tz
                angvel[p, 0] -= iinv[p, 0, 0] * tx + iinv[p, 0, 1] * ty + iinv[p, 0, 2] * tz
                angvel[p, 1] -= iinv[p, 1, 0] * tx + iinv[p, 1, 1] * ty + iinv[p, 1, 2] * tz
                angvel[p, 2] -= iinv[p, 2, 0] * tx + iinv[p, 2, 1] * ty + iinv[p, 2, 2] * tz
            # angle limit: one-sided impulse along the axis
            if j_limstate[j] != 0 and kax > 0.0:
                cd = (ax * (angvel[c, 0] - angvel[p, 0])
                      + ay * (angvel[c, 1] - angvel[p, 1])
                      + az * (angvel[c, 2] - angvel[p, 2]))
                dl = -(cd + beta * inv_dt * j_limc[j]) / kax
                acc = j_plim[j] + dl
                if j_limstate[j] < 0:
                    acc = acc if acc > 0.0 else 0.0
                else:
                    acc = acc if acc < 0.0 else 0.0
                dl = acc - j_plim[j]
                j_plim[j] = acc
                tx, ty, tz = ax * dl, ay * dl, az * dl
                angvel[c, 0] += iinv[c, 0, 0] * tx + iinv[c, 0, 1] * ty + iinv[c, 0, 2] * tz
                angvel[c, 1] += iinv[c, 1, 0] * tx + iinv[c, 1, 1] * ty + iinv[c, 1, 2] * tz
                angvel[c, 2] += iinv[c, 2, 0] * tx + iinv[c, 2, 1] * ty + iinv[c, 2, 2] * tz
                angvel[p, 0] -= iinv[p, 0, 0] * tx + iinv[p, 0, 1] * ty + iinv[p, 0, 2] * tz
                angvel[p, 1] -= iinv[p, 1, 0] * tx + iinv[p, 1, 1] * ty + iinv[p, 1, 2] * tz
                angvel[p, 2] -= iinv[p, 2, 0] * tx + iinv[p, 2, 1] * ty + iinv[p, 2, 2] * tz

        for ci in range(nc):
            i = c_body[ci]
            im = inv_mass[i]
            rx, ry, rz = c_r[ci, 0], c_r[ci, 1], c_r[ci, 2]
            # normal along +y, one-sided, Baumgarte push-out beyond the slop
            vpy = linvel[i, 1] + angvel[i, 2] * rx - angvel[i, 0] * rz
            dl = (c_bias[ci] - vpy) / c_kn[ci]
            acc = c_pn[ci] + dl
            if acc < 0.0:
                acc = 0.0
            dl = acc - c_pn[ci]
            c_pn[ci] = acc
            linvel[i, 1] += im * dl
            tx, tz = -rz * dl, rx * dl
            angvel[i, 0] += iinv[i, 0, 0] * tx + iinv[i, 0, 2] * tz
            angvel[i, 1] += iinv[i, 1, 0] * tx + iinv[i, 1, 2] * tz
            angvel[i, 2] += iinv[i, 2, 0] * tx + iinv[i, 2, 2] * tz
            bound = mu * c_pn[ci]
            # friction along x
            vpx = linvel[i, 0] + angvel[i, 1] * rz - angvel[i, 2] * ry
            dl = -vpx / c_kt1[ci]
            acc = c_pt1[ci] + dl
            if acc > bound:
                acc = bound
            elif acc < -bound:
                acc = -bound
            dl = acc - c_pt1[ci]
            c_pt1[ci] = acc
            linvel[i, 0] += im * dl
            ty, tz = rz * dl, -ry * dl
            angvel[i, 0] += iinv[i, 0, 1] * ty + iinv[i, 0, 2] * tz
            angvel[i, 1] += iinv[i, 1, 1] * ty + iinv[i, 1, 2] * tz
            angvel[i, 2] += iinv[i, 2, 1] * ty + iinv[i, 2, 2] * tz
            # friction along z
            vpz = linvel[i, 2] + angvel[i, 0] * ry - angvel[i, 1] * rx
            dl = -vpz / c_kt2[ci]
            acc = c_pt2[ci] + dl
            if acc > bound:
                acc = bound
            elif acc < -bound:
                acc = -bound
            dl = acc - c_pt2[ci]
            c_pt2[ci] = acc
            linvel[i, 2] += im * dl
            tx, ty = ry * dl, -rx * dl
            angvel[i, 0] += iinv[i, 0, 0] * tx + iinv[i, 0, 1] * ty
            angvel[i, 1] += iinv[i, 1, 0] * tx + iinv[i, 1, 1] * ty
            angvel[i, 2] += iinv[i, 2, 0] * tx + iinv[i, 2, 1] * ty

    # --- semi-implicit Euler integration, quaternion renormalization
    for i in range(n):
        if inv_mass[i] == 0.0:
            continue
        pos[i, 0] += linvel[i, 0] * dt
        pos[i, 1] += linvel[i, 1] * dt
        pos[i, 2] += linvel[i, 2] * dt
        wx, wy, wz = angvel[i, 0], angvel[i, 1], angvel[i, 2]
        qw, qx, qy, qz = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
        hdt = 0.5 * dt
        nw = qw - hdt * (wx * qx + wy * qy + wz * qz)
        nx = qx + hdt * (qw * wx + wy * qz - wz * qy)
        ny = qy + hdt * (qw * wy + wz * qx - wx * qz)
        nz = qz + hdt * (qw * wz + wx * qy - wy * qx)
        norm = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
        if not (norm > 1e-12):
            return i
        quat[i, 0] = nw / norm
        quat[i, 1] = nx / norm
        quat[i, 2] = ny / norm
        quat[i, 3] = nz / norm

    for i in range(n):
        for k in range(3):
            if not (math.isfinite(pos[i, k]) and math.isfinite(linvel[i, k])
                    and math.isfinite(angvel[i, k])):
                return i
        for k in range(4):
            if not math.isfinite(quat[i, k]):
                return i
    return -1


# ---------------------------------------------------------------------------
# world / handles
# ---------------------------------------------------------------------------

class Body:
    """Live handle to one body's state inside a World."""

    __slots__ = ("_w", "id")

    def __init__(self, world: "World", index: int):
        self._w = world
        self.id = index

    @property
    def name(self) -> str:
        return self._w._names[self.id]

    @property
    def half_extents(self) -> np.ndarray:
        return self._w._hext[self.id]

    @property
    def mass(self) -> float:
        return float(self._w._mass[self.id])

    @property
    def is_static(self) -> bool:
        return self._w._inv_mass[self.id] == 0.0

    @property
    def inv_inertia_body(self) -> np.ndarray:
        return self._w._inv_inertia[self.id]

    @property
    def position(self) -> np.ndarray:
        return self._w._pos[self.id]

    @position.setter
    def position(self, v):
        self._w._pos[self.id] = np.asarray(v, dtype=np.float64)

    @property
    def orientation(self) -> np.ndarray:
        return self._w._quat[self.id]

    @orientation.setter
    def orientation(self, q):
        self._w._quat[self.id] = np.asarray(q, dtype=np.float64)

    @property
    def linear_velocity(self) -> np.ndarray:
        return self._w._linvel[self.id]

    @linear_velocity.setter
    def linear_velocity(self, v):
        self._w._linvel[self.id] = np.asarray(v, dtype=np.float64)

    @property
    def angular_velocity(self) -> np.ndarray:
        return self._w._angvel[self.id]

    @angular_velocity.setter
    def angular_velocity(self, v):
        self._w._angvel[self.id] = np.asarray(v, dtype=np.float64)

    @property
    def color(self) -> np.ndarray:
        return self._w._color[self.id]

    @color.setter
    def color(self, v):
        self._w._color[self.id] = np.asarray(v, dtype=np.float64)

    def world_vertices(self) -> np.ndarray:
        """The 8 box corners in world space, in canonical vertex order."""
        return box_world_vertices(self.position, self.orientation, self.half_extents)

    def __repr__(self):
        return f"Body(id={self.id}, name={self.name!r})"


class HingeJoint:
    """Live handle to one motorized hinge inside a World."""

    __slots__ = ("_w", "id")

    def __init__(self, world: "World", index: int):
        self._w = world
        self.id = index

    @property
    def parent(self) -> int:
        return int(self._w._jp[self.id])

    @property
    def child(self) -> int:
        return int(self._w._jc[self.id])

    @property
    def anchor_parent(self) -> np.ndarray:
        return self._w._jap[self.id]

    @property
    def anchor_child(self) -> np.ndarray:
        return self._w._jac[self.id]

    @property
    def axis_parent(self) -> np.ndarray:
        return self._w._jxp[self.id]

    @property
    def axis_child(self) -> np.ndarray:
        return self._w._jxc[self.id]

    @property
    def limit_lo(self) -> float:
        return float(self._w._jlo[self.id])

    @property
    def limit_hi(self) -> float:
        return float(self._w._jhi[self.id])

    @property
    def motor_max_torque(self) -> float:
        return float(self._w._jtq[self.id])

    @property
    def motor_target_angle(self) -> float:
        return float(self._w._jtg[self.id])

    @motor_target_angle.setter
    def motor_target_angle(self, v: float):
        self._w._jtg[self.id] = float(v)

    @property
    def reference_orientation(self) -> np.ndarray:
        """Relative parent->child orientation captured at creation (w,x,y,z)."""
        return self._w._jref[self.id].copy()

    def __repr__(self):
        return f"HingeJoint(id={self.id}, parent={self.parent}, child={self.child})"


class Contact:
    """One ground contact: a box vertex below the plane y = 0."""

    __slots__ = ("body", "point", "normal", "penetration")

    def __init__(self, body: int, point: np.ndarray, penetration: float):
        self.body = body
        self.point = point
        self.normal = np.array([0.0, 1.0, 0.0])
        self.penetration = penetration

    def __repr__(self):
        return (f"Contact(body={self.body}, point={self.point.tolist()}, "
                f"penetration={self.penetration:.6g})")


class World:
    """A simulation world: boxes, hinges, gravity, ground plane at y = 0.

    Confined to one logical thread; transferable between threads when not
    mid-step. dt is fixed for the world's lifetime.
    """

    def __init__(self, gravity=GRAVITY_DEFAULT, dt: float = DT_DEFAULT,
                 solver_iterations: int = SOLVER_ITERATIONS_DEFAULT):
        dt = float(dt)
        if not (dt > 0.0) or not math.isfinite(dt):
            raise ValueError(f"dt must be positive, got {dt}")
        if solver_iterations < 1:
            raise ValueError("solver_iterations must be >= 1")
        self.gravity = np.asarray(gravity, dtype=np.float64).copy()
        self._dt = dt
        self.solver_iterations = int(solver_iterations)
        self.baumgarte = BAUMGARTE
        self.penetration_slop = PENETRATION_SLOP
        self.ground_friction = GROUND_FRICTION
        self.motor_max_speed = MOTOR_MAX_SPEED
        self.step_count = 0
        self.bodies: list[Body] = []
        self.joints: list[HingeJoint] = []
        self._names: list[str] = []
        self._pos = np.zeros((0, 3))
        self._quat = np.zeros((0, 4))
        self._linvel = np.zeros((0, 3))
        self._angvel = np.zeros((0, 3))
        self._mass = np.zeros(0)
        self._inv_mass = np.zeros(0)
        self._inv_inertia = np.zeros((0, 3))
        self._hext = np.zeros((0, 3))
        self._color = np.zeros((0, 3))
        self._jp = np.zeros(0, np.int64)
        self._jc = np.zeros(0, np.int64)
        self._jap = np.zeros((0, 3))
        self._jac = np.zeros((0, 3))
        self._jxp = np.zeros((0, 3))
        self._jxc = np.zeros((0, 3))
        self._jlo = np.zeros(0)
        self._jhi = np.zeros(0)
        self._jtq = np.zeros(0)
        self._jtg = np.zeros(0)
        self._jref = np.zeros((0, 4))

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def add_body(self, name: str = "", half_extents=(0.5, 0.5, 0.5), mass: float = 1.0,
                 position=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0),
                 linear_velocity=(0.0, 0.0, 0.0), angular_velocity=(0.0, 0.0, 0.0),
                 color=(0.7, 0.7, 0.7), static: bool = False) -> Body:
        h = np.asarray(half_extents, dtype=np.float64)
        q = np.asarray(orientation, dtype=np.float64)
        if h.shape != (3,) or np.any(h <= 0.0) or not np.all(np.isfinite(h)):
            raise ValueError(f"half_extents must be positive, got {h.tolist()}")
        if abs(float(q @ q) - 1.0) > 2e-9:
            raise ValueError(f"orientation must be a unit quaternion, got {q.tolist()}")
        if static:
            m = math.inf
            inv_m = 0.0
            inv_i = np.zeros(3)
        else:
            m = float(mass)
            if not math.isfinite(m) or m <= 0.0:
                raise ValueError(f"mass must be positive, got {mass}")
            inv_m = 1.0 / m
            inv_i = 1.0 / box_inertia(m, h)
        idx = len(self.bodies)
        self._names.append(name or f"body{idx}")
        self._pos = np.vstack([self._pos, np.asarray(position, dtype=np.float64)])
        self._quat = np.vstack([self._quat, q])
        self._linvel = np.vstack([self._linvel, np.asarray(linear_velocity, dtype=np.float64)])
        self._angvel = np.vstack([self._angvel, np.asarray(angular_velocity, dtype=np.float64)])
        self._mass = np.append(self._mass, m)
        self._inv_mass = np.append(self._inv_mass, inv_m)
        self._inv_inertia = np.vstack([self._inv_inertia, inv_i])
        self._hext = np.vstack([self._hext, h])
        self._color = np.vstack([self._color, np.asarray(color, dtype=np.float64)])
        body = Body(self, idx)
        self.bodies.append(body)
        return body

    def add_hinge(self, parent, child, anchor_parent, anchor_child,
                  axis_parent, axis_child=None, limit_lo: float = -math.pi * 0.99,
                  limit_hi: float = math.pi * 0.99, motor_max_torque: float = 0.0,
                  reference_orientation=None) -> HingeJoint:
        p = parent.id if isinstance(parent, Body) else int(parent)
        c = child.id if isinstance(child, Body) else int(child)
        if p == c:
            raise ValueError("hinge parent and child must differ")
        if not (0 <= p < len(self.bodies)) or not (0 <= c < len(self.bodies)):
            raise ValueError(f"hinge references missing body (parent={p}, child={c})")
        ax_p = np.asarray(axis_parent, dtype=np.float64)
        ax_c = ax_p.copy() if axis_child is None else np.asarray(axis_child, dtype=np.float64)
        for ax in (ax_p, ax_c):
            if abs(float(ax @ ax) - 1.0) > 2e-9:
                raise ValueError(f"hinge axis must be unit length, got {ax.tolist()}")
        lo, hi = float(limit_lo), float(limit_hi)
        if not (lo <= 0.0 <= hi) or not (hi - lo < 2.0 * math.pi):
            raise ValueError(f"limits must satisfy lo <= 0 <= hi and hi-lo < 2*pi, got [{lo}, {hi}]")
        if motor_max_torque < 0.0:
            raise ValueError("motor_max_torque must be >= 0")
        if reference_orientation is None:
            ref = quat_mul(quat_conj(self._quat[p]), self._quat[c])
        else:
            ref = np.asarray(reference_orientation, dtype=np.float64)
        idx = len(self.joints)
        self._jp = np.append(self._jp, np.int64(p))
        self._jc = np.append(self._jc, np.int64(c))
        self._jap = np.vstack([self._jap, np.asarray(anchor_parent, dtype=np.float64)])
        self._jac = np.vstack([self._jac, np.asarray(anchor_child, dtype=np.float64)])
        self._jxp = np.vstack([self._jxp, ax_p])
        self._jxc = np.vstack([self._jxc, ax_c])
        self._jlo = np.append(self._jlo, lo)
        self._jhi = np.append(self._jhi, hi)
        self._jtq = np.append(self._jtq, float(motor_max_torque))
        self._jtg = np.append(self._jtg, 0.0)
        self._jref = np.vstack([self._jref, ref])
        joint = HingeJoint(self, idx)
        self.joints.append(joint)
        return joint

    def step(self) -> "World":
        """Advance the world by one fixed timestep."""
        status = _step_core(
            self._pos, self._quat, self._linvel, self._angvel,
            self._inv_mass, self._inv_inertia, self._hext,
            self._jp, self._jc, self._jap, self._jac, self._jxp, self._jxc,
            self._jlo, self._jhi, self._jtq, self._jtg, self._jref,
            self.gravity, self._dt, self.solver_iterations,
            self.baumgarte, self.penetration_slop, self.ground_friction,
            self.motor_max_speed)
        self.step_count += 1
        if status >= 0:
            raise SimulationDivergedError(self._names[status], status, self.step_count)
        return self

    def copy(self) -> "World":
        return world_from_snapshot(world_to_snapshot(self))


def step(world: World) -> World:
    """Advance `world` by one timestep (mutating) and return it."""
    return world.step()


def box_world_vertices(position, orientation, half_extents) -> np.ndarray:
    """8 box corners in world space; vertex k has signs (-1)^(bit unset) per
    axis with x as bit 0, y bit 1, z bit 2."""
    r = quat_to_matrix(orientation)
    p = np.asarray(position, dtype=np.float64)
    h = np.asarray(half_extents, dtype=np.float64)
    out = np.empty((8, 3))
    for k in range(8):
        local = np.array([
            h[0] if (k & 1) else -h[0],
            h[1] if (k & 2) else -h[1],
            h[2] if (k & 4) else -h[2],
        ])
        out[k] = p + r @ local
    return out


def detect_ground_contacts(world: World) -> list[Contact]:
    """Contacts for every box vertex strictly below y = 0, in body/vertex order."""
    contacts = []
    for body in world.bodies:
        verts = body.world_vertices()
        for k in range(8):
            y = verts[k, 1]
            if y < 0.0:
                contacts.append(Contact(body.id, verts[k].copy(), -y))
    return contacts


def joint_angle(world: World, joint) -> float:
    """Signed hinge rotation of child relative to parent about the hinge axis,
    measured from the orientations captured at joint creation; range (-pi, pi]."""
    j = joint.id if isinstance(joint, HingeJoint) else int(joint)
    p = int(world._jp[j])
    c = int(world._jc[j])
    return float(_nb_twist_angle(world._quat[p], world._quat[c],
                                 world._jref[j], world._jxp[j]))


def world_digest(world: World) -> str:
    """64-bit hex digest over canonically serialized body poses and velocities."""
    h = hashlib.blake2b(digest_size=8)
    h.update(world._pos.tobytes())
    h.update(world._quat.tobytes())
    h.update(world._linvel.tobytes())
    h.update(world._angvel.tobytes())
    return h.hexdigest()


def world_to_snapshot(world: World) -> dict:
    """Full world state as plain JSON-compatible data; exact float round-trip."""
    bodies = []
    for i, b in enumerate(world.bodies):
        bodies.append({
            "id": i,
            "name": b.name,
            "half_extents": b.half_extents.tolist(),
            "mass": None if b.is_static else b.mass,
            "position": b.position.tolist(),
            "orientation": b.orientation.tolist(),
            "linear_velocity": b.linear_velocity.tolist(),
            "angular_velocity": b.angular_velocity.tolist(),
            "color": b.color.tolist(),
        })
    joints = []
    for j, jt in enumerate(world.joints):
        joints.append({
            "id": j,
            "parent": jt.parent,
            "child": jt.child,
            "anchor_parent": jt.anchor_parent.tolist(),
            "anchor_child": jt.anchor_child.tolist(),
            "axis_parent": jt.axis_parent.tolist(),
            "axis_child": jt.axis_child.tolist(),
            "limit_lo": jt.limit_lo,
            "limit_hi": jt.limit_hi,
            "motor_max_torque": jt.motor_max_torque,
            "motor_target_angle": jt.motor_target_angle,
            "reference_orientation": jt.reference_orientation.tolist(),
        })
    return {
        "gravity": world.gravity.tolist(),
        "dt": world.dt,
        "solver_iterations": world.solver_iterations,
        "step_count": world.step_count,
        "bodies": bodies,
        "joints": joints,
    }


def world_from_snapshot(snap: dict) -> World:
    world = World(gravity=snap["gravity"], dt=snap["dt"],
                  solver_iterations=snap["solver_iterations"])
    for b in snap["bodies"]:
        static = b["mass"] is None
        world.add_body(
            name=b["name"], half_extents=b["half_extents"],
            mass=1.0 if static else b["mass"], position=b["position"],
            orientation=b["orientation"], linear_velocity=b["linear_velocity"],
            angular_velocity=b["angular_velocity"], color=b["color"], static=static)
    for j in snap["joints"]:
        joint = world.add_hinge(
            j["parent"], j["child"], j["anchor_parent"], j["anchor_child"],
            j["axis_parent"], j["axis_child"], j["limit_lo"], j["limit_hi"],
            j["motor_max_torque"], reference_orientation=j["reference_orientation"])
        joint.motor_target_angle = j["motor_target_angle"]
    world.step_count = int(snap["step_count"])
    return world
