"""Sequential-impulse velocity solver with Baumgarte stabilization.

Contacts use accumulated normal impulses (clamped >= 0), a Coulomb friction
disc (|tangential| <= mu * normal) and zero restitution.  Revolute joints are
solved in the same iteration loop: a 3x3 point constraint plus two angular
rows orthogonal to the hinge axis.

The iteration loop runs on unpacked floats; numpy stays outside the loop.
Iteration count and body ordering are fixed, so identical inputs give
bitwise-identical results.
"""
from __future__ import annotations

import math

import numpy as np

from ..geometry import cross3, tangent_basis
from . import kernels


def resolve_contacts(world, contacts, dt: float | None = None) -> None:
    """Resolve contacts and joints for the current step (mutates velocities)."""
    if kernels.NUMBA_AVAILABLE:
        _resolve_contacts_compiled(world, contacts, dt)
    else:
        _resolve_contacts_python(world, contacts, dt)


def _resolve_contacts_compiled(world, contacts, dt: float | None = None) -> None:
    if dt is None:
        dt = world.dt
    bodies = world.bodies
    nb = len(bodies)

    pos = np.empty((nb, 3))
    inv_mass = np.empty(nb)
    inv_inertia = np.empty((nb, 3, 3))
    vel = np.zeros(6 * nb)
    for body in bodies:
        k = body.index
        pos[k] = body.pos
        inv_mass[k] = body.inv_mass
        inv_inertia[k] = body.inv_inertia_world
        if not body.static:
            vel[6 * k:6 * k + 3] = body.vel
            vel[6 * k + 3:6 * k + 6] = body.omega

    nc = len(contacts)
    ca = np.empty(nc, dtype=np.int64)
    cb = np.empty(nc, dtype=np.int64)
    c_point = np.empty((nc, 3))
    c_normal = np.empty((nc, 3))
    c_depth = np.empty(nc)
    c_mu = np.empty(nc)
    c_ve = np.empty((nc, 3))
    for i, c in enumerate(contacts):
        ca[i] = c.body_a.index
        cb[i] = c.body_b.index
        c_point[i] = c.point
        c_normal[i] = c.normal
        c_depth[i] = c.depth
        c_mu[i] = c.friction
        c_ve[i] = c.vel_extra_a

    joints = world.joints
    nj = len(joints)
    j_p = np.empty(nj, dtype=np.int64)
    j_c = np.empty(nj, dtype=np.int64)
    j_ra = np.empty((nj, 3))
    j_rb = np.empty((nj, 3))
    j_axis_p = np.empty((nj, 3))
    j_axis_c = np.empty((nj, 3))
    for i, j in enumerate(joints):
        j_p[i] = j.parent.index
        j_c[i] = j.child.index
        j_ra[i] = j.parent.rot @ j.anchor_local_parent
        j_rb[i] = j.child.rot @ j.anchor_local_child
        j_axis_p[i] = j.parent.rot @ j.axis_local_parent
        j_axis_c[i] = j.child.rot @ j.axis_local_child

    impulses = kernels.solve_velocity(
        vel, pos, inv_mass, inv_inertia,
        ca, cb, c_point, c_normal, c_depth, c_mu, c_ve,
        j_p, j_c, j_ra, j_rb, j_axis_p, j_axis_c,
        world.baumgarte, world.penetration_slop,
        world.max_correction_velocity, 1.0 / dt, world.solver_iterations)

    for body in bodies:
        if body.static:
            continue
        k = 6 * body.index
        body.vel = vel[k:k + 3].copy()
        omega = vel[k + 3:k + 6].copy()
        inertia_world = body.rot @ body.inertia_body @ body.rot.T
        body.ang_mom = inertia_world @ omega
        body.omega = omega

    for i, contact in enumerate(contacts):
        contact.normal_impulse = float(impulses[i])


def _resolve_contacts_python(world, contacts, dt: float | None = None) -> None:
    if dt is None:
        dt = world.dt
    bodies = world.bodies
    nb = len(bodies)
    # flat velocity scratch: [vx, vy, vz, wx, wy, wz] per body
    vel = [0.0] * (6 * nb)
    for body in bodies:
        if body.static:
            continue
        k = 6 * body.index
        vel[k:k + 3] = body.vel.tolist()
        vel[k + 3:k + 6] = body.omega.tolist()

    beta = world.baumgarte
    slop = world.penetration_slop
    max_bias = world.max_correction_velocity
    inv_dt = 1.0 / dt

    joint_rows = [_prepare_joint(j, beta, inv_dt, max_bias) for j in world.joints]
    rows = [_prepare_contact(c, beta, slop, inv_dt, max_bias) for c in contacts]

    for _ in range(world.solver_iterations):
        for jr in joint_rows:
            _solve_joint(jr, vel)
        for row in rows:
            _solve_contact(row, vel)

    for body in bodies:
        if body.static:
            continue
        k = 6 * body.index
        body.vel = np.array(vel[k:k + 3])
        omega = np.array(vel[k + 3:k + 6])
        inertia_world = body.rot @ body.inertia_body @ body.rot.T
        body.ang_mom = inertia_world @ omega
        body.omega = omega

    for row, contact in zip(rows, contacts):
        contact.normal_impulse = row[0][0]


# ----------------------------------------------------------------------
def _direction_row(a, b, ra, rb, d):
    """Effective mass and angular response vectors for direction ``d``."""
    ra_x_d = cross3(ra, d)
    rb_x_d = cross3(rb, d)
    ang_a = a.inv_inertia_world @ ra_x_d
    ang_b = b.inv_inertia_world @ rb_x_d
    k = a.inv_mass + b.inv_mass + float(ra_x_d @ ang_a) + float(rb_x_d @ ang_b)
    return 1.0 / k if k > 0.0 else 0.0, ang_a.tolist(), ang_b.tolist()


def _prepare_contact(c, beta, slop, inv_dt, max_bias):
    a, b = c.body_a, c.body_b
    ra = c.point - a.pos
    rb = c.point - b.pos
    n = c.normal
    t1, t2 = tangent_basis(n)
    inv_kn, ang_a_n, ang_b_n = _direction_row(a, b, ra, rb, n)
    inv_k1, ang_a_1, ang_b_1 = _direction_row(a, b, ra, rb, t1)
    inv_k2, ang_a_2, ang_b_2 = _direction_row(a, b, ra, rb, t2)
    if c.depth >= 0.0:
        bias = min(beta * inv_dt * max(c.depth - slop, 0.0), max_bias)
    else:
        bias = c.depth * inv_dt  # speculative: allow closing the gap, no more
    ve = c.vel_extra_a
    # accumulated impulses live in a mutable list so rows can be reused
    acc = [0.0, 0.0, 0.0]  # lambda_n, lambda_t1, lambda_t2
    return (
        acc,
        6 * a.index, 6 * b.index,
        a.inv_mass, b.inv_mass,
        ra.tolist(), rb.tolist(),
        n.tolist(), t1.tolist(), t2.tolist(),
        inv_kn, inv_k1, inv_k2,
        ang_a_n, ang_b_n, ang_a_1, ang_b_1, ang_a_2, ang_b_2,
        bias, c.friction,
        ve.tolist(),
    )


def _rel_velocity(vel, ia, ib, ra, rb, ve):
    vax, vay, vaz = vel[ia], vel[ia + 1], vel[ia + 2]
    wax, way, waz = vel[ia + 3], vel[ia + 4], vel[ia + 5]
    vbx, vby, vbz = vel[ib], vel[ib + 1], vel[ib + 2]
    wbx, wby, wbz = vel[ib + 3], vel[ib + 4], vel[ib + 5]
    rax, ray, raz = ra
    rbx, rby, rbz = rb
    dvx = vax + way * raz - waz * ray - vbx - (wby * rbz - wbz * rby) + ve[0]
    dvy = vay + waz * rax - wax * raz - vby - (wbz * rbx - wbx * rbz) + ve[1]
    dvz = vaz + wax * ray - way * rax - vbz - (wbx * rby - wby * rbx) + ve[2]
    return dvx, dvy, dvz


def _apply_impulse(vel, ia, ib, inv_ma, inv_mb, px, py, pz, ang_a, ang_b, ra, rb):
    if inv_ma > 0.0:
        vel[ia] += inv_ma * px
        vel[ia + 1] += inv_ma * py
        vel[ia + 2] += inv_ma * pz
    if inv_mb > 0.0:
        vel[ib] -= inv_mb * px
        vel[ib + 1] -= inv_mb * py
        vel[ib + 2] -= inv_mb * pz


def _solve_contact(row, vel):
    (acc, ia, ib, inv_ma, inv_mb, ra, rb, n, t1, t2,
     inv_kn, inv_k1, inv_k2,
     ang_a_n, ang_b_n, ang_a_1, ang_b_1, ang_a_2, ang_b_2,
     bias, mu, ve) = row

    # normal impulse
    dvx, dvy, dvz = _rel_velocity(vel, ia, ib, ra, rb, ve)
    jv = dvx * n[0] + dvy * n[1] + dvz * n[2]
    lam_new = acc[0] - (jv - bias) * inv_kn
    if lam_new < 0.0:
        lam_new = 0.0
    d_lam = lam_new - acc[0]
    acc[0] = lam_new
    if d_lam != 0.0:
        _apply_directional(vel, ia, ib, inv_ma, inv_mb, d_lam, n, ang_a_n, ang_b_n)

    if mu <= 0.0 or acc[0] <= 0.0:
        return

    # friction impulses against the post-normal relative velocity
    dvx, dvy, dvz = _rel_velocity(vel, ia, ib, ra, rb, ve)
    jt1 = dvx * t1[0] + dvy * t1[1] + dvz * t1[2]
    jt2 = dvx * t2[0] + dvy * t2[1] + dvz * t2[2]
    new1 = acc[1] - jt1 * inv_k1
    new2 = acc[2] - jt2 * inv_k2
    max_f = mu * acc[0]
    mag = math.sqrt(new1 * new1 + new2 * new2)
    if mag > max_f:
        scale = max_f / mag
        new1 *= scale
        new2 *= scale
    d1 = new1 - acc[1]
    d2 = new2 - acc[2]
    acc[1] = new1
    acc[2] = new2
    if d1 != 0.0:
        _apply_directional(vel, ia, ib, inv_ma, inv_mb, d1, t1, ang_a_1, ang_b_1)
    if d2 != 0.0:
        _apply_directional(vel, ia, ib, inv_ma, inv_mb, d2, t2, ang_a_2, ang_b_2)


def _apply_directional(vel, ia, ib, inv_ma, inv_mb, lam, d, ang_a, ang_b):
    if inv_ma > 0.0:
        vel[ia] += inv_ma * lam * d[0]
        vel[ia + 1] += inv_ma * lam * d[1]
        vel[ia + 2] += inv_ma * lam * d[2]
        vel[ia + 3] += lam * ang_a[0]
        vel[ia + 4] += lam * ang_a[1]
        vel[ia + 5] += lam * ang_a[2]
    if inv_mb > 0.0:
        vel[ib] -= inv_mb * lam * d[0]
        vel[ib + 1] -= inv_mb * lam * d[1]
        vel[ib + 2] -= inv_mb * lam * d[2]
        vel[ib + 3] -= lam * ang_b[0]
        vel[ib + 4] -= lam * ang_b[1]
        vel[ib + 5] -= lam * ang_b[2]


# ----------------------------------------------------------------------
def _prepare_joint(joint, beta, inv_dt, max_bias):
    p, c = joint.parent, joint.child
    ra = p.rot @ joint.anchor_local_parent
    rb = c.rot @ joint.anchor_local_child

    k_mat = (p.inv_mass + c.inv_mass) * np.eye(3)
    for body, r in ((p, ra), (c, rb)):
        if body.inv_mass > 0.0:
            rx = _skew(r)
            k_mat -= rx @ body.inv_inertia_world @ rx
    k_inv = np.linalg.inv(k_mat)

    err = (c.pos + rb) - (p.pos + ra)
    bias = np.clip(beta * inv_dt * err, -max_bias, max_bias)

    axis_p = p.rot @ joint.axis_local_parent
    axis_c = c.rot @ joint.axis_local_child
    t1, t2 = tangent_basis(axis_p)
    # misalignment measured child-minus-parent, matching the point rows:
    # w_rel is driven to -beta*err/dt, which rotates axis_c back onto axis_p
    ang_err = cross3(axis_p, axis_c)
    inv_i_sum = p.inv_inertia_world + c.inv_inertia_world
    rows = []
    for t in (t1, t2):
        k_ang = float(t @ inv_i_sum @ t)
        bias_t = max(-max_bias, min(max_bias, beta * inv_dt * float(ang_err @ t)))
        resp_p = (p.inv_inertia_world @ t).tolist()
        resp_c = (c.inv_inertia_world @ t).tolist()
        rows.append((t.tolist(), 1.0 / k_ang if k_ang > 0.0 else 0.0, bias_t, resp_p, resp_c))

    return (
        6 * p.index, 6 * c.index,
        p.inv_mass, c.inv_mass,
        ra.tolist(), rb.tolist(),
        k_inv.flatten().tolist(),
        bias.tolist(),
        (p.inv_inertia_world).flatten().tolist(),
        (c.inv_inertia_world).flatten().tolist(),
        rows,
    )


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _solve_joint(jr, vel):
    (ip, ic, inv_mp, inv_mc, ra, rb, k_inv, bias, inv_ip, inv_ic, ang_rows) = jr

    # point constraint: child anchor velocity must match parent anchor velocity
    ux, uy, uz = _rel_velocity(vel, ic, ip, rb, ra, (0.0, 0.0, 0.0))
    rhs_x = -(ux + bias[0])
    rhs_y = -(uy + bias[1])
    rhs_z = -(uz + bias[2])
    px = k_inv[0] * rhs_x + k_inv[1] * rhs_y + k_inv[2] * rhs_z
    py = k_inv[3] * rhs_x + k_inv[4] * rhs_y + k_inv[5] * rhs_z
    pz = k_inv[6] * rhs_x + k_inv[7] * rhs_y + k_inv[8] * rhs_z

    if inv_mc > 0.0:
        vel[ic] += inv_mc * px
        vel[ic + 1] += inv_mc * py
        vel[ic + 2] += inv_mc * pz
        tx = rb[1] * pz - rb[2] * py
        ty = rb[2] * px - rb[0] * pz
        tz = rb[0] * py - rb[1] * px
        vel[ic + 3] += inv_ic[0] * tx + inv_ic[1] * ty + inv_ic[2] * tz
        vel[ic + 4] += inv_ic[3] * tx + inv_ic[4] * ty + inv_ic[5] * tz
        vel[ic + 5] += inv_ic[6] * tx + inv_ic[7] * ty + inv_ic[8] * tz
    if inv_mp > 0.0:
        vel[ip] -= inv_mp * px
        vel[ip + 1] -= inv_mp * py
        vel[ip + 2] -= inv_mp * pz
        tx = ra[1] * pz - ra[2] * py
        ty = ra[2] * px - ra[0] * pz
        tz = ra[0] * py - ra[1] * px
        vel[ip + 3] -= inv_ip[0] * tx + inv_ip[1] * ty + inv_ip[2] * tz
        vel[ip + 4] -= inv_ip[3] * tx + inv_ip[4] * ty + inv_ip[5] * tz
        vel[ip + 5] -= inv_ip[6] * tx + inv_ip[7] * ty + inv_ip[8] * tz

    # angular rows: kill relative angular velocity off the hinge axis
    for t, inv_k, bias_t, resp_p, resp_c in ang_rows:
        w_rel_t = ((vel[ic + 3] - vel[ip + 3]) * t[0]
                   + (vel[ic + 4] - vel[ip + 4]) * t[1]
                   + (vel[ic + 5] - vel[ip + 5]) * t[2])
        lam = -(w_rel_t + bias_t) * inv_k
        if inv_mc > 0.0:
            vel[ic + 3] += lam * resp_c[0]
            vel[ic + 4] += lam * resp_c[1]
            vel[ic + 5] += lam * resp_c[2]
        if inv_mp > 0.0:
            vel[ip + 3] -= lam * resp_p[0]
            vel[ip + 4] -= lam * resp_p[1]
            vel[ip + 5] -= lam * resp_p[2]
