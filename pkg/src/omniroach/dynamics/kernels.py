"""Compiled hot loops for the velocity solver and narrow-phase collision.

Everything here is a straight port of the pure-Python reference
implementations in ``solver.py`` and ``collision.py`` operating on packed
float64 arrays.  The kernels are deterministic: fixed iteration order, no
fastmath, no threading.  If numba is unavailable the importers fall back to
the reference code paths.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _tangent_basis(n):
    if abs(n[0]) < 0.57:
        t1 = np.array([0.0, -n[2], n[1]])
    else:
        t1 = np.array([-n[2], 0.0, n[0]])
    t1 = t1 / np.sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2])
    t2 = np.array([
        n[1] * t1[2] - n[2] * t1[1],
        n[2] * t1[0] - n[0] * t1[2],
        n[0] * t1[1] - n[1] * t1[0],
    ])
    return t1, t2


@njit(cache=True)
def _inv3(m):
    """Closed-form inverse of a 3x3 matrix (adjugate / determinant)."""
    a, b, c = m[0, 0], m[0, 1], m[0, 2]
    d, e, f = m[1, 0], m[1, 1], m[1, 2]
    g, h, i = m[2, 0], m[2, 1], m[2, 2]
    co_a = e * i - f * h
    co_b = f * g - d * i
    co_c = d * h - e * g
    det = a * co_a + b * co_b + c * co_c
    out = np.empty((3, 3))
    if det == 0.0:
        out[:] = 0.0
        return out
    inv_det = 1.0 / det
    out[0, 0] = co_a * inv_det
    out[0, 1] = (c * h - b * i) * inv_det
    out[0, 2] = (b * f - c * e) * inv_det
    out[1, 0] = co_b * inv_det
    out[1, 1] = (a * i - c * g) * inv_det
    out[1, 2] = (c * d - a * f) * inv_det
    out[2, 0] = co_c * inv_det
    out[2, 1] = (b * g - a * h) * inv_det
    out[2, 2] = (a * e - b * d) * inv_det
    return out


@njit(cache=True)
def solve_velocity(vel, pos, inv_mass, inv_inertia,
                   ca, cb, c_point, c_normal, c_depth, c_mu, c_ve,
                   j_p, j_c, j_ra, j_rb, j_axis_p, j_axis_c,
                   beta, slop, max_bias, inv_dt, iterations):
    """Sequential-impulse iteration over joint and contact rows.

    Mutates ``vel`` (nb*6 flat linear+angular velocities) in place and
    returns the accumulated contact normal impulses.
    """
    nc = ca.shape[0]
    nj = j_p.shape[0]

    # ---------------- joint row preparation ----------------
    jk_inv = np.empty((nj, 3, 3))
    j_bias = np.empty((nj, 3))
    j_ang_t = np.empty((nj, 2, 3))
    j_ang_invk = np.empty((nj, 2))
    j_ang_bias = np.empty((nj, 2))
    j_resp_p = np.empty((nj, 2, 3))
    j_resp_c = np.empty((nj, 2, 3))
    for q in range(nj):
        p = j_p[q]
        c = j_c[q]
        ra = j_ra[q]
        rb = j_rb[q]
        k_mat = np.zeros((3, 3))
        mass_sum = inv_mass[p] + inv_mass[c]
        for d in range(3):
            k_mat[d, d] = mass_sum
        for body, r in ((p, ra), (c, rb)):
            if inv_mass[body] > 0.0:
                rx = np.array([
                    [0.0, -r[2], r[1]],
                    [r[2], 0.0, -r[0]],
                    [-r[1], r[0], 0.0],
                ])
                k_mat -= rx @ inv_inertia[body] @ rx
        jk_inv[q] = _inv3(k_mat)

        for d in range(3):
            err = (pos[c, d] + rb[d]) - (pos[p, d] + ra[d])
            b = beta * inv_dt * err
            if b > max_bias:
                b = max_bias
            elif b < -max_bias:
                b = -max_bias
            j_bias[q, d] = b

        axis_p = j_axis_p[q]
        axis_c = j_axis_c[q]
        t1, t2 = _tangent_basis(axis_p)
        # misalignment measured child-minus-parent, as in the point rows
        ang_err = np.array([
            axis_p[1] * axis_c[2] - axis_p[2] * axis_c[1],
            axis_p[2] * axis_c[0] - axis_p[0] * axis_c[2],
            axis_p[0] * axis_c[1] - axis_p[1] * axis_c[0],
        ])
        inv_i_sum = inv_inertia[p] + inv_inertia[c]
        for row, t in ((0, t1), (1, t2)):
            k_ang = float(t @ inv_i_sum @ t)
            bias_t = beta * inv_dt * float(ang_err @ t)
            if bias_t > max_bias:
                bias_t = max_bias
            elif bias_t < -max_bias:
                bias_t = -max_bias
            j_ang_t[q, row] = t
            j_ang_invk[q, row] = 1.0 / k_ang if k_ang > 0.0 else 0.0
            j_ang_bias[q, row] = bias_t
            j_resp_p[q, row] = inv_inertia[p] @ t
            j_resp_c[q, row] = inv_inertia[c] @ t

    # ---------------- contact row preparation ----------------
    c_ra = np.empty((nc, 3))
    c_rb = np.empty((nc, 3))
    c_t1 = np.empty((nc, 3))
    c_t2 = np.empty((nc, 3))
    c_invk = np.empty((nc, 3))
    c_ang_a = np.empty((nc, 3, 3))  # response rows for n, t1, t2
    c_ang_b = np.empty((nc, 3, 3))
    c_bias = np.empty(nc)
    acc = np.zeros((nc, 3))
    for q in range(nc):
        a = ca[q]
        b = cb[q]
        ra = c_point[q] - pos[a]
        rb = c_point[q] - pos[b]
        c_ra[q] = ra
        c_rb[q] = rb
        n = c_normal[q]
        t1, t2 = _tangent_basis(n)
        c_t1[q] = t1
        c_t2[q] = t2
        for row, d in ((0, n), (1, t1), (2, t2)):
            ra_x_d = np.array([
                ra[1] * d[2] - ra[2] * d[1],
                ra[2] * d[0] - ra[0] * d[2],
                ra[0] * d[1] - ra[1] * d[0],
            ])
            rb_x_d = np.array([
                rb[1] * d[2] - rb[2] * d[1],
                rb[2] * d[0] - rb[0] * d[2],
                rb[0] * d[1] - rb[1] * d[0],
            ])
            ang_a = inv_inertia[a] @ ra_x_d
            ang_b = inv_inertia[b] @ rb_x_d
            k = (inv_mass[a] + inv_mass[b]
                 + float(ra_x_d @ ang_a) + float(rb_x_d @ ang_b))
            c_invk[q, row] = 1.0 / k if k > 0.0 else 0.0
            c_ang_a[q, row] = ang_a
            c_ang_b[q, row] = ang_b
        depth = c_depth[q]
        if depth >= 0.0:
            over = depth - slop
            if over < 0.0:
                over = 0.0
            bias = beta * inv_dt * over
            if bias > max_bias:
                bias = max_bias
        else:
            bias = depth * inv_dt  # speculative: allow closing the gap
        c_bias[q] = bias

    # ---------------- iterations ----------------
    for _ in range(iterations):
        for q in range(nj):
            ip = 6 * j_p[q]
            ic = 6 * j_c[q]
            inv_mp = inv_mass[j_p[q]]
            inv_mc = inv_mass[j_c[q]]
            ra = j_ra[q]
            rb = j_rb[q]

            # point row: child anchor velocity matches parent anchor velocity
            ux = (vel[ic] + vel[ic + 4] * rb[2] - vel[ic + 5] * rb[1]
                  - vel[ip] - (vel[ip + 4] * ra[2] - vel[ip + 5] * ra[1]))
            uy = (vel[ic + 1] + vel[ic + 5] * rb[0] - vel[ic + 3] * rb[2]
                  - vel[ip + 1] - (vel[ip + 5] * ra[0] - vel[ip + 3] * ra[2]))
            uz = (vel[ic + 2] + vel[ic + 3] * rb[1] - vel[ic + 4] * rb[0]
                  - vel[ip + 2] - (vel[ip + 3] * ra[1] - vel[ip + 4] * ra[0]))
            rhs_x = -(ux + j_bias[q, 0])
            rhs_y = -(uy + j_bias[q, 1])
            rhs_z = -(uz + j_bias[q, 2])
            k = jk_inv[q]
            px = k[0, 0] * rhs_x + k[0, 1] * rhs_y + k[0, 2] * rhs_z
            py = k[1, 0] * rhs_x + k[1, 1] * rhs_y + k[1, 2] * rhs_z
            pz = k[2, 0] * rhs_x + k[2, 1] * rhs_y + k[2, 2] * rhs_z

            if inv_mc > 0.0:
                vel[ic] += inv_mc * px
                vel[ic + 1] += inv_mc * py
                vel[ic + 2] += inv_mc * pz
                tx = rb[1] * pz - rb[2] * py
                ty = rb[2] * px - rb[0] * pz
                tz = rb[0] * py - rb[1] * px
                ii = inv_inertia[j_c[q]]
                vel[ic + 3] += ii[0, 0] * tx + ii[0, 1] * ty + ii[0, 2] * tz
                vel[ic + 4] += ii[1, 0] * tx + ii[1, 1] * ty + ii[1, 2] * tz
                vel[ic + 5] += ii[2, 0] * tx + ii[2, 1] * ty + ii[2, 2] * tz
            if inv_mp > 0.0:
                vel[ip] -= inv_mp * px
                vel[ip + 1] -= inv_mp * py
                vel[ip + 2] -= inv_mp * pz
                tx = ra[1] * pz - ra[2] * py
                ty = ra[2] * px - ra[0] * pz
                tz = ra[0] * py - ra[1] * px
                ii = inv_inertia[j_p[q]]
                vel[ip + 3] -= ii[0, 0] * tx + ii[0, 1] * ty + ii[0, 2] * tz
                vel[ip + 4] -= ii[1, 0] * tx + ii[1, 1] * ty + ii[1, 2] * tz
                vel[ip + 5] -= ii[2, 0] * tx + ii[2, 1] * ty + ii[2, 2] * tz

            # angular rows: kill relative angular velocity off the hinge axis
            for row in range(2):
                t = j_ang_t[q, row]
                w_rel_t = ((vel[ic + 3] - vel[ip + 3]) * t[0]
                           + (vel[ic + 4] - vel[ip + 4]) * t[1]
                           + (vel[ic + 5] - vel[ip + 5]) * t[2])
                lam = -(w_rel_t + j_ang_bias[q, row]) * j_ang_invk[q, row]
                if inv_mc > 0.0:
                    vel[ic + 3] += lam * j_resp_c[q, row, 0]
                    vel[ic + 4] += lam * j_resp_c[q, row, 1]
                    vel[ic + 5] += lam * j_resp_c[q, row, 2]
                if inv_mp > 0.0:
                    vel[ip + 3] -= lam * j_resp_p[q, row, 0]
                    vel[ip + 4] -= lam * j_resp_p[q, row, 1]
                    vel[ip + 5] -= lam * j_resp_p[q, row, 2]

        for q in range(nc):
            ia = 6 * ca[q]
            ib = 6 * cb[q]
            inv_ma = inv_mass[ca[q]]
            inv_mb = inv_mass[cb[q]]
            ra = c_ra[q]
            rb = c_rb[q]
            ve = c_ve[q]
            n = c_normal[q]

            dvx = (vel[ia] + vel[ia + 4] * ra[2] - vel[ia + 5] * ra[1]
                   - vel[ib] - (vel[ib + 4] * rb[2] - vel[ib + 5] * rb[1])
                   + ve[0])
            dvy = (vel[ia + 1] + vel[ia + 5] * ra[0] - vel[ia + 3] * ra[2]
                   - vel[ib + 1] - (vel[ib + 5] * rb[0] - vel[ib + 3] * rb[2])
                   + ve[1])
            dvz = (vel[ia + 2] + vel[ia + 3] * ra[1] - vel[ia + 4] * ra[0]
                   - vel[ib + 2] - (vel[ib + 3] * rb[1] - vel[ib + 4] * rb[0])
                   + ve[2])
            jv = dvx * n[0] + dvy * n[1] + dvz * n[2]
            lam_new = acc[q, 0] - (jv - c_bias[q]) * c_invk[q, 0]
            if lam_new < 0.0:
                lam_new = 0.0
            d_lam = lam_new - acc[q, 0]
            acc[q, 0] = lam_new
            if d_lam != 0.0:
                _apply_directional(vel, ia, ib, inv_ma, inv_mb, d_lam, n,
                                   c_ang_a[q, 0], c_ang_b[q, 0])

            if c_mu[q] <= 0.0 or acc[q, 0] <= 0.0:
                continue

            # friction against the post-normal relative velocity
            dvx = (vel[ia] + vel[ia + 4] * ra[2] - vel[ia + 5] * ra[1]
                   - vel[ib] - (vel[ib + 4] * rb[2] - vel[ib + 5] * rb[1])
                   + ve[0])
            dvy = (vel[ia + 1] + vel[ia + 5] * ra[0] - vel[ia + 3] * ra[2]
                   - vel[ib + 1] - (vel[ib + 5] * rb[0] - vel[ib + 3] * rb[2])
                   + ve[1])
            dvz = (vel[ia + 2] + vel[ia + 3] * ra[1] - vel[ia + 4] * ra[0]
                   - vel[ib + 2] - (vel[ib + 3] * rb[1] - vel[ib + 4] * rb[0])
                   + ve[2])
            t1 = c_t1[q]
            t2 = c_t2[q]
            jt1 = dvx * t1[0] + dvy * t1[1] + dvz * t1[2]
            jt2 = dvx * t2[0] + dvy * t2[1] + dvz * t2[2]
            new1 = acc[q, 1] - jt1 * c_invk[q, 1]
            new2 = acc[q, 2] - jt2 * c_invk[q, 2]
            max_f = c_mu[q] * acc[q, 0]
            mag = np.sqrt(new1 * new1 + new2 * new2)
            if mag > max_f:
                scale = max_f / mag
                new1 *= scale
                new2 *= scale
            d1 = new1 - acc[q, 1]
            d2 = new2 - acc[q, 2]
            acc[q, 1] = new1
            acc[q, 2] = new2
            if d1 != 0.0:
                _apply_directional(vel, ia, ib, inv_ma, inv_mb, d1, t1,
                                   c_ang_a[q, 1], c_ang_b[q, 1])
            if d2 != 0.0:
                _apply_directional(vel, ia, ib, inv_ma, inv_mb, d2, t2,
                                   c_ang_a[q, 2], c_ang_b[q, 2])

    return acc[:, 0].copy()


@njit(cache=True)
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
# narrow-phase kernels
# ----------------------------------------------------------------------
@njit(cache=True)
def spheres_vs_boxes(centers, radii, box_rot, box_pos, box_half, margin):
    """Sphere cloud against a set of boxes sharing one orientation.

    Returns packed contact arrays: sphere index, box index, point, normal
    (from box toward sphere), depth, and the number of rows filled.
    """
    ns = centers.shape[0]
    nbx = box_pos.shape[0]
    cap = ns * nbx
    out_sph = np.empty(cap, dtype=np.int64)
    out_box = np.empty(cap, dtype=np.int64)
    out_pt = np.empty((cap, 3))
    out_n = np.empty((cap, 3))
    out_depth = np.empty(cap)
    count = 0

    r_max = radii.max() + margin
    lo0 = centers[:, 0].min() - r_max
    lo1 = centers[:, 1].min() - r_max
    lo2 = centers[:, 2].min() - r_max
    hi0 = centers[:, 0].max() + r_max
    hi1 = centers[:, 1].max() + r_max
    hi2 = centers[:, 2].max() + r_max

    for k in range(nbx):
        he = box_half[k]
        reach = np.sqrt(he[0] * he[0] + he[1] * he[1] + he[2] * he[2])
        bc = box_pos[k]
        if (bc[0] < lo0 - reach or bc[0] > hi0 + reach
                or bc[1] < lo1 - reach or bc[1] > hi1 + reach
                or bc[2] < lo2 - reach or bc[2] > hi2 + reach):
            continue
        for i in range(ns):
            dx = centers[i, 0] - bc[0]
            dy = centers[i, 1] - bc[1]
            dz = centers[i, 2] - bc[2]
            # into box frame (columns of box_rot are the box axes)
            lx = dx * box_rot[0, 0] + dy * box_rot[1, 0] + dz * box_rot[2, 0]
            ly = dx * box_rot[0, 1] + dy * box_rot[1, 1] + dz * box_rot[2, 1]
            lz = dx * box_rot[0, 2] + dy * box_rot[1, 2] + dz * box_rot[2, 2]
            cx = min(max(lx, -he[0]), he[0])
            cy = min(max(ly, -he[1]), he[1])
            cz = min(max(lz, -he[2]), he[2])
            ex = lx - cx
            ey = ly - cy
            ez = lz - cz
            d2 = ex * ex + ey * ey + ez * ez
            if d2 > 0.0:
                dist = np.sqrt(d2)
                depth = radii[i] - dist
                if depth < -margin:
                    continue
                nx = ex / dist
                ny = ey / dist
                nz = ez / dist
                px, py, pz = cx, cy, cz
            else:
                # center inside the box: push out along the nearest face
                g0 = he[0] - abs(lx)
                g1 = he[1] - abs(ly)
                g2 = he[2] - abs(lz)
                nx = ny = nz = 0.0
                px, py, pz = lx, ly, lz
                if g0 <= g1 and g0 <= g2:
                    depth = g0 + radii[i]
                    nx = 1.0 if lx >= 0.0 else -1.0
                    px = nx * he[0]
                elif g1 <= g2:
                    depth = g1 + radii[i]
                    ny = 1.0 if ly >= 0.0 else -1.0
                    py = ny * he[1]
                else:
                    depth = g2 + radii[i]
                    nz = 1.0 if lz >= 0.0 else -1.0
                    pz = nz * he[2]
            out_sph[count] = i
            out_box[count] = k
            out_n[count, 0] = (box_rot[0, 0] * nx + box_rot[0, 1] * ny
                               + box_rot[0, 2] * nz)
            out_n[count, 1] = (box_rot[1, 0] * nx + box_rot[1, 1] * ny
                               + box_rot[1, 2] * nz)
            out_n[count, 2] = (box_rot[2, 0] * nx + box_rot[2, 1] * ny
                               + box_rot[2, 2] * nz)
            out_pt[count, 0] = bc[0] + (box_rot[0, 0] * px + box_rot[0, 1] * py
                                        + box_rot[0, 2] * pz)
            out_pt[count, 1] = bc[1] + (box_rot[1, 0] * px + box_rot[1, 1] * py
                                        + box_rot[1, 2] * pz)
            out_pt[count, 2] = bc[2] + (box_rot[2, 0] * px + box_rot[2, 1] * py
                                        + box_rot[2, 2] * pz)
            out_depth[count] = depth
            count += 1
    return out_sph, out_box, out_pt, out_n, out_depth, count


@njit(cache=True)
def box_vs_box_sat(rot_a, pos_a, half_a, rot_b, pos_b, half_b):
    """SAT test between two oriented boxes.

    Returns (overlap, axis, hit): smallest-overlap separating axis pointing
    from b toward a; ``hit`` is False when the boxes are separated.
    """
    axis_out = np.zeros(3)
    # quick bounding-sphere reject
    tx = pos_b[0] - pos_a[0]
    ty = pos_b[1] - pos_a[1]
    tz = pos_b[2] - pos_a[2]
    ra = np.sqrt(half_a[0] ** 2 + half_a[1] ** 2 + half_a[2] ** 2)
    rb = np.sqrt(half_b[0] ** 2 + half_b[1] ** 2 + half_b[2] ** 2)
    if tx * tx + ty * ty + tz * tz > (ra + rb) ** 2:
        return 0.0, axis_out, False

    axes = np.empty((15, 3))
    n_axes = 0
    for k in range(3):
        axes[n_axes] = rot_a[:, k]
        n_axes += 1
        axes[n_axes] = rot_b[:, k]
        n_axes += 1
    for i in range(3):
        for j in range(3):
            cx = (rot_a[1, i] * rot_b[2, j] - rot_a[2, i] * rot_b[1, j])
            cy = (rot_a[2, i] * rot_b[0, j] - rot_a[0, i] * rot_b[2, j])
            cz = (rot_a[0, i] * rot_b[1, j] - rot_a[1, i] * rot_b[0, j])
            norm = np.sqrt(cx * cx + cy * cy + cz * cz)
            if norm > 1e-9:
                axes[n_axes, 0] = cx / norm
                axes[n_axes, 1] = cy / norm
                axes[n_axes, 2] = cz / norm
                n_axes += 1

    min_overlap = np.inf
    found = False
    for q in range(n_axes):
        ax = axes[q]
        proj_a = (abs(ax[0] * rot_a[0, 0] + ax[1] * rot_a[1, 0]
                      + ax[2] * rot_a[2, 0]) * half_a[0]
                  + abs(ax[0] * rot_a[0, 1] + ax[1] * rot_a[1, 1]
                        + ax[2] * rot_a[2, 1]) * half_a[1]
                  + abs(ax[0] * rot_a[0, 2] + ax[1] * rot_a[1, 2]
                        + ax[2] * rot_a[2, 2]) * half_a[2])
        proj_b = (abs(ax[0] * rot_b[0, 0] + ax[1] * rot_b[1, 0]
                      + ax[2] * rot_b[2, 0]) * half_b[0]
                  + abs(ax[0] * rot_b[0, 1] + ax[1] * rot_b[1, 1]
                        + ax[2] * rot_b[2, 1]) * half_b[1]
                  + abs(ax[0] * rot_b[0, 2] + ax[1] * rot_b[1, 2]
                        + ax[2] * rot_b[2, 2]) * half_b[2])
        along = ax[0] * tx + ax[1] * ty + ax[2] * tz
        overlap = proj_a + proj_b - abs(along)
        if overlap < 0.0:
            return 0.0, axis_out, False
        if overlap < min_overlap:
            min_overlap = overlap
            found = True
            if along <= 0.0:
                axis_out[0] = ax[0]
                axis_out[1] = ax[1]
                axis_out[2] = ax[2]
            else:
                axis_out[0] = -ax[0]
                axis_out[1] = -ax[1]
                axis_out[2] = -ax[2]
    return min_overlap, axis_out, found


# ----------------------------------------------------------------------
# leg contact-force kernel (mirrors morphology._leg_forces)
# ----------------------------------------------------------------------
@njit(cache=True)
def leg_forces(hubs, r, stance, v_cmds,
               body_pos, body_rot, body_vel, body_omega, body_fric,
               plane_active, plane_z, plane_slot,
               box_rot, box_pos, box_half, box_slot,
               other_pos, other_vel, other_omega, other_static, other_fric,
               k_stiff, c_damp, slip_gain, lat_grip,
               stall_torque, no_load_rad,
               out_force, out_point, out_normal, out_nf, out_slot):
    """Spring-damper wheel contact forces for the six leg hubs.

    Surfaces are the ground plane plus every terrain box; the deepest
    penetration wins, matching the reference implementation's strict-max
    scan order (plane first, then boxes in body/box order).
    """
    fwd0 = body_rot[0, 0]
    fwd1 = body_rot[1, 0]
    fwd2 = body_rot[2, 0]
    nbx = box_pos.shape[0]

    for i in range(6):
        out_slot[i] = -1
        if not stance[i]:
            continue
        hx, hy, hz = hubs[i, 0], hubs[i, 1], hubs[i, 2]

        best_depth = -1.0
        bn0 = bn1 = bn2 = 0.0
        bp0 = bp1 = bp2 = 0.0
        best_slot = -1

        if plane_active:
            depth = r - (hz - plane_z)
            if depth > 0.0:
                best_depth = depth
                bn0, bn1, bn2 = 0.0, 0.0, 1.0
                bp0, bp1, bp2 = hx, hy, plane_z
                best_slot = plane_slot

        for kbox in range(nbx):
            bc = box_pos[kbox]
            he = box_half[kbox]
            dx = hx - bc[0]
            dy = hy - bc[1]
            dz = hz - bc[2]
            reach = np.sqrt(he[0] ** 2 + he[1] ** 2 + he[2] ** 2) + r
            if dx * dx + dy * dy + dz * dz > reach * reach:
                continue
            rot = box_rot[kbox]
            lx = dx * rot[0, 0] + dy * rot[1, 0] + dz * rot[2, 0]
            ly = dx * rot[0, 1] + dy * rot[1, 1] + dz * rot[2, 1]
            lz = dx * rot[0, 2] + dy * rot[1, 2] + dz * rot[2, 2]
            cx = min(max(lx, -he[0]), he[0])
            cy = min(max(ly, -he[1]), he[1])
            cz = min(max(lz, -he[2]), he[2])
            ex = lx - cx
            ey = ly - cy
            ez = lz - cz
            d2 = ex * ex + ey * ey + ez * ez
            if d2 > 0.0:
                dist = np.sqrt(d2)
                depth = r - dist
                if depth <= 0.0:
                    continue
                nx, ny, nz = ex / dist, ey / dist, ez / dist
                px, py, pz = cx, cy, cz
            else:
                g0 = he[0] - abs(lx)
                g1 = he[1] - abs(ly)
                g2 = he[2] - abs(lz)
                nx = ny = nz = 0.0
                px, py, pz = lx, ly, lz
                if g0 <= g1 and g0 <= g2:
                    depth = g0 + r
                    nx = 1.0 if lx >= 0.0 else -1.0
                    px = nx * he[0]
                elif g1 <= g2:
                    depth = g1 + r
                    ny = 1.0 if ly >= 0.0 else -1.0
                    py = ny * he[1]
                else:
                    depth = g2 + r
                    nz = 1.0 if lz >= 0.0 else -1.0
                    pz = nz * he[2]
            if depth > best_depth:
                best_depth = depth
                bn0 = rot[0, 0] * nx + rot[0, 1] * ny + rot[0, 2] * nz
                bn1 = rot[1, 0] * nx + rot[1, 1] * ny + rot[1, 2] * nz
                bn2 = rot[2, 0] * nx + rot[2, 1] * ny + rot[2, 2] * nz
                bp0 = bc[0] + rot[0, 0] * px + rot[0, 1] * py + rot[0, 2] * pz
                bp1 = bc[1] + rot[1, 0] * px + rot[1, 1] * py + rot[1, 2] * pz
                bp2 = bc[2] + rot[2, 0] * px + rot[2, 1] * py + rot[2, 2] * pz
                best_slot = box_slot[kbox]

        if best_slot < 0:
            continue
        if bn2 < 0.4:
            # legs only bear on walkable surfaces; vertical faces are
            # handled by the shell contacts, not the wheel model
            continue

        # relative velocity of the hub contact point
        rx = bp0 - body_pos[0]
        ry = bp1 - body_pos[1]
        rz = bp2 - body_pos[2]
        vx = body_vel[0] + body_omega[1] * rz - body_omega[2] * ry
        vy = body_vel[1] + body_omega[2] * rx - body_omega[0] * rz
        vz = body_vel[2] + body_omega[0] * ry - body_omega[1] * rx
        if not other_static[best_slot]:
            ox = bp0 - other_pos[best_slot, 0]
            oy = bp1 - other_pos[best_slot, 1]
            oz = bp2 - other_pos[best_slot, 2]
            vx -= (other_vel[best_slot, 0]
                   + other_omega[best_slot, 1] * oz
                   - other_omega[best_slot, 2] * oy)
            vy -= (other_vel[best_slot, 1]
                   + other_omega[best_slot, 2] * ox
                   - other_omega[best_slot, 0] * oz)
            vz -= (other_vel[best_slot, 2]
                   + other_omega[best_slot, 0] * oy
                   - other_omega[best_slot, 1] * ox)

        v_n = vx * bn0 + vy * bn1 + vz * bn2
        normal_force = k_stiff * best_depth - c_damp * v_n
        if normal_force <= 0.0:
            continue

        # drive direction: body forward projected into the surface plane
        fdn = fwd0 * bn0 + fwd1 * bn1 + fwd2 * bn2
        f0 = fwd0 - fdn * bn0
        f1 = fwd1 - fdn * bn1
        f2 = fwd2 - fdn * bn2
        norm = np.sqrt(f0 * f0 + f1 * f1 + f2 * f2)
        vt0 = vx - v_n * bn0
        vt1 = vy - v_n * bn1
        vt2 = vz - v_n * bn2
        if norm > 1e-6:
            f0 /= norm
            f1 /= norm
            f2 /= norm
            s0 = vt0 - v_cmds[i] * f0
            s1 = vt1 - v_cmds[i] * f1
            s2 = vt2 - v_cmds[i] * f2
        else:
            s0, s1, s2 = vt0, vt1, vt2
        ft0 = -slip_gain * s0
        ft1 = -slip_gain * s1
        ft2 = -slip_gain * s2
        mu = min(body_fric, other_fric[best_slot])
        if norm > 1e-6:
            rate = abs(vx * f0 + vy * f1 + vz * f2) / r
        else:
            rate = 0.0
        frac = 1.0 - rate / no_load_rad
        if frac < 0.0:
            frac = 0.0
        elif frac > 1.0:
            frac = 1.0
        cap = min(mu * normal_force, stall_torque * frac / r)
        if norm > 1e-6:
            # anisotropic grip: a C-leg rolls along its drive direction but
            # skids sideways, so the lateral component saturates at a
            # fraction of the rolling cap
            f_roll = ft0 * f0 + ft1 * f1 + ft2 * f2
            l0 = ft0 - f_roll * f0
            l1 = ft1 - f_roll * f1
            l2 = ft2 - f_roll * f2
            lat_cap = lat_grip * cap
            lat_mag = np.sqrt(l0 * l0 + l1 * l1 + l2 * l2)
            if lat_mag > lat_cap and lat_mag > 0.0:
                scale = lat_cap / lat_mag
                l0 *= scale
                l1 *= scale
                l2 *= scale
            if f_roll > cap:
                f_roll = cap
            elif f_roll < -cap:
                f_roll = -cap
            ft0 = f_roll * f0 + l0
            ft1 = f_roll * f1 + l1
            ft2 = f_roll * f2 + l2
        else:
            mag = np.sqrt(ft0 * ft0 + ft1 * ft1 + ft2 * ft2)
            if mag > cap and mag > 0.0:
                scale = cap / mag
                ft0 *= scale
                ft1 *= scale
                ft2 *= scale

        out_force[i, 0] = normal_force * bn0 + ft0
        out_force[i, 1] = normal_force * bn1 + ft1
        out_force[i, 2] = normal_force * bn2 + ft2
        out_point[i, 0] = bp0
        out_point[i, 1] = bp1
        out_point[i, 2] = bp2
        out_normal[i, 0] = bn0
        out_normal[i, 1] = bn1
        out_normal[i, 2] = bn2
        out_nf[i] = normal_force
        out_slot[i] = best_slot
