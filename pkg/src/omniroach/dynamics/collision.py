"""Narrow-phase collision detection between convex primitives.

Supported pairs: sphere-plane, sphere-box, sphere-sphere, box-plane and
box-box (SAT).  Sphere clouds are tested vectorized with numpy; contacts are
emitted in a deterministic order (body index, then shape index).

Contact normals point from body ``b`` toward body ``a``: the resolution
impulse pushes ``a`` along ``+normal``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..geometry import cross3
from . import kernels


@dataclass
class Contact:
    point: np.ndarray
    normal: np.ndarray  # unit, from b to a
    depth: float  # >= 0
    body_a: "Body"
    body_b: "Body"
    friction: float
    sphere_index: int = -1  # index into body_a's sphere cloud, if applicable
    normal_impulse: float = 0.0  # filled in by the solver
    vel_extra_a: np.ndarray = field(default_factory=lambda: np.zeros(3))


class UnsupportedShapePair(ValueError):
    pass


def pair_friction(a, b) -> float:
    return min(a.friction, b.friction)


# ----------------------------------------------------------------------
def _sphere_cloud_vs_plane(a, plane_body, out: list[Contact], margin: float) -> None:
    centers = a.world_spheres()
    radii = a.sphere_radii
    dist = centers[:, 2] - plane_body.pos[2]
    pen = radii - dist
    idx = np.nonzero(pen >= -margin)[0]
    if len(idx) == 0:
        return
    mu = pair_friction(a, plane_body)
    normal = np.array([0.0, 0.0, 1.0])
    for i in idx:
        point = centers[i].copy()
        point[2] = centers[i][2] - radii[i]  # contact at sphere bottom
        out.append(Contact(point, normal, float(pen[i]), a, plane_body, mu,
                           sphere_index=int(i), vel_extra_a=a.sphere_vel_extra[i]))


def _sphere_cloud_vs_boxes(a, b, out: list[Contact], margin: float) -> None:
    if kernels.NUMBA_AVAILABLE:
        _sphere_cloud_vs_boxes_compiled(a, b, out, margin)
        return
    centers = a.world_spheres()
    radii = a.sphere_radii
    mu = pair_friction(a, b)
    rot_b = b.rot
    r_max = float(radii.max()) + margin
    lo = centers.min(axis=0)
    hi = centers.max(axis=0)
    for box in b.boxes:
        box_center = b.pos + rot_b @ box.local_pos
        # cheap sphere-cloud AABB vs box bounding-sphere rejection
        reach = float(np.linalg.norm(box.half_extents)) + r_max
        if (np.any(box_center < lo - reach) or np.any(box_center > hi + reach)):
            continue
        local = (centers - box_center) @ rot_b  # into box frame
        he = box.half_extents
        clamped = np.clip(local, -he, he)
        delta = local - clamped
        d2 = np.einsum("ij,ij->i", delta, delta)
        outside = d2 > 0.0
        dist = np.sqrt(np.where(outside, d2, 1.0))
        pen = np.where(outside, radii - dist, np.inf)
        idx = np.nonzero(pen >= -margin)[0]
        for i in idx:
            if outside[i]:
                n_local = delta[i] / dist[i]
                depth = float(radii[i] - dist[i])
                p_local = clamped[i]
            else:
                # center inside box: push out along the nearest face
                gaps = he - np.abs(local[i])
                k = int(np.argmin(gaps))
                n_local = np.zeros(3)
                n_local[k] = 1.0 if local[i][k] >= 0.0 else -1.0
                depth = float(gaps[k] + radii[i])
                p_local = local[i].copy()
                p_local[k] = n_local[k] * he[k]
            normal = rot_b @ n_local
            point = box_center + rot_b @ p_local
            out.append(Contact(point, normal, depth, a, b, mu,
                               sphere_index=int(i), vel_extra_a=a.sphere_vel_extra[i]))


def _sphere_cloud_vs_boxes_compiled(a, b, out: list[Contact],
                                    margin: float) -> None:
    centers = a.world_spheres()
    radii = a.sphere_radii
    nbx = len(b.boxes)
    box_pos = np.empty((nbx, 3))
    box_half = np.empty((nbx, 3))
    for k, box in enumerate(b.boxes):
        box_pos[k] = b.pos + b.rot @ box.local_pos
        box_half[k] = box.half_extents
    sph, _box, pts, normals, depths, count = kernels.spheres_vs_boxes(
        centers, radii, b.rot, box_pos, box_half, margin)
    if count == 0:
        return
    mu = pair_friction(a, b)
    for q in range(count):
        i = int(sph[q])
        out.append(Contact(pts[q], normals[q], float(depths[q]), a, b, mu,
                           sphere_index=i, vel_extra_a=a.sphere_vel_extra[i]))


def _sphere_cloud_vs_sphere_cloud(a, b, out: list[Contact]) -> None:
    ca = a.world_spheres()
    cb = b.world_spheres()
    mu = pair_friction(a, b)
    for i in range(len(ca)):
        delta = ca[i] - cb
        d = np.linalg.norm(delta, axis=1)
        pen = a.sphere_radii[i] + b.sphere_radii - d
        for j in np.nonzero(pen >= 0.0)[0]:
            if d[j] == 0.0:
                continue
            n = delta[j] / d[j]
            point = cb[j] + n * b.sphere_radii[j]
            out.append(Contact(point, n, float(pen[j]), a, b, mu,
                               sphere_index=int(i), vel_extra_a=a.sphere_vel_extra[i]))


_CORNER_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def _box_corners_world(body, box) -> np.ndarray:
    corners = _CORNER_SIGNS * box.half_extents
    return (corners + box.local_pos) @ body.rot.T + body.pos


def _box_vs_plane(a, plane_body, out: list[Contact], margin: float) -> None:
    mu = pair_friction(a, plane_body)
    normal = np.array([0.0, 0.0, 1.0])
    z0 = plane_body.pos[2]
    for box in a.boxes:
        corners = _box_corners_world(a, box)
        for i in np.nonzero(corners[:, 2] - z0 <= margin)[0]:
            out.append(Contact(corners[i], normal, float(z0 - corners[i][2]), a, plane_body, mu))


def _box_vs_box(a, b, out: list[Contact]) -> None:
    """SAT overlap test with a vertex-inclusion manifold.

    Adequate for resting/shallow box-box contact; the robot scenarios only
    exercise sphere contacts, so no face-clipping manifold is built.
    """
    mu = pair_friction(a, b)
    for box_a in a.boxes:
        for box_b in b.boxes:
            ca = a.pos + a.rot @ box_a.local_pos
            cb = b.pos + b.rot @ box_b.local_pos
            if kernels.NUMBA_AVAILABLE:
                min_overlap, min_axis, hit = kernels.box_vs_box_sat(
                    a.rot, ca, box_a.half_extents, b.rot, cb,
                    box_b.half_extents)
                if not hit:
                    continue
                _box_manifold(a, b, box_a, box_b, ca, cb, min_axis,
                              float(min_overlap), mu, out)
                continue
            axes = []
            for k in range(3):
                axes.append(a.rot[:, k])
                axes.append(b.rot[:, k])
            for i in range(3):
                for j in range(3):
                    cx = cross3(a.rot[:, i], b.rot[:, j])
                    n = np.linalg.norm(cx)
                    if n > 1e-9:
                        axes.append(cx / n)
            t = cb - ca
            min_overlap = np.inf
            min_axis = None
            for axis in axes:
                ra = float(np.abs(axis @ a.rot) @ box_a.half_extents)
                rb = float(np.abs(axis @ b.rot) @ box_b.half_extents)
                sep = abs(float(axis @ t))
                overlap = ra + rb - sep
                if overlap < 0.0:
                    min_axis = None
                    break
                if overlap < min_overlap:
                    min_overlap = overlap
                    min_axis = axis if float(axis @ t) <= 0.0 else -axis
            if min_axis is None:
                continue
            _box_manifold(a, b, box_a, box_b, ca, cb, min_axis,
                          float(min_overlap), mu, out)


def _box_manifold(a, b, box_a, box_b, ca, cb, min_axis, min_overlap, mu,
                  out: list[Contact]) -> None:
    """Vertex-inclusion manifold for an overlapping box pair."""
    found = False
    for corner in _box_corners_world(b, box_b):
        local = a.rot.T @ (corner - ca)
        if np.all(np.abs(local) <= box_a.half_extents + 1e-12):
            out.append(Contact(corner.copy(), min_axis.copy(), min_overlap, a, b, mu))
            found = True
    for corner in _box_corners_world(a, box_a):
        local = b.rot.T @ (corner - cb)
        if np.all(np.abs(local) <= box_b.half_extents + 1e-12):
            out.append(Contact(corner.copy(), min_axis.copy(), min_overlap, a, b, mu))
            found = True
    if not found:
        mid = 0.5 * (ca + cb)
        out.append(Contact(mid, min_axis.copy(), min_overlap, a, b, mu))


# ----------------------------------------------------------------------
def detect_collisions(world, margin: float = 0.0) -> list[Contact]:
    """All contacts between non-excluded body pairs, deterministic order.

    With ``margin > 0`` near-contacts (separation < margin) are also emitted
    with a negative depth; the solver treats them speculatively, allowing
    approach up to the remaining gap.  The default matches the public
    contract: only contacts with penetration >= 0.
    """
    contacts: list[Contact] = []
    bodies = world.bodies
    for i, a in enumerate(bodies):
        for b in bodies[i + 1:]:
            if a.static and b.static:
                continue
            if (a.index, b.index) in world.exclusions:
                continue
            _collide_pair(a, b, contacts, margin)
    return contacts


def _has_shapes(body) -> bool:
    return body.is_plane or body.sphere_locals is not None or bool(body.boxes)


def _collide_pair(a, b, out: list[Contact], margin: float) -> None:
    if not _has_shapes(a) or not _has_shapes(b):
        return
    # dynamic sphere clouds first, planes always as second operand
    if b.sphere_locals is not None and a.sphere_locals is None:
        a, b = b, a
    if a.is_plane:
        a, b = b, a
    if a.sphere_locals is not None:
        if b.is_plane:
            _sphere_cloud_vs_plane(a, b, out, margin)
        if b.boxes:
            _sphere_cloud_vs_boxes(a, b, out, margin)
        if b.sphere_locals is not None:
            _sphere_cloud_vs_sphere_cloud(a, b, out)
        return
    if a.boxes:
        if b.is_plane:
            _box_vs_plane(a, b, out, margin)
            return
        if b.boxes:
            _box_vs_box(a, b, out)
            return
    raise UnsupportedShapePair(f"no collision routine for bodies {a.name!r} and {b.name!r}")
