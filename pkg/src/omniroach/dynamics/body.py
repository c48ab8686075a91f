"""Rigid bodies and their collision shapes.

A body carries an optional sphere cloud (used for the robot shell and
appendages, tested vectorized against planes and boxes) and an optional list
of oriented boxes (ground obstacles, beams).  The static ground plane is a
body with ``is_plane`` set.

Angular state is stored as world-frame angular momentum; angular velocity is
derived through the current world-frame inverse inertia.  This conserves
momentum exactly for torque-free flight.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import QUAT_IDENTITY, cross3, quat_normalize, quat_to_matrix


def box_inertia(mass: float, hx: float, hy: float, hz: float) -> np.ndarray:
    """Inertia tensor of a solid box with half extents (hx, hy, hz)."""
    k = mass / 3.0
    return np.diag([
        k * (hy * hy + hz * hz),
        k * (hx * hx + hz * hz),
        k * (hx * hx + hy * hy),
    ])


def ellipsoid_inertia(mass: float, a: float, b: float, c: float) -> np.ndarray:
    """Inertia tensor of a solid ellipsoid with semi-axes (a, b, c)."""
    k = mass / 5.0
    return np.diag([k * (b * b + c * c), k * (a * a + c * c), k * (a * a + b * b)])


def rod_inertia(mass: float, length: float) -> float:
    """Moment of inertia of a slender rod about one end."""
    return mass * length * length / 3.0


@dataclass
class BoxShape:
    """Axis-aligned box in the owning body's frame, offset by local_pos."""

    half_extents: np.ndarray
    local_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        self.local_pos = np.asarray(self.local_pos, dtype=float)
        if np.any(self.half_extents <= 0.0):
            raise ValueError("box half extents must be positive")


class Body:
    """One rigid body: pose, twist, mass properties, collision shapes."""

    def __init__(
        self,
        name: str,
        mass: float = 1.0,
        inertia: np.ndarray | None = None,
        pos=(0.0, 0.0, 0.0),
        quat=None,
        static: bool = False,
        friction: float = 0.5,
    ) -> None:
        if not static and mass <= 0.0:
            raise ValueError(f"body {name!r}: mass must be positive")
        self.name = name
        self.index = -1
        self.static = static
        self.friction = float(friction)
        # what rubber leg tread feels on this surface; smooth shells feel
        # `friction`, grippy treads may hold on even when the shell slides
        self.tread_friction = self.friction

        self.mass = float(mass)
        self.inv_mass = 0.0 if static else 1.0 / self.mass
        if inertia is None:
            inertia = np.eye(3) * (0.4 * self.mass * 0.01)
        inertia = np.asarray(inertia, dtype=float)
        if not static:
            if not np.allclose(inertia, inertia.T):
                raise ValueError(f"body {name!r}: inertia tensor must be symmetric")
            if np.any(np.linalg.eigvalsh(inertia) <= 0.0):
                raise ValueError(f"body {name!r}: inertia tensor must be positive-definite")
        self.inertia_body = inertia
        self.inv_inertia_body = np.zeros((3, 3)) if static else np.linalg.inv(inertia)

        self.pos = np.asarray(pos, dtype=float).copy()
        self.quat = QUAT_IDENTITY.copy() if quat is None else quat_normalize(np.asarray(quat, dtype=float))
        self.vel = np.zeros(3)
        self.ang_mom = np.zeros(3)

        # collision geometry
        self.is_plane = False
        self.sphere_locals: np.ndarray | None = None  # (N, 3)
        self.sphere_radii: np.ndarray | None = None  # (N,)
        self.sphere_vel_extra: np.ndarray | None = None  # (N, 3) world-frame surface velocity
        self.boxes: list[BoxShape] = []

        # per-step force/torque accumulators (world frame)
        self.force = np.zeros(3)
        self.torque = np.zeros(3)

        # caches refreshed by World.step
        self.rot = quat_to_matrix(self.quat)
        self.inv_inertia_world = np.zeros((3, 3))
        self.omega = np.zeros(3)
        self.refresh_kinematics()

    # ------------------------------------------------------------------
    def refresh_kinematics(self) -> None:
        self.rot = quat_to_matrix(self.quat)
        if self.static:
            return
        self.inv_inertia_world = self.rot @ self.inv_inertia_body @ self.rot.T
        self.omega = self.inv_inertia_world @ self.ang_mom

    def set_omega(self, omega) -> None:
        """Set angular velocity; updates stored angular momentum."""
        self.refresh_kinematics()
        inertia_world = self.rot @ self.inertia_body @ self.rot.T
        self.ang_mom = inertia_world @ np.asarray(omega, dtype=float)
        self.omega = self.inv_inertia_world @ self.ang_mom

    def set_spheres(self, locals_: np.ndarray, radii) -> None:
        self.sphere_locals = np.asarray(locals_, dtype=float)
        radii = np.asarray(radii, dtype=float)
        if radii.ndim == 0:
            radii = np.full(len(self.sphere_locals), float(radii))
        self.sphere_radii = radii
        self.sphere_vel_extra = np.zeros_like(self.sphere_locals)

    def add_box(self, half_extents, local_pos=(0.0, 0.0, 0.0)) -> BoxShape:
        shape = BoxShape(np.asarray(half_extents, dtype=float), np.asarray(local_pos, dtype=float))
        self.boxes.append(shape)
        return shape

    # ------------------------------------------------------------------
    def world_spheres(self) -> np.ndarray:
        """World positions of the sphere cloud, (N, 3)."""
        return self.sphere_locals @ self.rot.T + self.pos

    def point_velocity(self, point: np.ndarray) -> np.ndarray:
        return self.vel + cross3(self.omega, point - self.pos)

    def apply_force(self, force: np.ndarray, point: np.ndarray | None = None) -> None:
        self.force += force
        if point is not None:
            self.torque += cross3(point - self.pos, force)

    def apply_torque(self, torque: np.ndarray) -> None:
        self.torque += torque

    def kinetic_energy(self) -> float:
        if self.static:
            return 0.0
        return 0.5 * self.mass * float(self.vel @ self.vel) + 0.5 * float(self.omega @ self.ang_mom)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Body({self.name!r}, pos={self.pos.round(4)})"
