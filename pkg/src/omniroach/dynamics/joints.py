"""Revolute joints with motor, torsional-spring, or free drives.

The joint constrains the anchor points of the two bodies to coincide and the
relative rotation to the hinge axis; both are enforced at velocity level by
the solver with Baumgarte position bias.  Drive torques (spring law, servo
envelope) are applied as external torques before velocity integration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import normalize, quat_conj, quat_mul


@dataclass
class SpringDrive:
    stiffness: float  # N*m/rad
    rest_angle: float = 0.0
    damping: float = 0.0  # N*m*s/rad

    def __post_init__(self) -> None:
        if self.stiffness < 0.0:
            raise ValueError("spring stiffness must be >= 0")


@dataclass
class MotorDrive:
    envelope: "MotorEnvelope"
    target: float = 0.0  # rad (position mode) or rad/s (velocity mode)
    mode: str = "position"


@dataclass
class FreeDrive:
    pass


def joint_torque(joint: "RevoluteJoint", angle: float, angular_rate: float) -> float:
    """Restoring torque of a spring-driven joint at the given deflection."""
    drive = joint.drive
    if not isinstance(drive, SpringDrive):
        raise ValueError("joint_torque requires a spring drive")
    return -drive.stiffness * (angle - drive.rest_angle) - drive.damping * angular_rate


class RevoluteJoint:
    def __init__(self, parent, child, axis, anchor_world, drive=None, angle_limits=None) -> None:
        """``axis`` and ``anchor_world`` are given in world coordinates at the
        current body poses; they are stored body-local."""
        axis = normalize(np.asarray(axis, dtype=float))
        anchor_world = np.asarray(anchor_world, dtype=float)
        if angle_limits is not None and not angle_limits[0] < angle_limits[1]:
            raise ValueError("joint limits must satisfy lo < hi")
        self.parent = parent
        self.child = child
        self.drive = drive if drive is not None else FreeDrive()
        self.angle_limits = angle_limits

        self.axis_local_parent = parent.rot.T @ axis
        self.axis_local_child = child.rot.T @ axis
        self.anchor_local_parent = parent.rot.T @ (anchor_world - parent.pos)
        self.anchor_local_child = child.rot.T @ (anchor_world - child.pos)
        # reference relative orientation for angle measurement
        self.rest_rel_quat = quat_mul(quat_conj(parent.quat), child.quat)

    # ------------------------------------------------------------------
    def axis_world(self) -> np.ndarray:
        return self.parent.rot @ self.axis_local_parent

    def angle(self) -> float:
        """Signed twist of child relative to parent about the hinge axis."""
        rel = quat_mul(quat_conj(self.parent.quat), self.child.quat)
        rel = quat_mul(quat_conj(self.rest_rel_quat), rel)
        axis = self.axis_local_parent
        proj = rel[1] * axis[0] + rel[2] * axis[1] + rel[3] * axis[2]
        return 2.0 * math.atan2(proj, rel[0])

    def rate(self) -> float:
        axis = self.axis_world()
        return float((self.child.omega - self.parent.omega) @ axis)

    # ------------------------------------------------------------------
    def apply_drive_torques(self, dt: float) -> None:
        angle = self.angle()
        rate = self.rate()
        torque = 0.0
        drive = self.drive
        if isinstance(drive, SpringDrive):
            torque = joint_torque(self, angle, rate)
        elif isinstance(drive, MotorDrive):
            from ..morphology import servo_update

            torque = servo_update(drive.envelope, angle, rate, dt,
                                  target=drive.target, mode=drive.mode)
        if self.angle_limits is not None:
            lo, hi = self.angle_limits
            # stiff unilateral spring past the limit
            k_lim, c_lim = 50.0, 0.5
            if angle < lo:
                torque += -k_lim * (angle - lo) - c_lim * rate
            elif angle > hi:
                torque += -k_lim * (angle - hi) - c_lim * rate
        if torque != 0.0:
            tau = self.axis_world() * torque
            self.child.apply_torque(tau)
            self.parent.apply_torque(-tau)
