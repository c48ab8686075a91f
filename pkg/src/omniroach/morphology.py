"""Omni-Roach robot model: parameter presets, servo envelopes, and the
articulated robot (shell sphere cloud, six driven legs, 2-DOF tail, wings).

The chassis, shell, tail and wings form one rigid body.  Tail and wings are
kinematic appendages: servo-rate-limited angles move their collision spheres,
and their dynamic influence enters as inertial reaction torques, gravity
center-of-mass shift torques, and the articulation velocity of the spheres.
Legs are modeled as six intermittently powered wheels at the hip positions:
a radial spring-damper normal force plus slip-driven Coulomb friction capped
by the motor torque envelope.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Body, World, box_inertia, rod_inertia
from .dynamics import kernels
from .geometry import cross3, quat_from_axis_angle, quat_from_euler, quat_to_matrix

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MotorEnvelope:
    """Linear torque-speed envelope of one servo class."""

    no_load_speed: float  # rev/s
    stall_torque: float  # N*m

    def __post_init__(self) -> None:
        if self.no_load_speed <= 0.0:
            raise ValueError("no_load_speed must be positive")
        if self.stall_torque <= 0.0:
            raise ValueError("stall_torque must be positive")

    @property
    def no_load_rad(self) -> float:
        return self.no_load_speed * TWO_PI

    def available_torque(self, rate: float, direction: float = 1.0) -> float:
        """Torque available when spinning at ``rate`` while driving in
        ``direction`` (+1/-1); linear droop to zero at no-load speed."""
        frac = 1.0 - (direction * rate) / self.no_load_rad
        return self.stall_torque * min(max(frac, 0.0), 1.0)


XL430 = MotorEnvelope(no_load_speed=0.95, stall_torque=1.4)
XL330 = MotorEnvelope(no_load_speed=1.71, stall_torque=0.52)


def servo_update(
    motor: MotorEnvelope,
    current_angle: float,
    current_rate: float,
    dt: float,
    target: float = 0.0,
    mode: str = "position",
    rate_gain: float = 25.0,
    torque_gain: float = 50.0,
) -> float:
    """Torque produced by a servo this step.

    Position mode runs a proportional rate command toward the target angle;
    the inner loop drives toward that rate.  Output is saturated by the
    torque-speed envelope in the drive direction.
    """
    if mode == "position":
        desired_rate = rate_gain * (target - current_angle)
        desired_rate = max(-motor.no_load_rad, min(motor.no_load_rad, desired_rate))
    elif mode == "velocity":
        desired_rate = target
    else:
        raise ValueError(f"unknown servo mode {mode!r}")
    demand = torque_gain * (desired_rate - current_rate)
    cap_pos = motor.available_torque(current_rate, 1.0)
    cap_neg = motor.available_torque(current_rate, -1.0)
    return max(-cap_neg, min(cap_pos, demand))


# ----------------------------------------------------------------------
@dataclass
class RobotConfig:
    version: str
    body_length: float
    body_width: float
    body_height: float
    total_mass: float
    hip_height: float
    tail_mass: float
    tail_length: float
    leg_shape: str
    shell_shape: str = "rounded"
    leg_count: int = 6
    stride_frequency_nominal: float = 2.7  # Hz (steps per second)
    run_speed_nominal: float = 0.30  # m/s
    motor_legs: MotorEnvelope = XL330
    motor_tail_pitch: MotorEnvelope = XL330
    motor_tail_yaw: MotorEnvelope = XL330
    motor_wings: MotorEnvelope = XL330
    # calibration knobs (not robot data): compliance, friction, wing geometry
    wing_mass_fraction: float = 0.06  # per wing, fraction of total mass
    wing_max_open: float = math.radians(135.0)
    leg_stiffness: float = 0.0  # N/m; 0 -> derived from weight
    leg_damping_ratio: float = 0.5
    leg_lateral_grip: float = 0.3  # sideways grip as a fraction of rolling grip
    gait_stance_duty: float = 0.7  # Buehler clock: cycle fraction in stance
    friction: float = 0.9
    leg_friction: float = 1.2  # rubbery leg tread: grips walking surfaces
    shell_sphere_radius: float = 0.012

    def __post_init__(self) -> None:
        for name in ("body_length", "body_width", "body_height", "total_mass",
                     "hip_height", "tail_mass", "tail_length",
                     "stride_frequency_nominal", "run_speed_nominal"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"config field {name} must be positive")
        if self.leg_shape not in ("C", "S"):
            raise ValueError("leg_shape must be 'C' or 'S'")
        if self.shell_shape not in ("rounded", "cuboidal"):
            raise ValueError("shell_shape must be 'rounded' or 'cuboidal'")
        if self.leg_count != 6:
            raise ValueError("leg_count must be 6")
        if not 0.0 < self.leg_lateral_grip <= 1.0:
            raise ValueError("leg_lateral_grip must be in (0, 1]")
        if not 0.5 <= self.gait_stance_duty < 1.0:
            raise ValueError("gait_stance_duty must be in [0.5, 1)")
        if self.tail_mass >= self.total_mass:
            raise ValueError("tail_mass must be below total_mass")
        if self.leg_stiffness == 0.0:
            self.leg_stiffness = 60.0 * self.total_mass * 9.81

    @property
    def weight(self) -> float:
        return self.total_mass * 9.81

    @staticmethod
    def v1(**overrides) -> "RobotConfig":
        cfg = RobotConfig(
            version="v1",
            body_length=0.35, body_width=0.23, body_height=0.13,
            total_mass=1.8, hip_height=0.05,
            tail_mass=0.17, tail_length=0.19,
            leg_shape="C",
            stride_frequency_nominal=0.9, run_speed_nominal=0.26,
            motor_legs=XL430, motor_tail_pitch=XL430,
            motor_tail_yaw=XL430, motor_wings=XL430,
        )
        return replace(cfg, **overrides) if overrides else cfg

    @staticmethod
    def v2(**overrides) -> "RobotConfig":
        cfg = RobotConfig(
            version="v2",
            body_length=0.20, body_width=0.185, body_height=0.10,
            total_mass=0.75, hip_height=0.05,
            tail_mass=0.10, tail_length=0.145,
            leg_shape="S",
            stride_frequency_nominal=2.7, run_speed_nominal=0.30,
        )
        return replace(cfg, **overrides) if overrides else cfg

    @staticmethod
    def preset(version: str, **overrides) -> "RobotConfig":
        if version == "v1":
            return RobotConfig.v1(**overrides)
        if version == "v2":
            return RobotConfig.v2(**overrides)
        raise ValueError(f"unknown robot version {version!r}")


# ----------------------------------------------------------------------
def _rounded_shell_points(a: float, b: float, c: float, rs: float) -> np.ndarray:
    """Sphere centers approximating an ellipsoid shell (semi-axes a, b, c)."""
    a, b, c = a - rs, b - rs, c - rs
    pts = [(-a, 0.0, 0.0), (a, 0.0, 0.0)]
    for u in (-1.05, -0.55, 0.0, 0.55, 1.05):  # longitudinal stations
        cu, su = math.cos(u), math.sin(u)
        for k in range(12):
            v = TWO_PI * k / 12
            pts.append((a * su, b * cu * math.cos(v), c * cu * math.sin(v)))
    return np.array(pts)


def _cuboidal_shell_points(a: float, b: float, c: float, rs: float) -> np.ndarray:
    """Sphere centers along the edges and faces of a box with half extents
    (a, b, c); the envelope approximates the cuboid."""
    a, b, c = a - rs, b - rs, c - rs
    xs = np.linspace(-a, a, 5)
    ys = np.linspace(-b, b, 5)
    zs = np.linspace(-c, c, 3)
    pts = []
    for x in xs:
        for y in ys:
            for z in zs:
                on_face = (x in (-a, a)) + (y in (-b, b)) + (z in (-c, c))
                if on_face:
                    pts.append((x, y, z))
    return np.array(pts)


class Robot:
    """One robot instance living inside a World."""

    def __init__(self, config: RobotConfig, world: World,
                 pos=(0.0, 0.0, 0.0), yaw: float = 0.0, roll: float = 0.0,
                 pitch: float = 0.0) -> None:
        self.config = config
        self.world = world
        cfg = config

        a, b, c = cfg.body_length / 2, cfg.body_width / 2, cfg.body_height / 2
        m_wing = cfg.wing_mass_fraction * cfg.total_mass
        m_chassis = cfg.total_mass - cfg.tail_mass - 2.0 * m_wing
        if m_chassis <= 0.0:
            raise ValueError("config field wing_mass_fraction leaves no chassis mass")
        self.component_masses = {
            "chassis": m_chassis,
            "tail": cfg.tail_mass,
            "wing_left": m_wing,
            "wing_right": m_wing,
        }

        # body origin at the composite center of mass (tail at home)
        self.tail_pivot_local_geo = np.array([-a, 0.0, -0.4 * c])
        tail_com_geo = self.tail_pivot_local_geo + np.array([-cfg.tail_length / 2, 0.0, 0.0])
        com_geo = (cfg.tail_mass * tail_com_geo) / cfg.total_mass
        self.geo_center = -com_geo  # geometric shell center in body frame
        self.tail_pivot_local = self.tail_pivot_local_geo + self.geo_center

        # composite inertia about the center of mass
        m_shell = m_chassis + 2.0 * m_wing
        inertia = box_inertia(m_shell, a, b, c)
        inertia += m_shell * _parallel_axis(self.geo_center)
        i_rod = cfg.tail_mass * cfg.tail_length ** 2 / 12.0
        inertia += np.diag([0.0, i_rod, i_rod])
        inertia += cfg.tail_mass * _parallel_axis(tail_com_geo + self.geo_center)

        quat = quat_from_euler(roll, pitch, yaw)
        self.body = Body(f"robot_{cfg.version}", mass=cfg.total_mass, inertia=inertia,
                         pos=pos, quat=quat, friction=cfg.friction)
        world.add_body(self.body)

        # ---- shell sphere cloud ------------------------------------------
        rs = cfg.shell_sphere_radius
        if cfg.shell_shape == "rounded":
            shell = _rounded_shell_points(a, b, c, rs)
        else:
            shell = _cuboidal_shell_points(a, b, c, rs)
        shell = shell + self.geo_center
        self.n_shell = len(shell)

        top = shell[:, 2] - self.geo_center[2] > 0.3 * c
        self.wing_left_idx = np.nonzero(top & (shell[:, 1] > 0.02 * b))[0]
        self.wing_right_idx = np.nonzero(top & (shell[:, 1] < -0.02 * b))[0]
        self.front_idx = np.nonzero(shell[:, 0] - self.geo_center[0] > 0.5 * a)[0]

        # wing hinge: a shared transverse line near the head; opening sweeps
        # the wing tips backward-up over the body (and into the ground when
        # the robot is inverted, pitching it up toward vertical)
        self.hinge_left = self.geo_center + np.array([0.75 * a, 0.0, 0.8 * c])
        self.hinge_right = self.hinge_left.copy()

        # tail spheres: midpoint and tip
        self.tail_sphere_fracs = (0.5, 1.0)
        tail_pts = np.array([self.tail_pivot_local + f * np.array([-cfg.tail_length, 0, 0])
                             for f in self.tail_sphere_fracs])
        self.tail_idx = np.arange(self.n_shell, self.n_shell + len(tail_pts))
        self._tail_sphere_set = {int(i) for i in self.tail_idx}

        locals_ = np.vstack([shell, tail_pts])
        radii = np.full(len(locals_), rs)
        radii[self.tail_idx] = 0.010
        self.body.set_spheres(locals_, radii)
        self._home_locals = locals_.copy()
        self._prev_locals = locals_.copy()
        self._locals_angles = None  # appendage pose behind _prev_locals
        self._tail_dir = np.array([-1.0, 0.0, 0.0])
        self._wing_com_home = {
            "left": locals_[self.wing_left_idx].mean(axis=0),
            "right": locals_[self.wing_right_idx].mean(axis=0),
        }
        self._tail_com_home = self.tail_pivot_local + np.array([-cfg.tail_length / 2, 0, 0])

        # ---- legs --------------------------------------------------------
        r = cfg.hip_height
        hub_x = np.array([0.62 * a, 0.0, -0.62 * a])
        hub_y = b - 0.15 * b
        hubs = []
        offsets = []
        for i, x in enumerate(hub_x):
            for side, y in ((1, hub_y), (-1, -hub_y)):
                hubs.append(self.geo_center + np.array([x, y, -c]))
                # alternating tripod: {LF, LR, RM} vs {LM, RF, RR}
                tripod_a = (i % 2 == 0) == (side == 1)
                offsets.append(0.0 if tripod_a else math.pi)
        self.leg_hubs = np.array(hubs)
        self.leg_phase_offsets = np.array(offsets)
        self.leg_radius = r
        self.leg_sides = np.array([1, -1, 1, -1, 1, -1])
        self.hub_angles = np.zeros(6)
        self.leg_stiffness = cfg.leg_stiffness
        self.leg_damping = 2.0 * cfg.leg_damping_ratio * math.sqrt(
            cfg.leg_stiffness * cfg.total_mass / 3.0)
        self.slip_gain = 0.25 * cfg.total_mass / world.dt
        self.last_leg_forces = [None] * 6

        # ---- actuation state ----------------------------------------------
        self.gait_enabled = False
        self.drive_left = 0.0  # -1..1 commanded speed fraction per side
        self.drive_right = 0.0
        self.gait_phase = 0.0
        self.tail_pitch = 0.0
        self.tail_yaw = 0.0
        self.tail_pitch_rate = 0.0
        self.tail_yaw_rate = 0.0
        self.tail_pitch_target = 0.0
        self.tail_yaw_target = 0.0
        self.tail_stowed = False  # folded into the shell; boom retracted
        self.wing_left = 0.0
        self.wing_right = 0.0
        self.wing_left_rate = 0.0
        self.wing_right_rate = 0.0
        self.wing_left_target = 0.0
        self.wing_right_target = 0.0
        self._alpha_p = 0.0
        self._alpha_y = 0.0

        # appendage acceleration caps from stall torque / appendage inertia
        self.i_tail = rod_inertia(cfg.tail_mass, cfg.tail_length)
        self.tail_accel_max = cfg.motor_tail_pitch.stall_torque / self.i_tail
        i_wing = m_wing * (0.6 * b) ** 2
        self.wing_accel_max = cfg.motor_wings.stall_torque / max(i_wing, 1e-6)

        self._contact_bodies_cache = None
        self._surface_cache = None
        world.pre_step_hooks.append(self.update)
        self._update_appendage_spheres(world.dt, apply_reaction=False)

    # ------------------------------------------------------------------
    # commands
    def set_drive(self, left: float, right: float, gait_enabled: bool = True) -> None:
        self.drive_left = max(-1.0, min(1.0, left))
        self.drive_right = max(-1.0, min(1.0, right))
        self.gait_enabled = gait_enabled

    def set_tail(self, pitch: float, yaw: float) -> None:
        """Tail setpoints in radians; pitch 0 = straight back, +pi/2 = down."""
        self.tail_pitch_target = max(math.radians(-80), min(math.radians(100), pitch))
        self.tail_yaw_target = max(math.radians(-90), min(math.radians(90), yaw))

    def set_tail_stowed(self, stowed: bool) -> None:
        """Fold the tail into the shell: its mass sits at the pivot and the
        boom no longer protrudes, so it cannot touch anything."""
        if stowed != self.tail_stowed:
            self.tail_stowed = stowed
            self._locals_angles = None  # force a sphere-local rebuild

    def set_wing_opening(self, left: float, right: float) -> None:
        """Wing opening angles in radians, clamped to [0, max_open]."""
        max_open = self.config.wing_max_open
        if not (0.0 <= left <= max_open and 0.0 <= right <= max_open):
            warnings.warn("wing opening command out of range; clamped", stacklevel=2)
        self.wing_left_target = max(0.0, min(max_open, left))
        self.wing_right_target = max(0.0, min(max_open, right))

    # ------------------------------------------------------------------
    # pose helpers
    def up_dot(self) -> float:
        """Body +z axis dotted with world up (1 upright, -1 inverted)."""
        return float(self.body.rot[2, 2])

    def forward_world(self) -> np.ndarray:
        return self.body.rot[:, 0]

    def heading(self) -> float:
        f = self.forward_world()
        return math.atan2(f[1], f[0])

    def roll_pitch(self) -> tuple[float, float]:
        """Roll and pitch magnitude-safe from the rotation matrix (rad)."""
        rot = self.body.rot
        roll = math.atan2(rot[2, 1], rot[2, 2])
        pitch = -math.asin(max(-1.0, min(1.0, rot[2, 0])))
        return roll, pitch

    def flip_upside_down(self) -> None:
        """Drop the robot on its back in place (for self-right trials)."""
        from .geometry import quat_from_axis_angle, quat_mul

        body = self.body
        axis = body.rot @ np.array([1.0, 0.0, 0.0])
        body.quat = quat_mul(quat_from_axis_angle(axis, math.pi), body.quat)
        body.pos = body.pos.copy()
        body.pos[2] = self.config.body_height * 0.8
        body.vel[:] = 0.0
        body.ang_mom[:] = 0.0
        body.refresh_kinematics()

    def standing_height(self) -> float:
        return self.leg_radius + self.config.body_height / 2 - self.geo_center[2]

    def shell_min_x(self) -> float:
        return float(self.body.world_spheres()[:, 0].min())

    def shell_max_x(self) -> float:
        return float(self.body.world_spheres()[:, 0].max())

    # ------------------------------------------------------------------
    def contact_bodies(self):
        if self._contact_bodies_cache is None:
            self._contact_bodies_cache = [
                body for body in self.world.bodies
                if body is not self.body and (body.is_plane or body.boxes)
            ]
        return self._contact_bodies_cache

    # ------------------------------------------------------------------
    def update(self, world: World) -> None:
        """Per-step hook: servo tracking, appendage spheres, leg forces."""
        dt = world.dt
        if self.gait_enabled:
            freq = self.config.stride_frequency_nominal
            scale = 0.5 * (abs(self.drive_left) + abs(self.drive_right))
            self.gait_phase = (self.gait_phase + TWO_PI * freq * scale * dt) % (2.0 * TWO_PI)
        self._track_appendages(dt)
        self._update_appendage_spheres(dt, apply_reaction=True)
        self._leg_forces(dt)

    def _track_appendages(self, dt: float) -> None:
        cfg = self.config
        prev_p, prev_y = self.tail_pitch_rate, self.tail_yaw_rate
        self.tail_pitch, self.tail_pitch_rate = _track(
            self.tail_pitch, self.tail_pitch_rate, self.tail_pitch_target,
            cfg.motor_tail_pitch.no_load_rad, self.tail_accel_max, dt)
        self.tail_yaw, self.tail_yaw_rate = _track(
            self.tail_yaw, self.tail_yaw_rate, self.tail_yaw_target,
            cfg.motor_tail_yaw.no_load_rad, self.tail_accel_max, dt)
        self._alpha_p = (self.tail_pitch_rate - prev_p) / dt
        self._alpha_y = (self.tail_yaw_rate - prev_y) / dt
        self.wing_left, self.wing_left_rate = _track(
            self.wing_left, self.wing_left_rate, self.wing_left_target,
            cfg.motor_wings.no_load_rad, self.wing_accel_max, dt)
        self.wing_right, self.wing_right_rate = _track(
            self.wing_right, self.wing_right_rate, self.wing_right_target,
            cfg.motor_wings.no_load_rad, self.wing_accel_max, dt)

    def _update_appendage_spheres(self, dt: float, apply_reaction: bool) -> None:
        cfg = self.config
        body = self.body
        angles = (self.wing_left, self.wing_right, self.tail_pitch, self.tail_yaw)
        if angles == self._locals_angles:
            # appendages holding pose: sphere locals unchanged since last step
            body.sphere_vel_extra[:] = 0.0
            d = self._tail_dir
        else:
            locals_ = self._home_locals.copy()

            # wings rotate about the transverse hinge; tips sweep backward-up
            if self.wing_left != 0.0:
                locals_[self.wing_left_idx] = _rotate_about_line(
                    self._home_locals[self.wing_left_idx], self.hinge_left,
                    np.array([0.0, 1.0, 0.0]), self.wing_left)
            if self.wing_right != 0.0:
                locals_[self.wing_right_idx] = _rotate_about_line(
                    self._home_locals[self.wing_right_idx], self.hinge_right,
                    np.array([0.0, 1.0, 0.0]), self.wing_right)

            # tail direction: pitch about body y (down positive), then lateral
            # swing about body x (displaces the pitched-down tip sideways)
            cp, sp = math.cos(self.tail_pitch), math.sin(self.tail_pitch)
            cy, sy = math.cos(self.tail_yaw), math.sin(self.tail_yaw)
            d = np.array([-cp, sp * sy, -sp * cy])
            reach = 0.1 * cfg.tail_length if self.tail_stowed else cfg.tail_length
            for k, f in zip(self.tail_idx, self.tail_sphere_fracs):
                locals_[k] = self.tail_pivot_local + f * reach * d

            body.sphere_locals = locals_
            # articulation velocity of moving spheres (world frame)
            delta = locals_ - self._prev_locals
            if delta.any():
                body.sphere_vel_extra = (delta / dt) @ body.rot.T
            else:
                body.sphere_vel_extra[:] = 0.0
            self._prev_locals = locals_
            self._locals_angles = angles
            self._tail_dir = d

        if not apply_reaction:
            return

        # gravity torque from displaced appendage masses
        g = self.world.gravity
        torque = np.zeros(3)
        reach = 0.1 * cfg.tail_length if self.tail_stowed else cfg.tail_length
        tail_com = self.tail_pivot_local + 0.5 * reach * d
        torque += cross3(body.rot @ (tail_com - self._tail_com_home),
                           cfg.tail_mass * g)
        m_wing = self.component_masses["wing_left"]
        for side, idx in (("left", self.wing_left_idx), ("right", self.wing_right_idx)):
            com = body.sphere_locals[idx].mean(axis=0)
            torque += cross3(body.rot @ (com - self._wing_com_home[side]), m_wing * g)

        # inertial reaction of the tail servo accelerations
        pitch_axis = np.array([0.0, -1.0, 0.0])  # +pitch moves the tip down
        swing_axis = np.array([1.0, 0.0, 0.0])
        sp = math.sin(self.tail_pitch)
        i_tail = self.i_tail * (0.01 if self.tail_stowed else 1.0)
        i_swing = i_tail * sp * sp
        torque += body.rot @ (-i_tail * self._alpha_p * pitch_axis
                              - i_swing * self._alpha_y * swing_axis)
        body.apply_torque(torque)

    # ------------------------------------------------------------------
    def _surface_arrays(self):
        """Packed plane/box surface data for the leg-force kernel."""
        bodies = self.contact_bodies()
        cached = self._surface_cache
        if cached is not None:
            arrays, dyn_slots, dyn_boxes = cached
            if not dyn_slots:
                return arrays
            (_, _, _, _, box_rot, box_pos, _, _,
             other_pos, other_vel, other_omega, _, _) = arrays
            for slot, other in dyn_slots:
                other_pos[slot] = other.pos
                other_vel[slot] = other.vel
                other_omega[slot] = other.omega
            for k, other, local_pos in dyn_boxes:
                box_rot[k] = other.rot
                box_pos[k] = other.pos + other.rot @ local_pos
            return arrays

        n_slots = len(bodies)
        other_pos = np.zeros((n_slots, 3))
        other_vel = np.zeros((n_slots, 3))
        other_omega = np.zeros((n_slots, 3))
        other_static = np.empty(n_slots, dtype=np.bool_)
        other_fric = np.empty(n_slots)
        plane_active = False
        plane_z = 0.0
        plane_slot = -1
        boxes = []
        dyn_slots = [(slot, b) for slot, b in enumerate(bodies) if not b.static]
        for slot, other in enumerate(bodies):
            other_static[slot] = other.static
            other_fric[slot] = other.tread_friction  # what leg treads feel
            if not other.static:
                other_pos[slot] = other.pos
                other_vel[slot] = other.vel
                other_omega[slot] = other.omega
            if other.is_plane:
                if plane_active:  # one supported plane; rest via python path
                    return None
                plane_active = True
                plane_z = float(other.pos[2])
                plane_slot = slot
                continue
            for box in other.boxes:
                boxes.append((other, box.local_pos, box.half_extents, slot))
        nbx = len(boxes)
        box_rot = np.empty((nbx, 3, 3))
        box_pos = np.empty((nbx, 3))
        box_half = np.empty((nbx, 3))
        box_slot = np.empty(nbx, dtype=np.int64)
        dyn_boxes = []
        for k, (other, local_pos, half, slot) in enumerate(boxes):
            box_rot[k] = other.rot
            box_pos[k] = other.pos + other.rot @ local_pos
            box_half[k] = half
            box_slot[k] = slot
            if not other.static:
                dyn_boxes.append((k, other, local_pos))
        arrays = (bodies, plane_active, plane_z, plane_slot,
                  box_rot, box_pos, box_half, box_slot,
                  other_pos, other_vel, other_omega, other_static, other_fric)
        self._surface_cache = (arrays, dyn_slots, dyn_boxes)
        return arrays

    def _leg_forces_compiled(self, dt: float) -> bool:
        arrays = self._surface_arrays()
        if arrays is None:
            return False
        (bodies, plane_active, plane_z, plane_slot,
         box_rot, box_pos, box_half, box_slot,
         other_pos, other_vel, other_omega, other_static, other_fric) = arrays

        cfg = self.config
        body = self.body
        hubs = self.leg_hubs @ body.rot.T + body.pos
        rot_phase = 0.5 * self.gait_phase  # legs revolve once per two steps
        stance = np.zeros(6, dtype=np.bool_)
        v_cmds = np.zeros(6)
        for i in range(6):
            self.last_leg_forces[i] = None
            if self.gait_enabled:
                phase = (rot_phase + self.leg_phase_offsets[i]) % TWO_PI
                if phase >= TWO_PI * cfg.gait_stance_duty:  # swing
                    continue
                drive = (self.drive_left if self.leg_sides[i] > 0
                         else self.drive_right)
                v_cmds[i] = cfg.run_speed_nominal * drive
            stance[i] = True
            self.hub_angles[i] = (rot_phase + self.leg_phase_offsets[i]) % TWO_PI

        out_force = np.zeros((6, 3))
        out_point = np.zeros((6, 3))
        out_normal = np.zeros((6, 3))
        out_nf = np.zeros(6)
        out_slot = np.full(6, -1, dtype=np.int64)
        env = cfg.motor_legs
        kernels.leg_forces(
            hubs, self.leg_radius, stance, v_cmds,
            body.pos, body.rot, body.vel, body.omega, cfg.leg_friction,
            plane_active, plane_z, plane_slot,
            box_rot, box_pos, box_half, box_slot,
            other_pos, other_vel, other_omega, other_static, other_fric,
            self.leg_stiffness, self.leg_damping, self.slip_gain,
            cfg.leg_lateral_grip, env.stall_torque, env.no_load_rad,
            out_force, out_point, out_normal, out_nf, out_slot)

        for i in range(6):
            slot = int(out_slot[i])
            if slot < 0:
                continue
            other = bodies[slot]
            force = out_force[i]
            point = out_point[i]
            body.apply_force(force, point)
            if not other.static:
                other.apply_force(-force, point)
            f_t = force - out_nf[i] * out_normal[i]
            self.last_leg_forces[i] = (float(out_nf[i]), f_t, point, other.name)
        return True

    def _leg_forces(self, dt: float) -> None:
        if kernels.NUMBA_AVAILABLE and self._leg_forces_compiled(dt):
            return
        cfg = self.config
        body = self.body
        r = self.leg_radius
        hubs_world = self.leg_hubs @ body.rot.T + body.pos
        rot_phase = 0.5 * self.gait_phase  # legs revolve once per two steps

        fwd = body.rot[:, 0]
        k, c_damp = self.leg_stiffness, self.leg_damping
        env = cfg.motor_legs
        stall_force = env.stall_torque / r

        for i in range(6):
            self.last_leg_forces[i] = None
            if self.gait_enabled:
                phase = (rot_phase + self.leg_phase_offsets[i]) % TWO_PI
                # Buehler clock: the stance half-circle takes stance_duty of
                # the cycle, so opposite tripods overlap in double support
                if phase >= TWO_PI * cfg.gait_stance_duty:  # swing: retracted
                    continue
                drive = self.drive_left if self.leg_sides[i] > 0 else self.drive_right
                v_cmd = cfg.run_speed_nominal * drive
            else:
                v_cmd = 0.0
            self.hub_angles[i] = (rot_phase + self.leg_phase_offsets[i]) % TWO_PI

            hub = hubs_world[i]
            best = None
            for other in self.contact_bodies():
                cand = _sphere_surface_contact(hub, r, other)
                if cand is not None and (best is None or cand[1] > best[1]):
                    best = cand + (other,)
            if best is None:
                continue
            n, depth, point, other = best
            if n[2] < 0.4:
                # legs only bear on walkable surfaces; vertical faces are
                # handled by the shell contacts, not the wheel model
                continue
            v_rel = body.point_velocity(point)
            if not other.static:
                v_rel = v_rel - other.point_velocity(point)
            v_n = float(v_rel @ n)
            normal_force = k * depth - c_damp * v_n
            if normal_force <= 0.0:
                continue

            f_dir = fwd - float(fwd @ n) * n
            norm = math.sqrt(float(f_dir @ f_dir))
            v_t = v_rel - v_n * n
            if norm > 1e-6:
                f_dir = f_dir / norm
                slip = v_t - v_cmd * f_dir
            else:
                slip = v_t
            f_t = -self.slip_gain * slip
            mu = min(self.config.leg_friction, other.tread_friction)
            rate = abs(float(v_rel @ f_dir)) / r if norm > 1e-6 else 0.0
            cap = min(mu * normal_force, env.available_torque(rate) / r)
            if norm > 1e-6:
                # anisotropic grip: a C-leg rolls along its drive direction
                # but skids sideways, so the lateral component saturates at
                # a fraction of the rolling cap
                f_roll = float(f_t @ f_dir)
                f_lat = f_t - f_roll * f_dir
                lat_cap = cfg.leg_lateral_grip * cap
                lat_mag = math.sqrt(float(f_lat @ f_lat))
                if lat_mag > lat_cap and lat_mag > 0.0:
                    f_lat = f_lat * (lat_cap / lat_mag)
                f_roll = max(-cap, min(cap, f_roll))
                f_t = f_roll * f_dir + f_lat
            else:
                mag = math.sqrt(float(f_t @ f_t))
                if mag > cap and mag > 0.0:
                    f_t = f_t * (cap / mag)
            force = normal_force * n + f_t
            body.apply_force(force, point)
            if not other.static:
                other.apply_force(-force, point)
            self.last_leg_forces[i] = (normal_force, f_t.copy(), point, other.name)

    # ------------------------------------------------------------------
    def leg_propulsive_capability(self, rate: float = 0.0) -> float:
        """Peak tangential force one stalled leg can exert (N)."""
        return self.config.motor_legs.available_torque(rate) / self.leg_radius


def _track(angle, rate, target, rate_max, accel_max, dt, gain=30.0):
    """Rate- and acceleration-limited servo tracking toward a position target."""
    desired = max(-rate_max, min(rate_max, gain * (target - angle)))
    d = max(-accel_max * dt, min(accel_max * dt, desired - rate))
    rate = rate + d
    return angle + rate * dt, rate


def _parallel_axis(d: np.ndarray) -> np.ndarray:
    return float(d @ d) * np.eye(3) - np.outer(d, d)


def _rotate_about_line(points, origin, axis, angle):
    rot = quat_to_matrix(quat_from_axis_angle(axis, angle))
    return (points - origin) @ rot.T + origin


def _sphere_surface_contact(center, radius, other):
    """Deepest contact of a sphere against a plane or box body, if any.

    Returns (normal pointing toward the sphere, depth, surface point)."""
    if other.is_plane:
        depth = radius - (center[2] - other.pos[2])
        if depth <= 0.0:
            return None
        return (np.array([0.0, 0.0, 1.0]), float(depth),
                np.array([center[0], center[1], other.pos[2]]))
    best = None
    for box in other.boxes:
        box_center = other.pos + other.rot @ box.local_pos
        # bounding-sphere rejection before the exact clamp test
        dvec = center - box_center
        reach = math.sqrt(float(box.half_extents @ box.half_extents)) + radius
        if float(dvec @ dvec) > reach * reach:
            continue
        local = other.rot.T @ dvec
        he = box.half_extents
        clamped = np.minimum(np.maximum(local, -he), he)
        delta = local - clamped
        d2 = float(delta @ delta)
        if d2 > 0.0:
            dist = math.sqrt(d2)
            depth = radius - dist
            if depth <= 0.0:
                continue
            n_local = delta / dist
            p_local = clamped
        else:
            gaps = he - np.abs(local)
            k = int(np.argmin(gaps))
            n_local = np.zeros(3)
            n_local[k] = 1.0 if local[k] >= 0.0 else -1.0
            depth = float(gaps[k] + radius)
            p_local = local.copy()
            p_local[k] = n_local[k] * he[k]
        if best is None or depth > best[1]:
            best = (other.rot @ n_local, float(depth), box_center + other.rot @ p_local)
    return best


def build_robot(world: World, config: RobotConfig, pos=None,
                yaw: float = 0.0, roll: float = 0.0, pitch: float = 0.0) -> Robot:
    """Assemble a robot in the world; default pose stands on flat ground."""
    robot = Robot(config, world, pos=(0.0, 0.0, 0.0), yaw=yaw, roll=roll, pitch=pitch)
    if pos is None:
        pos = (0.0, 0.0, robot.standing_height())
    robot.body.pos = np.asarray(pos, dtype=float)
    robot.body.refresh_kinematics()
    return robot
