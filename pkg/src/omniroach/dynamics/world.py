"""Deterministic fixed-timestep world: semi-implicit Euler + impulse solver."""
from __future__ import annotations

import numpy as np

from ..geometry import quat_integrate
from .body import Body
from .collision import detect_collisions
from .joints import RevoluteJoint
from .solver import resolve_contacts


class SimulationDiverged(RuntimeError):
    def __init__(self, body_name: str, step_count: int) -> None:
        super().__init__(f"non-finite state on body {body_name!r} at step {step_count}")
        self.body_name = body_name
        self.step_count = step_count


class World:
    def __init__(self, timestep: float = 1e-3, gravity=(0.0, 0.0, -9.81)) -> None:
        if timestep <= 0.0:
            raise ValueError("timestep must be positive")
        self.dt = float(timestep)
        self.gravity = np.asarray(gravity, dtype=float)
        self.time = 0.0
        self.step_count = 0

        self.bodies: list[Body] = []
        self.joints: list[RevoluteJoint] = []
        self.exclusions: set[tuple[int, int]] = set()
        self.pre_step_hooks: list = []

        self.solver_iterations = 10
        self.baumgarte = 0.2
        self.penetration_slop = 2e-4
        self.max_correction_velocity = 1.0
        self.contact_margin = 1e-3

        self.last_contacts = []
        self.solver_warnings = 0

    # ------------------------------------------------------------------
    def add_body(self, body: Body) -> Body:
        body.index = len(self.bodies)
        self.bodies.append(body)
        return body

    def add_ground_plane(self, friction: float = 0.9) -> Body:
        ground = Body("ground", static=True, friction=friction)
        ground.is_plane = True
        return self.add_body(ground)

    def add_joint(self, joint: RevoluteJoint) -> RevoluteJoint:
        self.joints.append(joint)
        self.exclude_pair(joint.parent, joint.child)
        return joint

    def exclude_pair(self, a: Body, b: Body) -> None:
        i, j = a.index, b.index
        self.exclusions.add((min(i, j), max(i, j)))

    # ------------------------------------------------------------------
    def step(self) -> None:
        """Advance the world by exactly one fixed timestep."""
        dt = self.dt
        for hook in self.pre_step_hooks:
            hook(self)
        for joint in self.joints:
            joint.apply_drive_torques(dt)

        g = self.gravity
        for body in self.bodies:
            if body.static:
                continue
            body.vel = body.vel + dt * (g + body.inv_mass * body.force)
            body.ang_mom = body.ang_mom + dt * body.torque
            body.refresh_kinematics()

        contacts = detect_collisions(self, margin=self.contact_margin)
        if contacts or self.joints:
            resolve_contacts(self, contacts, dt)
        self.last_contacts = contacts

        # second-order gravity term: keeps ballistic flight exact while the
        # velocity update stays ahead of the position update
        half_g = (0.5 * dt * dt) * g
        for body in self.bodies:
            if body.static:
                continue
            body.pos = body.pos + dt * body.vel - half_g
            body.quat = quat_integrate(body.quat, body.omega, dt)
            body.refresh_kinematics()
            body.force = np.zeros(3)
            body.torque = np.zeros(3)
            if not (np.isfinite(body.pos).all() and np.isfinite(body.vel).all()
                    and np.isfinite(body.ang_mom).all()):
                raise SimulationDiverged(body.name, self.step_count)

        self.step_count += 1
        self.time = self.step_count * dt

    def run(self, duration: float) -> None:
        steps = int(round(duration / self.dt))
        for _ in range(steps):
            self.step()
