"""Obstacle testbeds and trial arenas.

Terrains: vertical pillar posts (single or a lateral field), a large bump,
a gap, a pair of tall springy beam plates with a narrow opening, a combined
multi-obstacle course, and open flat ground.  ``TrialArena`` places a robot
at a configurable approach angle, tracks progress, and classifies the
outcome of a traversal attempt.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Body, RevoluteJoint, SpringDrive, World, box_inertia
from .morphology import Robot, RobotConfig, build_robot

OBSTACLE_FRICTION = 0.3
GROUND_FRICTION = 0.9
GAP_PLATFORM_FRICTION = 0.3  # smooth platform finish under the shell
GAP_PLATFORM_TREAD = 1.2  # high-grip mat on the platform tops for the legs
GAP_FLOOR_FRICTION = 0.9  # trench floor; the walls, not slickness, trap a fall
BEAM_HINGE_STIFFNESS = 0.78  # N*m/rad restoring stiffness of one beam plate
LANE_HALF_WIDTH = 1.0

TERRAIN_TYPES = ("flat", "pillar", "bump", "gap", "beams", "multi")


@dataclass
class TerrainSpec:
    """Parameters of one testbed; defaults follow the physical testbeds."""

    kind: str = "flat"
    # pillar: vertical square posts; count > 1 lays a lateral row
    pillar_side: float = 0.02
    pillar_height: float = 0.30
    pillar_count: int = 1
    pillar_spacing: float = 0.18  # clear opening between adjacent posts
    # bump: solid step (2.5x the 0.05 m hip height by default)
    bump_height: float = 0.125
    bump_length: float = 0.25
    # gap: trench of this width across the track
    gap_width: float = 0.15
    gap_depth: float = 0.08  # deep enough that a full fall-in is terminal
    # beams: two tall plates with a clear opening of gap_width between them
    beam_gap: float = 0.12
    beam_count: int = 2
    beam_height: float = 0.30  # 1.5x v2 body length: overtops the robot
    beam_thickness: float = 0.006
    beam_width: float = 0.25  # plate extent to each side of the opening
    beam_stiffness: float = BEAM_HINGE_STIFFNESS
    beam_mass: float = 0.06
    ground_friction: float = GROUND_FRICTION

    def __post_init__(self) -> None:
        if self.kind not in TERRAIN_TYPES:
            raise ValueError(f"unknown terrain kind {self.kind!r}")
        for name in ("pillar_side", "pillar_height", "pillar_spacing",
                     "bump_height", "bump_length", "gap_width", "gap_depth",
                     "beam_gap", "beam_height", "beam_thickness", "beam_width",
                     "beam_stiffness", "beam_mass", "ground_friction"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"terrain field {name} must be positive")
        if self.pillar_count < 1:
            raise ValueError("pillar_count must be at least 1")
        if self.beam_count not in (0, 2):
            raise ValueError("beam_count must be 0 or 2 (a plate pair)")
        if self.beam_gap + 2 * self.beam_width > 2 * LANE_HALF_WIDTH:
            raise ValueError("beam row wider than the lane")
        if (self.pillar_count - 1) * self.pillar_spacing > 2 * LANE_HALF_WIDTH:
            raise ValueError("pillar row wider than the lane")


@dataclass
class Terrain:
    spec: TerrainSpec
    obstacles: list[Body] = field(default_factory=list)
    walk_surfaces: list[Body] = field(default_factory=list)
    beams: list[Body] = field(default_factory=list)
    beam_joints: list[RevoluteJoint] = field(default_factory=list)
    start_x: float = 0.0  # obstacle section entry
    end_x: float = 0.0  # traversal succeeds once fully past this x
    gap_span: tuple[float, float] | None = None  # open trench interval
    lane_openings: list[float] = field(default_factory=lambda: [0.0])

    def ground_height(self, x: float) -> float:
        """Static support height under track position x (posts/beams ignored)."""
        if self.gap_span and self.gap_span[0] < x < self.gap_span[1]:
            return -self.spec.gap_depth
        h = 0.0
        for body in self.obstacles:
            for box in body.boxes:
                center = body.pos + box.local_pos
                if (abs(x - center[0]) <= box.half_extents[0]
                        and box.half_extents[1] > 0.5):  # spans the lane
                    h = max(h, center[2] + box.half_extents[2])
        return h


def _add_static_box(world: World, name: str, half_extents, pos,
                    friction: float = OBSTACLE_FRICTION) -> Body:
    body = Body(name, static=True, pos=pos, friction=friction)
    body.add_box(half_extents)
    world.add_body(body)
    return body


def _add_pillar_row(world: World, terrain: Terrain, x: float,
                    spec: TerrainSpec, tag: str = "") -> None:
    # pillar_spacing is the clear opening between posts
    n = spec.pillar_count
    pitch = spec.pillar_spacing + spec.pillar_side
    y0 = -0.5 * (n - 1) * pitch
    half = (spec.pillar_side / 2, spec.pillar_side / 2, spec.pillar_height / 2)
    for i in range(n):
        terrain.obstacles.append(_add_static_box(
            world, f"pillar{tag}_{i}", half,
            (x, y0 + i * pitch, spec.pillar_height / 2)))
    if n > 1:  # aim points for a lane-following driver
        terrain.lane_openings = [y0 + (i + 0.5) * pitch for i in range(n - 1)]
    else:
        terrain.lane_openings = [-pitch, pitch]


def _add_beam_pair(world: World, terrain: Terrain, x: float, spec: TerrainSpec,
                   ground: Body, tag: str = "") -> None:
    """Two tall plates with a clear lateral opening of ``beam_gap``.

    Each plate hinges at the ground about the lateral (y) axis with a
    torsional spring, so a robot pressing forward tips it forward against
    the spring; the opening is too narrow for the unrolled robot.
    """
    half = np.array([spec.beam_thickness / 2, spec.beam_width / 2,
                     spec.beam_height / 2])
    for i, side in enumerate((1.0, -1.0)):
        y = side * (spec.beam_gap / 2 + spec.beam_width / 2)
        beam = Body(f"beam{tag}_{i}", mass=spec.beam_mass,
                    inertia=box_inertia(spec.beam_mass, *half),
                    pos=(x, y, spec.beam_height / 2),
                    friction=OBSTACLE_FRICTION)
        beam.add_box(half)
        world.add_body(beam)
        world.exclude_pair(beam, ground)  # hinged at ground: no base contact
        anchor = world.add_body(Body(f"beam_anchor{tag}_{i}", static=True))
        joint = world.add_joint(RevoluteJoint(
            parent=anchor, child=beam, axis=(0.0, 1.0, 0.0),
            anchor_world=(x, y, 0.0),
            drive=SpringDrive(stiffness=spec.beam_stiffness, rest_angle=0.0,
                              damping=0.02),
        ))
        terrain.beams.append(beam)
        terrain.beam_joints.append(joint)


def build_terrain(world: World, spec: TerrainSpec,
                  track_length: float = 3.0) -> Terrain:
    """Create the testbed in the world; obstacles start near x = 1.0."""
    terrain = Terrain(spec=spec)
    s = spec
    x = 1.0

    if s.kind == "flat":
        world.add_ground_plane(friction=s.ground_friction)
        terrain.start_x, terrain.end_x = x, x

    elif s.kind == "pillar":
        world.add_ground_plane(friction=s.ground_friction)
        _add_pillar_row(world, terrain, x, s)
        terrain.start_x = x - s.pillar_side / 2
        terrain.end_x = x + s.pillar_side / 2

    elif s.kind == "bump":
        world.add_ground_plane(friction=s.ground_friction)
        terrain.obstacles.append(_add_static_box(
            world, "bump", (s.bump_length / 2, 1.0, s.bump_height / 2),
            (x + s.bump_length / 2, 0.0, s.bump_height / 2)))
        terrain.start_x = x
        terrain.end_x = x + s.bump_length

    elif s.kind == "gap":
        # near and far platforms at ground level; trench floor between them.
        # The floor is slick so wheels cannot drive along the bottom and
        # climb back out: a fall into the trench is terminal, as on a real
        # gap testbed.  Platform tops wear a high-grip mat (tread) while
        # their finish stays smooth to the shell.
        floor = world.add_ground_plane(friction=GAP_FLOOR_FRICTION)
        floor.tread_friction = GAP_FLOOR_FRICTION
        floor.pos = np.array([0.0, 0.0, -s.gap_depth])
        near = _add_static_box(world, "near_side", (x / 2 + 1.0, 1.5, s.gap_depth / 2),
                               (x / 2 - 1.0, 0.0, -s.gap_depth / 2),
                               friction=GAP_PLATFORM_FRICTION)
        far = _add_static_box(world, "far_side",
                              (track_length / 2, 1.5, s.gap_depth / 2),
                              (x + s.gap_width + track_length / 2, 0.0,
                               -s.gap_depth / 2),
                              friction=GAP_PLATFORM_FRICTION)
        near.tread_friction = GAP_PLATFORM_TREAD
        far.tread_friction = GAP_PLATFORM_TREAD
        terrain.walk_surfaces.extend([near, far])
        terrain.gap_span = (x, x + s.gap_width)
        terrain.start_x = x
        terrain.end_x = x + s.gap_width

    elif s.kind == "beams":
        ground = world.add_ground_plane(friction=s.ground_friction)
        _add_beam_pair(world, terrain, x, s, ground)
        terrain.start_x = x - s.beam_thickness / 2
        terrain.end_x = x + s.beam_thickness / 2

    elif s.kind == "multi":
        ground = world.add_ground_plane(friction=s.ground_friction)
        row = TerrainSpec(kind="pillar", pillar_count=4,
                          pillar_spacing=s.pillar_spacing,
                          pillar_side=s.pillar_side,
                          pillar_height=s.pillar_height)
        _add_pillar_row(world, terrain, x, row)
        bump_x = x + 0.45
        terrain.obstacles.append(_add_static_box(
            world, "bump", (s.bump_length / 2, 1.0, s.bump_height / 2),
            (bump_x + s.bump_length / 2, 0.0, s.bump_height / 2)))
        beam_x = bump_x + s.bump_length + 0.50
        _add_beam_pair(world, terrain, beam_x, s, ground)
        terrain.start_x = x - s.pillar_side / 2
        terrain.end_x = beam_x + s.beam_thickness / 2

    return terrain


# ----------------------------------------------------------------------
OUTCOMES = ("in_progress", "traversed", "trapped", "deflected", "flipped", "timeout")


@dataclass
class ProgressState:
    last_progress_time: float = 0.0
    best_x: float = -math.inf
    flipped_since: float | None = None
    deflected_since: float | None = None
    first_touch_time: float | None = None


class TrialArena:
    """One robot attempting one terrain; spawns, steps, and classifies."""

    def __init__(
        self,
        world: World,
        terrain: Terrain,
        robot_config: RobotConfig,
        approach_deg: float = 0.0,
        lateral_offset: float = 0.0,
        start_distance: float = 0.45,
        time_limit: float = 60.0,
        trapped_window: float = 10.0,
        trapped_distance: float = 0.01,
        deflect_deg: float = 60.0,
        lateral_bound: float = LANE_HALF_WIDTH,
    ) -> None:
        self.world = world
        self.terrain = terrain
        self.time_limit = time_limit
        self.trapped_window = trapped_window
        self.trapped_distance = trapped_distance
        self.deflect_rad = math.radians(deflect_deg)
        self.lateral_bound = lateral_bound

        yaw = math.radians(approach_deg)
        x0 = terrain.start_x - start_distance
        z0 = terrain.ground_height(x0)
        self.robot = build_robot(world, robot_config, yaw=yaw)
        self.robot.body.pos = np.array([x0, lateral_offset,
                                        z0 + self.robot.standing_height() + 0.002])
        self.robot.body.refresh_kinematics()
        self.state = ProgressState()
        self.outcome = "in_progress"
        self.max_roll = 0.0
        self.max_pitch = 0.0
        self.finish_time: float | None = None
        self.traversal_time: float | None = None

    # ------------------------------------------------------------------
    def step(self) -> str:
        """Advance one physics step and update the outcome."""
        if self.outcome != "in_progress":
            return self.outcome
        self.world.step()
        self._observe()
        return self.outcome

    def run(self, controller=None) -> str:
        """Run to completion; ``controller(arena)`` is called every step."""
        while self.outcome == "in_progress":
            if controller is not None:
                controller(self)
            self.step()
        return self.outcome

    # ------------------------------------------------------------------
    def _observe(self) -> None:
        robot, world, st = self.robot, self.world, self.state
        t = world.time
        x = robot.body.pos[0]
        roll, pitch = robot.roll_pitch()
        self.max_roll = max(self.max_roll, abs(roll))
        self.max_pitch = max(self.max_pitch, abs(pitch))

        spheres_x = robot.body.world_spheres()[:, 0]
        if st.first_touch_time is None and spheres_x.max() >= self.terrain.start_x:
            st.first_touch_time = t
        if spheres_x.min() > self.terrain.end_x:  # every body point past exit
            self.outcome = "traversed"
            self.finish_time = t
            touch = st.first_touch_time if st.first_touch_time is not None else 0.0
            self.traversal_time = t - touch
            return

        if robot.up_dot() < -0.5:
            if st.flipped_since is None:
                st.flipped_since = t
            elif t - st.flipped_since > 2.0:
                self.outcome = "flipped"
                self.finish_time = t
                return
        else:
            st.flipped_since = None

        before_exit = x < self.terrain.end_x
        heading_err = abs(_wrap(robot.heading()))
        # transient spins while scrambling over an obstacle are not a
        # deflection; the robot must stay turned away for a sustained spell
        if before_exit and (heading_err > self.deflect_rad
                            or abs(robot.body.pos[1]) > self.lateral_bound):
            if st.deflected_since is None:
                st.deflected_since = t
            elif t - st.deflected_since > 1.0:
                self.outcome = "deflected"
                self.finish_time = t
                return
        else:
            st.deflected_since = None

        if x > st.best_x + self.trapped_distance:
            st.best_x = x
            st.last_progress_time = t
        elif t - st.last_progress_time > self.trapped_window:
            self.outcome = "trapped"
            self.finish_time = t
            return

        if t > self.time_limit:
            self.outcome = "timeout"
            self.finish_time = t


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def body_roll_required(gap: float, width: float) -> float:
    """Body roll (degrees) needed to fit a body of ``width`` through an
    opening of ``gap``: arccos(gap / width), neglecting body thickness."""
    if gap <= 0.0 or width <= 0.0:
        raise ValueError("gap and width must be positive")
    if gap > width:
        raise ValueError("gap wider than the body needs no roll")
    return math.degrees(math.acos(gap / width))


def make_arena(kind: str, robot_version: str = "v2", approach_deg: float = 0.0,
               lateral_offset: float = 0.0, spec: TerrainSpec | None = None,
               config: RobotConfig | None = None, **arena_kw) -> TrialArena:
    """Convenience: world + terrain + robot in one call."""
    world = World()
    terrain = build_terrain(world, spec or TerrainSpec(kind=kind))
    cfg = config or RobotConfig.preset(robot_version)
    return TrialArena(world, terrain, cfg, approach_deg=approach_deg,
                      lateral_offset=lateral_offset, **arena_kw)
