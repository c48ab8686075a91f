"""Controller state machines for the robot's locomotion procedures.

Implements the alternating tripod gait clock, the tail choreographies used
to climb bumps and cross gaps, the four fixed tail modes compared on the
compliant-beam testbed, the winged self-righting sequence, and a teleop
command interpreter.  Controllers are pure step functions over
``(state, sensors)``; the :class:`Sensors` snapshot is the only channel by
which simulation state reaches them, so identical sensor traces always
produce identical command streams.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi

DRIVE_CHOICES = ("forward", "backward", "stop", "turn_left", "turn_right")

TAIL_PITCH_LIMITS_DEG = (-80.0, 100.0)
TAIL_YAW_LIMITS_DEG = (-90.0, 90.0)


# ----------------------------------------------------------------------
# gait clock
# ----------------------------------------------------------------------
TRIPOD_A = (0, 3, 4)  # left-front, right-middle, left-rear
TRIPOD_B = (1, 2, 5)

LEG_PHASE_OFFSETS = np.array([0.0, math.pi, math.pi, 0.0, 0.0, math.pi])


@dataclass
class GaitClock:
    """Alternating-tripod clock; tripods A and B run 180 degrees apart."""

    frequency: float  # strides per second
    phase: float = 0.0  # rad, at t = 0
    stance_duty: float = 0.6  # fraction of the cycle spent in stance

    def __post_init__(self) -> None:
        if self.frequency <= 0.0:
            raise ValueError("gait frequency must be positive")
        if not 0.0 < self.stance_duty < 1.0:
            raise ValueError("stance_duty must be in (0, 1)")


def buehler_angle(phase: float, stance_duty: float) -> float:
    """Map a uniform cycle phase to a Buehler-clock hub angle.

    The stance arc [0, pi) is traversed during ``stance_duty`` of the cycle
    (slow), the swing arc [pi, 2*pi) during the remainder (fast); the map is
    continuous and advances exactly 2*pi per cycle.
    """
    u = (phase % TWO_PI) / TWO_PI
    if u < stance_duty:
        return math.pi * (u / stance_duty)
    return math.pi * (1.0 + (u - stance_duty) / (1.0 - stance_duty))


def tripod_gait_targets(clock: GaitClock, t: float) -> np.ndarray:
    """Per-leg hub angle targets (rad) at time ``t``.

    Legs rotate continuously; within each cycle the stance half-circle is
    swept slower than the swing half-circle.
    """
    base = clock.phase + TWO_PI * clock.frequency * t
    return np.array([
        TWO_PI * ((base + off) // TWO_PI)
        + buehler_angle(base + off, clock.stance_duty)
        for off in LEG_PHASE_OFFSETS
    ])


# ----------------------------------------------------------------------
# tail modes (compliant-beam study)
# ----------------------------------------------------------------------
class TailMode(enum.Enum):
    """Fixed tail strategies compared on the compliant-beam testbed."""

    home_static = "home_static"
    pitch_down_static = "pitch_down_static"
    pitch_down_yaw_static = "pitch_down_yaw_static"
    pitch_down_yaw_osc = "pitch_down_yaw_osc"


OSC_AMPLITUDE_DEG = 15.0
OSC_FREQUENCY_HZ = 2.0

_STATIC_SETPOINTS_DEG = {
    TailMode.home_static: (0.0, 0.0),
    TailMode.pitch_down_static: (90.0, 0.0),
    TailMode.pitch_down_yaw_static: (90.0, 15.0),
}


def beam_tail_controller(mode: TailMode, t: float) -> tuple[float, float]:
    """Tail (pitch, yaw) setpoints in degrees for the given mode at time t."""
    if mode in _STATIC_SETPOINTS_DEG:
        return _STATIC_SETPOINTS_DEG[mode]
    if mode is TailMode.pitch_down_yaw_osc:
        yaw = OSC_AMPLITUDE_DEG * math.sin(TWO_PI * OSC_FREQUENCY_HZ * t)
        return (90.0, yaw)
    raise ValueError(f"unknown tail mode: {mode!r}")


# ----------------------------------------------------------------------
# commands and teleop
# ----------------------------------------------------------------------
class CommandError(ValueError):
    """Raised when a teleop command is malformed; carries the reason."""


@dataclass(frozen=True)
class ControllerCommand:
    """One teleop command: drive word plus tail/wing setpoints."""

    drive: str = "stop"
    tail_pitch: float = 0.0  # deg
    tail_yaw: float = 0.0  # deg
    wing_left: float = 0.0  # open fraction 0..1
    wing_right: float = 0.0
    gait_enabled: bool = True

    def validate(self) -> None:
        if self.drive not in DRIVE_CHOICES:
            raise CommandError(
                f"unknown drive command {self.drive!r}; "
                f"expected one of {DRIVE_CHOICES}")
        lo, hi = TAIL_PITCH_LIMITS_DEG
        if not lo <= self.tail_pitch <= hi:
            raise CommandError(
                f"tail_pitch {self.tail_pitch} deg outside limits [{lo}, {hi}]")
        lo, hi = TAIL_YAW_LIMITS_DEG
        if not lo <= self.tail_yaw <= hi:
            raise CommandError(
                f"tail_yaw {self.tail_yaw} deg outside limits [{lo}, {hi}]")
        for name, v in (("wing_left", self.wing_left),
                        ("wing_right", self.wing_right)):
            if not 0.0 <= v <= 1.0:
                raise CommandError(f"{name} fraction {v} outside [0, 1]")
        if not isinstance(self.gait_enabled, bool):
            raise CommandError("gait_enabled must be a boolean")


TURN_SLOW_FRACTION = 0.25  # inner-side drive fraction during a turn

_DRIVE_TABLE = {
    "forward": (1.0, 1.0, True),
    "backward": (-1.0, -1.0, True),
    "stop": (0.0, 0.0, False),
    "turn_left": (TURN_SLOW_FRACTION, 1.0, True),  # right side faster
    "turn_right": (1.0, TURN_SLOW_FRACTION, True),
}


def apply_teleop(cmd: ControllerCommand, robot) -> None:
    """Validate ``cmd`` and forward it to the robot's actuator targets.

    A malformed command raises :class:`CommandError` before any actuator
    target is touched, leaving the robot state unchanged.
    """
    cmd.validate()
    left, right, gait = _DRIVE_TABLE[cmd.drive]
    gait = gait and cmd.gait_enabled if cmd.drive != "stop" else False
    robot.set_drive(left, right, gait_enabled=gait)
    robot.set_tail(math.radians(cmd.tail_pitch), math.radians(cmd.tail_yaw))
    max_open = robot.config.wing_max_open
    robot.set_wing_opening(cmd.wing_left * max_open, cmd.wing_right * max_open)


# ----------------------------------------------------------------------
# sensors
# ----------------------------------------------------------------------
HEAD_CONTACT_FORCE_N = 0.5
HEAD_CONTACT_HOLD_S = 0.05


@dataclass(frozen=True)
class Sensors:
    """Snapshot of everything a choreography may react to."""

    t: float
    head_contact: bool = False
    head_above_lip: bool = False
    edge_distance: float = math.inf  # forward distance to a gap edge
    up_dot: float = 1.0
    rolled_onto_side: bool = False
    pitch: float = 0.0  # rad, + nose up
    body_x: float = 0.0  # body centre along the obstacle axis


class HeadContactSensor:
    """Debounced head-bump detector from solver contact impulses.

    Fires when the summed normal force on the front shell spheres exceeds
    ``HEAD_CONTACT_FORCE_N`` continuously for ``HEAD_CONTACT_HOLD_S``.
    """

    def __init__(self, robot, threshold: float = HEAD_CONTACT_FORCE_N,
                 hold: float = HEAD_CONTACT_HOLD_S):
        self.robot = robot
        self.threshold = threshold
        self.hold = hold
        self._since: float | None = None
        self.triggered = False

    def front_force(self) -> float:
        robot = self.robot
        dt = robot.world.dt
        front = robot.front_idx
        total = 0.0
        for c in robot.world.last_contacts:
            if c.body_a is robot.body and c.sphere_index in front:
                total += max(0.0, c.normal_impulse) / dt
        return total

    def update(self) -> bool:
        t = self.robot.world.time
        if self.front_force() > self.threshold:
            if self._since is None:
                self._since = t
            if t - self._since >= self.hold:
                self.triggered = True
        else:
            self._since = None
        return self.triggered

    def reset(self) -> None:
        self._since = None
        self.triggered = False


def head_above_height(robot, lip_height: float, margin: float = 0.005) -> bool:
    """True when the lowest front-shell sphere sits above ``lip_height``."""
    spheres = robot.body.world_spheres()
    front = spheres[robot.front_idx]
    radii = robot.body.sphere_radii[robot.front_idx]
    return bool(np.min(front[:, 2] - radii) > lip_height + margin)


# ----------------------------------------------------------------------
# choreographies
# ----------------------------------------------------------------------
@dataclass
class ChoreographyState:
    """Single active phase plus the timers its transitions depend on."""

    phase: str
    entered_t: float = 0.0
    kicked_t: float = 0.0  # when the bump tail kick started
    attempts: int = 0
    side: float = 1.0  # tail yaw side used by self-righting


TAIL_LIFT_DEG = -45.0  # gap approach "tail lifted up" angle
PHASE_TIMEOUT_S = 8.0  # trigger never fires -> resume plain driving

# Bump climb tuning.  The tail kick swings the tail UP; its inertial
# reaction pitches the nose up onto the lip.  The strut then presses the
# tail into the ground behind the body to jack the rear over.
BUMP_KICK_DEG = -70.0
BUMP_RIDE_DEG = -20.0
BUMP_STRUT_DEG = 90.0
BUMP_KICK_S = 0.30
BUMP_RIDE_TIMEOUT_S = 2.5  # stalled on the face -> back off and retry
BUMP_RIDE_CLEAR_M = 0.02  # body centre past the face -> start the strut
BUMP_STRUT_CLEAR_M = 0.08  # body centre well past the face -> done
BUMP_STRUT_LEVEL_RAD = -0.05  # pitch back to level also ends the strut
BUMP_STRUT_TIMEOUT_S = 4.0


class BumpChoreography:
    """Tail-assisted bump climb.

    approach: drive at the step, tail home; pitch_up: on head contact, kick
    the tail up so the inertial reaction pitches the nose onto the lip, then
    hold a small upward tail bias while the front legs climb; rear_lift:
    once the body centre crosses the face, strut the tail into the ground to
    jack the rear over; terminal: plain driving.  A stalled climb backs off
    to the approach and retries (the driver re-arms the head sensor when
    ``needs_head_reset`` is set).
    """

    def __init__(self, face_x: float, bump_top: float,
                 timeout: float = PHASE_TIMEOUT_S):
        self.face_x = face_x
        self.bump_top = bump_top
        self.timeout = timeout
        self.state = ChoreographyState(phase="approach")
        self.needs_head_reset = False

    def update(self, sensors: Sensors) -> ControllerCommand:
        st = self.state
        if st.phase == "approach":
            if sensors.head_contact:
                st.phase, st.entered_t = "pitch_up", sensors.t
                st.kicked_t = sensors.t
            elif sensors.t - st.entered_t > self.timeout:
                st.phase, st.entered_t = "terminal", sensors.t
        if st.phase == "pitch_up":
            if sensors.body_x > self.face_x + BUMP_RIDE_CLEAR_M:
                st.phase, st.entered_t = "rear_lift", sensors.t
            elif sensors.t - st.entered_t > BUMP_RIDE_TIMEOUT_S:
                st.phase, st.entered_t = "approach", sensors.t
                self.needs_head_reset = True
        if st.phase == "rear_lift":
            if (sensors.body_x > self.face_x + BUMP_STRUT_CLEAR_M
                    or sensors.pitch > BUMP_STRUT_LEVEL_RAD):
                st.phase, st.entered_t = "terminal", sensors.t
            elif sensors.t - st.entered_t > BUMP_STRUT_TIMEOUT_S:
                st.phase, st.entered_t = "approach", sensors.t
                self.needs_head_reset = True

        if st.phase == "pitch_up":
            kicking = sensors.t - st.kicked_t <= BUMP_KICK_S
            tail = BUMP_KICK_DEG if kicking else BUMP_RIDE_DEG
        else:
            tail = {"approach": 0.0, "rear_lift": BUMP_STRUT_DEG,
                    "terminal": 0.0}[st.phase]
        return ControllerCommand(drive="forward", tail_pitch=tail)


GAP_EDGE_TRIGGER_M = 0.06  # head-to-edge distance that starts the tail brace
GAP_BRACE_DEG = 35.0  # tail pressed into the near platform while crossing
GAP_BRACE_S = 3.5  # bracing window; release once the rear is across


class GapChoreography:
    """Tail-assisted gap crossing; also covers the static tail variants.

    ``variant`` selects the strategy: "choreographed" braces the tail into
    the near platform once the head reaches the edge, so the rear stays
    propped up while the front wheels reach for the far side (bridging);
    "home" holds the tail passively at home; "stowed" retracts the tail.
    """

    def __init__(self, variant: str = "choreographed",
                 edge_trigger: float = GAP_EDGE_TRIGGER_M,
                 timeout: float = PHASE_TIMEOUT_S):
        if variant not in ("choreographed", "home", "stowed"):
            raise ValueError("variant must be choreographed|home|stowed")
        self.variant = variant
        self.edge_trigger = edge_trigger
        self.timeout = timeout
        self.state = ChoreographyState(phase="approach")

    def update(self, sensors: Sensors) -> ControllerCommand:
        if self.variant == "home":
            return ControllerCommand(drive="forward", tail_pitch=0.0)
        if self.variant == "stowed":
            return ControllerCommand(drive="forward", tail_pitch=-80.0)
        st = self.state
        if st.phase == "approach":
            if sensors.edge_distance <= self.edge_trigger:
                st.phase, st.entered_t = "brace", sensors.t
            elif sensors.t - st.entered_t > self.timeout:
                st.phase, st.entered_t = "terminal", sensors.t
        if st.phase == "brace":
            # tail pressed into the near platform props the rear up while
            # the front wheels cantilever out to the far edge
            if sensors.t - st.entered_t > GAP_BRACE_S:
                st.phase, st.entered_t = "terminal", sensors.t
        tail = {"approach": 0.0, "brace": GAP_BRACE_DEG,
                "terminal": 0.0}[st.phase]
        return ControllerCommand(drive="forward", tail_pitch=tail)


SELF_RIGHT_TAIL_DEG = -60.0  # pre-cock pitch while the wings open
SELF_RIGHT_YAW_DEG = 20.0
SELF_RIGHT_RETRY_S = 10.0
UPRIGHT_THRESHOLD = 0.8


class SelfRightSequence:
    """Winged self-righting with retry on the opposite tail-yaw side.

    phase 1: open both wings fully with the tail pitched down (relative to
    the body) and yawed to one side; phase 2: when the body has rolled off
    its back, close the wings and return the tail home so the fall
    completes; phase 3: settle to upright.  If the robot is not upright
    after 10 s the sequence restarts mirrored.  Arming while already
    upright raises ``ValueError``.
    """

    def __init__(self, up_dot: float, max_attempts: int = 3):
        if up_dot >= 0.0:
            raise ValueError("self-right refused: robot is not inverted")
        self.max_attempts = max_attempts
        self.state = ChoreographyState(phase="wings_open", attempts=1)
        self.done = False
        self.failed = False

    def update(self, sensors: Sensors) -> ControllerCommand:
        st = self.state
        if self.done or self.failed:
            return ControllerCommand(drive="stop", gait_enabled=False)

        if sensors.up_dot > UPRIGHT_THRESHOLD and st.phase == "settle":
            self.done = True
            return ControllerCommand(drive="stop", gait_enabled=False)

        elapsed = sensors.t - st.entered_t
        if st.phase == "wings_open":
            if sensors.rolled_onto_side or sensors.up_dot > 0.0:
                st.phase, st.entered_t = "recover", sensors.t
            elif elapsed > SELF_RIGHT_RETRY_S:
                self._retry(sensors.t)
        elif st.phase == "recover":
            if sensors.up_dot > UPRIGHT_THRESHOLD:
                st.phase, st.entered_t = "settle", sensors.t
            elif elapsed > 3.0:
                if sensors.up_dot > UPRIGHT_THRESHOLD:
                    st.phase = "settle"
                else:
                    self._retry(sensors.t)
        elif st.phase == "settle":
            if elapsed > 0.5:
                self.done = sensors.up_dot > UPRIGHT_THRESHOLD
                if not self.done:
                    self._retry(sensors.t)

        if st.phase == "wings_open":
            return ControllerCommand(
                drive="stop", gait_enabled=False,
                tail_pitch=SELF_RIGHT_TAIL_DEG,
                tail_yaw=SELF_RIGHT_YAW_DEG * st.side,
                wing_left=1.0, wing_right=1.0)
        return ControllerCommand(drive="stop", gait_enabled=False,
                                 tail_pitch=0.0, tail_yaw=0.0,
                                 wing_left=0.0, wing_right=0.0)

    def _retry(self, t: float) -> None:
        st = self.state
        if st.attempts >= self.max_attempts:
            self.failed = True
            return
        self.state = ChoreographyState(phase="wings_open", entered_t=t,
                                       attempts=st.attempts + 1,
                                       side=-st.side)


# ----------------------------------------------------------------------
# arena-level drivers (sensor adapters around the pure controllers)
# ----------------------------------------------------------------------
def read_sensors(arena, head_sensor: HeadContactSensor | None = None,
                 lip_height: float | None = None,
                 edge_x: float | None = None) -> Sensors:
    """Assemble a :class:`Sensors` snapshot from the live arena."""
    robot = arena.robot
    head = head_sensor.update() if head_sensor is not None else False
    above = (head_above_height(robot, lip_height)
             if lip_height is not None else False)
    edge = (edge_x - robot.shell_max_x()) if edge_x is not None else math.inf
    up = robot.up_dot()
    return Sensors(t=arena.world.time, head_contact=head,
                   head_above_lip=above, edge_distance=edge, up_dot=up,
                   rolled_onto_side=abs(up) < 0.45,
                   pitch=robot.roll_pitch()[1],
                   body_x=float(robot.body.pos[0]))


def straight_driver(gain: float = 2.5, max_diff: float = 0.8):
    """Heading-hold driver: full speed ahead, steering back to heading 0."""
    def drive(arena) -> None:
        d = max(-max_diff, min(max_diff, gain * arena.robot.heading()))
        arena.robot.set_drive(1.0 - max(0.0, -d), 1.0 - max(0.0, d))
    return drive


def lane_driver(openings, lookahead: float = 0.35, gain: float = 2.5,
                max_aim: float = 0.45, max_diff: float = 0.8):
    """Operator-style driver that lines up with the nearest lane opening.

    Picks the opening closest to the spawn lateral position once, then
    steers a pure-pursuit line toward it; mirrors how the robot was
    teleoperated at the post field.
    """
    openings = np.asarray(openings, dtype=float)
    state: dict = {"target": None}

    def drive(arena) -> None:
        robot = arena.robot
        y = robot.body.pos[1]
        if state["target"] is None:
            state["target"] = float(openings[np.argmin(np.abs(openings - y))])
        want = math.atan2(state["target"] - y, lookahead)
        want = max(-max_aim, min(max_aim, want))
        d = max(-max_diff, min(max_diff, gain * (robot.heading() - want)))
        robot.set_drive(1.0 - max(0.0, -d), 1.0 - max(0.0, d))

    return drive


def beam_mode_driver(mode: TailMode):
    """Drive straight while holding one of the four beam tail modes."""
    steer = straight_driver()

    def drive(arena) -> None:
        steer(arena)
        pitch_deg, yaw_deg = beam_tail_controller(mode, arena.world.time)
        arena.robot.set_tail(math.radians(pitch_deg), math.radians(yaw_deg))
    return drive


def bump_driver(face_x: float, bump_top: float):
    """Heading-hold driving wrapped around the bump tail choreography."""
    steer = straight_driver()
    state: dict = {"choreo": None, "head": None}

    def drive(arena) -> None:
        if state["choreo"] is None:
            state["choreo"] = BumpChoreography(face_x=face_x,
                                               bump_top=bump_top)
            state["head"] = HeadContactSensor(arena.robot)
        sensors = read_sensors(arena, head_sensor=state["head"],
                               lip_height=bump_top)
        cmd = state["choreo"].update(sensors)
        if state["choreo"].needs_head_reset:
            state["head"].reset()
            state["choreo"].needs_head_reset = False
        steer(arena)
        arena.robot.set_tail(math.radians(cmd.tail_pitch),
                             math.radians(cmd.tail_yaw))
    return drive


def gap_driver(edge_x: float, variant: str = "choreographed"):
    """Heading-hold driving wrapped around the gap tail choreography."""
    steer = straight_driver()
    state: dict = {"choreo": GapChoreography(variant=variant)}

    def drive(arena) -> None:
        if variant == "stowed":
            arena.robot.set_tail_stowed(True)
            steer(arena)
            return
        sensors = read_sensors(arena, edge_x=edge_x)
        cmd = state["choreo"].update(sensors)
        steer(arena)
        arena.robot.set_tail(math.radians(cmd.tail_pitch),
                             math.radians(cmd.tail_yaw))
    return drive


def self_right_driver(robot):
    """Run the self-right sequence on a (typically flipped) robot in place.

    Returns a callable for ``TrialArena.run``-style loops plus the sequence
    object so callers can inspect ``done`` / ``failed``.
    """
    seq = SelfRightSequence(up_dot=robot.up_dot())

    def drive(arena) -> None:
        sensors = read_sensors(arena)
        cmd = seq.update(sensors)
        apply_teleop(cmd, arena.robot)

    return drive, seq
