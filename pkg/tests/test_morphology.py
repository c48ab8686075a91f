"""Robot model tests: servo envelopes, presets, mass budget, legs, appendages."""
import math

import numpy as np
import pytest

from omniroach.dynamics import World
from omniroach.morphology import (
    XL330,
    XL430,
    MotorEnvelope,
    RobotConfig,
    Robot,
    build_robot,
    servo_update,
)

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------
# motor envelope
class TestMotorEnvelope:
    def test_stall_torque_at_zero_rate(self):
        assert XL430.available_torque(0.0) == 1.4
        assert XL330.available_torque(0.0) == 0.52

    def test_zero_torque_at_no_load_speed(self):
        assert XL330.available_torque(XL330.no_load_rad) == 0.0

    def test_envelope_midpoint_is_half_stall(self):
        # linear droop: half speed in the drive direction leaves half torque
        assert XL330.available_torque(0.5 * XL330.no_load_rad) == pytest.approx(0.26)

    def test_reverse_rate_does_not_reduce_torque(self):
        # driving against the spin direction: full stall torque available
        assert XL330.available_torque(-0.5 * XL330.no_load_rad, 1.0) == 0.52

    def test_invalid_envelope_rejected(self):
        with pytest.raises(ValueError):
            MotorEnvelope(no_load_speed=0.0, stall_torque=1.0)

    def test_servo_stalled_step_outputs_stall_torque(self):
        tau = servo_update(XL430, 0.0, 0.0, 1e-3, target=math.pi / 2)
        assert tau == pytest.approx(1.4)

    def test_servo_unloaded_reaches_no_load_speed(self):
        # integrate a free rotor under velocity command far above no-load
        inertia = 1e-4
        rate = 0.0
        dt = 1e-3
        for _ in range(3000):
            tau = servo_update(XL330, 0.0, rate, dt,
                               target=2 * XL330.no_load_rad, mode="velocity")
            rate += tau / inertia * dt
        assert rate / TWO_PI == pytest.approx(1.71, rel=1e-3)

    def test_servo_position_mode_converges(self):
        inertia = 1e-4
        angle, rate = 0.0, 0.0
        dt = 1e-3
        for _ in range(3000):
            tau = servo_update(XL330, angle, rate, dt, target=1.0)
            rate += tau / inertia * dt
            angle += rate * dt
        assert angle == pytest.approx(1.0, abs=1e-2)

    def test_servo_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            servo_update(XL330, 0.0, 0.0, 1e-3, mode="torque")


# ----------------------------------------------------------------------
# configs
class TestRobotConfig:
    def test_v1_preset(self):
        cfg = RobotConfig.v1()
        assert (cfg.body_length, cfg.body_width, cfg.body_height) == (0.35, 0.23, 0.13)
        assert cfg.total_mass == 1.8
        assert cfg.tail_mass == 0.17 and cfg.tail_length == 0.19
        assert cfg.leg_shape == "C"
        assert cfg.stride_frequency_nominal == 0.9
        assert cfg.run_speed_nominal == 0.26
        assert cfg.motor_legs is XL430

    def test_v2_preset(self):
        cfg = RobotConfig.v2()
        assert (cfg.body_length, cfg.body_width, cfg.body_height) == (0.20, 0.185, 0.10)
        assert cfg.total_mass == 0.75
        assert cfg.tail_mass == 0.10 and cfg.tail_length == 0.145
        assert cfg.leg_shape == "S"
        assert cfg.stride_frequency_nominal == 2.7
        assert cfg.run_speed_nominal == 0.30
        assert cfg.motor_legs is XL330
        assert cfg.hip_height == 0.05

    def test_leg_revolution_rate_within_no_load(self):
        # two steps per leg revolution: stride rate must fit the envelope
        for cfg in (RobotConfig.v1(), RobotConfig.v2()):
            assert cfg.stride_frequency_nominal / 2.0 <= cfg.motor_legs.no_load_speed

    def test_invalid_fields_named_in_error(self):
        with pytest.raises(ValueError, match="total_mass"):
            RobotConfig.v2(total_mass=-1.0)
        with pytest.raises(ValueError, match="leg_shape"):
            RobotConfig.v2(leg_shape="Z")
        with pytest.raises(ValueError, match="shell_shape"):
            RobotConfig.v2(shell_shape="pointy")

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            RobotConfig.preset("v3")


# ----------------------------------------------------------------------
def make_robot(version="v2", **overrides):
    world = World()
    world.add_ground_plane(friction=0.9)
    robot = build_robot(world, RobotConfig.preset(version, **overrides))
    return world, robot


class TestBuildRobot:
    @pytest.mark.parametrize("version", ["v1", "v2"])
    def test_mass_budget(self, version):
        _, robot = make_robot(version)
        total = sum(robot.component_masses.values())
        assert total == pytest.approx(robot.config.total_mass, rel=1e-2)
        assert robot.body.mass == pytest.approx(robot.config.total_mass)

    @pytest.mark.parametrize("version", ["v1", "v2"])
    def test_tail_mass_fraction(self, version):
        _, robot = make_robot(version)
        cfg = robot.config
        assert robot.component_masses["tail"] == pytest.approx(cfg.tail_mass)
        frac = cfg.tail_mass / cfg.total_mass
        assert 0.09 <= frac <= 0.14

    def test_six_legs_alternating_tripods(self):
        _, robot = make_robot()
        assert len(robot.leg_hubs) == 6
        offsets = robot.leg_phase_offsets
        # front-left, rear-left, mid-right in one tripod; the rest opposite
        assert offsets[0] == offsets[4] == offsets[3]
        assert offsets[1] == offsets[2] == offsets[5]
        assert abs(offsets[0] - offsets[1]) == pytest.approx(math.pi)

    def test_shell_extents_match_body_dimensions(self):
        _, robot = make_robot()
        cfg = robot.config
        pts = robot.body.sphere_locals[:robot.n_shell]
        r = cfg.shell_sphere_radius
        span = pts.max(axis=0) - pts.min(axis=0) + 2 * r
        assert span[0] == pytest.approx(cfg.body_length, abs=1e-3)
        assert span[1] == pytest.approx(cfg.body_width, abs=1e-3)
        assert span[2] == pytest.approx(cfg.body_height, abs=1e-3)

    def test_cuboidal_shell_variant(self):
        world = World()
        world.add_ground_plane()
        robot = build_robot(world, RobotConfig.v2(shell_shape="cuboidal"))
        cfg = robot.config
        pts = robot.body.sphere_locals[:robot.n_shell] - robot.geo_center
        r = cfg.shell_sphere_radius
        # corners of the cuboid are populated; the rounded shell has none
        corner = (np.abs(np.abs(pts[:, 0]) - (cfg.body_length / 2 - r)) < 1e-9) \
            & (np.abs(np.abs(pts[:, 1]) - (cfg.body_width / 2 - r)) < 1e-9) \
            & (np.abs(np.abs(pts[:, 2]) - (cfg.body_height / 2 - r)) < 1e-9)
        assert corner.sum() == 8

    def test_center_of_mass_at_origin(self):
        _, robot = make_robot()
        masses = robot.component_masses
        shell_m = masses["chassis"] + masses["wing_left"] + masses["wing_right"]
        com = (shell_m * robot.geo_center + masses["tail"] * robot._tail_com_home)
        com /= robot.config.total_mass
        assert np.allclose(com, 0.0, atol=1e-12)


class TestLegs:
    @pytest.mark.parametrize("version,ratio", [("v1", 1.6), ("v2", 1.4)])
    def test_stall_force_to_weight_ratio(self, version, ratio):
        # a stalled leg pushes stall_torque / hip_height; known weight ratios
        _, robot = make_robot(version)
        force = robot.leg_propulsive_capability(rate=0.0)
        assert force / robot.config.weight == pytest.approx(ratio, rel=0.15)

    def test_propulsive_force_drops_with_rate(self):
        _, robot = make_robot()
        env = robot.config.motor_legs
        assert robot.leg_propulsive_capability(env.no_load_rad) == 0.0
        assert robot.leg_propulsive_capability(0.5 * env.no_load_rad) == pytest.approx(
            0.5 * robot.leg_propulsive_capability(0.0))

    @pytest.mark.parametrize("version", ["v1", "v2"])
    def test_standing_settles_upright(self, version):
        world, robot = make_robot(version)
        world.run(1.0)
        assert robot.up_dot() > 0.99
        assert abs(robot.body.pos[2] - robot.standing_height()) < 0.01
        assert np.linalg.norm(robot.body.vel) < 0.02

    @pytest.mark.parametrize("version", ["v1", "v2"])
    def test_run_speed_matches_nominal(self, version):
        world, robot = make_robot(version)
        world.run(1.0)
        robot.set_drive(1.0, 1.0)
        world.run(1.0)
        x0 = robot.body.pos[0]
        world.run(3.0)
        speed = (robot.body.pos[0] - x0) / 3.0
        assert speed == pytest.approx(robot.config.run_speed_nominal, rel=0.10)
        assert robot.up_dot() > 0.9

    def test_differential_drive_turns(self):
        world, robot = make_robot()
        world.run(0.5)
        robot.set_drive(1.0, 0.2)
        world.run(2.0)
        assert robot.heading() < -0.1  # right side slower: turns right

    def test_legs_hold_position_when_stopped(self):
        world, robot = make_robot()
        world.run(1.0)
        p0 = robot.body.pos.copy()
        world.run(1.0)
        assert np.linalg.norm(robot.body.pos[:2] - p0[:2]) < 0.005

    def test_stance_legs_only_push_during_gait(self):
        world, robot = make_robot()
        world.run(0.5)
        robot.set_drive(1.0, 1.0)
        world.run(0.5)
        active = [f for f in robot.last_leg_forces if f is not None]
        # Stance duty > 0.5 gives double-support phases where both tripods
        # bear load, so anywhere from one tripod to all six legs may touch.
        assert 1 <= len(active) <= 6
        for normal_force, tangent, point, name in active:
            assert normal_force > 0.0
            assert name == "ground"


class TestAppendages:
    def test_tail_tracks_pitch_target(self):
        world, robot = make_robot()
        robot.set_tail(math.radians(90), 0.0)
        world.run(1.0)
        assert robot.tail_pitch == pytest.approx(math.radians(90), abs=1e-3)

    def test_tail_rate_respects_no_load_speed(self):
        world, robot = make_robot()
        robot.set_tail(math.radians(90), 0.0)
        max_rate = 0.0
        for _ in range(600):
            world.step()
            max_rate = max(max_rate, abs(robot.tail_pitch_rate))
        assert max_rate <= robot.config.motor_tail_pitch.no_load_rad + 1e-9

    def test_tail_pitch_down_props_rear(self):
        world, robot = make_robot()
        world.run(0.5)
        z0 = robot.body.pos[2]
        robot.set_tail(math.radians(90), 0.0)
        world.run(1.5)
        _, pitch = robot.roll_pitch()
        assert math.degrees(pitch) > 10.0  # nose up, rear propped on tail
        assert robot.body.pos[2] > z0 + 0.01

    def test_tail_spheres_follow_commanded_direction(self):
        world, robot = make_robot()
        robot.set_tail(math.radians(90), 0.0)
        world.run(1.0)
        tip_local = robot.body.sphere_locals[robot.tail_idx[-1]]
        expected = robot.tail_pivot_local + robot.config.tail_length * np.array([0, 0, -1.0])
        assert np.allclose(tip_local, expected, atol=1e-6)

    def test_lateral_swing_moves_tip_sideways(self):
        world, robot = make_robot()
        robot.set_tail(math.radians(90), math.radians(30))
        world.run(1.0)
        tip_local = robot.body.sphere_locals[robot.tail_idx[-1]]
        rel = tip_local - robot.tail_pivot_local
        assert rel[1] == pytest.approx(robot.config.tail_length * math.sin(math.radians(30)), rel=1e-3)

    def test_wing_command_clamped_with_warning(self):
        world, robot = make_robot()
        with pytest.warns(UserWarning):
            robot.set_wing_opening(10.0, 0.0)
        assert robot.wing_left_target == robot.config.wing_max_open

    def test_wings_closed_leave_shell_untouched(self):
        world, robot = make_robot()
        world.run(0.2)
        assert np.allclose(robot.body.sphere_locals[:robot.n_shell],
                           robot._home_locals[:robot.n_shell])

    def test_open_wings_sweep_backward_up(self):
        world, robot = make_robot()
        target = robot.config.wing_max_open
        robot.set_wing_opening(target, target)
        world.run(1.0)
        assert robot.wing_left == pytest.approx(target, abs=1e-3)
        moved = robot.body.sphere_locals[robot.wing_left_idx]
        home = robot._home_locals[robot.wing_left_idx]
        assert moved[:, 2].mean() > home[:, 2].mean()  # tips rise in body frame

    def test_appendage_markers_have_articulation_velocity(self):
        world, robot = make_robot()
        robot.set_tail(math.radians(90), 0.0)
        for _ in range(100):
            world.step()
        v = np.linalg.norm(robot.body.sphere_vel_extra[robot.tail_idx[-1]])
        assert v > 0.1  # tail tip is moving relative to the body

    def test_tail_reaction_pitches_body_in_flight(self):
        # in free fall, swinging the tail down must pitch the body without
        # changing total angular momentum direction: reaction torque check
        world = World()
        robot = build_robot(world, RobotConfig.v2(), pos=(0, 0, 5.0))
        robot.set_tail(math.radians(90), 0.0)
        world.run(0.2)
        omega_y = robot.body.omega[1]
        assert abs(omega_y) > 0.05  # body counter-rotates about pitch axis
