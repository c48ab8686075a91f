"""Monte-Carlo trial harness and the beam tail-mode study.

Single seeded trials (:func:`run_trial`), the factorial tail-mode x
approach-angle sweep over the compliant-beam testbed (:func:`run_sweep`),
summary statistics with a seeded permutation test (:func:`compare_cells`),
the beam-gap body-roll geometry estimate (:func:`body_roll_estimate`), and
the v1-vs-v2 challenge battery (:func:`run_suite` / :func:`table1_report`).

Every trial is a pure function of its :class:`TrialSpec` -- the seed fixes
the spawn jitter and the physics is deterministic -- so sweeps can be
executed serially or across processes with identical results.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import control as ctrl
from .control import TailMode
from .morphology import RobotConfig
from .terrain import LANE_HALF_WIDTH, TerrainSpec, make_arena

SWEEP_MODES = tuple(m.value for m in TailMode)
SWEEP_ANGLES_DEG = (0.0, 15.0, 30.0, 45.0)
SWEEP_TRIALS_PER_CELL = 10
SWEEP_BEAM_GAP_M = 0.12

JITTER_LATERAL_M = 0.02
JITTER_YAW_DEG = 5.0
TRAJECTORY_HZ = 20.0


# ----------------------------------------------------------------------
# trial specification and result
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TrialSpec:
    """Everything needed to reproduce one trial; the seed fixes the rest."""

    terrain: TerrainSpec
    seed: int
    robot_version: str = "v2"
    shell_shape: str = "rounded"
    controller: str = "lane"  # lane | hold | beam | bump | gap
    variant: str | None = None  # tail mode for beam, gap strategy for gap
    approach_deg: float = 0.0
    aim_through: bool = False  # offset spawn so the held heading crosses y=0
    jitter_lateral_m: float = JITTER_LATERAL_M
    jitter_yaw_deg: float = JITTER_YAW_DEG
    time_limit: float = 40.0
    start_distance: float = 0.45
    label: str = ""

    def __post_init__(self) -> None:
        if self.controller not in ("lane", "hold", "beam", "bump", "gap"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.controller == "beam":
            TailMode(self.variant)  # raises on unknown mode
        if self.controller == "gap" and self.variant not in (
                None, "choreographed", "home", "stowed"):
            raise ValueError(f"unknown gap variant {self.variant!r}")


@dataclass
class TrialResult:
    """Outcome of one trial plus the metrics the studies aggregate."""

    outcome: str
    seed: int
    label: str = ""
    approach_deg: float = 0.0
    traversal_time_s: float | None = None  # first touch -> fully past
    finish_time_s: float | None = None
    max_roll_deg: float = 0.0
    max_pitch_deg: float = 0.0
    trajectory: list[tuple[float, float, float, float]] = field(
        default_factory=list)  # (t, x, y, z) downsampled

    def __post_init__(self) -> None:
        if (self.traversal_time_s is not None) != (self.outcome == "traversed"):
            raise ValueError("traversal_time_s present iff traversed")
        if not (math.isfinite(self.max_roll_deg)
                and math.isfinite(self.max_pitch_deg)):
            raise ValueError("roll/pitch must be finite")

    @property
    def traversed(self) -> bool:
        return self.outcome == "traversed"


def _build_driver(spec: TrialSpec, arena):
    terrain = arena.terrain
    if spec.controller == "lane":
        return ctrl.lane_driver(terrain.lane_openings or [0.0])
    if spec.controller == "hold":
        return _hold_heading_driver()
    if spec.controller == "beam":
        return _beam_sweep_driver(TailMode(spec.variant))
    if spec.controller == "bump":
        return ctrl.bump_driver(face_x=terrain.start_x,
                                bump_top=spec.terrain.bump_height)
    if spec.controller == "gap":
        return ctrl.gap_driver(edge_x=terrain.start_x,
                               variant=spec.variant or "choreographed")
    raise ValueError(spec.controller)


def _hold_heading_driver(gain: float = 2.5, max_diff: float = 0.8):
    """Drive forward holding whatever heading the robot spawned with."""
    state: dict = {}

    def drive(arena) -> None:
        robot = arena.robot
        if "h0" not in state:
            state["h0"] = robot.heading()
        d = gain * (robot.heading() - state["h0"])
        d = max(-max_diff, min(max_diff, d))
        robot.set_drive(1.0 - max(0.0, -d), 1.0 - max(0.0, d))

    return drive


def _beam_sweep_driver(mode: TailMode):
    """Hold the approach heading while running one fixed tail mode."""
    steer = _hold_heading_driver()

    def drive(arena) -> None:
        steer(arena)
        pitch_deg, yaw_deg = ctrl.beam_tail_controller(mode, arena.world.time)
        arena.robot.set_tail(math.radians(pitch_deg), math.radians(yaw_deg))

    return drive


def run_trial(spec: TrialSpec) -> TrialResult:
    """Execute one seeded trial; never raises on simulation failure."""
    rng = np.random.default_rng(spec.seed)
    lat = float(rng.uniform(-spec.jitter_lateral_m, spec.jitter_lateral_m))
    yaw_j = float(rng.uniform(-spec.jitter_yaw_deg, spec.jitter_yaw_deg))
    yaw = spec.approach_deg + yaw_j
    offset = lat
    if spec.aim_through:
        # spawn shifted so the held heading crosses the lane centre at the
        # obstacle line rather than running diagonally off the lane
        offset -= math.tan(math.radians(spec.approach_deg)) * spec.start_distance
    bound = max(LANE_HALF_WIDTH, abs(offset) + 0.1)

    config = RobotConfig.preset(spec.robot_version,
                                shell_shape=spec.shell_shape)
    arena = make_arena(spec.terrain.kind, spec.robot_version, yaw, offset,
                       spec.terrain, config,
                       start_distance=spec.start_distance,
                       time_limit=spec.time_limit, lateral_bound=bound)
    driver = _build_driver(spec, arena)

    sample_every = max(1, round(1.0 / (TRAJECTORY_HZ * arena.world.dt)))
    traj: list[tuple[float, float, float, float]] = []
    step = 0
    try:
        while arena.outcome == "in_progress":
            driver(arena)
            arena.step()
            if step % sample_every == 0:
                p = arena.robot.body.pos
                traj.append((round(arena.world.time, 6),
                             float(p[0]), float(p[1]), float(p[2])))
            step += 1
    except FloatingPointError:
        return TrialResult(outcome="error", seed=spec.seed, label=spec.label,
                           approach_deg=spec.approach_deg, trajectory=traj)
    return TrialResult(
        outcome=arena.outcome,
        seed=spec.seed,
        label=spec.label,
        approach_deg=spec.approach_deg,
        traversal_time_s=arena.traversal_time,
        finish_time_s=arena.finish_time,
        max_roll_deg=math.degrees(arena.max_roll),
        max_pitch_deg=math.degrees(arena.max_pitch),
        trajectory=traj,
    )


# ----------------------------------------------------------------------
# the tail-mode x approach-angle beam sweep
# ----------------------------------------------------------------------
@dataclass
class CellSummary:
    mode: str
    approach_deg: float
    n: int
    traversal_probability: float
    mean_time_s: float | None
    sd_time_s: float | None
    outcomes: dict[str, int]

    @staticmethod
    def from_results(mode: str, angle: float,
                     results: Sequence[TrialResult]) -> "CellSummary":
        times = [r.traversal_time_s for r in results if r.traversed]
        hist: dict[str, int] = {}
        for r in results:
            hist[r.outcome] = hist.get(r.outcome, 0) + 1
        return CellSummary(
            mode=mode, approach_deg=angle, n=len(results),
            traversal_probability=len(times) / len(results) if results else 0.0,
            mean_time_s=float(np.mean(times)) if times else None,
            sd_time_s=float(np.std(times, ddof=1)) if len(times) > 1 else None,
            outcomes=hist,
        )


@dataclass
class SweepSummary:
    base_seed: int
    modes: tuple[str, ...]
    angles_deg: tuple[float, ...]
    trials_per_cell: int
    cells: dict[tuple[str, float], CellSummary]
    results: dict[tuple[str, float], list[TrialResult]]
    comparisons: dict[str, dict]

    def cell(self, mode: str, angle: float) -> CellSummary:
        return self.cells[(mode, float(angle))]

    def times(self, mode: str, angles: Sequence[float]) -> list[float]:
        out: list[float] = []
        for a in angles:
            out.extend(r.traversal_time_s
                       for r in self.results[(mode, float(a))] if r.traversed)
        return out

    def to_json(self) -> dict:
        return {
            "base_seed": self.base_seed,
            "modes": list(self.modes),
            "angles_deg": list(self.angles_deg),
            "trials_per_cell": self.trials_per_cell,
            "cells": [dataclasses.asdict(c) for c in self.cells.values()],
            "comparisons": self.comparisons,
        }


def trial_seed(base_seed: int, *indices: int) -> int:
    """Stable per-trial seed independent of execution order."""
    ss = np.random.SeedSequence([int(base_seed), *map(int, indices)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep_specs(base_seed: int = 42,
                modes: Sequence[str] = SWEEP_MODES,
                angles_deg: Sequence[float] = SWEEP_ANGLES_DEG,
                trials_per_cell: int = SWEEP_TRIALS_PER_CELL,
                beam_gap: float = SWEEP_BEAM_GAP_M,
                robot_version: str = "v2") -> list[TrialSpec]:
    terrain = TerrainSpec(kind="beams", beam_gap=beam_gap)
    specs = []
    for mi, mode in enumerate(modes):
        for ai, angle in enumerate(angles_deg):
            for k in range(trials_per_cell):
                specs.append(TrialSpec(
                    terrain=terrain,
                    seed=trial_seed(base_seed, mi, ai, k),
                    robot_version=robot_version,
                    controller="beam", variant=mode,
                    approach_deg=float(angle), aim_through=True,
                    time_limit=30.0,
                    label=mode,
                ))
    return specs


def run_sweep(base_seed: int = 42,
              modes: Sequence[str] = SWEEP_MODES,
              angles_deg: Sequence[float] = SWEEP_ANGLES_DEG,
              trials_per_cell: int = SWEEP_TRIALS_PER_CELL,
              beam_gap: float = SWEEP_BEAM_GAP_M,
              robot_version: str = "v2",
              workers: int | None = None) -> SweepSummary:
    """Run the full factorial beam study (default 4 modes x 4 angles x 10).

    ``workers`` > 1 fans trials out over a process pool; results are
    identical to the serial run because each trial is seed-deterministic.
    """
    specs = sweep_specs(base_seed, modes, angles_deg, trials_per_cell,
                        beam_gap, robot_version)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(specs) > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(workers) as pool:
            flat = pool.map(run_trial, specs)
    else:
        flat = [run_trial(s) for s in specs]

    results: dict[tuple[str, float], list[TrialResult]] = {}
    for spec, res in zip(specs, flat):
        results.setdefault((spec.label, spec.approach_deg), []).append(res)
    cells = {key: CellSummary.from_results(key[0], key[1], rs)
             for key, rs in results.items()}

    summary = SweepSummary(
        base_seed=base_seed, modes=tuple(modes),
        angles_deg=tuple(float(a) for a in angles_deg),
        trials_per_cell=trials_per_cell,
        cells=cells, results=results, comparisons={})
    summary.comparisons = _sweep_comparisons(summary, base_seed)
    return summary


def _sweep_comparisons(summary: SweepSummary, base_seed: int) -> dict:
    """Osc-vs-static pooled time comparison plus the angle trend."""
    out: dict[str, dict] = {}
    osc, static = TailMode.pitch_down_yaw_osc.value, TailMode.pitch_down_static.value
    angles = [a for a in summary.angles_deg if a > 0.0]
    if osc in summary.modes and static in summary.modes and angles:
        a = summary.times(osc, angles)
        b = summary.times(static, angles)
        out["osc_vs_static_time"] = compare_cells(a, b, seed=base_seed)
    if osc in summary.modes:
        groups = [[r.traversal_time_s for r in summary.results[(osc, ang)]
                   if r.traversed] for ang in summary.angles_deg]
        groups = [g for g in groups if len(g) >= 2]
        if len(groups) >= 2:
            out["osc_time_vs_angle_anova"] = {"f_statistic": anova_f(groups)}
    return out


# ----------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------
def compare_cells(a: Sequence[float], b: Sequence[float],
                  resamples: int = 10_000, seed: int = 0) -> dict:
    """Mean difference a-b with a two-sided permutation-test p-value.

    Small samples are enumerated exhaustively; larger ones use ``resamples``
    seeded random label permutations.  Returns ``applicable: False`` when
    either cell is empty.
    """
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if not a or not b:
        return {"applicable": False, "mean_diff": None, "p_value": None}
    obs = float(np.mean(a) - np.mean(b))
    pooled = np.array(a + b)
    na, n = len(a), len(pooled)
    total_b = math.comb(n, na)

    def diff_for(idx_a) -> float:
        mask = np.zeros(n, dtype=bool)
        mask[list(idx_a)] = True
        return float(pooled[mask].mean() - pooled[~mask].mean())

    eps = 1e-12
    if total_b <= resamples:  # exhaustive enumeration
        count = sum(abs(diff_for(c)) >= abs(obs) - eps
                    for c in combinations(range(n), na))
        p = count / total_b
        method = "exhaustive"
    else:
        rng = np.random.default_rng(seed)
        count = 1  # the observed labeling counts as one resample
        for _ in range(resamples):
            perm = rng.permutation(n)
            d = float(pooled[perm[:na]].mean() - pooled[perm[na:]].mean())
            if abs(d) >= abs(obs) - eps:
                count += 1
        p = count / (resamples + 1)
        method = "monte_carlo"
    return {"applicable": True, "mean_diff": obs, "p_value": p,
            "method": method, "n_a": na, "n_b": len(b)}


def anova_f(groups: Sequence[Sequence[float]]) -> float:
    """One-way ANOVA F-statistic across the given groups."""
    from scipy import stats

    return float(stats.f_oneway(*[list(g) for g in groups]).statistic)


def body_roll_estimate(beam_gap: float, body_width: float) -> float:
    """Body roll (deg) needed to fit through a beam gap, thickness neglected.

    The body must roll until its projected width equals the gap:
    roll = arccos(gap / width).
    """
    if beam_gap <= 0.0:
        raise ValueError("beam_gap must be positive")
    if beam_gap > body_width:
        raise ValueError("beam_gap must not exceed body_width")
    return math.degrees(math.acos(beam_gap / body_width))


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------
CSV_COLUMNS = ("mode", "approach_deg", "trial", "seed", "outcome",
               "traversal_time_s", "max_roll_deg", "max_pitch_deg")


def write_sweep_csv(summary: SweepSummary, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for (mode, angle), results in summary.results.items():
            for k, r in enumerate(results):
                w.writerow([mode, angle, k, r.seed, r.outcome,
                            "" if r.traversal_time_s is None
                            else f"{r.traversal_time_s:.6f}",
                            f"{r.max_roll_deg:.3f}",
                            f"{r.max_pitch_deg:.3f}"])
    return path


def write_sweep_json(summary: SweepSummary, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary.to_json(), indent=2))
    return path


# ----------------------------------------------------------------------
# the v1-vs-v2 challenge battery
# ----------------------------------------------------------------------
REFERENCE_ROWS = {
    # hardware reference values the simulated battery is compared against
    "pillar_traversal_probability": {"v1": 1.0, "v2": 1.0},
    "max_bump_height_x_hip": {"v1": 1.5, "v2": 2.5},
    "max_gap_length_x_body": {"v1": 0.48, "v2": 0.75},
    "beam_roll_angle_deg": {"v1": 24.0, "v2": 50.0},
    "self_right_time_s": {"v1": 4.0, "v2": 4.0},
}

SUITE_TRIALS = 10
HIP_HEIGHT_M = 0.05


def _suite_trials(kind: str, base_seed: int, tag: int, n: int,
                  **kw) -> list[TrialResult]:
    terrain_kw = kw.pop("terrain_kw", {})
    specs = [TrialSpec(terrain=TerrainSpec(kind=kind, **terrain_kw),
                       seed=trial_seed(base_seed, tag, k), **kw)
             for k in range(n)]
    return [run_trial(s) for s in specs]


def _ladder_max(levels: Sequence[float], passes, need: int, n: int) -> float:
    """Highest level passed in >= ``need`` of ``n`` trials (0 if none)."""
    best = 0.0
    for lv in levels:
        if passes(lv) >= need:
            best = lv
        else:
            break
    return best


def run_suite(robot_version: str, base_seed: int = 42,
              n: int = SUITE_TRIALS, quick: bool = False) -> dict:
    """Simulated analog of the per-version challenge battery.

    Returns one metric per comparison row.  ``quick`` trims the bump/gap
    ladders to the reference neighborhood to keep CLI runs short.
    """
    cfg = RobotConfig.preset(robot_version)
    body_len = cfg.body_length

    pillar = _suite_trials(
        "pillar", base_seed, 1, n, robot_version=robot_version,
        controller="lane", time_limit=25.0,
        terrain_kw={"pillar_count": 4})
    p_pillar = sum(r.traversed for r in pillar) / n

    def bump_passes(h: float) -> int:
        res = _suite_trials(
            "bump", base_seed, 2, n, robot_version=robot_version,
            controller="bump", time_limit=25.0,
            terrain_kw={"bump_height": h})
        return sum(r.traversed for r in res)

    bump_levels = [1.0, 1.5, 2.0, 2.2]
    if robot_version == "v2":
        bump_levels += [2.4, 2.5]
    if quick:
        bump_levels = bump_levels[-3:]
    bump_max = _ladder_max([h * HIP_HEIGHT_M for h in bump_levels],
                           bump_passes, need=max(1, n // 2), n=n)

    def gap_passes(w: float) -> int:
        res = _suite_trials(
            "gap", base_seed, 3, n, robot_version=robot_version,
            controller="gap", variant="stowed", time_limit=25.0,
            terrain_kw={"gap_width": w})
        return sum(r.traversed for r in res)

    gap_levels = [0.3, 0.45, 0.55, 0.65, 0.75]
    if quick:
        gap_levels = gap_levels[-3:]
    gap_max = _ladder_max([g * body_len for g in gap_levels],
                          gap_passes, need=max(1, n // 2), n=n)

    beam_roll = body_roll_estimate(
        SWEEP_BEAM_GAP_M if robot_version == "v2" else 0.91 * cfg.body_width,
        cfg.body_width)

    sr_times = self_right_times(robot_version, base_seed, n)
    sr_ok = [t for t in sr_times if t is not None]

    return {
        "robot_version": robot_version,
        "pillar_traversal_probability": p_pillar,
        "max_bump_height_x_hip": bump_max / HIP_HEIGHT_M,
        "max_gap_length_x_body": gap_max / body_len,
        "beam_roll_angle_deg": beam_roll,
        "self_right_time_s": float(np.mean(sr_ok)) if sr_ok else None,
        "self_right_success": len(sr_ok) / n if n else 0.0,
    }


def self_right_times(robot_version: str, base_seed: int = 42,
                     n: int = SUITE_TRIALS,
                     time_limit: float = 10.0) -> list[float | None]:
    """Flip the robot upside down n times; time to upright or None."""
    times: list[float | None] = []
    for k in range(n):
        rng = np.random.default_rng(trial_seed(base_seed, 4, k))
        yaw = float(rng.uniform(-180.0, 180.0))
        arena = make_arena("flat", robot_version, yaw, 0.0,
                           TerrainSpec(kind="flat"),
                           time_limit=time_limit + 2.0)
        robot = arena.robot
        robot.flip_upside_down()
        arena.world.run(0.3)
        t0 = arena.world.time
        driver, seq = ctrl.self_right_driver(robot)
        righted = None
        while arena.world.time - t0 < time_limit:
            driver(arena)
            arena.world.step()
            if robot.up_dot() > ctrl.UPRIGHT_THRESHOLD:
                righted = arena.world.time - t0
                break
        times.append(righted)
    return times


def table1_report(suites: dict[str, dict]) -> list[dict]:
    """Side-by-side comparison rows: simulated metrics vs hardware values.

    ``suites`` maps robot version to a :func:`run_suite` result; missing
    versions produce rows marked absent.
    """
    rows = []
    for metric, ref in REFERENCE_ROWS.items():
        row = {"metric": metric}
        for version in ("v1", "v2"):
            row[f"{version}_reference"] = ref[version]
            suite = suites.get(version)
            row[f"{version}_simulated"] = (
                suite.get(metric) if suite is not None else None)
            row[f"{version}_absent"] = suite is None
        rows.append(row)
    return rows


def write_table1_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["metric", "v1_reference", "v1_simulated",
            "v2_reference", "v2_simulated"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row.get(c, "") for c in cols])
    return path
