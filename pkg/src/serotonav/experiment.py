"""Closed-loop trials: mission executor + simulated world + navigation mode.

Two navigation modes are supported. ``shortcut`` drives straight at the
GPS bearing of the current target using the declination-corrected
compass. ``road`` keeps to the site's sidewalk with a mask-driven follower
(the hand-written oracle or a trained Q-network) and uses GPS only to
decide arrival. In road mode the robot stops at the target's position
along the sidewalk (map-matched odometry) until GPS confirms arrival or
patience runs out.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import nn
from .geo import DegenerateBearingError, Steering, enu_project, initial_bearing, steering_command, true_heading
from .mission import Event, EventType, Mission, MissionPlan
from .patience import PatienceParams, Variant
from .report import Comparison, TrialReport, TrialSummary, dumps, trajectory_geojson
from .roadrl import HEADING_RATES, Action, greedy_policy, oracle_action, render_observation
from .sites import Site
from .world import GpsSensor, accrue_energy, kinematics_step, on_road, rate_step, sample_compass

MODES = ("shortcut", "road")
CONTROL_PERIOD = 0.4


def trial_seed_sequence(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Stable per-trial entropy derived from the master seed and trial index."""
    return np.random.SeedSequence([int(master_seed), int(trial)])


@dataclass
class TrackPoint:
    time: float
    lat: float
    lon: float
    on_road: bool
    energy: float


@dataclass
class TrialRecord:
    trial: int
    seed: list[int]
    condition: str
    mode: str
    events: list[Event]
    event_fixes: list[tuple[float, float]]
    total_time: float
    total_energy: float
    trajectory: list[TrackPoint] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return bool(self.events) and self.events[-1].type is EventType.COMPLETED

    @property
    def reached(self) -> list[int]:
        return [e.from_index for e in self.events if e.type is EventType.ARRIVED]

    @property
    def skips(self) -> list[Event]:
        return [e for e in self.events if e.type is EventType.SKIPPED]

    @property
    def times_before_skip(self) -> list[float]:
        return [e.elapsed for e in self.skips]


Policy = Callable[[np.ndarray], Action]


def make_policy(follower: str | nn.DenseNet) -> Policy:
    if isinstance(follower, nn.DenseNet):
        return greedy_policy(follower)
    if follower == "oracle":
        return oracle_action
    raise ValueError(f"unknown follower {follower!r}")


def build_plan(site: Site, condition: str, variant: str = "figure", **kwargs) -> MissionPlan:
    return MissionPlan(site.course.waypoints, PatienceParams.for_condition(condition, Variant(variant)), **kwargs)


def run_trial(
    site: Site,
    plan: MissionPlan,
    mode: str = "shortcut",
    master_seed: int = 0,
    trial: int = 0,
    condition: str = "",
    follower: str | nn.DenseNet = "oracle",
    record_trajectory: bool = True,
) -> TrialRecord:
    if mode not in MODES:
        raise ValueError(f"unknown navigation mode {mode!r}")
    world = site.world
    route = site.route
    if mode == "road" and route is None:
        raise ValueError(f"site {site.name!r} has no road network for road mode")

    ss = trial_seed_sequence(master_seed, trial)
    gps_rng, compass_rng, mission_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    gps = GpsSensor(world, gps_rng)
    mission = Mission(plan)
    pose = site.course.start
    energy = 0.0
    dt = world.dt
    sub_steps = max(1, int(round(CONTROL_PERIOD / dt)))
    traj: list[TrackPoint] = []
    fixes: list[tuple[float, float]] = []

    policy = make_policy(follower) if mode == "road" else None
    if route is not None:
        target_arc = [route.project(*enu_project(world.origin, w.point))[0] for w in plan.waypoints]
        progress = route.project(*pose.xy)[0]
    rate = 0.0
    tick = 0

    while not mission.state.frozen:
        fix, fresh = gps.sample(pose)
        magnetic = sample_compass(pose, world, compass_rng)
        new_events = mission.step(fix, dt, mission_rng)
        fixes.extend((fix.lat, fix.lon) for _ in new_events)
        if record_trajectory and fresh:
            traj.append(TrackPoint(mission.state.clock, fix.lat, fix.lon, on_road(pose, world), energy))
        if mission.state.frozen:
            break
        target = mission.target.point
        if mode == "shortcut":
            heading = true_heading(magnetic, world.declination)
            try:
                steer = steering_command(initial_bearing(fix, target), heading)
            except DegenerateBearingError:
                steer = Steering("straight", 0.0)
            new_pose = kinematics_step(pose, steer, world)
        else:
            progress = route.project(*pose.xy, near=progress)[0]
            holding = progress >= target_arc[mission.state.current_index] or progress >= route.length - 0.5
            if tick % sub_steps == 0:
                rate = HEADING_RATES[int(policy(render_observation(pose, world)))]
            new_pose = pose if holding else rate_step(pose, rate, world.robot_speed, dt)
        energy += accrue_energy(pose, new_pose, world)
        pose = new_pose
        tick += 1

    return TrialRecord(
        trial=trial,
        seed=[int(master_seed), int(trial)],
        condition=condition,
        mode=mode,
        events=list(mission.state.events),
        event_fixes=fixes,
        total_time=mission.state.clock,
        total_energy=energy,
        trajectory=traj,
    )


# -- experiments ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    site: Site
    condition: str = "low"
    mode: str = "shortcut"
    trials: int = 6
    master_seed: int = 0
    variant: str = "figure"
    follower: str | nn.DenseNet | None = "oracle"
    decision_tick: float = 1.0
    arrival_radius: float = 20.0
    max_mission_time: float = 1800.0
    name: str = "experiment"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.condition not in ("low", "high"):
            raise ValueError(f"condition must be low or high, got {self.condition!r}")
        if self.master_seed < 0:
            raise ValueError("seed must be non-negative")
        Variant(self.variant)
        if self.mode == "road" and self.follower is None:
            raise ValueError("road mode needs a checkpoint or the oracle follower")

    def plan(self) -> MissionPlan:
        return build_plan(
            self.site, self.condition, self.variant,
            arrival_radius=self.arrival_radius,
            decision_tick=self.decision_tick,
            max_mission_time=self.max_mission_time,
        )

    def describe(self) -> dict:
        """Canonical, path-free description recorded in reports."""
        return {
            "name": self.name,
            "site": self.site.name,
            "course": self.site.course.name,
            "condition": self.condition,
            "mode": self.mode,
            "variant": self.variant,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "decision_tick": self.decision_tick,
            "arrival_radius": self.arrival_radius,
            "max_mission_time": self.max_mission_time,
            "follower": follower_id(self.follower) if self.mode == "road" else None,
        }


def follower_id(follower) -> str | None:
    if follower is None or isinstance(follower, str):
        return follower
    h = hashlib.sha256()
    for p in follower.params():
        h.update(p.astype("<f8").tobytes())
    return "net:" + h.hexdigest()[:16]


def _trial_job(args) -> TrialRecord:
    cfg, mode, trial, keep = args
    return run_trial(cfg.site, cfg.plan(), mode, cfg.master_seed, trial, cfg.condition, cfg.follower, keep)


def iter_trials(cfg: ExperimentConfig, mode: str | None = None, parallel: int = 1,
                record_trajectory: bool = True) -> Iterator[TrialRecord]:
    """Yield every trial of ``cfg`` in trial-index order regardless of worker count."""
    mode = mode or cfg.mode
    jobs = [(cfg, mode, i, record_trajectory) for i in range(cfg.trials)]
    if parallel <= 1 or cfg.trials == 1:
        yield from map(_trial_job, jobs)
        return
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        yield from pool.map(_trial_job, jobs)


def run_trials(cfg: ExperimentConfig, mode: str | None = None, parallel: int = 1,
               record_trajectory: bool = True) -> list[TrialRecord]:
    return list(iter_trials(cfg, mode, parallel, record_trajectory))


def build_report(cfg: ExperimentConfig, records: list[TrialRecord]) -> TrialReport:
    return TrialReport(cfg.describe(), [TrialSummary.from_record(r) for r in records])


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, parallel: int = 1) -> TrialReport:
    """Run every trial and, when ``out`` is given, write report.json, summary.csv and trial GeoJSON."""
    records = run_trials(cfg, parallel=parallel, record_trajectory=out is not None)
    report = build_report(cfg, records)
    if out is not None:
        write_outputs(Path(out), cfg, records, report)
    return report


def write_outputs(out: Path, cfg: ExperimentConfig, records: list[TrialRecord], report: TrialReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    plan = cfg.plan()
    for rec in records:
        (out / f"trial_{rec.trial}.geojson").write_text(dumps(trajectory_geojson(rec, plan)))
    (out / "summary.csv").write_text(report.summary_csv())
    (out / "report.json").write_text(report.to_json())


def export_trial(cfg: ExperimentConfig, trial: int) -> dict:
    """Re-run one trial from its derived seed and return its GeoJSON document."""
    if not 0 <= trial < cfg.trials:
        raise IndexError(f"trial {trial} out of range for {cfg.trials} trials")
    rec = run_trial(cfg.site, cfg.plan(), cfg.mode, cfg.master_seed, trial, cfg.condition, cfg.follower)
    return trajectory_geojson(rec, cfg.plan())


def compare_modes(cfg: ExperimentConfig, parallel: int = 1) -> Comparison:
    """Shortcut vs road navigation on matched seeds."""
    if cfg.site.route is None:
        raise ValueError(f"site {cfg.site.name!r} has no road network")
    if cfg.follower is None:
        raise ValueError("road mode needs a checkpoint or the oracle follower")
    modes = {}
    for mode in MODES:
        records = run_trials(cfg, mode, parallel, record_trajectory=False)
        modes[mode] = build_report(replace(cfg, mode=mode), records)
    desc = cfg.describe()
    desc["mode"] = "compare"
    desc["follower"] = follower_id(cfg.follower)
    return Comparison(desc, modes)
