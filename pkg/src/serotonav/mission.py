"""Waypoint mission state machine with patience-gated skipping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoPoint, haversine_distance
from .patience import Decision, PatienceParams, decide_wait


class MissionError(RuntimeError):
    """Illegal use of a mission (stepping after it ended, broken invariants)."""


class EventType(str, enum.Enum):
    ARRIVED = "arrived"
    SKIPPED = "skipped"
    COMPLETED = "completed"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class Event:
    time: float
    type: EventType
    from_index: int
    to_index: int
    distance: float
    elapsed: float = 0.0

    def to_line(self) -> str:
        return (
            f"{self.time:.3f}\t{self.type.value}\t{self.from_index}\t{self.to_index}"
            f"\t{self.distance:.3f}\t{self.elapsed:.3f}"
        )

    @classmethod
    def from_line(cls, line: str) -> Event:
        t, kind, a, b, d, e = line.rstrip("\n").split("\t")
        return cls(float(t), EventType(kind), int(a), int(b), float(d), float(e))


@dataclass(frozen=True)
class Waypoint:
    label: str
    point: GeoPoint


@dataclass(frozen=True)
class MissionPlan:
    waypoints: tuple[Waypoint, ...]
    patience: PatienceParams = PatienceParams()
    arrival_radius: float = 20.0
    decision_tick: float = 1.0
    max_mission_time: float = 1800.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise ValueError("a mission needs at least two waypoints")
        if self.arrival_radius <= 0.0:
            raise ValueError("arrival_radius must be positive")
        if self.decision_tick <= 0.0:
            raise ValueError("decision_tick must be positive")

    @property
    def final_index(self) -> int:
        return len(self.waypoints) - 1

    def spacings(self) -> list[float]:
        pts = [w.point for w in self.waypoints]
        return [haversine_distance(a, b) for a, b in zip(pts, pts[1:])]


@dataclass
class MissionState:
    current_index: int = 0
    elapsed_search: float = 0.0
    skip_exempt: bool = False
    clock: float = 0.0
    events: list[Event] = field(default_factory=list)
    checks_done: int = 0
    last_distance: float = math.nan
    frozen: bool = False

    @property
    def finished(self) -> bool:
        return self.frozen


def _advance(value: float, dt: float) -> float:
    # Rounded so that repeated 0.1 s steps land exactly on decimal boundaries.
    return round(value + dt, 9)


class Mission:
    """Executes a :class:`MissionPlan` one simulation step at a time."""

    def __init__(self, plan: MissionPlan) -> None:
        self.plan = plan
        self.state = MissionState(skip_exempt=plan.final_index == 0)

    @property
    def target(self) -> Waypoint:
        return self.plan.waypoints[self.state.current_index]

    def _reset_search(self) -> None:
        self.state.elapsed_search = 0.0
        self.state.checks_done = 0

    def check_arrival(self, fix: GeoPoint) -> bool:
        """Strict ``< arrival_radius`` test; advances to the next waypoint in sequence."""
        st = self.state
        if st.frozen:
            raise MissionError("mission already finished")
        i = st.current_index
        d = haversine_distance(fix, self.plan.waypoints[i].point)
        st.last_distance = d
        if not d < self.plan.arrival_radius:
            return False
        st.events.append(Event(st.clock, EventType.ARRIVED, i, i, d, st.elapsed_search))
        if i == self.plan.final_index:
            st.events.append(Event(st.clock, EventType.COMPLETED, i, i, d, st.elapsed_search))
            st.frozen = True
            return True
        st.current_index = i + 1
        st.skip_exempt = st.current_index == self.plan.final_index
        self._reset_search()
        return True

    def patience_tick(self, u: float) -> Decision:
        if self.state.skip_exempt:
            return Decision.WAIT
        return decide_wait(self.state.elapsed_search, self.plan.patience, u)

    def select_shortcut(self, u: float) -> int:
        """Uniform pick among the strictly later waypoints; the pick becomes exempt."""
        st = self.state
        i = st.current_index
        if i >= self.plan.final_index:
            raise MissionError("the final waypoint can never be skipped")
        choices = self.plan.final_index - i
        j = i + 1 + min(choices - 1, int(math.floor(u * choices)))
        st.events.append(Event(st.clock, EventType.SKIPPED, i, j, st.last_distance, st.elapsed_search))
        st.current_index = j
        st.skip_exempt = True
        self._reset_search()
        return j

    def step(self, fix: GeoPoint, dt: float, rng: np.random.Generator) -> list[Event]:
        """Advance the clock by ``dt`` and apply arrival, patience and time-cap rules.

        Patience draws come from ``rng``: one uniform per decision tick, plus one
        more to pick the shortcut when a skip fires.
        """
        st = self.state
        if st.frozen:
            raise MissionError("cannot step a finished mission")
        n_before = len(st.events)
        st.clock = _advance(st.clock, dt)
        st.elapsed_search = _advance(st.elapsed_search, dt)

        if not self.check_arrival(fix):
            tick = self.plan.decision_tick
            while st.elapsed_search + 1e-9 >= (st.checks_done + 1) * tick:
                st.checks_done += 1
                u = float(rng.random())
                if self.patience_tick(u) is Decision.SKIP:
                    self.select_shortcut(float(rng.random()))
                    break

        if not st.frozen and st.clock > self.plan.max_mission_time:
            i = st.current_index
            st.events.append(Event(st.clock, EventType.TIMED_OUT, i, i, st.last_distance, st.elapsed_search))
            st.frozen = True
        return st.events[n_before:]


def events_to_lines(events: list[Event]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


def events_from_lines(text: str) -> list[Event]:
    return [Event.from_line(line) for line in text.splitlines() if line.strip()]
