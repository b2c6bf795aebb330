"""Experiment reports: canonical JSON, summary CSV and GeoJSON trajectories.

Floats are rounded before they are written and aggregates are computed
from the rounded per-trial values, so a report can be re-checked exactly
when it is loaded back.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .mission import Event, EventType, MissionPlan

DECIMALS = 6
REPORT_FORMAT = "serotonav-report/1"
COMPARISON_FORMAT = "serotonav-comparison/1"
SUMMARY_HEADER = [
    "trial", "condition", "mode", "completed", "waypoints_reached", "skips",
    "mean_time_before_skip", "total_time", "total_energy",
]


class ReportError(ValueError):
    """A report failed to parse or is not self-consistent."""


def rnd(x: float | None) -> float | None:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return round(float(x), DECIMALS)


def _mean(xs: list[float]) -> float | None:
    return rnd(sum(xs) / len(xs)) if xs else None


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# -- per-trial records ----------------------------------------------------


@dataclass
class TrialSummary:
    trial: int
    seed: list[int]
    condition: str
    mode: str
    events: list[dict[str, Any]]
    reached: list[int]
    skipped: list[int]
    times_before_skip: list[float]
    total_time: float
    total_energy: float
    completed: bool
    trajectory: str

    @classmethod
    def from_record(cls, rec, event_fixes: list[tuple[float, float]] | None = None) -> TrialSummary:
        fixes = event_fixes if event_fixes is not None else rec.event_fixes
        events = [event_dict(e, fix) for e, fix in zip(rec.events, fixes)]
        return cls(
            trial=rec.trial,
            seed=list(rec.seed),
            condition=rec.condition,
            mode=rec.mode,
            events=events,
            reached=list(rec.reached),
            skipped=[e.from_index for e in rec.skips],
            times_before_skip=[rnd(t) for t in rec.times_before_skip],
            total_time=rnd(rec.total_time),
            total_energy=rnd(rec.total_energy),
            completed=rec.completed,
            trajectory=f"trial_{rec.trial}.geojson",
        )

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TrialSummary:
        try:
            return cls(**{k: d[k] for k in cls.__dataclass_fields__})
        except KeyError as exc:
            raise ReportError(f"trial record missing {exc.args[0]!r}") from None

    def check(self) -> None:
        evs = self.events
        arrived = [e["from_index"] for e in evs if e["type"] == EventType.ARRIVED.value]
        skips = [e for e in evs if e["type"] == EventType.SKIPPED.value]
        if arrived != self.reached:
            raise ReportError(f"trial {self.trial}: reached list disagrees with events")
        if [e["from_index"] for e in skips] != self.skipped:
            raise ReportError(f"trial {self.trial}: skipped list disagrees with events")
        if [e["elapsed"] for e in skips] != self.times_before_skip:
            raise ReportError(f"trial {self.trial}: times before skip disagree with events")
        done = bool(evs) and evs[-1]["type"] == EventType.COMPLETED.value
        if done != self.completed:
            raise ReportError(f"trial {self.trial}: completion flag disagrees with events")


def event_dict(e: Event, fix: tuple[float, float] | None = None) -> dict[str, Any]:
    d = {
        "time": rnd(e.time),
        "type": e.type.value,
        "from_index": e.from_index,
        "to_index": e.to_index,
        "distance": rnd(e.distance),
        "elapsed": rnd(e.elapsed),
    }
    if fix is not None:
        d["lat"], d["lon"] = round(fix[0], 9), round(fix[1], 9)
    return d


# -- aggregates -----------------------------------------------------------


def aggregate(trials: list[TrialSummary]) -> dict[str, Any]:
    skips = [t for tr in trials for t in tr.times_before_skip]
    done = [tr.total_time for tr in trials if tr.completed]
    n = len(trials)
    return {
        "trials": n,
        "skip_count": len(skips),
        "mean_time_before_skip": _mean(skips),
        "mean_completion_time": _mean(done),
        "completion_rate": rnd(len(done) / n) if n else None,
        "mean_total_time": _mean([tr.total_time for tr in trials]),
        "mean_energy": _mean([tr.total_energy for tr in trials]),
        "mean_waypoints_reached": _mean([float(len(tr.reached)) for tr in trials]),
    }


@dataclass
class TrialReport:
    config: dict[str, Any]
    trials: list[TrialSummary]
    aggregate: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.aggregate:
            self.aggregate = aggregate(self.trials)

    def to_json(self) -> str:
        return dumps({
            "format": REPORT_FORMAT,
            "config": self.config,
            "trials": [t.to_dict() for t in self.trials],
            "aggregate": self.aggregate,
        })

    @classmethod
    def from_json(cls, text: str) -> TrialReport:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ReportError(f"report is not JSON: {exc}") from None
        if doc.get("format") != REPORT_FORMAT:
            raise ReportError("not a trial report")
        trials = [TrialSummary.from_dict(t) for t in doc["trials"]]
        rep = cls(doc["config"], trials, doc["aggregate"])
        rep.check()
        return rep

    def check(self) -> None:
        """Every aggregate must equal the statistic recomputed from the trials."""
        for tr in self.trials:
            tr.check()
        expect = aggregate(self.trials)
        if expect != self.aggregate:
            bad = sorted(k for k in expect if expect[k] != self.aggregate.get(k))
            raise ReportError(f"aggregate fields inconsistent with trial records: {', '.join(bad)}")

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for t in self.trials:
            tbs = _mean(t.times_before_skip)
            w.writerow([
                t.trial, t.condition, t.mode, int(t.completed), len(t.reached), len(t.skipped),
                "" if tbs is None else f"{tbs:.{DECIMALS}f}",
                f"{t.total_time:.{DECIMALS}f}", f"{t.total_energy:.{DECIMALS}f}",
            ])
        return buf.getvalue()


def read_summary_csv(text: str) -> list[dict[str, Any]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != SUMMARY_HEADER:
        raise ReportError("not a summary CSV")
    out = []
    for r in rows[1:]:
        out.append({
            "trial": int(r[0]),
            "condition": r[1],
            "mode": r[2],
            "completed": bool(int(r[3])),
            "waypoints_reached": int(r[4]),
            "skips": int(r[5]),
            "mean_time_before_skip": float(r[6]) if r[6] else None,
            "total_time": float(r[7]),
            "total_energy": float(r[8]),
        })
    return out


# -- mode comparison ------------------------------------------------------


@dataclass
class Comparison:
    config: dict[str, Any]
    modes: dict[str, TrialReport]

    def metrics(self, mode: str) -> dict[str, Any]:
        agg = self.modes[mode].aggregate
        return {
            "mean_time": agg["mean_total_time"],
            "mean_energy": agg["mean_energy"],
            "mean_waypoints_reached": agg["mean_waypoints_reached"],
            "completion_rate": agg["completion_rate"],
            "skip_count": agg["skip_count"],
        }

    def to_json(self) -> str:
        return dumps({
            "format": COMPARISON_FORMAT,
            "config": self.config,
            "modes": {
                m: {"trials": [t.to_dict() for t in r.trials], "aggregate": r.aggregate}
                for m, r in self.modes.items()
            },
            "summary": {m: self.metrics(m) for m in self.modes},
        })

    @classmethod
    def from_json(cls, text: str) -> Comparison:
        doc = json.loads(text)
        if doc.get("format") != COMPARISON_FORMAT:
            raise ReportError("not a comparison report")
        modes = {}
        for m, body in doc["modes"].items():
            rep = TrialReport(doc["config"], [TrialSummary.from_dict(t) for t in body["trials"]], body["aggregate"])
            rep.check()
            modes[m] = rep
        cmp = cls(doc["config"], modes)
        if doc["summary"] != {m: cmp.metrics(m) for m in modes}:
            raise ReportError("comparison summary inconsistent with per-mode aggregates")
        return cmp

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ["mean_time", "mean_energy", "mean_waypoints_reached", "completion_rate", "skip_count"]
        w.writerow(["mode", *keys])
        for m in self.modes:
            row = self.metrics(m)
            w.writerow([m, *("" if row[k] is None else row[k] for k in keys)])
        return buf.getvalue()


# -- GeoJSON --------------------------------------------------------------


def trajectory_geojson(rec, plan: MissionPlan) -> dict[str, Any]:
    """FeatureCollection: fix track, waypoints, and Arrived/Skipped markers (lon, lat order)."""
    pts = rec.trajectory
    coords = [[round(p.lon, 9), round(p.lat, 9)] for p in pts]
    if len(coords) == 1:
        coords = coords * 2  # a LineString needs two positions
    features: list[dict[str, Any]] = [{
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": coords},
        "properties": {
            "kind": "trajectory",
            "trial": rec.trial,
            "times": [rnd(p.time) for p in pts],
            "on_road": [bool(p.on_road) for p in pts],
            "energy": [rnd(p.energy) for p in pts],
        },
    }]
    for k, wp in enumerate(plan.waypoints):
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [wp.point.lon, wp.point.lat]},
            "properties": {"kind": "waypoint", "index": k, "label": wp.label},
        })
    for e, (lat, lon) in zip(rec.events, rec.event_fixes):
        if e.type not in (EventType.ARRIVED, EventType.SKIPPED):
            continue
        props = event_dict(e)
        props["kind"] = e.type.value
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [round(lon, 9), round(lat, 9)]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def validate_geojson(doc: dict[str, Any]) -> None:
    """Structural checks: geometry types, position arity and lon/lat ranges."""
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise ReportError("expected a FeatureCollection")

    def pos(p) -> None:
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(v, (int, float)) for v in p)):
            raise ReportError(f"bad position {p!r}")
        lon, lat = p
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise ReportError(f"position out of lon/lat range: {p!r}")

    for f in doc["features"]:
        if f.get("type") != "Feature" or "properties" not in f:
            raise ReportError("bad feature")
        g = f.get("geometry") or {}
        if g.get("type") == "Point":
            pos(g.get("coordinates"))
        elif g.get("type") == "LineString":
            cs = g.get("coordinates")
            if not isinstance(cs, list) or len(cs) < 2:
                raise ReportError("LineString needs at least two positions")
            for p in cs:
                pos(p)
        else:
            raise ReportError(f"unsupported geometry {g.get('type')!r}")


def read_geojson(text: str) -> dict[str, Any]:
    doc = json.loads(text)
    validate_geojson(doc)
    return doc
