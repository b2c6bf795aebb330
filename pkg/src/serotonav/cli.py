"""Command-line interface: ``serotonav <subcommand> [options]``.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a run
fails part-way (partial results are still written).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields, replace
from pathlib import Path
from typing import Any

from . import nn, roadrl
from .experiment import (
    ExperimentConfig,
    build_report,
    compare_modes,
    export_trial,
    iter_trials,
    write_outputs,
)
from .patience import PatienceParams, Variant, curves_csv, half_wait_time, wait_curve
from .plots import line_plot_svg
from .report import dumps
from .sites import BUNDLED_SITES, ConfigError, load_toml, parse_site, resolve_site_doc

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
TRACKS = {"s-curve": roadrl.s_curve_track, "straight": roadrl.straight_track}
EXPERIMENT_KEYS = {
    "name", "condition", "mode", "trials", "seed", "variant", "follower",
    "decision_tick", "arrival_radius", "max_mission_time",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        raise UsageError(message)


# -- configuration --------------------------------------------------------


def read_config(path: str | None) -> tuple[dict[str, Any], Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return load_toml(p), p.parent


def load_follower(spec: str | None, base: Path) -> str | nn.DenseNet | None:
    if spec is None or spec == "oracle":
        return spec
    p = Path(spec)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}")
    try:
        net, _ = nn.load_checkpoint(p)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable checkpoint {p}: {exc}") from None
    if net.input_dim != roadrl.DEFAULT_MASK.size or net.output_dim != roadrl.N_ACTIONS:
        raise ConfigError(f"checkpoint network {net.sizes} does not fit the road mask")
    return net


def experiment_from_args(args, default_mode: str = "shortcut") -> ExperimentConfig:
    doc, base = read_config(args.config)
    exp = dict(doc.get("experiment", {}))
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {', '.join(sorted(unknown))}")
    if "site" not in doc:
        doc = {**doc, "site": {"profile": args.site or "encinitas"}}
    elif args.site:
        doc = {**doc, "site": {**doc["site"], "profile": args.site}}
    site_table = dict(doc["site"])
    noiseless = bool(site_table.pop("noiseless", False))
    site = parse_site(resolve_site_doc({**doc, "site": site_table}))
    if noiseless or getattr(args, "noiseless", False):
        site = site.noiseless()

    def pick(flag: str, key: str, default):
        v = getattr(args, flag, None)
        return v if v is not None else exp.get(key, default)

    follower = exp.get("follower", None)
    if getattr(args, "checkpoint", None):
        follower = args.checkpoint
    if getattr(args, "oracle", False):
        follower = "oracle"
    seed = int(pick("seed", "seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    try:
        return ExperimentConfig(
            site=site,
            condition=pick("condition", "condition", "low"),
            mode=pick("mode", "mode", default_mode),
            trials=int(pick("trials", "trials", 6)),
            master_seed=seed,
            variant=pick("variant", "variant", "figure"),
            follower=load_follower(follower, base),
            decision_tick=float(exp.get("decision_tick", 1.0)),
            arrival_radius=float(exp.get("arrival_radius", 20.0)),
            max_mission_time=float(exp.get("max_mission_time", 1800.0)),
            name=str(exp.get("name", site.name)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def agent_from_doc(doc: dict[str, Any]) -> tuple[roadrl.AgentConfig, dict[str, Any]]:
    table = dict(doc.get("training", {}))
    extra = {k: table.pop(k) for k in ("track", "episodes", "seed") if k in table}
    known = {f.name for f in fields(roadrl.AgentConfig)}
    bad = set(table) - known
    if bad:
        raise ConfigError(f"unknown [training] keys: {', '.join(sorted(bad))}")
    try:
        return roadrl.AgentConfig(**table), extra
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def track_by_name(name: str) -> roadrl.Track:
    if name not in TRACKS:
        raise ConfigError(f"unknown track {name!r}; choose from {', '.join(TRACKS)}")
    return TRACKS[name]()


# -- subcommands ----------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = experiment_from_args(args)
    out = Path(args.out)
    records = []
    try:
        for rec in iter_trials(cfg, parallel=args.parallel):
            records.append(rec)
    except Exception as exc:  # flush what finished, then report the failure
        if records:
            write_outputs(out, cfg, records, build_report(cfg, records))
        print(f"error: trial {len(records)} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = build_report(cfg, records)
    write_outputs(out, cfg, records, report)
    print(json.dumps(report.aggregate, sort_keys=True))
    return EXIT_OK


def cmd_curves(args) -> int:
    if args.step <= 0:
        raise ConfigError("step must be positive")
    variant = Variant(args.variant or "figure")
    low, high = PatienceParams.low(variant), PatienceParams.high(variant)
    lo = wait_curve(low, args.t_max, args.step)
    hi = wait_curve(high, args.t_max, args.step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "curves.csv").write_text(curves_csv(lo, hi))
    ts = [t for t, _ in lo.samples]
    svg = line_plot_svg(
        ts,
        {f"low (q={low.prior_q})": [p for _, p in lo.samples], f"high (q={high.prior_q})": [p for _, p in hi.samples]},
        title=f"Probability of waiting ({variant.value})",
        xlabel="time searching (s)",
        ylabel="p(wait)",
        ylim=(0.0, 1.0),
    )
    (out / "curves.svg").write_text(svg)
    if variant is Variant.FIGURE:
        print(f"half-wait: low {half_wait_time(low):.2f} s, high {half_wait_time(high):.2f} s")
    return EXIT_OK


def cmd_train(args) -> int:
    doc, _ = read_config(args.config)
    agent, extra = agent_from_doc(doc)
    track = track_by_name(args.track or extra.get("track", "s-curve"))
    episodes = args.episodes if args.episodes is not None else int(extra.get("episodes", 500))
    seed = args.seed if args.seed is not None else int(extra.get("seed", 0))
    t0 = time.perf_counter()
    res = roadrl.train_road(track, agent, episodes, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "learning_curve.csv").write_text(roadrl.learning_curve_csv(res.curve))
    nn.save_checkpoint(res.net, out / "checkpoint.bin", res.optimizer)
    ev = roadrl.eval_road(res.net, track, 20, seed, agent)
    print(f"trained {episodes} episodes ({res.env_steps} steps) in {time.perf_counter() - t0:.1f} s; "
          f"greedy on-road fraction {ev.on_road_fraction:.3f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    doc, base = read_config(args.config)
    agent, extra = agent_from_doc(doc)
    track = track_by_name(args.track or extra.get("track", "s-curve"))
    seed = args.seed if args.seed is not None else 0
    if args.oracle:
        ev = roadrl.run_policy(track, roadrl.oracle_action, args.episodes, seed, agent)
        who = "oracle"
    else:
        if not args.checkpoint:
            raise ConfigError("eval-road needs --checkpoint or --oracle")
        net = load_follower(args.checkpoint, Path.cwd())
        ev = roadrl.eval_road(net, track, args.episodes, seed, agent)
        who = "checkpoint"
    body = {
        "follower": who,
        "track": track.name,
        "episodes": args.episodes,
        "seed": seed,
        "on_road_fraction": round(ev.on_road_fraction, 6),
        "episode_length": round(ev.episode_length, 6),
        "reward": round(ev.reward, 6),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(dumps(body))
    print(json.dumps(body, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = experiment_from_args(args, default_mode="road")
    if cfg.follower is None:
        raise ConfigError("compare-modes needs --checkpoint or --oracle for the road follower")
    if cfg.site.route is None:
        raise ConfigError(f"site {cfg.site.name!r} has no road network")
    cmp = compare_modes(cfg, parallel=args.parallel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(cmp.to_json())
    (out / "summary.csv").write_text(cmp.summary_csv())
    print(json.dumps({m: cmp.metrics(m) for m in cmp.modes}, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    cfg = experiment_from_args(args)
    if not 0 <= args.trial < cfg.trials:
        raise ConfigError(f"trial {args.trial} out of range (experiment has {cfg.trials} trials)")
    doc = export_trial(cfg, args.trial)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"trial_{args.trial}.geojson").write_text(dumps(doc))
    return EXIT_OK


# -- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="serotonav", description="Patience-driven waypoint navigation simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp, experiment: bool = True) -> None:
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        if experiment:
            sp.add_argument("--site", choices=BUNDLED_SITES, help="bundled site profile")
            sp.add_argument("--trials", type=int)
            sp.add_argument("--condition", choices=("low", "high"))
            sp.add_argument("--variant", choices=[v.value for v in Variant])
            sp.add_argument("--parallel", type=int, default=1, help="worker processes")
            sp.add_argument("--noiseless", action="store_true", help="zero sensor noise and GPS shadows")

    s = sub.add_parser("simulate", help="run an experiment")
    common(s)
    s.add_argument("--mode", choices=("shortcut", "road"))
    s.add_argument("--checkpoint", help="trained follower for road mode")
    s.add_argument("--oracle", action="store_true", help="use the oracle road follower")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("curves", help="write patience curves (CSV + SVG)")
    s.add_argument("--out", default="out")
    s.add_argument("--variant", choices=[v.value for v in Variant])
    s.add_argument("--t-max", type=float, default=120.0)
    s.add_argument("--step", type=float, default=1.0)
    s.set_defaults(func=cmd_curves)

    s = sub.add_parser("train-road", help="train the road-following Q-network")
    common(s, experiment=False)
    s.add_argument("--track", choices=tuple(TRACKS))
    s.add_argument("--episodes", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval-road", help="evaluate a road follower")
    common(s, experiment=False)
    s.set_defaults(out=None)
    s.add_argument("--track", choices=tuple(TRACKS))
    s.add_argument("--episodes", type=int, default=20)
    s.add_argument("--checkpoint")
    s.add_argument("--oracle", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("compare-modes", help="road vs shortcut on matched seeds")
    common(s)
    s.add_argument("--checkpoint", help="trained follower for road mode")
    s.add_argument("--oracle", action="store_true", help="use the oracle road follower")
    s.set_defaults(func=cmd_compare, mode=None, trials=None)

    s = sub.add_parser("export", help="write one trial's GeoJSON trajectory")
    common(s)
    s.add_argument("--mode", choices=("shortcut", "road"))
    s.add_argument("--checkpoint")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--trial", type=int, required=True)
    s.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
