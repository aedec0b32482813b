"""Command-line front end.

Every subcommand is driven by one YAML experiment file and writes its
products (plus a manifest listing them with the config hash) under the
configured output directory. Outputs carry no timestamps, so a rerun
with the same config and seeds is byte-identical.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import flowfield, flowio, rl, stats
from .config import ConfigError, load_config
from .navigator import (free_flight_time, integrate_on, on_shooting,
                        write_outcomes_csv, write_trajectory_csv)


class _UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser():
    parser = _Parser(
        prog="znav",
        description="Point-to-point navigation experiments in 2D flows")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, policy=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True,
                       help="YAML experiment file")
        if policy:
            p.add_argument("-p", "--policy", required=True,
                           help="policy file produced by `znav train`")
        return p

    add("gen-flow", "generate a flow field and persist it")
    add("train", "train a policy with one-step actor-critic")
    add("eval", "roll out a trained policy and summarize the ensemble",
        policy=True)
    add("on", "deterministic optimal-steering shooting ensemble")
    add("compare", "joint steering-vs-policy report on one flow",
        policy=True)
    add("ow-map", "export the strain/vortex discriminant on a grid")
    return parser


def _out_dir(cfg):
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg, out, command, files):
    manifest = {
        "command": command,
        "config_sha256": cfg.sha256,
        "outputs": sorted(str(Path(f).name) for f in files),
    }
    path = out / f"manifest-{command}.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _resolve_dt(cfg):
    if cfg.rl.dt_integration is not None:
        return cfg.rl.dt_integration
    return cfg.rl.dt_decision / 10.0


def _on_dt(cfg):
    return cfg.shooting.dt if cfg.shooting.dt is not None else _resolve_dt(cfg)


def _arena_bounds(coder):
    x0, y0 = coder.origin
    size = coder.arena_size
    return (x0, y0, x0 + size[0], y0 + size[1])


def _occupancy_pixel(cfg, coder):
    if cfg.output.occupancy_pixel is not None:
        return cfg.output.occupancy_pixel
    return coder.tile_size / 2.0


def cmd_gen_flow(cfg):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    path = out / "flow.znf"
    flowio.export_flow(flow, path)
    print(f"flow {path}")
    print(f"u_max {flow.u_max()!r}")
    if isinstance(flow, flowfield.ModeSumFlow) and flow.spec is not None:
        slope = flowfield.fit_spectrum_slope(flow)
        print(f"spectrum_slope {slope!r}")
    else:
        print("spectrum_slope n/a")
    _write_manifest(cfg, out, "gen-flow", [path])
    return 0


def cmd_train(cfg):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    geometry = cfg.geometry.build(flow)
    coder = cfg.rl.coder(flow)
    actions = cfg.rl.actions()
    params, log = rl.train(flow, geometry, coder, actions,
                           cfg.rl.reward_config(geometry),
                           cfg.rl.train_config(), dt=_resolve_dt(cfg))
    policy_path = out / "policy.znp"
    log_path = out / "train_log.csv"
    rl.save_policy(params, policy_path)
    log.to_csv(log_path)
    tail = log.reached[-min(100, log.n_episodes):]
    print(f"policy {policy_path}")
    print(f"episodes {log.n_episodes}")
    print(f"reach_rate_last_100 {float(tail.mean())!r}")
    print(f"t_free {free_flight_time(geometry)!r}")
    _write_manifest(cfg, out, "train", [policy_path, log_path])
    return 0


def _load_matching_policy(cfg, flow, policy_path):
    coder = cfg.rl.coder(flow)
    actions = cfg.rl.actions()
    return rl.load_policy(policy_path, coder=coder, actions=actions)


def cmd_eval(cfg, policy_path):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    geometry = cfg.geometry.build(flow)
    params = _load_matching_policy(cfg, flow, policy_path)
    trajs = rl.evaluate(flow, params, geometry,
                        cfg.rl.reward_config(geometry),
                        cfg.evaluation.n_traj, mode=cfg.evaluation.mode,
                        seed=cfg.evaluation.seed, dt=_resolve_dt(cfg))
    t_free = free_flight_time(geometry)
    summary = stats.summarize(trajs, t_free, n_bins=cfg.output.bins,
                              bin_range=cfg.output.bin_range)
    files = []
    summary_path = out / "eval_summary.json"
    summary.to_json(summary_path)
    files.append(summary_path)
    if cfg.output.write_trajectories:
        traj_path = out / "eval_trajectories.csv"
        with open(traj_path, "w") as fh:
            fh.write("trajectory_id,t,x,y,theta,engine_on,action_id,reward\n")
        for i, traj in enumerate(trajs):
            write_trajectory_csv(traj, traj_path, trajectory_id=i, mode="a")
        files.append(traj_path)
    print(f"summary {summary_path}")
    print(f"n_traj {summary.n_total}")
    print(f"failure_rate {summary.failure_rate!r}")
    print(f"median_T_over_t_free {summary.median_arrival / t_free!r}")
    _write_manifest(cfg, out, "eval", files)
    return 0


def cmd_on(cfg):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    geometry = cfg.geometry.build(flow)
    result = on_shooting(flow, geometry, n_angles=cfg.shooting.n_angles,
                         n_starts=cfg.shooting.n_starts, dt=_on_dt(cfg),
                         seed=cfg.shooting.seed)
    t_free = free_flight_time(geometry)
    summary = stats.summarize(result.outcome_records(), t_free,
                              n_bins=cfg.output.bins,
                              bin_range=cfg.output.bin_range)
    outcomes_path = out / "on_outcomes.csv"
    write_outcomes_csv(result, outcomes_path)
    summary_path = out / "on_summary.json"
    summary.to_json(summary_path)
    files = [outcomes_path, summary_path]
    if result.best_index is not None:
        i = result.best_index
        n_angles = cfg.shooting.n_angles
        best = integrate_on(flow, result.starts[i // n_angles],
                            result.thetas[i], geometry, dt=_on_dt(cfg))
        best_path = out / "on_best_trajectory.csv"
        write_trajectory_csv(best, best_path)
        files.append(best_path)
        print(f"best_T {result.best_time!r}")
        print(f"best_T_over_t_free {result.best_time / t_free!r}")
    else:
        print("best_T none (all launches failed)")
    print(f"n_total {result.n_total}")
    print(f"failure_rate {result.failure_rate!r}")
    _write_manifest(cfg, out, "on", files)
    return 0


def cmd_compare(cfg, policy_path):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    geometry = cfg.geometry.build(flow)
    params = _load_matching_policy(cfg, flow, policy_path)
    coder = params.coder
    bounds = _arena_bounds(coder)
    pixel = _occupancy_pixel(cfg, coder)
    t_free = free_flight_time(geometry)

    occ_on = stats.occupancy([], pixel, bounds)

    def take(i, traj):
        stats.occupancy([traj], pixel, bounds, out=occ_on)

    result = on_shooting(flow, geometry, n_angles=cfg.shooting.n_angles,
                         n_starts=cfg.shooting.n_starts, dt=_on_dt(cfg),
                         seed=cfg.shooting.seed, on_trajectory=take)
    on_summary = stats.summarize(result.outcome_records(), t_free,
                                 n_bins=cfg.output.bins,
                                 bin_range=cfg.output.bin_range)

    trajs = rl.evaluate(flow, params, geometry,
                        cfg.rl.reward_config(geometry),
                        cfg.evaluation.n_traj, mode=cfg.evaluation.mode,
                        seed=cfg.evaluation.seed, dt=_resolve_dt(cfg))
    rl_summary = stats.summarize(trajs, t_free, n_bins=cfg.output.bins,
                                 bin_range=cfg.output.bin_range)
    occ_rl = stats.occupancy(trajs, pixel, bounds)

    report = {
        "t_free": t_free,
        "occupancy_pixel": pixel,
        "occupancy_bounds": list(bounds),
        "on": {
            "summary": on_summary.to_dict(),
            "best_time": None if result.best_index is None else result.best_time,
            "occupancy": occ_on.residence.tolist(),
        },
        "rl": {
            "summary": rl_summary.to_dict(),
            "mode": cfg.evaluation.mode,
            "occupancy": occ_rl.residence.tolist(),
        },
    }
    report_path = out / "compare_report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"report {report_path}")
    print(f"on_failure_rate {on_summary.failure_rate!r}")
    print(f"rl_failure_rate {rl_summary.failure_rate!r}")
    _write_manifest(cfg, out, "compare", [report_path])
    return 0


def cmd_ow_map(cfg):
    out = _out_dir(cfg)
    flow = cfg.flow.build()
    n = cfg.output.ow_resolution
    grid = flowfield.okubo_weiss_grid(flow, n=n)
    path = out / "ow_map.csv"
    with open(path, "w") as fh:
        for i in range(n):
            fh.write(",".join(repr(v) for v in grid[i]))
            fh.write("\n")
    sidecar = out / "ow_map.csv.json"
    with open(sidecar, "w") as fh:
        json.dump({"resolution": n, "L": flow.L, "t": 0.0,
                   "layout": "rows are x cells, columns y cells; "
                             "node (i, j) sits at (i L / n, j L / n)"},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"ow_map {path}")
    print(f"strain_fraction {float((grid > 0).mean())!r}")
    _write_manifest(cfg, out, "ow-map", [path, sidecar])
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.command == "gen-flow":
            return cmd_gen_flow(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.policy)
        if args.command == "on":
            return cmd_on(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.policy)
        if args.command == "ow-map":
            return cmd_ow_map(cfg)
        raise _UsageError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
