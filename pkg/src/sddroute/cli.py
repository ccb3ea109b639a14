"""Command line: run scenarios, sweep a parameter, author networks/depots/demand, validate inputs.

Any ``--<config_key> value`` flag overrides the config file.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from sddroute.baselines import run_greedy
from sddroute.demand import DemandError, generate_demand, load_demand, save_demand
from sddroute.engine import SimulationError, Simulator
from sddroute.model import CONFIG_KEYS, ConfigError, ScenarioConfig, config_from_dict, load_config, save_config
from sddroute.network import (
    NetworkError,
    k_center_depots,
    k_center_objective,
    load_depots,
    load_network,
    save_depots,
    save_network,
)
from sddroute.report import compute_kpis, kpi_csv, write_kpis
from sddroute.scenario import build_network, build_scenario, demand_profile

STRATEGIES = ("full", "greedy")
WORKERS_ENV = "SDDROUTE_WORKERS"
USER_ERRORS = (ConfigError, NetworkError, DemandError, OSError, ValueError)


class UsageError(Exception):
    pass


def workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def parse_overrides(extra: list[str]) -> dict:
    """Turn ``--key value`` pairs into config overrides (values parsed as YAML scalars)."""
    out = {}
    i = 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--"):
            raise UsageError(f"unexpected argument {flag!r}")
        key = flag[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {flag}")
            value = extra[i + 1]
            i += 2
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = yaml.safe_load(value)
    return out


def resolve_config(path, overrides: dict) -> ScenarioConfig:
    if path:
        return load_config(path, overrides)
    return config_from_dict({}, overrides)


def execute(cfg: ScenarioConfig, strategy: str, out_dir=None, lp_dir=None):
    """Run one scenario; when ``out_dir`` is given, write the log, KPIs and resolved config there."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    net, demand = build_scenario(cfg)
    if strategy == "greedy":
        result = run_greedy(cfg, net, demand)
    else:
        result = Simulator(cfg, net, demand, lp_dir=lp_dir).run()
    report = compute_kpis(result.log, demand, cfg, net)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.log.write(out / "events.jsonl")
        write_kpis(report, out)
        save_config(cfg, out / "config.yaml")
        if result.epochs:
            lines = ["time,placed,trips,proof,truncated,objective"]
            lines += [f"{e.time / 1000:g},{e.placed},{e.trips},{e.proof},{e.truncated},{e.objective:.6f}"
                      for e in result.epochs]
            (out / "epochs.csv").write_text("\n".join(lines) + "\n")
    return report


def cmd_run(args, overrides) -> int:
    cfg = resolve_config(args.config, overrides)
    report = execute(cfg, args.strategy, args.out, args.dump_lp)
    print(f"{args.strategy}: service rate {report.service_rate:.2f}% "
          f"({report.delivered}/{report.orders}), total distance {report.total_distance:.1f} km -> {args.out}")
    return 0


def _sweep_one(job):
    cfg, strategy = job
    return execute(cfg, strategy)


def cmd_sweep(args, overrides) -> int:
    param = args.param.replace("-", "_")
    if param not in CONFIG_KEYS:
        raise UsageError(f"unknown sweep parameter {args.param!r}")
    if not args.values:
        raise UsageError("sweep needs at least one value")
    values = [yaml.safe_load(v) for v in args.values]
    cfgs = [resolve_config(args.config, {**overrides, param: v}) for v in values]
    jobs = [(c, args.strategy) for c in cfgs]
    workers = workers_from_env()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            reports = list(pool.map(_sweep_one, jobs))
    else:
        reports = [_sweep_one(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(kpi_csv(reports, [str(v) for v in args.values], param))
    for v, r in zip(args.values, reports):
        write_kpis(r, out / f"{param}={v}")
    print(f"sweep over {param}: {len(reports)} runs -> {out / 'sweep.csv'}")
    return 0


def cmd_gen_depots(args, overrides) -> int:
    net = load_network(args.network, speed=args.speed)
    depots = k_center_depots(net, args.k, args.restarts, args.seed)
    save_depots(depots, args.out)
    print(f"{len(depots)} depots, covering radius {k_center_objective(net, depots) / 1000:g} s -> {args.out}")
    return 0


def cmd_gen_demand(args, overrides) -> int:
    cfg = resolve_config(args.config, overrides)
    net = load_network(args.network, speed=cfg.speed, depots=load_depots(args.depots) if args.depots else None)
    orders = generate_demand(demand_profile(cfg), net, cfg.seed if args.seed is None else args.seed)
    save_demand(orders, args.out)
    print(f"{len(orders)} orders -> {args.out}")
    return 0


def cmd_gen(args, overrides) -> int:
    """Grid network, k-center depots and demand, written as three files."""
    cfg = resolve_config(args.config, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = build_network(cfg.replace(network_file=None, depot_file=None))
    demand = generate_demand(demand_profile(cfg), net, cfg.seed)
    save_network(net, out / "network.txt")
    save_depots(net.depots, out / "depots.txt")
    save_demand(demand, out / "demand.txt")
    print(f"grid {cfg.grid_rows}x{cfg.grid_cols}, {len(net.depots)} depots, {len(demand)} orders -> {out}")
    return 0


def cmd_validate(args, overrides) -> int:
    cfg = resolve_config(args.config, overrides)
    net = build_network(cfg)
    net.validate()
    demand = load_demand(cfg.demand_file, net, cfg.day_end - cfg.quiet_tail) if cfg.demand_file else []
    print(f"ok: {len(net.node_ids)} nodes, {len(net.arcs)} arcs, {len(net.depots)} depots, "
          f"{len(demand)} orders from file")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sddroute", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", allow_abbrev=False, help="simulate one day")
    run.add_argument("config", nargs="?")
    run.add_argument("--strategy", default="full")
    run.add_argument("--out", default="run_out")
    run.add_argument("--dump-lp", default=None, help="write each epoch's assignment model in LP format here")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", allow_abbrev=False, help="one run per value of a config parameter")
    sw.add_argument("config", nargs="?")
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", nargs="*", default=[])
    sw.add_argument("--strategy", default="full")
    sw.add_argument("--out", default="sweep_out")
    sw.set_defaults(func=cmd_sweep)

    gd = sub.add_parser("gen-depots", allow_abbrev=False, help="k-center depot placement for a network file")
    gd.add_argument("network")
    gd.add_argument("-k", type=int, required=True)
    gd.add_argument("--restarts", type=int, default=20)
    gd.add_argument("--seed", type=int, default=0)
    gd.add_argument("--speed", type=float, default=10.0)
    gd.add_argument("--out", required=True)
    gd.set_defaults(func=cmd_gen_depots)

    gm = sub.add_parser("gen-demand", allow_abbrev=False, help="seeded synthetic demand for a network file")
    gm.add_argument("config", nargs="?")
    gm.add_argument("--network", required=True)
    gm.add_argument("--depots")
    gm.add_argument("--seed", type=int)
    gm.add_argument("--out", required=True)
    gm.set_defaults(func=cmd_gen_demand)

    g = sub.add_parser("gen", allow_abbrev=False, help="grid network, depots and demand in one go")
    g.add_argument("config", nargs="?")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", allow_abbrev=False, help="check a config and the files it references")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def split_overrides(parser: argparse.ArgumentParser, argv: list[str]) -> tuple[list[str], list[str]]:
    """Pull ``--<config_key> value`` pairs out of argv so they cannot be mistaken for positionals."""
    own = set()
    if argv and not argv[0].startswith("-"):
        for action in parser._subparsers._group_actions:
            sub = action.choices.get(argv[0])
            if sub is not None:
                own = {opt for a in sub._actions for opt in a.option_strings}
    keep, extra = [], []
    i = 0
    while i < len(argv):
        tok = argv[i]
        name = tok[2:].split("=", 1)[0].replace("-", "_") if tok.startswith("--") else None
        if name is not None and tok.split("=", 1)[0] not in own and name in CONFIG_KEYS:
            if "=" in tok or i + 1 >= len(argv):
                extra.append(tok)
                i += 1
            else:
                extra += argv[i:i + 2]
                i += 2
            continue
        keep.append(tok)
        i += 1
    return keep, extra


def main(argv=None) -> int:
    parser = build_parser()
    keep, pulled = split_overrides(parser, list(sys.argv[1:] if argv is None else argv))
    args, extra = parser.parse_known_args(keep)
    try:
        overrides = parse_overrides(pulled + extra)
        return args.func(args, overrides)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 3
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
