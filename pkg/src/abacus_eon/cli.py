"""Command line entry point: ``abacus-eon run|compare|gen-trace|dump-model|dump-paths``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .baselines import SCHEMES, dump_path_sets
from .harness import ConfigError, compare_runs, initial_state, load_config, run_experiment, summary_text
from .ilp import write_lp
from .model import build_model
from .network import load_topology
from .traffic import Request, format_trace, generate_trace


def split_overrides(extra: list[str]) -> dict[str, str]:
    """``--section.key value`` (or ``--section.key=value``) pairs."""
    out: dict[str, str] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"missing value for {tok}") from None
        out[key] = value
    return out


def _cmd_run(args, extra) -> int:
    cfg = load_config(args.config, split_overrides(extra))
    status, results = run_experiment(cfg)
    sys.stdout.write(summary_text(results))
    for r in results:
        for f in r.files:
            logging.info("wrote %s", f)
    return status


def _cmd_compare(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    sys.stdout.write(compare_runs(args.ledgers, args.reference))
    return 0


def _cmd_gen_trace(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    topo = load_topology(args.topology)
    trace = generate_trace(topo, args.seed, args.load, args.count, args.mode, args.mean_holding)
    text = format_trace(trace)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_dump_model(args, extra) -> int:
    cfg = load_config(args.config, split_overrides(extra))
    state = initial_state(cfg)
    s, d, rate = args.request.split()
    req = Request(0, int(s), int(d), float(rate))
    objective, k = SCHEMES[args.scheme]
    if cfg.objective:
        objective = cfg.objective
    path_set = None
    if k is not None:
        from .baselines import k_shortest_paths

        path_set = k_shortest_paths(state.topology, req.s, req.d, k).paths
    model = build_model(
        state, req, objective, pli=cfg.pli if cfg.pli_enabled else None, reach=cfg.reach,
        path_set=path_set, tighten=cfg.tighten,
    )
    text = write_lp(model)
    if args.out:
        Path(args.out).write_text(text)
        counts = model.family_counts()
        sys.stdout.write(f"{model.num_vars} variables, {len(model.constraints)} rows\n")
        for fam in sorted(counts):
            sys.stdout.write(f"  {fam}: {counts[fam]}\n")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_dump_paths(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    sys.stdout.write(dump_path_sets(load_topology(args.topology), args.k))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abacus-eon", description="Elastic optical network RMLSA experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the admission loop described by a config file")
    r.add_argument("--config", required=True, help="INI file or bundled scenario name")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="summary table over ledger CSV files")
    c.add_argument("ledgers", nargs="+")
    c.add_argument("--reference", default=None, help="file stem used as the reference scheme")
    c.set_defaults(func=_cmd_compare)

    g = sub.add_parser("gen-trace", help="write a request trace")
    g.add_argument("--topology", default="nsfnet")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--load", type=float, default=6000.0, help="target load in Gbps")
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--mode", choices=["dynamic", "static-batch"], default="dynamic")
    g.add_argument("--mean-holding", type=float, default=1.0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=_cmd_gen_trace)

    m = sub.add_parser("dump-model", help="write the LP model of one request")
    m.add_argument("--config", required=True)
    m.add_argument("--request", required=True, help='"s d rate_gbps"')
    m.add_argument("--scheme", choices=sorted(SCHEMES), default="abacus")
    m.add_argument("--out", default=None)
    m.set_defaults(func=_cmd_dump_model)

    k = sub.add_parser("dump-paths", help="k shortest paths for every node pair")
    k.add_argument("--topology", default="nsfnet")
    k.add_argument("--k", type=int, default=3)
    k.set_defaults(func=_cmd_dump_paths)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, extra)
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"abacus-eon: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
