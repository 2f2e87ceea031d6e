"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible optimisation,
4 any other runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from typing import List, Optional

import numpy as np
import scipy

from . import __version__
from .bia import BlockTooLargeError, build_group_precoders, dump_block
from .config import ConfigError, RunConfig, load_config, physics_problems
from .experiments import ExperimentError, run_experiment
from .power_opt import InfeasibleError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_RUNTIME = 0, 2, 3, 4
OUTPUT_ENV = "BIARS_OUTPUT_DIR"

log = logging.getLogger("biars")


def _load(path: Optional[str], overrides: List[str]) -> RunConfig:
    # a manifest written by ``run`` is accepted in place of a config file
    if path is not None and path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        if "config" not in doc:
            raise ConfigError([(path, "JSON input must be a run manifest")])
        return load_config(overrides=overrides, doc=doc["config"])
    return load_config(path, overrides)


def _report_problems(problems) -> None:
    for where, msg in problems:
        print(f"invalid: {where}: {msg}", file=sys.stderr)


def cmd_validate(args) -> int:
    cfg = _load(args.config, args.set)
    problems = physics_problems(cfg)
    if problems:
        _report_problems(problems)
        return EXIT_CONFIG
    print(f"ok: configuration valid (sha256 {cfg.digest()[:16]})")
    return EXIT_OK


def _output_dir(args, cfg: RunConfig) -> str:
    return args.out or cfg.output_dir or os.environ.get(OUTPUT_ENV) or "results"


def manifest(cfg: RunConfig) -> dict:
    """Everything needed to reproduce a run; contains no timestamps so that
    identical runs write identical manifests."""
    return {
        "config_sha256": cfg.digest(),
        "seeds": {e.name: e.seed for e in cfg.experiments},
        "grouping_seed": cfg.grouping.seed,
        "versions": {"biars": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "config": cfg.model_dump(mode="json"),
    }


def _scenario_dump(cfg: RunConfig) -> dict:
    sc = cfg.scenario_config()
    return {
        "n_aps": sc.n_aps,
        "total_power_w": sc.total_power,
        "access_points": [ap.position.tolist() for ap in sc.access_points()],
        "scenario": cfg.scenario.model_dump(mode="json"),
    }


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    cfg = _load(args.config, args.set)
    if args.drops is not None:
        # folded into the config so the manifest reproduces the run
        sets = [f"experiments.{i}.drops={args.drops}" for i in range(len(cfg.experiments))]
        cfg = load_config(overrides=sets, doc=cfg.model_dump(mode="json"))
    problems = physics_problems(cfg)
    if problems:
        _report_problems(problems)
        return EXIT_CONFIG
    out = _output_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    specs = cfg.experiment_specs()
    if args.only:
        specs = [s for s in specs if s.name in args.only]
        if not specs:
            print(f"invalid: --only: no experiment named {args.only}", file=sys.stderr)
            return EXIT_CONFIG
    scenario, opt, bcfg = cfg.scenario_config(), cfg.optimizer_config(), cfg.baseline_config()
    _write(os.path.join(out, "scenario.json"), json.dumps(_scenario_dump(cfg), indent=1))
    for spec in specs:
        log.info("running %s (%s over %s, %d drops)", spec.name, spec.kind, spec.axis, spec.drops)
        table = run_experiment(spec, scenario, opt, bcfg, threads=args.threads)
        csv_path, _ = table.write(out)
        print(f"wrote {csv_path}")
    man = manifest(cfg)
    man["experiments_run"] = [s.name for s in specs]
    _write(os.path.join(out, "manifest.json"), json.dumps(man, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_dump_block(args) -> int:
    if args.L is None or args.G is None:
        cfg = _load(args.config, args.set)
        L = args.L or cfg.scenario_config().n_aps
        G = args.G or cfg.grouping.G or 2
    else:
        L, G = args.L, args.G
    if L < 2 or G < 1:
        print("invalid: need L >= 2 and G >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sched = build_group_precoders(L, G)
    except BlockTooLargeError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = dump_block(sched, args.out)
    if args.out is None:
        print(text)
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _load(args.config, args.set)
    problems = physics_problems(cfg)
    if problems:
        _report_problems(problems)
        return EXIT_CONFIG
    specs = [s for s in cfg.experiment_specs() if s.kind == "trace"]
    if not specs:
        print("invalid: experiments: no convergence trace configured", file=sys.stderr)
        return EXIT_CONFIG
    spec = specs[0]
    if args.drops is not None:
        spec.drops = args.drops
    table = run_experiment(spec, cfg.scenario_config(), cfg.optimizer_config(),
                           threads=args.threads)
    if args.out:
        _write(args.out, table.to_csv())
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biars", description="BIA-RS optical wireless simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("config", nargs=None if config_required else "?",
                        help="YAML config or a run manifest (JSON)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. experiment.snr.values=[10,20]")

    sp = sub.add_parser("validate", help="schema and physics checks")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("run", help="run the configured experiments")
    common(sp)
    sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    sp.add_argument("--threads", type=int, default=1, help="worker processes")
    sp.add_argument("--only", action="append", help="run only the named experiment")
    sp.add_argument("--drops", type=int, help="override the drop count of every experiment")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("dump-block", help="print the BIA supersymbol layout as JSON")
    common(sp)
    sp.add_argument("--L", type=int)
    sp.add_argument("--G", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_dump_block)

    sp = sub.add_parser("trace", help="optimizer convergence trace as CSV")
    common(sp)
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--drops", type=int)
    sp.set_defaults(func=cmd_trace)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("invalid: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        _report_problems(exc.problems)
        return EXIT_CONFIG
    except (ExperimentError, FileNotFoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 4
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
