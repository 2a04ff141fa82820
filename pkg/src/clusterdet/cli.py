"""Command-line entry point.

    clusterdet run study3 --preset scenario2 --trials 2000 --out results/s2
    clusterdet validate my_scenario.toml
    clusterdet presets

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PRESETS, ScenarioConfig, load_config, preset
from .errors import ConfigError, NumericalFailure, OutputError
from .output import FORMATS, emit
from .studies import STUDIES

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("clusterdet")


def _formats(text: str):
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fmts if f not in FORMATS]
    if bad or not fmts:
        raise argparse.ArgumentTypeError(f"formats must be a comma list drawn from {', '.join(FORMATS)}")
    return fmts


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clusterdet", description="Cluster-aware two-stage MIMO detection experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a case study")
    run.add_argument("study", choices=sorted(STUDIES))
    src = run.add_mutually_exclusive_group()
    src.add_argument("--config", help="TOML or JSON scenario file")
    src.add_argument("--preset", choices=sorted(PRESETS), default=None)
    run.add_argument("--seed", type=_u64)
    run.add_argument("--trials", type=_positive)
    run.add_argument("--out", help="output directory (default: config out_dir)")
    run.add_argument("--format", type=_formats, default=FORMATS, dest="formats")
    run.add_argument("--threads", type=_positive, default=1)

    val = sub.add_parser("validate", help="check a scenario file and print the resolved config")
    val.add_argument("config")

    pre = sub.add_parser("presets", help="list built-in scenarios")
    pre.add_argument("--show", choices=sorted(PRESETS), help="print the full resolved preset as JSON")
    return p


def _resolve(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else preset(args.preset or "scenario1")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["out_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _run(args) -> int:
    cfg = _resolve(args)
    study = STUDIES[args.study]
    if args.study == "study1":
        result = study(cfg)
    else:
        result = study(cfg, threads=args.threads)
    paths = emit(result, cfg.out_dir, args.formats)
    for path in paths:
        print(path)
    log.info("%s finished in %.1f s", args.study, result.wall_time_s)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK
        if args.show:
            print(json.dumps(preset(args.show).to_dict(), indent=2, sort_keys=True))
        else:
            for name in sorted(PRESETS):
                cfg = preset(name)
                print(
                    f"{name}: N={cfg.n_users} users in C={cfg.layout.n_clusters} clusters, "
                    f"M={cfg.geometry.n_elements} antennas, {cfg.geometry.carrier_hz / 1e9:g} GHz, "
                    f"altitude {cfg.geometry.altitude_m / 1e3:g} km"
                )
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
