"""Command line entry point: ``sotest generate|execute|report|all``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from sotest.envmodel import ConfigurationError
from sotest.generation import GenerationError
from sotest.reporting import (
    ALL_FAULTS,
    CampaignConfig,
    execute,
    format_table,
    generate,
    load_config,
    report,
    write_metrics,
)

log = logging.getLogger("sotest")

EXIT_OK = 0
EXIT_DETECTED = 1
EXIT_CONFIG = 2


def _fault_list(text: str) -> list[str]:
    if text.lower() == "all":
        return list(ALL_FAULTS)
    if text.lower() == "none":
        return []
    return [f.strip().upper() for f in text.split(",") if f.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON campaign file")
    common.add_argument("--seed", type=int, help="campaign seed")
    common.add_argument("--mode", choices=("offline", "online"), help="suite generation mode")
    common.add_argument("--suites", type=int, help="suites per fault id")
    common.add_argument("--sequences", type=int, help="sequences per suite")
    common.add_argument("--fault", type=_fault_list, metavar="IDS",
                        help="comma separated fault ids, 'all' or 'none'")
    common.add_argument("--no-baseline", action="store_true", help="skip the fault-free baseline blocks")
    common.add_argument("--workers", type=int, help="worker processes (0: one per CPU)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--fail-on-detect", action="store_true",
                        help="exit with status 1 when any failure was detected")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="sotest", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("generate", parents=[common], help="write offline suites to OUT/suites")
    ex = sub.add_parser("execute", parents=[common], help="run suites and write OUT/results.jsonl")
    ex.add_argument("--input", type=Path,
                    help="suite directory from 'generate' (default: OUT/suites in offline mode)")
    rp = sub.add_parser("report", parents=[common], help="aggregate a result file")
    rp.add_argument("--input", type=Path, help="result file (default: OUT/results.jsonl)")
    sub.add_parser("all", parents=[common], help="generate, execute and report")
    return p


def resolve_config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    changes = {}
    for name in ("seed", "mode", "suites", "sequences", "workers"):
        v = getattr(args, name)
        if v is not None:
            changes[name] = v
    if args.fault is not None:
        changes["faults"] = args.fault
    if args.no_baseline:
        changes["baseline"] = False
    if args.out is not None:
        changes["out"] = str(args.out)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _detections(rows) -> int:
    return sum(r.gray_failures + r.black_failures + r.smoke_failures for r in rows)


def _progress(quiet: bool):
    if quiet:
        return None

    def show(done, total):
        print(f"\r{done}/{total} suites", end="" if done < total else "\n", file=sys.stderr, flush=True)

    return show


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        rows = None
        if args.verb == "generate":
            paths = generate(cfg, out)
            log.info("wrote %d suite files to %s", len(paths), out / "suites")
            return EXIT_OK
        if args.verb in ("execute", "all"):
            suite_dir = None
            if args.verb == "all" and cfg.mode == "offline":
                generate(cfg, out)
                suite_dir = out / "suites"
            elif args.verb == "execute":
                suite_dir = args.input or (out / "suites" if cfg.mode == "offline" else None)
            path = execute(cfg, out, suite_dir, _progress(args.quiet))
            log.info("results: %s", path)
            if args.verb == "execute":
                if args.fail_on_detect:
                    rows = report(path)
                    return EXIT_DETECTED if _detections(rows) else EXIT_OK
                return EXIT_OK
        else:
            path = args.input or out / "results.jsonl"
        rows = report(path)
        write_metrics(rows, Path(path).parent)
        print(format_table(rows))
    except (ConfigurationError, GenerationError) as exc:
        print(f"sotest: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"sotest: error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_CONFIG
    if args.fail_on_detect and _detections(rows):
        return EXIT_DETECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
