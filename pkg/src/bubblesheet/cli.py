"""Command-line driver: run experiments, list the catalog, run the check suite."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, default_config
from .experiments import NumericalFailure, list_experiments, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("bubblesheet")


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, files) -> Path:
    """manifest.csv with one ``filename,sha256,rows`` line per CSV; the timestamp is a leading comment."""
    path = out / "manifest.csv"
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    with open(path, "w", newline="") as fh:
        fh.write(f"# created {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "sha256", "rows"])
        for name, rows in sorted(files):
            w.writerow([name, sha256(out / name), rows])
    return path


def execute(cfg: ExperimentConfig, out: Path, jobs: int = 1, figures: bool = False) -> int:
    t0 = time.perf_counter()
    try:
        res = run_experiment(cfg, out, jobs)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    (out / "config.txt").write_text(cfg.dumps())
    write_manifest(out, res.files)
    lines = [c.line() for c in res.checks] + res.summary
    verdict = "PASS" if res.passed else "FAIL"
    lines.append(f"experiment={cfg.experiment} verdict={verdict}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if figures:
        from .plotting import make_figures
        for name in make_figures(cfg.experiment, out):
            log.info("figure %s", out / name)
    log.info("%s finished in %.1f s", cfg.experiment, time.perf_counter() - t0)
    return EXIT_OK if res.passed else EXIT_VERIFY


def run_checks(jobs: int = 1, names=EXPERIMENTS) -> int:
    """Run every experiment with its default configuration into a scratch directory."""
    status = EXIT_OK
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            cfg = default_config(name)
            t0 = time.perf_counter()
            try:
                res = run_experiment(cfg, Path(tmp) / name, jobs)
            except NumericalFailure as exc:
                print(f"{name}: FAIL (numerical failure: {exc})")
                status = max(status, EXIT_NUMERICAL)
                continue
            for c in res.checks:
                print(f"{name}.{c.line()}")
            print(f"{name}: {'PASS' if res.passed else 'FAIL'} ({time.perf_counter() - t0:.1f} s)")
            if not res.passed:
                status = EXIT_VERIFY
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubblesheet", description=__doc__)
    ap.add_argument("--check", action="store_true", help="run every module's invariant suite and exit")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config", nargs="?", help="key=value config file")
    run.add_argument("overrides", nargs="*", help="key=value pairs overriding the file")
    run.add_argument("--output", help="output directory (overrides the config)")
    run.add_argument("--figures", action="store_true", help="also write PNG figures")
    run.add_argument("--jobs", dest="run_jobs", type=int, default=None, help="worker processes for sweeps")
    ls = sub.add_parser("list", help="print the experiment catalog as JSON")
    ls.add_argument("--names", action="store_true", help="names only")
    dflt = sub.add_parser("defaults", help="print the default config of an experiment")
    dflt.add_argument("experiment")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.check:
        return run_checks(args.jobs)
    if args.command == "list":
        cat = list_experiments()
        print("\n".join(e["name"] for e in cat) if args.names else json.dumps(cat, indent=2))
        return EXIT_OK
    try:
        if args.command == "defaults":
            print(default_config(args.experiment).dumps(), end="")
            return EXIT_OK
        if args.command == "run":
            overrides = list(args.overrides)
            cfg_path = args.config
            if cfg_path is not None and "=" in cfg_path:
                overrides.insert(0, cfg_path)
                cfg_path = None
            if cfg_path is None:
                cfg = ExperimentConfig.parse("", overrides)
            else:
                cfg = ExperimentConfig.load(cfg_path, overrides)
            out = Path(args.output or cfg.output)
            jobs = args.run_jobs if args.run_jobs is not None else args.jobs
            if jobs < 1:
                raise ConfigError("jobs", "must be positive")
            try:
                out.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError("output", f"cannot create {out} ({exc.strerror})") from None
            return execute(cfg, out, jobs, args.figures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    build_parser().print_help()
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
