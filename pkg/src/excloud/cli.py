"""Command-line front end.

    excloud SUBCOMMAND --config PATH [--seed N] [--out DIR] [--replicates N] [--jobs N]

Subcommands: traffic, classify, simulate, couple, oracle, converge, speed,
scaling.  Primary outputs (``<subcommand>.json`` and any CSV files) are
byte-identical for identical config and seed; the wall-clock time and
version live only in ``manifest.json``.

Exit codes: 0 success or all checks passed, 2 a tolerance check failed,
1 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .experiments import RUNNERS

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
OUT_ENV = "EXCLOUD_OUT"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _version() -> str:
    try:
        from importlib.metadata import version

        v = version("artifact")
    except Exception:  # pragma: no cover - not installed
        v = "unknown"
    try:
        g = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if g.returncode == 0 and g.stdout.strip():
            v = f"{v}+{g.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="excloud", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=sorted(RUNNERS))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
    p.add_argument("--out", default=os.environ.get(OUT_ENV),
                   help=f"output directory (default ${OUT_ENV}, else ./excloud_out)")
    p.add_argument("--replicates", type=int, help="replicate count (overrides config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replicates")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.subcommand)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        reps = args.replicates if args.replicates is not None else cfg.get("replicates", 1)
        if reps < 1 or args.jobs < 1:
            raise ConfigError("--replicates and --jobs must be >= 1")
        out = Path(args.out or "excloud_out")
        out.mkdir(parents=True, exist_ok=True)
        outcome = RUNNERS[args.subcommand](cfg, seed, reps, args.jobs)
    except Exception as e:  # every failure maps to exit code 1
        print(f"excloud {args.subcommand}: error: {e}", file=sys.stderr)
        return EXIT_ERROR

    primary = dict(outcome.result, subcommand=args.subcommand, seed=seed,
                   replicates=reps, passed=outcome.passed)
    files = [f"{args.subcommand}.json"]
    (out / files[0]).write_text(dumps(primary))
    for name, text in sorted(outcome.artifacts.items()):
        (out / name).write_text(text)
        files.append(name)
    manifest = {
        "subcommand": args.subcommand,
        "config": cfg,
        "config_path": str(args.config),
        "seed": seed,
        "replicates": reps,
        "jobs": args.jobs,
        "version": _version(),
        "wall_time_s": time.perf_counter() - t0,
        "passed": outcome.passed,
        "outputs": files,
    }
    (out / "manifest.json").write_text(dumps(manifest))
    verdict = {None: "done", True: "PASS", False: "FAIL"}[outcome.passed]
    print(f"excloud {args.subcommand}: {verdict} -> {out}")
    return EXIT_FAIL if outcome.passed is False else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
