"""``switchkac run <config> [--out DIR] [--threads N] [--seed-override S]``.

Exit status: 0 when every check passes, 1 when a check fails, 2 on usage,
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .config import load_config
from .errors import ConfigurationError, SwitchKacError
from .experiments import EXPERIMENTS, RunContext, check_keys

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _jsonable(obj):
    # numpy scalars and arrays that end up in check details
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _parser():
    p = argparse.ArgumentParser(prog="switchkac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a TOML config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides output_dir in the config)")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--seed-override", type=int, dest="seed_override")
    sub.add_parser("list", help="list experiment names")
    return p


def run_experiment(config_path, out=None, threads=1, seed_override=None, log=sys.stderr):
    """Run one config; returns ``(report dict, exit status)``."""
    cfg, digest = load_config(config_path)
    name = cfg.require("experiment")
    if name not in EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment {name!r}; valid: {', '.join(sorted(EXPERIMENTS))}")
    check_keys(cfg, name)
    seed = cfg.get("seed")
    if seed is None:
        raise ConfigurationError("config must set seed")
    if seed_override is not None:
        seed = seed_override
    if threads < 1:
        raise ConfigurationError("--threads must be positive")
    out_dir = out or cfg.get("output_dir") or os.path.join("switchkac-out", name)
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {out_dir!r} is not writable: {exc}") from exc

    ctx = RunContext(out_dir, int(seed), threads)
    t0 = time.perf_counter()
    checks = EXPERIMENTS[name](cfg, ctx)
    passed = all(c.passed for c in checks)
    report = {
        "experiment": name,
        "passed": passed,
        "checks": [c.as_dict() for c in checks],
        "runtime": time.perf_counter() - t0,
        "outputs": ctx.files,
        "provenance": {"config": os.path.basename(config_path), "config_sha256": digest,
                       "seed": int(seed), "version": __version__},
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, default=_jsonable)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: value={c.value:.6g} "
              f"target={c.target:.6g} tol={c.tolerance:.3g}", file=log)
    return report, EXIT_PASS if passed else EXIT_FAIL


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(sorted(EXPERIMENTS)))
        return EXIT_PASS
    try:
        _, status = run_experiment(args.config, args.out, args.threads, args.seed_override)
    except (ConfigurationError, OSError) as exc:
        print(f"switchkac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SwitchKacError as exc:
        print(f"switchkac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return status


if __name__ == "__main__":
    sys.exit(main())
