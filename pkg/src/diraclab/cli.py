"""Command line driver: ``diraclab run CONFIG`` and ``diraclab list``."""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .errors import ConfigurationError, DiracLabError
from .experiments import RUNNERS, catalog_json, catalog_text

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(config_path, out=None, seed=None, threads=1, stream=sys.stderr) -> int:
    try:
        cfg = load_config(config_path, seed)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.output or "diraclab-out")
    t0 = time.perf_counter()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        verdict, files = RUNNERS[cfg.experiment](cfg, out_dir, threads)
        status = EXIT_OK if verdict else EXIT_VERDICT
        error = None
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    except (DiracLabError, ArithmeticError, np.linalg.LinAlgError) as exc:
        status, files, error, verdict = EXIT_NUMERIC, [], f"{type(exc).__name__}: {exc}", False
        print(f"numeric error: {error}", file=stream)
    manifest = {
        "config": str(config_path),
        "config_sha256": cfg.source_sha256,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "threads": threads,
        "geometry": cfg.geometry.to_dict(),
        "versions": {"diraclab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "verdict": bool(verdict),
        "exit_status": status,
        "error": error,
        "files": {f: _sha(out_dir / f) for f in files},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if status == EXIT_VERDICT:
        print("verdict failure: see the report files", file=stream)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="diraclab",
                                 description="Weighted Dirac eigenvalue experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="seed override")
    r.add_argument("--threads", type=int, default=1, help="worker threads for family solves")
    ls = sub.add_parser("list", help="print the built-in catalog")
    ls.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args(argv)
    if args.command == "list":
        sys.stdout.write(catalog_json() if args.json else catalog_text())
        return EXIT_OK
    return run(args.config, args.out, args.seed, max(1, args.threads))


if __name__ == "__main__":
    sys.exit(main())
