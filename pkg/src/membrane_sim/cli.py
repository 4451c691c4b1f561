"""membrane-sim command line.

    membrane-sim run --config cfg.yaml [--set fdtd.steps=500] [--seed 7] [--out dir]
    membrane-sim validate --config cfg.yaml

Exit status: 0 success, 2 config-error, 3 numerics-error, 1 anything else.
Errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, load
from .errors import NumericsError
from .experiments import RUNNERS, check
from .io import csv_text, json_text, write_atomic

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_NUMERICS = 0, 1, 2, 3


def _versions() -> dict:
    out = {"python": platform.python_version(), "membrane_sim": __version__,
           "numpy": np.__version__, "scipy": scipy.__version__}
    for pkg in ("numba", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


def _fail(category: str, code: int, message: str, field: str | None = None) -> int:
    err = {"error": category, "message": message}
    if field is not None:
        err["field"] = field
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def _load(args) -> dict:
    return load(args.config, args.set or (), seed=args.seed, output_dir=getattr(args, "out", None),
                workers=getattr(args, "workers", None))


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
        violations = check(cfg)
    except ConfigError as exc:
        violations = [{"field": exc.path, "message": exc.message}]
    print(json_text({"valid": not violations, "violations": violations}), end="")
    return EXIT_OK


def execute(cfg: dict) -> dict:
    """Run a resolved config and write its outputs; returns the manifest."""
    violations = check(cfg)
    if violations:
        v = violations[0]
        raise ConfigError(v["field"], v["message"])
    out_dir = Path(cfg["output_dir"])
    t0 = time.perf_counter()
    tables, summary = RUNNERS[cfg["experiment"]](cfg)
    wall = time.perf_counter() - t0
    outputs = {}
    if cfg["emit"]["csv"]:
        for t in tables:
            name = f"{t.name}.csv"
            outputs[name] = write_atomic(out_dir / name, csv_text(t.header, t.rows))
    if cfg["emit"]["json"]:
        outputs["summary.json"] = write_atomic(out_dir / "summary.json", json_text(summary))
    manifest = {
        "experiment": cfg["experiment"],
        "seed": cfg["seed"],
        "config": cfg,
        "versions": _versions(),
        "wall_time_s": wall,
        "workers": cfg["workers"],
        "outputs": {k: {"sha256": v} for k, v in outputs.items()},
    }
    write_atomic(out_dir / "manifest.json", json_text(manifest))
    return manifest


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        if args.validate_only:
            return cmd_validate(args)
        manifest = execute(cfg)
    except ConfigError as exc:
        return _fail("config-error", EXIT_CONFIG, exc.message, exc.path)
    except NumericsError as exc:
        return _fail("numerics-error", EXIT_NUMERICS, str(exc))
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable category
        return _fail("error", EXIT_OTHER, f"{type(exc).__name__}: {exc}")
    print(json_text({"status": "ok", "output_dir": str(Path(manifest["config"]["output_dir"])),
                     "outputs": sorted(manifest["outputs"])}), end="")
    return EXIT_OK


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="membrane-sim",
                                description="Membrane field, topological register, spin and placement simulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML or JSON run config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field by dotted path (repeatable)")
        sp.add_argument("--seed", type=_seed, help="override the config seed")

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--workers", type=int, help="worker processes for multi-seed runs")
    r.add_argument("--validate-only", action="store_true", help="check the config and exit")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="schema and physics-sanity checks without running")
    common(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
