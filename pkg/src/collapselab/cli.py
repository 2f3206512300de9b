"""Command-line runner.

    collapselab run --config cfg.yaml [--seed N] [--out DIR]
    collapselab validate --config cfg.yaml
    collapselab list

Exit status: 0 all criteria pass, 1 a criterion failed, 2 invalid
configuration, 3 a numerical guard tripped.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import NUMERICAL_GUARDS, CollapseLabError
from .experiments import REGISTRY, merged_params, resolve_numbers, validate_params

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3
SEED_MAX = 2 ** 64 - 1
_TOP_KEYS = {"experiment", "seed", "output_dir", "params"}

log = logging.getLogger("collapselab")


class ConfigError(ValueError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML: {exc}"]) from None
    if not isinstance(cfg, dict):
        raise ConfigError(["config: top level must be a mapping"])
    return cfg


def validate(cfg: dict) -> list:
    """All violations of ``cfg``; an empty list means it is runnable."""
    v = []
    for k in cfg:
        if k not in _TOP_KEYS:
            v.append(f"{k}: unknown top-level key")
    name = cfg.get("experiment")
    if name not in REGISTRY:
        v.append(f"experiment: must be one of {sorted(REGISTRY)}, got {name!r}")
    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= SEED_MAX:
        v.append(f"seed: must be an integer in [0, 2^64 - 1], got {seed!r}")
    out = cfg.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        v.append("output_dir: must be a non-empty path")
    params = cfg.get("params", {}) or {}
    if not isinstance(params, dict):
        v.append("params: must be a mapping")
    elif name in REGISTRY:
        v.extend(validate_params(name, params))
    return v


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def write_table(table, directory: Path) -> Path:
    path = directory / f"{table.name}.csv"
    header = [f"{name} [{unit}]" for name, unit in table.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*table.data):
            w.writerow([_fmt(v) for v in row])
    return path


def run(cfg: dict, seed: int | None = None, out_dir: str | None = None) -> tuple[int, dict]:
    """Validate, run and write outputs.  Returns ``(exit status, manifest)``."""
    if seed is not None:
        cfg = {**cfg, "seed": seed}
    violations = validate(cfg)
    if violations:
        raise ConfigError(violations)
    name = cfg["experiment"]
    seed = int(cfg.get("seed", 0))
    directory = Path(out_dir or cfg.get("output_dir", "out"))
    directory.mkdir(parents=True, exist_ok=True)
    params = resolve_numbers(merged_params(name, cfg.get("params")))
    log.info("running %s (seed %d) into %s", name, seed, directory)

    start = time.perf_counter()
    manifest = {"experiment": name, "seed": seed, "config": cfg, "params": params,
                "artifact_version": __version__}
    try:
        outcome = REGISTRY[name].compute(params, seed)
    except NUMERICAL_GUARDS as exc:
        manifest.update(status="numerical-guard", error=f"{type(exc).__name__}: {exc}",
                        duration_seconds=time.perf_counter() - start)
        _write_manifest(manifest, directory)
        return EXIT_GUARD, manifest

    files = [write_table(t, directory).name for t in outcome.tables]
    for fname, script in outcome.plots.items():
        (directory / fname).write_text(script, encoding="utf-8")
        files.append(fname)
    manifest.update(status="pass" if outcome.passed else "fail",
                    duration_seconds=time.perf_counter() - start,
                    criteria=[c.as_dict() for c in outcome.criteria],
                    diagnostics={k: _plain(v) for k, v in outcome.diagnostics.items()},
                    files=files + ["manifest.json"])
    _write_manifest(manifest, directory)
    return (EXIT_OK if outcome.passed else EXIT_FAIL), manifest


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def _write_manifest(manifest: dict, directory: Path) -> None:
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _print_criteria(manifest: dict) -> None:
    for c in manifest.get("criteria", []):
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark}  {c['name']}: {c['measured']} (tolerance {c['tolerance']})")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="collapselab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    sub.add_parser("list", help="list experiments")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "list":
        for name, exp in REGISTRY.items():
            print(f"{name:32s} {exp.summary}")
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            violations = validate(cfg)
            for v in violations:
                print(v)
            if not violations:
                print("ok")
            return EXIT_CONFIG if violations else EXIT_OK
        status, manifest = run(cfg, args.seed, args.out)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid config: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except (CollapseLabError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if status == EXIT_GUARD:
        print(f"numerical guard tripped: {manifest['error']}", file=sys.stderr)
    else:
        _print_criteria(manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
