"""Command line entry point: ``strichlab run|validate|plot``.

Exit status 0 on success, 1 on a numerical failure raised by a module and
2 when the configuration (or result file) fails validation.
"""

import argparse
import hashlib
import os
import sys
import warnings

from . import __version__
from .config import ConfigError, load
from .errors import StrichlabError
from .experiments import execute
from .results import (
    ResultRow,
    atomic_write,
    canonical_json,
    emit_plot_script,
    render_csv,
    sidecar,
    sidecar_path,
)

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID = 0, 1, 2


def experiment_id(cfg):
    digest = hashlib.sha256(canonical_json(cfg.to_dict()).encode()).hexdigest()[:12]
    return f"{cfg.kind}-{digest}"


def build_rows(cfg, outcome):
    eid = experiment_id(cfg)
    base = dict(cfg.params)
    rows = []
    for r in outcome.rows:
        snap = dict(base)
        snap.update(r["cell"])
        rows.append(ResultRow(eid, snap, r["metric"], r["value"], r["error"], cfg.seed))
    return rows


def output_path(cfg, config_path):
    if os.path.isabs(cfg.output):
        return cfg.output
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), cfg.output)


def run(cfg, config_path="."):
    """Execute ``cfg`` and write the CSV plus sidecar; returns the CSV path."""
    outcome = execute(cfg)
    rows = build_rows(cfg, outcome)
    path = output_path(cfg, config_path)
    atomic_write(path, render_csv(rows))
    meta = sidecar(cfg.to_dict(), cfg.grid, outcome.window, outcome.drifts, outcome.extra)
    atomic_write(sidecar_path(path), meta)
    return path


def _parser():
    ap = argparse.ArgumentParser(prog="strichlab", description="Dispersive-estimate experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="validate and execute an experiment config")
    p.add_argument("config")
    p = sub.add_parser("validate", help="check a config without computing")
    p.add_argument("config")
    p.add_argument("--dump", action="store_true", help="print the canonical config with defaults filled")
    p = sub.add_parser("plot", help="write a matplotlib script for a result file")
    p.add_argument("result")
    p.add_argument("-o", "--output")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    err = sys.stderr
    if args.command == "plot":
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                out = emit_plot_script(args.result, args.output)
            for w in caught:
                print(f"warning: {w.message}", file=err)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=err)
            return EXIT_INVALID
        print(out)
        return EXIT_OK
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=err)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=err)
        return EXIT_INVALID
    if args.command == "validate":
        if args.dump:
            print(cfg.dumps(), end="")
        else:
            print(f"ok: {cfg.kind}")
        return EXIT_OK
    try:
        path = run(cfg, args.config)
    except StrichlabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=err)
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"cannot write results: {exc}", file=err)
        return EXIT_INVALID
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
