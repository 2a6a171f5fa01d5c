"""Command-line entry point.

    masterlab run <config.json> [--out DIR] [--jobs N]
    masterlab validate <config.json>

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import ExperimentConfig
from .exceptions import ConfigError, NumericalError
from .experiments import ExperimentResult, Table, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("masterlab")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(v)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for row in t.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def output_dir(cfg: ExperimentConfig, cli_out: Optional[str]) -> Path:
    """--out, then the config's output_dir, then $MASTERLAB_OUT, then the working directory."""
    for cand in (cli_out, cfg.raw.get("output_dir"), os.environ.get("MASTERLAB_OUT")):
        if cand:
            return Path(cand)
    return Path.cwd()


def write_result(res: ExperimentResult, cfg: ExperimentConfig, out: Path) -> List[Path]:
    written = []
    for t in res.tables:
        path = out / f"{res.experiment}_{t.name}.csv"
        write_atomic(path, table_csv(t))
        written.append(path)
    stem = f"{res.experiment}_{cfg.tag}"
    echo = dict(cfg.raw)
    echo["output_dir"] = cfg.raw.get("output_dir")
    write_atomic(out / f"{stem}.config.json", _dumps(echo))
    report = dict(res.report)
    report["status"] = res.statuses()
    report["failed"] = res.failed
    report["version"] = __version__
    write_atomic(out / f"{stem}.report.json", _dumps(report))
    written += [out / f"{stem}.config.json", out / f"{stem}.report.json"]
    return written


def cmd_validate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    sys.stdout.write(_dumps(cfg.raw))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    out = output_dir(cfg, args.out)
    log.info("running %s (tag %s) -> %s", cfg.experiment, cfg.tag, out)
    res = run(cfg, jobs=args.jobs)
    for path in write_result(res, cfg, out):
        print(path)
    if res.failed:
        bad = [s for s in res.statuses() if s != "ok"]
        log.error("%d row(s) failed: %s", len(bad), "; ".join(bad))
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="masterlab", description="Open-system simulations of a driven qubit-resonator.")
    ap.add_argument("--version", action="version", version=f"masterlab {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir, $MASTERLAB_OUT, or cwd)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes for sweep rows")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
