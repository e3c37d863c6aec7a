"""Command-line entry point.

    anisocone <subcommand> [--config PATH] [--out DIR] [--seed INT] [--threads INT]
                           [--tol-scale FLOAT] [--n INT] [--p FLOAT] [--cone NAME]

Writes ``summary.json``, ``reports/*.csv`` and ``profiles/*.csv`` under the
output directory.  Exit status: 0 when every check passes, 1 when a check
fails or a computation raises, 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import traceback

import numpy as np

from . import __version__
from .config import CONE_SHORTCUTS, ConfigError, load
from .report import VerificationReport, _fmt, _jsonable
from .suites import SUBCOMMANDS, SUITES, Result

log = logging.getLogger("anisocone")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anisocone", description="Numerical checks for anisotropic Sobolev "
                                 "extremals in convex cones.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("all",):
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--tol-scale", type=float, dest="tol_scale")
        sp.add_argument("--n", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--cone", choices=CONE_SHORTCUTS)
        sp.add_argument("-q", "--quiet", action="store_true")
    return ap


def write_profile(path, prof) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("r,u\n")
        for r, u in zip(prof.r, prof.values):
            fh.write(f"{_fmt(r)},{_fmt(u)}\n")


def _persist(out: str, suite: str, res: Result) -> dict:
    os.makedirs(os.path.join(out, "reports"), exist_ok=True)
    entry = {"pass": res.passed, "reports": {}, "notes": _jsonable(res.notes)}
    for name, rep in res.reports.items():
        fname = f"{suite}__{name}.csv"
        rep.to_csv(os.path.join(out, "reports", fname))
        d = {"pass": rep.passed, "rows": len(rep.rows), "file": f"reports/{fname}"}
        if name != "minimize_trace":
            d["info"] = _jsonable({k: v for k, v in rep.info.items() if np.ndim(v) == 0})
        entry["reports"][name] = d
    if res.profiles:
        os.makedirs(os.path.join(out, "profiles"), exist_ok=True)
        for name, prof in res.profiles.items():
            write_profile(os.path.join(out, "profiles", f"{suite}__{name}.csv"), prof)
            entry.setdefault("profiles", []).append(f"profiles/{suite}__{name}.csv")
    return entry


def run(command: str, config_path: str | None = None, overrides: dict | None = None,
        quiet: bool = False) -> int:
    """Run one subcommand (or ``all``); returns the exit status."""
    try:
        cfg = load(config_path, overrides)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    names = SUBCOMMANDS if command == "all" else (command,)
    summary = {
        "metadata": {"version": __version__, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
        "command": command,
        "config": _jsonable(cfg.to_dict()),
        "suites": {},
    }
    status = 0
    for name in names:
        try:
            res = SUITES[name](cfg)
        except Exception as e:  # computation failure: record it and keep going
            res = Result()
            rep = VerificationReport("exception")
            rep.add(suite=name, error=type(e).__name__, message=str(e), **{"pass": False})
            res.add("exception", rep)
            log.debug("".join(traceback.format_exception(e)))
        summary["suites"][name] = _persist(out, name, res)
        if not res.passed:
            status = 1
        if not quiet:
            for rname, rep in res.reports.items():
                if rname != "minimize_trace":
                    print(f"{name:18s} {'PASS' if rep.passed else 'FAIL'}  {rname}  ({len(rep.rows)} rows)")
    summary["pass"] = status == 0
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print(f"{'PASS' if status == 0 else 'FAIL'}: results in {out}")
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    ov = {k: getattr(args, k) for k in ("out", "seed", "threads", "tol_scale", "n", "p", "cone")}
    return run(args.command, args.config, ov, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
