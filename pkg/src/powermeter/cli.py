"""The ``powermeter`` command line: wrap a child process in a measurement
session, export per-node tables, and merge multi-node exports.

Wrapper flags are separated from the child command by a ``--`` sentinel:

    powermeter --methods synthetic --df-out out -- sleep 1
    powermeter merge out/energy_a.csv out/energy_b.csv -o merged.csv
"""

from __future__ import annotations

import argparse
import os
import signal
import socket
import subprocess
import sys
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import IO

from .backends import BackendError, registry_resolve
from .core import PowerMeterError
from .exports import (
    CollisionError,
    ExportError,
    MergeError,
    SessionExport,
    SuffixContext,
    SuffixError,
    export_tables,
    merge_energy_tables,
    render_suffix,
)
from .sampler import EnergyReport, Session, SessionConfig, SessionError

EXIT_USAGE = 2
EXIT_UNKNOWN_METHOD = 66
EXIT_SPAWN_FAILURE = 67
EXIT_EXPORT_FAILURE = 68
EXIT_STARTUP_FAILURE = 69


class UsageError(PowerMeterError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass(slots=True)
class CliArgs:
    methods: list[str]
    command: list[str]
    interval_ms: int = 100
    df_out: Path | None = None
    df_filetype: str = "csv"
    df_suffix: str = ""
    force: bool = False


def _flatten_methods(values: list[str]) -> list[str]:
    """Split comma-separated method lists, keeping commas inside method
    arguments: a fragment whose head contains '=' continues the previous
    spec (e.g. ``synthetic:kind=ramp,base=0,gh`` is two methods)."""
    out: list[str] = []
    for value in values:
        for fragment in value.split(","):
            fragment = fragment.strip()
            if not fragment:
                continue
            head = fragment.partition(":")[0]
            if "=" in head:
                if not out:
                    raise UsageError(f"method list starts with an argument fragment: {fragment!r}")
                out[-1] += "," + fragment
            else:
                out.append(fragment)
    return out


def parse_wrapper_args(argv: list[str]) -> CliArgs:
    if "--" in argv:
        split = argv.index("--")
        flag_args, command = argv[:split], argv[split + 1 :]
    else:
        flag_args, command = argv, []
    parser = _ArgumentParser(prog="powermeter", add_help=True)
    parser.add_argument("--methods", action="append", required=True, metavar="NAME[:ARG]")
    parser.add_argument("--interval", type=int, default=100, metavar="MS")
    parser.add_argument("--df-out", type=Path, default=None, metavar="DIR")
    parser.add_argument("--df-filetype", default="csv", metavar="TYPE")
    parser.add_argument("--df-suffix", default="", metavar="TPL")
    parser.add_argument("--force", action="store_true")
    ns = parser.parse_args(flag_args)
    if not command:
        raise UsageError("no child command given; separate it with '--'")
    return CliArgs(
        methods=_flatten_methods(ns.methods),
        command=command,
        interval_ms=ns.interval,
        df_out=ns.df_out,
        df_filetype=ns.df_filetype,
        df_suffix=ns.df_suffix,
        force=ns.force,
    )


def _summary_text(report: EnergyReport) -> str:
    columns = ["channel", "energy_wh", "mean_w", "max_w", "duration_s", "samples", "gaps"]
    rows = []
    for r in report.rows:
        rows.append(
            [
                r.channel.key(),
                "-" if r.energy_wh is None else format(r.energy_wh, ".6g"),
                "-" if r.mean_w is None else format(r.mean_w, ".6g"),
                "-" if r.max_w is None else format(r.max_w, ".6g"),
                format(r.duration_s, ".6g"),
                str(r.samples),
                str(r.gaps),
            ]
        )
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _forwarding_signals(child: subprocess.Popen):
    """Install SIGINT/SIGTERM forwarding to the child; returns a restore hook."""
    previous: dict[int, object] = {}

    def forward(signum, frame):  # pragma: no cover - exercised interactively
        try:
            child.send_signal(signum)
        except ProcessLookupError:
            pass

    try:
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, forward)
    except ValueError:
        # not the main thread; skip forwarding
        previous = {}

    def restore() -> None:
        for sig, handler in previous.items():
            signal.signal(sig, handler)

    return restore


def run_wrapped(
    args: CliArgs,
    child_stdout: IO | int | None = None,
    child_stderr: IO | int | None = None,
) -> int:
    """Run the child command inside a measurement session.

    The session starts before the child launches and stops after it exits;
    exports are written even when the child fails. The wrapper's exit code
    equals the child's.
    """
    try:
        methods = registry_resolve(args.methods)
    except BackendError as exc:
        print(f"powermeter: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_METHOD

    try:
        suffix = render_suffix(
            args.df_suffix,
            SuffixContext(hostname=socket.gethostname(), pid=os.getpid(), start_time=datetime.now()),
        )
    except SuffixError as exc:
        print(f"powermeter: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        session = Session(SessionConfig(methods, args.interval_ms))
        session.start()
    except (SessionError, ValueError) as exc:
        print(f"powermeter: {exc}", file=sys.stderr)
        return EXIT_STARTUP_FAILURE

    try:
        child = subprocess.Popen(args.command, stdout=child_stdout, stderr=child_stderr)
    except OSError as exc:
        session.stop()
        print(f"powermeter: failed to spawn {args.command[0]!r}: {exc}", file=sys.stderr)
        return EXIT_SPAWN_FAILURE

    restore = _forwarding_signals(child)
    try:
        returncode = child.wait()
    finally:
        restore()
    if returncode < 0:
        returncode = 128 - returncode  # died on signal N -> 128+N

    report = session.stop()
    export = SessionExport(report=report, series=session.series)
    code = returncode
    if args.df_out is not None:
        try:
            export_tables(export, args.df_out, args.df_filetype, suffix, force=args.force)
        except (ExportError, OSError) as exc:
            print(f"powermeter: export failed: {exc}", file=sys.stderr)
            if code == 0:
                code = EXIT_EXPORT_FAILURE
    print(_summary_text(report), file=sys.stderr)
    return code


def merge_main(argv: list[str]) -> int:
    parser = _ArgumentParser(prog="powermeter merge")
    parser.add_argument("files", nargs="+", metavar="FILE")
    parser.add_argument("-o", "--output", required=True, metavar="OUT.csv")
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"powermeter merge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        table = merge_energy_tables([Path(f) for f in ns.files])
    except (MergeError, ExportError, OSError) as exc:
        print(f"powermeter merge: {exc}", file=sys.stderr)
        return 1
    Path(ns.output).write_text(table.to_csv_text())
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["merge"]:
        return merge_main(argv[1:])
    try:
        args = parse_wrapper_args(argv)
    except UsageError as exc:
        print(f"powermeter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run_wrapped(args)


def entrypoint() -> None:
    raise SystemExit(main())
