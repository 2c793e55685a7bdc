"""CSV export/import of measurement sessions and multi-node table merging.

Floats are serialized with 17 significant digits so a re-import yields
bit-identical values. Session metadata rides along as ``#``-prefixed
header lines above the column row.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .core import ChannelId, PowerMeterError, PowerSample, PowerSeries
from .sampler import EnergyReport


class ExportError(PowerMeterError):
    pass


class CollisionError(ExportError):
    """Refusing to overwrite an existing result file without --force."""


class MergeError(PowerMeterError):
    pass


class SuffixError(PowerMeterError):
    pass


ENERGY_COLUMNS = ["method", "device", "energy_wh", "mean_w", "max_w", "duration_s", "samples", "gaps"]
POWER_COLUMNS = ["round", "method", "device", "t_s", "power_w"]


def format_float(x: float) -> str:
    """17 significant digits: parses back to the identical float64."""
    return format(x, ".17g")


# --- result-file suffixes ----------------------------------------------------


@dataclass(frozen=True, slots=True)
class SuffixContext:
    hostname: str
    pid: int
    start_time: datetime


SUFFIX_PLACEHOLDERS = "%h (hostname), %p (pid), %t (start time), %% (literal %)"


def render_suffix(template: str, context: SuffixContext) -> str:
    """Expand a result-file suffix template.

    Per-node placeholders keep concurrent multi-node runs from racing on
    the same output paths.
    """
    out: list[str] = []
    i = 0
    while i < len(template):
        c = template[i]
        if c != "%":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(template):
            raise SuffixError(f"dangling '%' in suffix template {template!r}; supported: {SUFFIX_PLACEHOLDERS}")
        p = template[i + 1]
        if p == "h":
            out.append(context.hostname)
        elif p == "p":
            out.append(str(context.pid))
        elif p == "t":
            out.append(context.start_time.strftime("%Y%m%d-%H%M%S"))
        elif p == "%":
            out.append("%")
        else:
            raise SuffixError(f"unsupported placeholder '%{p}'; supported: {SUFFIX_PLACEHOLDERS}")
        i += 2
    return "".join(out)


# --- session export ----------------------------------------------------------


@dataclass(slots=True)
class SessionExport:
    report: EnergyReport
    series: dict[ChannelId, PowerSeries]


def _metadata_lines(report: EnergyReport) -> list[str]:
    started = datetime.fromtimestamp(report.started_at)
    return [
        f"# start_time: {started.isoformat(timespec='microseconds')}",
        f"# interval_ms: {report.interval_ms}",
        f"# methods: {','.join(report.methods)}",
        f"# host: {report.host}",
    ]


def _write_csv(path: Path, metadata: list[str], columns: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        for line in metadata:
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def power_rows(export: SessionExport) -> list[list[str]]:
    rows = []
    for channel, series in export.series.items():
        for s in series.samples:
            rows.append(
                [str(s.poll_round), channel.method, channel.device, format_float(s.t), format_float(s.power)]
            )
    return rows


def energy_rows(export: SessionExport) -> list[list[str]]:
    rows = []
    for r in export.report.rows:
        rows.append(
            [
                r.channel.method,
                r.channel.device,
                "" if r.energy_wh is None else format_float(r.energy_wh),
                "" if r.mean_w is None else format_float(r.mean_w),
                "" if r.max_w is None else format_float(r.max_w),
                format_float(r.duration_s),
                str(r.samples),
                str(r.gaps),
            ]
        )
    return rows


def _export_csv(export: SessionExport, out_dir: Path, suffix: str, force: bool) -> list[Path]:
    targets = {
        out_dir / f"power{suffix}.csv": (POWER_COLUMNS, power_rows(export)),
        out_dir / f"energy{suffix}.csv": (ENERGY_COLUMNS, energy_rows(export)),
    }
    for path in targets:
        if path.exists() and not force:
            raise CollisionError(f"{path} exists; pass force to overwrite")
    metadata = _metadata_lines(export.report)
    written = []
    for path, (columns, rows) in targets.items():
        _write_csv(path, metadata, columns, rows)
        written.append(path)
    return written


# Exporter slots keyed by filetype; csv ships, structured-binary formats can
# be registered by adapters without a core change.
EXPORTERS = {"csv": _export_csv}


def register_exporter(filetype: str, exporter) -> None:
    EXPORTERS[filetype] = exporter


def export_tables(
    export: SessionExport,
    out_dir: Path | str,
    filetype: str = "csv",
    suffix: str = "",
    force: bool = False,
) -> list[Path]:
    """Write ``power<suffix>.<filetype>`` and ``energy<suffix>.<filetype>``."""
    exporter = EXPORTERS.get(filetype)
    if exporter is None:
        raise ExportError(
            f"unsupported filetype {filetype!r} (available: {', '.join(sorted(EXPORTERS))})"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return exporter(export, out_dir, suffix, force)


# --- import ------------------------------------------------------------------


def _read_csv(path: Path | str) -> tuple[dict[str, str], list[str], list[list[str]]]:
    metadata: dict[str, str] = {}
    data_lines: list[str] = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(":")
                if sep:
                    metadata[key.strip()] = value.strip()
                continue
            data_lines.append(line)
    reader = csv.reader(io.StringIO("".join(data_lines)))
    rows = [row for row in reader if row]
    if not rows:
        raise ExportError(f"{path}: no column header found")
    return metadata, rows[0], rows[1:]


def import_power_table(path: Path | str) -> tuple[dict[str, str], dict[ChannelId, PowerSeries]]:
    """Read a power table back into per-channel series, rounds preserved."""
    metadata, header, rows = _read_csv(path)
    if header != POWER_COLUMNS:
        raise ExportError(f"{path}: expected power-table columns {POWER_COLUMNS}, got {header}")
    series_map: dict[ChannelId, PowerSeries] = {}
    for row in rows:
        poll_round, method, device, t_s, power_w = row
        channel = ChannelId(method, device)
        series = series_map.setdefault(channel, PowerSeries(channel))
        series.append(PowerSample(channel, float(t_s), float(power_w), int(poll_round)))
    return metadata, series_map


def import_energy_table(path: Path | str) -> tuple[dict[str, str], list[list[str]]]:
    """Read an energy table; rows come back as verbatim strings."""
    metadata, header, rows = _read_csv(path)
    if header != ENERGY_COLUMNS:
        raise MergeError(f"{path}: expected energy-table columns {ENERGY_COLUMNS}, got {header}")
    return metadata, rows


# --- multi-node merge ----------------------------------------------------------


@dataclass(slots=True)
class Table:
    columns: list[str]
    rows: list[list[str]]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def merge_energy_tables(files: list[Path | str]) -> Table:
    """Combine per-node energy tables into one, keyed by a source column.

    The source is the file's suffix (``energy<suffix>.csv``), falling back
    to the recorded host for unsuffixed files. Values are carried verbatim,
    so merging is lossless.
    """
    merged: list[list[str]] = []
    seen: set[tuple[str, str, str]] = set()
    for file in files:
        path = Path(file)
        metadata, rows = import_energy_table(path)
        source = path.name.removeprefix("energy").removesuffix(".csv")
        if not source:
            source = metadata.get("host", path.stem)
        for row in rows:
            key = (source, row[0], row[1])
            if key in seen:
                raise MergeError(
                    f"{path}: duplicate (source, channel) = ({source}, {row[0]}:{row[1]})"
                )
            seen.add(key)
            merged.append([source] + row)
    return Table(columns=["source"] + ENERGY_COLUMNS, rows=merged)
