"""Declarative benchmark sweeps: parse a spec file, expand parameter
permutations, render job scripts, run them under the measurement wrapper,
and tabulate throughput/efficiency results.

Sweep file format (sections in any order; template conventionally last):

    name = llm-demo
    [parameters]
    batch = 16, 32, 64
    devices = 1, 2
    [tag big]
    batch = 2048
    [platform]
    methods = synthetic:kind=constant,base=120
    bind_mask = 0xff
    [extract]
    elapsed_ms = elapsed ms/iter: (\\S+)
    samples = samples processed: (\\d+)
    [metrics]
    convention = gpu-tokens
    batch_param = batch
    sequence_length = 1024
    elapsed_metric = elapsed_ms
    elapsed_unit = ms
    units_metric = samples
    devices_param = devices
    [template]
    mockwork --kind llm --global-batch-size ${batch} --iters 3

``${name}`` placeholders are substituted verbatim, one pass, no recursion.
Tags override (or add) parameter value lists. Execution is sequential and
local; each instance owns a work directory, a rendered ``run_XXXX.sh``,
its log, and its energy export.
"""

from __future__ import annotations

import argparse
import csv
import io
import re
import subprocess
import sys
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

from . import metrics
from .cli import EXIT_SPAWN_FAILURE, CliArgs, _flatten_methods, run_wrapped
from .core import PowerMeterError
from .exports import import_energy_table


class SweepError(PowerMeterError):
    pass


class SweepFileError(SweepError):
    pass


class UnknownTagError(SweepError):
    pass


class EmptySweepError(SweepError):
    pass


class MissingBindingError(SweepError):
    pass


class LogParseError(SweepError):
    pass


@dataclass(slots=True)
class MetricsSpec:
    convention: str = metrics.GPU_TOKENS
    batch_param: str = "batch"
    sequence_length: str | None = None  # parameter/platform name or integer literal
    elapsed_metric: str = "elapsed_ms"
    elapsed_unit: str = "ms"  # ms | s
    units_metric: str | None = None
    devices_param: str | None = None


@dataclass(slots=True)
class SweepSpec:
    name: str
    parameters: dict[str, list[str]]
    tags: dict[str, dict[str, list[str]]]
    template: str
    extract: dict[str, str]
    platform: dict[str, str]
    metrics: MetricsSpec


@dataclass(slots=True)
class RunInstance:
    id: int
    bindings: dict[str, str]
    workdir: Path | None = None
    status: str = "pending"  # pending | running | done | failed
    captured: dict[str, float] = field(default_factory=dict)
    energy_file: Path | None = None
    reason: str = ""


# --- spec parsing ------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([a-z]+)(?:[ .]([A-Za-z0-9_-]+))?\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\$\{([^}]+)\}")


def _split_kv(line: str, where: str) -> tuple[str, str]:
    key, sep, value = line.partition("=")
    if not sep:
        raise SweepFileError(f"{where}: expected 'key = value', got {line!r}")
    return key.strip(), value.strip()


def _split_values(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def parse_sweep_text(text: str, source: str = "<sweep>") -> SweepSpec:
    name = ""
    parameters: dict[str, list[str]] = {}
    tags: dict[str, dict[str, list[str]]] = {}
    platform: dict[str, str] = {}
    extract: dict[str, str] = {}
    metrics_fields: dict[str, str] = {}
    template_lines: list[str] = []

    section = ""
    tag_name = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        where = f"{source}:{lineno}"
        header = _SECTION_RE.match(line)
        if header:
            section, arg = header.group(1), header.group(2)
            if section == "tag":
                if not arg:
                    raise SweepFileError(f"{where}: tag section needs a name, e.g. [tag big]")
                tag_name = arg
                tags.setdefault(tag_name, {})
            elif section not in ("parameters", "platform", "extract", "metrics", "template"):
                raise SweepFileError(f"{where}: unknown section [{section}]")
            continue
        if section == "template":
            template_lines.append(line)
            continue
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if section == "":
            key, value = _split_kv(line, where)
            if key != "name":
                raise SweepFileError(f"{where}: only 'name' may appear before the first section")
            name = value
        elif section == "parameters":
            key, value = _split_kv(line, where)
            parameters[key] = _split_values(value)
        elif section == "tag":
            key, value = _split_kv(line, where)
            tags[tag_name][key] = _split_values(value)
        elif section == "platform":
            key, value = _split_kv(line, where)
            platform[key] = value
        elif section == "extract":
            key, value = _split_kv(line, where)
            extract[key] = value
        elif section == "metrics":
            key, value = _split_kv(line, where)
            metrics_fields[key] = value

    template = "\n".join(template_lines).strip("\n")
    spec = SweepSpec(
        name=name or Path(source).stem,
        parameters=parameters,
        tags=tags,
        template=template,
        extract=extract,
        platform=platform,
        metrics=_build_metrics_spec(metrics_fields, source),
    )
    _validate_spec(spec, source)
    return spec


def parse_sweep_file(path: Path | str) -> SweepSpec:
    path = Path(path)
    return parse_sweep_text(path.read_text(), source=str(path))


def _build_metrics_spec(fields: dict[str, str], source: str) -> MetricsSpec:
    spec = MetricsSpec()
    known = {
        "convention",
        "batch_param",
        "sequence_length",
        "elapsed_metric",
        "elapsed_unit",
        "units_metric",
        "devices_param",
    }
    for key, value in fields.items():
        if key not in known:
            raise SweepFileError(f"{source}: unknown metrics key {key!r}")
        setattr(spec, key, value)
    if spec.convention not in metrics.CONVENTIONS:
        raise SweepFileError(
            f"{source}: unknown convention {spec.convention!r} "
            f"(one of {', '.join(metrics.CONVENTIONS)})"
        )
    if spec.elapsed_unit not in ("ms", "s"):
        raise SweepFileError(f"{source}: elapsed_unit must be 'ms' or 's'")
    return spec


def _validate_spec(spec: SweepSpec, source: str) -> None:
    declared = set(spec.parameters) | set(spec.platform)
    for overrides in spec.tags.values():
        declared |= set(overrides)
    unknown = set(_PLACEHOLDER_RE.findall(spec.template)) - declared
    if unknown:
        raise SweepFileError(
            f"{source}: template references undeclared names: {', '.join(sorted(unknown))}"
        )
    for metric, pattern in spec.extract.items():
        try:
            compiled = re.compile(pattern)
        except re.error as exc:
            raise SweepFileError(f"{source}: extract rule {metric!r}: {exc}") from exc
        if compiled.groups != 1:
            raise SweepFileError(
                f"{source}: extract rule {metric!r} must have exactly one capture group"
            )


# --- expansion and rendering ---------------------------------------------------


def expand_permutations(spec: SweepSpec, tags: Sequence[str] = ()) -> list[RunInstance]:
    """Cartesian product of active parameter lists, in declaration order."""
    active = set(tags)
    unknown = active - set(spec.tags)
    if unknown:
        raise UnknownTagError(
            f"unknown tag(s) {', '.join(sorted(unknown))} (known: {', '.join(spec.tags) or 'none'})"
        )
    params = {name: list(values) for name, values in spec.parameters.items()}
    for tag in spec.tags:  # spec order keeps multi-tag application deterministic
        if tag in active:
            for param, values in spec.tags[tag].items():
                params[param] = list(values)
    for param, values in params.items():
        if not values:
            raise EmptySweepError(f"parameter {param!r} has no values after tag overrides")
    names = list(params)
    instances = []
    for i, combo in enumerate(product(*params.values())):
        instances.append(RunInstance(id=i, bindings=dict(zip(names, combo))))
    return instances


def render_template(template: str, bindings: dict[str, str]) -> str:
    """Substitute ``${name}`` placeholders; single pass, no recursion."""

    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            line = template.count("\n", 0, match.start()) + 1
            raise MissingBindingError(f"unbound placeholder ${{{name}}} at template line {line}")
        return str(bindings[name])

    return _PLACEHOLDER_RE.sub(repl, template)


# --- execution -----------------------------------------------------------------


@dataclass(slots=True)
class WrapperPrototype:
    """Measurement settings applied to every executed instance."""

    methods: list[str]
    interval_ms: int = 100
    df_filetype: str = "csv"


def execute_local(
    spec: SweepSpec,
    instances: list[RunInstance],
    wrapper: WrapperPrototype,
    workroot: Path | str,
    submit_only: bool = False,
) -> list[RunInstance]:
    """Render and run every instance in its own workdir.

    A failing instance is marked failed and does not abort the sweep. With
    ``submit_only`` the scripts are rendered but not executed, for handing
    off to an external scheduler.
    """
    workroot = Path(workroot)
    workroot.mkdir(parents=True, exist_ok=True)
    for inst in instances:
        bindings = {**spec.platform, **inst.bindings}
        script_text = render_template(spec.template, bindings)
        workdir = workroot / f"run_{inst.id:04d}"
        workdir.mkdir(parents=True, exist_ok=True)
        script = workdir / f"run_{inst.id:04d}.sh"
        script.write_text(script_text + "\n")
        script.chmod(0o755)
        inst.workdir = workdir
        if submit_only:
            continue
        inst.status = "running"
        log_path = workdir / "run.log"
        args = CliArgs(
            methods=list(wrapper.methods),
            command=["/bin/sh", str(script)],
            interval_ms=wrapper.interval_ms,
            df_out=workdir,
            df_filetype=wrapper.df_filetype,
            force=True,
        )
        with log_path.open("w") as log:
            returncode = run_wrapped(args, child_stdout=log, child_stderr=subprocess.STDOUT)
        inst.energy_file = workdir / "energy.csv"
        if returncode == 0:
            inst.status = "done"
            inst.captured = parse_run_log(log_path.read_text(), spec.extract)
        else:
            inst.status = "failed"
            inst.reason = (
                "spawn failure" if returncode == EXIT_SPAWN_FAILURE else f"exit code {returncode}"
            )
    return instances


def parse_run_log(text: str, rules: dict[str, str]) -> dict[str, float]:
    """Apply extract rules to a run log; the last match wins per metric."""
    captured: dict[str, float] = {}
    lines = text.splitlines()
    for metric, pattern in rules.items():
        rx = re.compile(pattern)
        value: float | None = None
        for lineno, line in enumerate(lines, 1):
            match = rx.search(line)
            if match is None:
                continue
            raw = match.group(1)
            try:
                value = float(raw)
            except ValueError as exc:
                raise LogParseError(
                    f"line {lineno}: capture {raw!r} for metric {metric!r} is not a number"
                ) from exc
        if value is not None:
            captured[metric] = value
    return captured


# --- tabulation ------------------------------------------------------------------


@dataclass(slots=True)
class ResultTable:
    columns: list[str]
    rows: list[list[str]]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        widths = [
            max(len(col), *(len(row[i]) for row in self.rows)) if self.rows else len(col)
            for i, col in enumerate(self.columns)
        ]
        lines = ["  ".join(c.ljust(w) for c, w in zip(self.columns, widths)).rstrip()]
        for row in self.rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return "\n".join(lines)


def _fmt_num(x: float) -> str:
    return format(x, ".10g")


def _resolve_number(key: str | None, bindings: dict[str, str]) -> float | None:
    if key is None:
        return None
    raw = bindings.get(key, key)
    try:
        return float(raw)
    except ValueError:
        return None


def _total_energy_wh(energy_file: Path | None) -> float | None:
    if energy_file is None or not energy_file.is_file():
        return None
    try:
        _, rows = import_energy_table(energy_file)
    except PowerMeterError:
        return None
    total = 0.0
    seen = False
    for row in rows:
        cell = row[2]  # energy_wh column
        if cell:
            total += float(cell)
            seen = True
    return total if seen else None


def _derived_columns(spec: SweepSpec) -> list[str]:
    out = ["throughput"]
    if spec.metrics.devices_param:
        out.append("throughput_per_device")
    out.extend(["energy_wh", "efficiency"])
    return out


def _derive(inst: RunInstance, spec: SweepSpec) -> dict[str, float]:
    ms = spec.metrics
    out: dict[str, float] = {}
    bindings = {**spec.platform, **inst.bindings}
    elapsed = inst.captured.get(ms.elapsed_metric)
    batch = _resolve_number(ms.batch_param, bindings)
    if elapsed is None or batch is None or batch <= 0 or elapsed <= 0:
        return out
    elapsed_s = elapsed / 1000.0 if ms.elapsed_unit == "ms" else elapsed
    seq = _resolve_number(ms.sequence_length, bindings)
    try:
        inp = metrics.RunMetricsInput(
            convention=ms.convention,
            global_batch_size=batch,
            elapsed_time_per_iteration=elapsed_s,
            sequence_length=int(seq) if seq else None,
        )
        if ms.convention == metrics.IMAGES:
            out["throughput"] = metrics.images_per_second(inp)
        else:
            out["throughput"] = metrics.tokens_per_second(inp)
    except metrics.DomainError:
        return out
    devices = _resolve_number(ms.devices_param, bindings)
    if devices and devices >= 1:
        out["throughput_per_device"] = metrics.per_device(out["throughput"], int(devices))
    energy = _total_energy_wh(inst.energy_file)
    if energy is not None:
        out["energy_wh"] = energy
        units = inst.captured.get(ms.units_metric) if ms.units_metric else None
        if units is not None:
            if ms.convention == metrics.GPU_TOKENS and seq:
                units *= seq
            if energy > 0:
                out["efficiency"] = metrics.units_per_energy(units, energy)
    return out


def tabulate(instances: list[RunInstance], spec: SweepSpec) -> ResultTable:
    """One row per instance: parameters, status, captured and derived metrics.

    Failed instances keep their parameter and status cells; metric cells
    stay empty. Derived values use row-local data only.
    """
    param_names = list(instances[0].bindings) if instances else list(spec.parameters)
    metric_names = list(spec.extract)
    derived_names = _derived_columns(spec)
    columns = param_names + ["status"] + metric_names + derived_names
    rows = []
    for inst in instances:
        row = [inst.bindings.get(p, "") for p in param_names]
        row.append(inst.status)
        if inst.status == "done":
            for m in metric_names:
                value = inst.captured.get(m)
                row.append("" if value is None else _fmt_num(value))
            derived = _derive(inst, spec)
            for d in derived_names:
                value = derived.get(d)
                row.append("" if value is None else _fmt_num(value))
        else:
            row.extend([""] * (len(metric_names) + len(derived_names)))
        rows.append(row)
    return ResultTable(columns=columns, rows=rows)


# --- command line ------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="powersweep", description="Run declarative benchmark sweeps.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="expand, render, execute, and tabulate a sweep")
    run_p.add_argument("spec", type=Path)
    run_p.add_argument("--tag", action="append", default=[], metavar="TAG")
    run_p.add_argument("--workdir", type=Path, default=None, metavar="DIR")
    run_p.add_argument("--methods", action="append", default=None, metavar="NAME[:ARG]")
    run_p.add_argument("--interval", type=int, default=100, metavar="MS")
    run_p.add_argument("--submit-only", action="store_true")
    run_p.add_argument("--csv", type=Path, default=None, metavar="OUT.csv")

    expand_p = sub.add_parser("expand", help="print the parameter permutations")
    expand_p.add_argument("spec", type=Path)
    expand_p.add_argument("--tag", action="append", default=[], metavar="TAG")

    ns = parser.parse_args(argv)
    try:
        spec = parse_sweep_file(ns.spec)
        instances = expand_permutations(spec, ns.tag)
    except SweepError as exc:
        print(f"powersweep: {exc}", file=sys.stderr)
        return 2

    if ns.cmd == "expand":
        for inst in instances:
            pairs = " ".join(f"{k}={v}" for k, v in inst.bindings.items())
            print(f"{inst.id:4d}  {pairs}")
        return 0

    methods = ns.methods
    if methods is None:
        methods = [spec.platform.get("methods", "synthetic")]
    method_specs = _flatten_methods(methods)
    workroot = ns.workdir if ns.workdir is not None else Path("sweep_out") / spec.name
    wrapper = WrapperPrototype(methods=method_specs, interval_ms=ns.interval)
    try:
        execute_local(spec, instances, wrapper, workroot, submit_only=ns.submit_only)
    except SweepError as exc:
        print(f"powersweep: {exc}", file=sys.stderr)
        return 2
    if ns.submit_only:
        for inst in instances:
            print(inst.workdir / f"run_{inst.id:04d}.sh")
        return 0
    table = tabulate(instances, spec)
    print(table.to_text())
    if ns.csv is not None:
        ns.csv.write_text(table.to_csv_text())
    return 0


def entrypoint() -> None:
    raise SystemExit(main())
