"""Pluggable power-query backends ("methods") and their registry.

A method enumerates its channels once and answers instantaneous power
queries. Shipped methods: a deterministic synthetic generator, a sysfs
hwmon reader (``gh``), and a trace-replay source. Vendor GPU/IPU slots
(``pynvml``, ``rocm``, ``gcipuinfo``) are registered names that resolve
only when an adapter is installed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .core import ChannelId, PowerMeterError


class BackendError(PowerMeterError):
    """Base class for method-resolution and backend configuration errors."""


class UnknownMethodError(BackendError):
    pass


class DuplicateMethodError(BackendError):
    pass


class MethodArgumentError(BackendError):
    pass


@dataclass(frozen=True, slots=True)
class Reading:
    """One polled value. ``power`` None marks a failed read (a gap).

    Pre-recorded sources carry their own timestamp and poll round; live
    sources leave both None and the sampler stamps them.
    """

    channel: ChannelId
    power: float | None
    t: float | None = None
    poll_round: int | None = None


class MeasurementMethod:
    """A device-specific power backend.

    Channels must stay stable for the lifetime of a session, and a poll
    returns one reading per channel. Instances are confined to a single
    sampling session at a time. ``finite`` sources (trace replay) may run
    out of data; the sampler drains them at stop.
    """

    name = "abstract"
    finite = False

    def __init__(self) -> None:
        self.spec = self.name

    def channels(self) -> list[ChannelId]:
        raise NotImplementedError

    def poll(self, elapsed_s: float) -> list[Reading]:
        raise NotImplementedError

    def exhausted(self) -> bool:
        return False


# --- synthetic -------------------------------------------------------------

WAVEFORM_KINDS = ("constant", "ramp", "sinusoid")


@dataclass(frozen=True, slots=True)
class SyntheticWaveform:
    """Deterministic P(t) generator used as a test oracle backend."""

    kind: str = "constant"
    base: float = 100.0
    amplitude: float = 0.0
    period: float = 60.0
    channels: int = 1
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in WAVEFORM_KINDS:
            raise MethodArgumentError(
                f"unknown waveform kind {self.kind!r} (one of {', '.join(WAVEFORM_KINDS)})"
            )
        if self.channels < 1:
            raise MethodArgumentError("channel count must be >= 1")
        if self.period <= 0.0:
            raise MethodArgumentError("period must be positive")
        if self.jitter < 0.0:
            raise MethodArgumentError("jitter must be >= 0")
        # emitted power must stay non-negative for all t
        if self.kind == "constant":
            lo = self.base
        elif self.kind == "ramp":
            lo = min(self.base, self.base + self.amplitude)
        else:
            lo = self.base - abs(self.amplitude)
        if self.base < 0.0 or lo - self.jitter < 0.0:
            raise MethodArgumentError(
                f"waveform can emit negative power (min {lo - self.jitter} W)"
            )

    def power_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.base
        if self.kind == "ramp":
            return self.base + self.amplitude * min(t / self.period, 1.0)
        return self.base + self.amplitude * math.sin(2.0 * math.pi * t / self.period)


def synthetic_poll(waveform: SyntheticWaveform, t: float) -> float:
    """Instantaneous power of a waveform at elapsed time ``t`` (jitter-free)."""
    if t < 0.0:
        raise MethodArgumentError("elapsed time must be >= 0")
    return waveform.power_at(t)


class SyntheticMethod(MeasurementMethod):
    name = "synthetic"

    def __init__(self, waveform: SyntheticWaveform | None = None) -> None:
        super().__init__()
        self.waveform = waveform or SyntheticWaveform()
        self._channels = [
            ChannelId(self.name, str(i)) for i in range(self.waveform.channels)
        ]
        self._rngs = [
            random.Random(self.waveform.seed * 1000003 + i)
            for i in range(self.waveform.channels)
        ]

    def channels(self) -> list[ChannelId]:
        return list(self._channels)

    def poll(self, elapsed_s: float) -> list[Reading]:
        out = []
        for ch, rng in zip(self._channels, self._rngs):
            power = self.waveform.power_at(elapsed_s)
            if self.waveform.jitter > 0.0:
                power += rng.uniform(-self.waveform.jitter, self.waveform.jitter)
            out.append(Reading(ch, power))
        return out


# --- sysfs hwmon -----------------------------------------------------------

HWMON_DEFAULT_ROOT = Path("/sys/class/hwmon")
# Linux hwmon sysfs ABI: power*_average / power*_input are decimal microwatts.
HWMON_VALUE_FILES = ("power1_average", "power1_input")
HWMON_LABEL_FILES = ("power1_oem_info", "name")
MICROWATTS_PER_WATT = 1_000_000


@dataclass(frozen=True, slots=True)
class HwmonSensor:
    root: Path
    label: str
    value_file: Path
    scale: int = MICROWATTS_PER_WATT


def hwmon_enumerate(root: Path | str) -> tuple[list[HwmonSensor], list[str]]:
    """Scan ``root`` for hwmon nodes exposing a power file.

    Returns sensors ordered lexicographically by node name, plus warning
    records for nodes that had to be skipped. Pure function of the tree
    content. An unreadable root raises OSError.
    """
    root = Path(root)
    nodes = sorted(
        (p for p in root.iterdir() if p.name.startswith("hwmon") and p.is_dir()),
        key=lambda p: p.name,
    )
    sensors: list[HwmonSensor] = []
    warnings: list[str] = []
    seen_labels: set[str] = set()
    for node in nodes:
        value_file = None
        for candidate in HWMON_VALUE_FILES:
            if (node / candidate).is_file():
                value_file = node / candidate
                break
        if value_file is None:
            warnings.append(
                f"{node}: no {' or '.join(HWMON_VALUE_FILES)} file, sensor skipped"
            )
            continue
        label = node.name
        for candidate in HWMON_LABEL_FILES:
            path = node / candidate
            if path.is_file():
                text = path.read_text().strip()
                if text:
                    label = text
                    break
        if label in seen_labels:
            label = f"{label} ({node.name})"
        seen_labels.add(label)
        sensors.append(HwmonSensor(root=node, label=label, value_file=value_file))
    return sensors, warnings


def hwmon_read_watts(sensor: HwmonSensor) -> float | None:
    """Read one sensor; None when the value is missing, negative, or garbled."""
    try:
        raw = sensor.value_file.read_text()
    except OSError:
        return None
    try:
        microwatts = int(raw.strip())
    except ValueError:
        return None
    if microwatts < 0:
        return None
    return microwatts / sensor.scale


class HwmonMethod(MeasurementMethod):
    """The ``gh`` method: system power rails from /sys/class/hwmon.

    All power channels are enumerated; filtering is left to the user.
    """

    name = "gh"

    def __init__(self, root: Path | str = HWMON_DEFAULT_ROOT) -> None:
        super().__init__()
        self.root = Path(root)
        self.sensors, self.warnings = hwmon_enumerate(self.root)
        self._channels = [ChannelId(self.name, s.label) for s in self.sensors]

    def channels(self) -> list[ChannelId]:
        return list(self._channels)

    def poll(self, elapsed_s: float) -> list[Reading]:
        return [
            Reading(ch, hwmon_read_watts(sensor))
            for ch, sensor in zip(self._channels, self.sensors)
        ]


# --- trace replay ----------------------------------------------------------


class TraceReplayMethod(MeasurementMethod):
    """Replays an exported power table exactly: same channels, timestamps,
    powers, and poll rounds, independent of session timing."""

    name = "replay"
    finite = True

    def __init__(self, source: Path | str) -> None:
        super().__init__()
        from .exports import import_power_table  # deferred: exports imports the sampler

        self.source = Path(source)
        _, series_map = import_power_table(self.source)
        self._channels = list(series_map)
        self._samples = {ch: list(series.samples) for ch, series in series_map.items()}
        self._cursor = {ch: 0 for ch in self._channels}

    def channels(self) -> list[ChannelId]:
        return list(self._channels)

    def poll(self, elapsed_s: float) -> list[Reading]:
        out = []
        for ch in self._channels:
            i = self._cursor[ch]
            recorded = self._samples[ch]
            if i < len(recorded):
                s = recorded[i]
                self._cursor[ch] = i + 1
                out.append(Reading(ch, s.power, t=s.t, poll_round=s.poll_round))
        return out

    def exhausted(self) -> bool:
        return all(self._cursor[ch] >= len(self._samples[ch]) for ch in self._channels)


# --- registry ---------------------------------------------------------------

MethodFactory = Callable[[str | None], MeasurementMethod]  # arg from "name:arg"

_REGISTRY: dict[str, MethodFactory] = {}


def register_method(name: str, factory: MethodFactory) -> None:
    _REGISTRY[name] = factory


def known_methods() -> list[str]:
    return sorted(_REGISTRY)


def _parse_kv(arg: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in arg.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise MethodArgumentError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _synthetic_factory(arg: str | None) -> MeasurementMethod:
    if not arg:
        return SyntheticMethod()
    fields = _parse_kv(arg)
    kwargs: dict[str, object] = {}
    converters: dict[str, Callable[[str], object]] = {
        "kind": str,
        "base": float,
        "amplitude": float,
        "period": float,
        "channels": int,
        "jitter": float,
        "seed": int,
    }
    for key, value in fields.items():
        if key not in converters:
            raise MethodArgumentError(
                f"unknown synthetic option {key!r} (one of {', '.join(converters)})"
            )
        try:
            kwargs[key] = converters[key](value)
        except ValueError as exc:
            raise MethodArgumentError(f"bad value for {key!r}: {value!r}") from exc
    return SyntheticMethod(SyntheticWaveform(**kwargs))  # type: ignore[arg-type]


def _gh_factory(arg: str | None) -> MeasurementMethod:
    root: Path | str = HWMON_DEFAULT_ROOT
    if arg:
        root = arg.removeprefix("root=")
    return HwmonMethod(root=root)


def _replay_factory(arg: str | None) -> MeasurementMethod:
    if not arg:
        raise MethodArgumentError("replay needs a source, e.g. replay:source=power.csv")
    return TraceReplayMethod(arg.removeprefix("source="))


def _vendor_stub(name: str) -> MethodFactory:
    def factory(arg: str | None) -> MeasurementMethod:
        raise UnknownMethodError(f"method '{name}' is not built in this configuration")

    return factory


register_method("synthetic", _synthetic_factory)
register_method("gh", _gh_factory)
register_method("replay", _replay_factory)
for _vendor in ("pynvml", "rocm", "gcipuinfo"):
    register_method(_vendor, _vendor_stub(_vendor))


def registry_resolve(method_specs: list[str]) -> list[MeasurementMethod]:
    """Instantiate methods from command-line specs, in the order given.

    A spec is ``name`` or ``name:arg`` where the argument grammar is
    method-specific (``gh:root=/path``, ``replay:source=power.csv``,
    ``synthetic:kind=ramp,base=0,amplitude=100``).
    """
    methods: list[MeasurementMethod] = []
    seen: set[str] = set()
    for method_spec in method_specs:
        name, sep, arg = method_spec.partition(":")
        name = name.strip()
        if name in seen:
            raise DuplicateMethodError(f"method '{name}' given more than once")
        if name not in _REGISTRY:
            raise UnknownMethodError(
                f"unknown method '{name}' (known: {', '.join(known_methods())})"
            )
        seen.add(name)
        method = _REGISTRY[name](arg if sep else None)
        method.spec = method_spec
        methods.append(method)
    return methods
