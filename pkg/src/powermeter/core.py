"""Power-series data model and the power-to-energy integration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class PowerMeterError(Exception):
    """Base class for every error raised by this package."""


class EmptySeriesError(PowerMeterError):
    """A series has fewer than two samples, so there is nothing to integrate."""


class InvalidSeriesError(PowerMeterError):
    """Sample timestamps are not strictly increasing within one channel."""


@dataclass(frozen=True, slots=True)
class ChannelId:
    """One independent power sensor stream: backend method x device or rail."""

    method: str
    device: str

    def key(self) -> str:
        return f"{self.method}:{self.device}"


@dataclass(frozen=True, slots=True)
class PowerSample:
    """A single timestamped power reading on one channel.

    Timestamps come from a monotonic clock and are seconds relative to the
    session start; the wall-clock start lives in the session metadata.
    """

    channel: ChannelId
    t: float
    power: float
    poll_round: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise ValueError(f"timestamp must be finite, got {self.t!r}")
        if not math.isfinite(self.power) or self.power < 0.0:
            raise ValueError(f"power must be finite and non-negative, got {self.power!r}")


@dataclass(slots=True)
class PowerSeries:
    """Ordered samples for one channel; strictly increasing timestamps."""

    channel: ChannelId
    samples: list[PowerSample] = field(default_factory=list)

    def append(self, sample: PowerSample) -> None:
        if sample.channel != self.channel:
            raise InvalidSeriesError(
                f"sample for {sample.channel.key()} appended to series {self.channel.key()}"
            )
        if self.samples and sample.t <= self.samples[-1].t:
            raise InvalidSeriesError(
                f"{self.channel.key()}: timestamp {sample.t!r} does not advance past "
                f"{self.samples[-1].t!r}"
            )
        self.samples.append(sample)

    def add(self, t: float, power: float, poll_round: int = 0) -> None:
        self.append(PowerSample(self.channel, t, power, poll_round))

    def duration(self) -> float:
        if len(self.samples) < 2:
            return 0.0
        return self.samples[-1].t - self.samples[0].t

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(slots=True)
class EnergyStats:
    """Per-channel integration result plus descriptive statistics.

    ``energy_wh`` is None when the channel produced too few samples to
    integrate; a silent zero would mask sampler failures.
    """

    channel: ChannelId
    energy_wh: float | None
    mean_w: float | None
    max_w: float | None
    duration_s: float
    samples: int
    gaps: int = 0


def integrate_energy(series: PowerSeries) -> float:
    """Trapezoidal integral of power over time, in watt-hours.

    Exact for piecewise-linear power. Deterministic: terms are accumulated
    left to right in sample order.
    """
    samples = series.samples
    if len(samples) < 2:
        raise EmptySeriesError(
            f"{series.channel.key()}: need at least 2 samples, have {len(samples)}"
        )
    energy_j = 0.0
    prev = samples[0]
    for cur in samples[1:]:
        dt = cur.t - prev.t
        if dt <= 0.0:
            raise InvalidSeriesError(
                f"{series.channel.key()}: timestamps not strictly increasing at t={cur.t!r}"
            )
        energy_j += 0.5 * (prev.power + cur.power) * dt
        prev = cur
    return energy_j / 3600.0


def summarize(series: PowerSeries, gaps: int = 0) -> EnergyStats:
    """Energy plus max/mean power, duration, and sample count for one channel."""
    energy_wh = integrate_energy(series)
    powers = [s.power for s in series.samples]
    return EnergyStats(
        channel=series.channel,
        energy_wh=energy_wh,
        mean_w=sum(powers) / len(powers),
        max_w=max(powers),
        duration_s=series.duration(),
        samples=len(powers),
        gaps=gaps,
    )
