"""Measurement sessions: a concurrent polling loop around a measured scope.

One sampling thread per session. Ticks are scheduled against absolute
deadlines (next = start + k * interval) so the rate does not drift with
poll latency. A forced final tick at stop bounds the tail truncation
error by one interval. Poll failures become per-channel gaps, never an
abort: measurement must not kill the measured job.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass

from .backends import MeasurementMethod, Reading
from .core import ChannelId, EnergyStats, PowerMeterError, PowerSample, PowerSeries, summarize


class SessionError(PowerMeterError):
    pass


class NoChannelsError(SessionError):
    pass


class InvalidStateError(SessionError):
    pass


class StartupFailureError(SessionError):
    def __init__(self, method_name: str, cause: BaseException) -> None:
        super().__init__(f"method '{method_name}' failed at first poll: {cause}")
        self.method_name = method_name


@dataclass(slots=True)
class SessionConfig:
    methods: list[MeasurementMethod]
    interval_ms: int = 100

    def __post_init__(self) -> None:
        if int(self.interval_ms) != self.interval_ms or self.interval_ms < 1:
            raise ValueError(f"interval must be a positive integer of ms, got {self.interval_ms!r}")
        self.interval_ms = int(self.interval_ms)


@dataclass(slots=True)
class EnergyReport:
    """Per-channel energy rows plus session metadata."""

    rows: list[EnergyStats]
    started_at: float  # wall clock, unix seconds
    interval_ms: int
    methods: list[str]  # method spec strings as given on resolve
    host: str


class Session:
    """created -> running -> stopped; the series are final once stopped.

    ``start`` may be called on one thread and ``stop`` on another; all
    sampling-thread writes are visible to the caller when ``stop`` returns
    (the join is the synchronization point).
    """

    def __init__(self, config: SessionConfig) -> None:
        self.config = config
        self.state = "created"
        self.started_at = 0.0
        self._series: dict[ChannelId, PowerSeries] = {}
        self._gaps: dict[ChannelId, int] = {}
        self._lock = threading.Lock()
        self._stop_event = threading.Event()
        self._thread: threading.Thread | None = None
        self._t0 = 0.0
        self._rounds = 0

    @property
    def series(self) -> dict[ChannelId, PowerSeries]:
        return self._series

    @property
    def gap_counts(self) -> dict[ChannelId, int]:
        return dict(self._gaps)

    def _elapsed(self) -> float:
        return time.monotonic() - self._t0

    def start(self) -> "Session":
        with self._lock:
            if self.state != "created":
                raise InvalidStateError(f"cannot start a session in state '{self.state}'")
            channels: list[ChannelId] = []
            for method in self.config.methods:
                channels.extend(method.channels())
            if not channels:
                raise NoChannelsError("no channels to sample; check method configuration")
            if len(set(channels)) != len(channels):
                raise SessionError("duplicate channel ids across methods")
            for ch in channels:
                self._series[ch] = PowerSeries(ch)
                self._gaps[ch] = 0
            self.started_at = time.time()
            self._t0 = time.monotonic()
            # First tick runs on the caller so a dead backend fails the start,
            # not the measured workload.
            for method in self.config.methods:
                try:
                    readings = method.poll(self._elapsed())
                except Exception as exc:
                    self.state = "stopped"
                    raise StartupFailureError(method.name, exc) from exc
                self._record(readings, 0)
            self._rounds = 1
            self.state = "running"
            self._thread = threading.Thread(
                target=self._loop, name="powermeter-sampler", daemon=True
            )
            self._thread.start()
        return self

    def _record(self, readings: list[Reading], poll_round: int) -> None:
        for reading in readings:
            series = self._series.get(reading.channel)
            if series is None:
                continue
            if reading.power is None:
                self._gaps[reading.channel] += 1
                continue
            t = reading.t if reading.t is not None else self._elapsed()
            if series.samples and t <= series.samples[-1].t:
                # zero time has passed on this channel; nothing to integrate
                continue
            rnd = reading.poll_round if reading.poll_round is not None else poll_round
            series.append(PowerSample(reading.channel, t, reading.power, rnd))

    def _tick(self, poll_round: int) -> None:
        for method in self.config.methods:
            try:
                readings = method.poll(self._elapsed())
            except Exception:
                for ch in method.channels():
                    if ch in self._gaps:
                        self._gaps[ch] += 1
                continue
            self._record(readings, poll_round)

    def _loop(self) -> None:
        dt = self.config.interval_ms / 1000.0
        k = self._rounds
        while True:
            deadline = self._t0 + k * dt
            timeout = deadline - time.monotonic()
            stopping = self._stop_event.wait(timeout) if timeout > 0 else self._stop_event.is_set()
            self._tick(k)
            k += 1
            if stopping:
                break
        self._rounds = k

    def stop(self) -> EnergyReport:
        with self._lock:
            if self.state != "running":
                raise InvalidStateError(f"cannot stop a session in state '{self.state}'")
            self._stop_event.set()
            assert self._thread is not None
            self._thread.join()
            # Finite sources (trace replay) are drained so the recorded data
            # is always captured wholly, independent of session duration.
            for method in self.config.methods:
                if method.finite:
                    while not method.exhausted():
                        readings = method.poll(self._elapsed())
                        if not readings:
                            break
                        self._record(readings, self._rounds)
                        self._rounds += 1
            self.state = "stopped"
        rows: list[EnergyStats] = []
        for ch, series in self._series.items():
            gaps = self._gaps[ch]
            if len(series) >= 2:
                rows.append(summarize(series, gaps=gaps))
            else:
                only = series.samples[0].power if series.samples else None
                rows.append(
                    EnergyStats(
                        channel=ch,
                        energy_wh=None,
                        mean_w=only,
                        max_w=only,
                        duration_s=0.0,
                        samples=len(series),
                        gaps=gaps,
                    )
                )
        return EnergyReport(
            rows=rows,
            started_at=self.started_at,
            interval_ms=self.config.interval_ms,
            methods=[m.spec for m in self.config.methods],
            host=socket.gethostname(),
        )
