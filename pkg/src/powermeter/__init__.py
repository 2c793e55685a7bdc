"""Process-wrapping power/energy measurement with pluggable sensor backends,
plus a declarative benchmark-sweep runner and throughput/efficiency metrics."""

from .backends import (
    HwmonSensor,
    MeasurementMethod,
    Reading,
    SyntheticWaveform,
    hwmon_enumerate,
    known_methods,
    register_method,
    registry_resolve,
    synthetic_poll,
)
from .core import (
    ChannelId,
    EmptySeriesError,
    EnergyStats,
    InvalidSeriesError,
    PowerMeterError,
    PowerSample,
    PowerSeries,
    integrate_energy,
    summarize,
)
from .sampler import EnergyReport, Session, SessionConfig

__version__ = "0.1.0"

__all__ = [
    "ChannelId",
    "EmptySeriesError",
    "EnergyReport",
    "EnergyStats",
    "HwmonSensor",
    "InvalidSeriesError",
    "MeasurementMethod",
    "PowerMeterError",
    "PowerSample",
    "PowerSeries",
    "Reading",
    "Session",
    "SessionConfig",
    "SyntheticWaveform",
    "hwmon_enumerate",
    "integrate_energy",
    "known_methods",
    "register_method",
    "registry_resolve",
    "summarize",
    "synthetic_poll",
    "__version__",
]
