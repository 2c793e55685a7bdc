"""Throughput and energy-efficiency figures of merit.

Two token conventions exist: the GPU one counts the global batch in
samples (tokens/s = batch * sequence_length / elapsed), the IPU one
counts it in tokens directly (tokens/s = batch / elapsed). They agree at
sequence_length = 1. Efficiency is units processed per watt-hour; pass
per-device energy for per-device efficiency or a total for the aggregate
variant.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import PowerMeterError


class DomainError(PowerMeterError):
    pass


GPU_TOKENS = "gpu-tokens"
IPU_TOKENS = "ipu-tokens"
IMAGES = "images"
CONVENTIONS = (GPU_TOKENS, IPU_TOKENS, IMAGES)


@dataclass(slots=True)
class RunMetricsInput:
    """Inputs of one benchmark run, validated on construction.

    For the GPU token convention the global batch size must be divisible
    by micro_batch_size * dp_degree when both are given; batch shards are
    whole micro-batches per data-parallel replica.
    """

    convention: str
    global_batch_size: float
    elapsed_time_per_iteration: float  # seconds
    sequence_length: int | None = None
    micro_batch_size: int | None = None
    dp_degree: int | None = None
    device_count: int = 1
    energy_per_device_wh: float | None = None
    dataset_size: int | None = None

    def __post_init__(self) -> None:
        if self.convention not in CONVENTIONS:
            raise DomainError(
                f"unknown convention {self.convention!r} (one of {', '.join(CONVENTIONS)})"
            )
        if self.global_batch_size <= 0:
            raise DomainError("global batch size must be positive")
        if self.elapsed_time_per_iteration <= 0:
            raise DomainError("elapsed time per iteration must be positive")
        if self.device_count < 1:
            raise DomainError("device count must be >= 1")
        if self.convention == GPU_TOKENS:
            if self.sequence_length is None or self.sequence_length <= 0:
                raise DomainError("gpu-tokens needs a positive sequence length")
            if self.micro_batch_size is not None and self.dp_degree is not None:
                shard = self.micro_batch_size * self.dp_degree
                if shard <= 0 or self.global_batch_size % shard != 0:
                    raise DomainError(
                        f"global batch size {self.global_batch_size} is not divisible by "
                        f"micro-batch size x data-parallel degree "
                        f"({self.micro_batch_size} x {self.dp_degree})"
                    )


def tokens_per_second(inp: RunMetricsInput) -> float:
    if inp.convention == GPU_TOKENS:
        assert inp.sequence_length is not None
        return inp.global_batch_size * inp.sequence_length / inp.elapsed_time_per_iteration
    if inp.convention == IPU_TOKENS:
        return inp.global_batch_size / inp.elapsed_time_per_iteration
    raise DomainError(f"tokens_per_second needs a token convention, got {inp.convention!r}")


def images_per_second(inp: RunMetricsInput) -> float:
    if inp.convention != IMAGES:
        raise DomainError(f"images_per_second needs the images convention, got {inp.convention!r}")
    return inp.global_batch_size / inp.elapsed_time_per_iteration


def units_per_energy(units: float, energy_wh: float) -> float:
    """Processed units per watt-hour."""
    if energy_wh <= 0:
        raise DomainError("energy must be positive")
    if units < 0:
        raise DomainError("processed unit count must be >= 0")
    return units / energy_wh


def tokens_per_energy(tokens_processed: float, energy_wh: float) -> float:
    return units_per_energy(tokens_processed, energy_wh)


def images_per_energy(dataset_size: float, energy_per_epoch_wh: float) -> float:
    return units_per_energy(dataset_size, energy_per_epoch_wh)


def per_device(value: float, device_count: int) -> float:
    if device_count < 1:
        raise DomainError("device count must be >= 1")
    return value / device_count


@dataclass(slots=True)
class EfficiencyRow:
    """One benchmark run's figures of merit."""

    throughput: float  # units/s
    per_device_throughput: float  # units/s/device
    energy_wh: float
    efficiency: float  # units/Wh


def efficiency_row(
    throughput: float, device_count: int, units_processed: float, energy_wh: float
) -> EfficiencyRow:
    return EfficiencyRow(
        throughput=throughput,
        per_device_throughput=per_device(throughput, device_count),
        energy_wh=energy_wh,
        efficiency=units_per_energy(units_processed, energy_wh),
    )
