"""Tests for the power-series model and the energy integration."""

from __future__ import annotations

import math
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from powermeter.core import (
    ChannelId,
    EmptySeriesError,
    InvalidSeriesError,
    PowerSample,
    PowerSeries,
    integrate_energy,
    summarize,
)

from conftest import make_series, sampled


def sinusoid(base: float, amplitude: float, period: float):
    omega = 2.0 * math.pi / period
    return lambda t: base + amplitude * math.sin(omega * t)


def sinusoid_integral_wh(base: float, amplitude: float, period: float, t_end: float) -> float:
    """Closed-form antiderivative of base + amplitude*sin(2*pi*t/period)."""
    omega = 2.0 * math.pi / period
    joules = base * t_end + (amplitude / omega) * (1.0 - math.cos(omega * t_end))
    return joules / 3600.0


class TestIntegrateEnergy:
    def test_constant_power(self):
        series = make_series((float(t), 100.0) for t in range(3601))
        assert math.isclose(integrate_energy(series), 100.0, rel_tol=1e-12)

    def test_linear_ramp_is_exact(self):
        series = make_series((float(t), 100.0 * t / 7200.0) for t in range(0, 7201, 60))
        assert math.isclose(integrate_energy(series), 100.0, rel_tol=1e-12)

    def test_sinusoid_against_analytic_oracle(self):
        series = make_series(sampled(sinusoid(200.0, 100.0, 60.0), 0.0, 600.0, 0.1))
        expected = sinusoid_integral_wh(200.0, 100.0, 60.0, 600.0)
        assert math.isclose(expected, 100.0 / 3.0, rel_tol=1e-12)
        assert math.isclose(integrate_energy(series), expected, rel_tol=1e-3)

    def test_single_sample_is_an_error(self):
        with pytest.raises(EmptySeriesError):
            integrate_energy(make_series([(0.0, 50.0)]))

    def test_empty_series_is_an_error(self):
        with pytest.raises(EmptySeriesError):
            integrate_energy(PowerSeries(ChannelId("synthetic", "0")))

    def test_non_monotonic_timestamps_are_an_error(self):
        ch = ChannelId("synthetic", "0")
        series = PowerSeries(ch)
        # bypass append to build a corrupt series
        series.samples = [PowerSample(ch, 0.0, 1.0), PowerSample(ch, 2.0, 1.0), PowerSample(ch, 1.0, 1.0)]
        with pytest.raises(InvalidSeriesError):
            integrate_energy(series)

    def test_deterministic_for_identical_input(self):
        pairs = sampled(sinusoid(140.0, 35.0, 7.0), 0.0, 20.0, 0.013)
        assert integrate_energy(make_series(pairs)) == integrate_energy(make_series(pairs))


class TestSeriesInvariants:
    def test_append_rejects_stale_timestamp(self):
        series = make_series([(0.0, 1.0), (1.0, 1.0)])
        with pytest.raises(InvalidSeriesError):
            series.add(1.0, 2.0)

    def test_append_rejects_wrong_channel(self):
        series = PowerSeries(ChannelId("synthetic", "0"))
        with pytest.raises(InvalidSeriesError):
            series.append(PowerSample(ChannelId("synthetic", "1"), 0.0, 1.0))

    def test_negative_power_rejected_at_sample_construction(self):
        with pytest.raises(ValueError):
            PowerSample(ChannelId("synthetic", "0"), 0.0, -1.0)

    def test_non_finite_values_rejected(self):
        ch = ChannelId("synthetic", "0")
        with pytest.raises(ValueError):
            PowerSample(ch, float("nan"), 1.0)
        with pytest.raises(ValueError):
            PowerSample(ch, 0.0, float("inf"))


class TestSummarize:
    def test_constant_two_samples(self):
        stats = summarize(make_series([(0.0, 300.0), (1.0, 300.0)]))
        assert math.isclose(stats.energy_wh, 300.0 / 3600.0, rel_tol=1e-12)
        assert stats.max_w == 300.0
        assert stats.mean_w == 300.0
        assert stats.duration_s == 1.0
        assert stats.samples == 2

    def test_ramp_max_and_mean(self):
        stats = summarize(make_series((float(t), float(t)) for t in range(101)))
        assert stats.max_w == 100.0
        assert stats.mean_w == 50.0

    def test_sinusoid_max_matches_sample_scan(self):
        pairs = sampled(sinusoid(200.0, 100.0, 60.0), 0.0, 600.0, 0.1)
        stats = summarize(make_series(pairs))
        assert stats.max_w == max(p for _, p in pairs)
        assert math.isclose(stats.max_w, 300.0, rel_tol=1e-3)

    def test_propagates_integration_errors(self):
        with pytest.raises(EmptySeriesError):
            summarize(make_series([(0.0, 10.0)]))

    def test_mean_power_consistent_with_energy_for_uniform_sampling(self):
        stats = summarize(make_series(sampled(sinusoid(200.0, 100.0, 60.0), 0.0, 600.0, 0.1)))
        assert math.isclose(stats.mean_w * stats.duration_s / 3600.0, stats.energy_wh, rel_tol=0.01)


positive_steps = st.lists(
    st.tuples(st.floats(1e-3, 100.0), st.floats(0.0, 1e6)),
    min_size=2,
    max_size=60,
)


def _series_from_steps(steps):
    t = 0.0
    pairs = []
    for dt, power in steps:
        pairs.append((t, power))
        t += dt
    return make_series(pairs)


class TestProperties:
    @given(steps=positive_steps, alpha=st.floats(0.0, 1e3))
    def test_linearity_in_power(self, steps, alpha):
        base = _series_from_steps(steps)
        scaled = make_series((s.t, alpha * s.power) for s in base.samples)
        assert math.isclose(
            integrate_energy(scaled), alpha * integrate_energy(base), rel_tol=1e-9, abs_tol=1e-12
        )

    @given(steps=positive_steps.filter(lambda s: len(s) >= 3), data=st.data())
    def test_additivity_at_any_interior_split(self, steps, data):
        whole = _series_from_steps(steps)
        k = data.draw(st.integers(1, len(whole.samples) - 2))
        left = make_series((s.t, s.power) for s in whole.samples[: k + 1])
        right = make_series((s.t, s.power) for s in whole.samples[k:])
        total = integrate_energy(left) + integrate_energy(right)
        assert math.isclose(total, integrate_energy(whole), rel_tol=1e-12, abs_tol=1e-15)

    def test_refinement_reduces_error_monotonically(self):
        fn = sinusoid(200.0, 100.0, 60.0)
        exact = sinusoid_integral_wh(200.0, 100.0, 60.0, 50.0)
        errors = []
        for step in (1.0, 0.5, 0.25, 0.125):
            series = make_series(sampled(fn, 0.0, 50.0, step))
            errors.append(abs(integrate_energy(series) - exact))
        assert all(a > b for a, b in zip(errors, errors[1:]))

    def test_export_import_reintegrates_exactly(self, tmp_path):
        from powermeter.exports import SessionExport, export_tables, import_power_table
        from powermeter.sampler import EnergyReport

        series = make_series(sampled(sinusoid(173.3, 52.7, 9.1), 0.0, 30.0, 0.37))
        report = EnergyReport(
            rows=[summarize(series)],
            started_at=time.time(),
            interval_ms=100,
            methods=["synthetic"],
            host="test",
        )
        export_tables(SessionExport(report, {series.channel: series}), tmp_path)
        _, series_map = import_power_table(tmp_path / "power.csv")
        assert integrate_energy(series_map[series.channel]) == integrate_energy(series)
