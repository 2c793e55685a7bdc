"""Tests for CSV export/import, suffix rendering, and table merging."""

from __future__ import annotations

import math
import time
from datetime import datetime

import pytest
from hypothesis import given
from hypothesis import strategies as st

from powermeter.core import ChannelId, integrate_energy, summarize
from powermeter.exports import (
    ENERGY_COLUMNS,
    CollisionError,
    ExportError,
    MergeError,
    SessionExport,
    SuffixContext,
    SuffixError,
    export_tables,
    format_float,
    import_energy_table,
    import_power_table,
    merge_energy_tables,
    render_suffix,
)
from powermeter.sampler import EnergyReport

from conftest import make_series, sampled


CTX = SuffixContext(hostname="node07", pid=42, start_time=datetime(2024, 5, 6, 7, 8, 9))


def export_of(series_list, **meta) -> SessionExport:
    report = EnergyReport(
        rows=[summarize(s) for s in series_list],
        started_at=meta.get("started_at", time.time()),
        interval_ms=meta.get("interval_ms", 100),
        methods=meta.get("methods", ["synthetic"]),
        host=meta.get("host", "testhost"),
    )
    return SessionExport(report, {s.channel: s for s in series_list})


def wavy_series(channel=None, n=50):
    return make_series(
        ((0.1 * i + 0.0137, 120.0 + 30.0 * math.sin(0.7 * i)) for i in range(n)),
        channel=channel,
    )


class TestRenderSuffix:
    def test_hostname(self):
        assert render_suffix("_%h", CTX) == "_node07"

    def test_empty_is_identity(self):
        assert render_suffix("", CTX) == ""

    def test_hostname_and_pid(self):
        assert render_suffix("_%h_%p", SuffixContext("a", 42, CTX.start_time)) == "_a_42"

    def test_start_time_format(self):
        assert render_suffix("%t", CTX) == "20240506-070809"

    def test_percent_escape(self):
        assert render_suffix("50%%", CTX) == "50%"

    def test_unknown_placeholder_lists_supported(self):
        with pytest.raises(SuffixError) as err:
            render_suffix("_%x", CTX)
        assert "%h" in str(err.value) and "%p" in str(err.value)

    def test_dangling_percent(self):
        with pytest.raises(SuffixError):
            render_suffix("oops%", CTX)

    def test_distinct_hosts_never_collide(self):
        a = render_suffix("_%h", SuffixContext("node01", 1, CTX.start_time))
        b = render_suffix("_%h", SuffixContext("node02", 1, CTX.start_time))
        assert f"energy{a}.csv" != f"energy{b}.csv"


class TestExportTables:
    def test_writes_power_and_energy_files(self, tmp_path):
        paths = export_tables(export_of([wavy_series()]), tmp_path, suffix="_n1")
        assert sorted(p.name for p in paths) == ["energy_n1.csv", "power_n1.csv"]
        text = (tmp_path / "energy_n1.csv").read_text()
        assert text.startswith("# start_time:")
        assert "# host: testhost" in text
        header = [l for l in text.splitlines() if not l.startswith("#")][0]
        assert header == ",".join(ENERGY_COLUMNS)

    def test_collision_without_force(self, tmp_path):
        export = export_of([wavy_series()])
        export_tables(export, tmp_path)
        with pytest.raises(CollisionError):
            export_tables(export, tmp_path)
        export_tables(export, tmp_path, force=True)

    def test_unsupported_filetype(self, tmp_path):
        with pytest.raises(ExportError, match="csv"):
            export_tables(export_of([wavy_series()]), tmp_path, filetype="h5")

    def test_power_table_round_trip_identity(self, tmp_path):
        series = wavy_series()
        export_tables(export_of([series]), tmp_path)
        _, series_map = import_power_table(tmp_path / "power.csv")
        imported = series_map[series.channel]
        assert [(s.poll_round, s.t, s.power) for s in imported.samples] == [
            (s.poll_round, s.t, s.power) for s in series.samples
        ]

    def test_energy_values_reproducible_from_power_table(self, tmp_path):
        series = wavy_series()
        export_tables(export_of([series]), tmp_path)
        _, rows = import_energy_table(tmp_path / "energy.csv")
        (row,) = rows
        _, series_map = import_power_table(tmp_path / "power.csv")
        assert float(row[2]) == integrate_energy(series_map[series.channel])

    def test_two_channels_in_enumeration_order(self, tmp_path):
        first = wavy_series(ChannelId("synthetic", "0"))
        second = wavy_series(ChannelId("probe", "rail"))
        export_tables(export_of([first, second]), tmp_path)
        _, rows = import_energy_table(tmp_path / "energy.csv")
        assert [(r[0], r[1]) for r in rows] == [("synthetic", "0"), ("probe", "rail")]

    def test_metadata_survives_import(self, tmp_path):
        export_tables(export_of([wavy_series()], host="merlin", interval_ms=25), tmp_path)
        metadata, _ = import_power_table(tmp_path / "power.csv")
        assert metadata["host"] == "merlin"
        assert metadata["interval_ms"] == "25"


class TestFloatSerialization:
    @given(st.floats(min_value=0.0, allow_nan=False, allow_infinity=False))
    def test_seventeen_digits_round_trip_exactly(self, x):
        assert float(format_float(x)) == x

    def test_formatting_examples(self):
        assert format_float(100.0) == "100"
        assert float(format_float(1 / 3)) == 1 / 3


class TestMerge:
    def _write_two_nodes(self, tmp_path):
        for suffix, host in (("_n1", "n1"), ("_n2", "n2")):
            series = [
                wavy_series(ChannelId("synthetic", "0")),
                wavy_series(ChannelId("probe", "rail")),
            ]
            export_tables(export_of(series, host=host), tmp_path, suffix=suffix)
        return [tmp_path / "energy_n1.csv", tmp_path / "energy_n2.csv"]

    def test_two_files_two_channels_each(self, tmp_path):
        files = self._write_two_nodes(tmp_path)
        table = merge_energy_tables(files)
        assert table.columns == ["source"] + ENERGY_COLUMNS
        assert len(table.rows) == 4
        assert [r[0] for r in table.rows] == ["_n1", "_n1", "_n2", "_n2"]

    def test_single_file_keeps_rows_verbatim(self, tmp_path):
        files = self._write_two_nodes(tmp_path)
        _, original_rows = import_energy_table(files[0])
        table = merge_energy_tables([files[0]])
        assert [r[1:] for r in table.rows] == original_rows

    def test_unsuffixed_file_sources_from_host(self, tmp_path):
        export_tables(export_of([wavy_series()], host="lonely"), tmp_path)
        table = merge_energy_tables([tmp_path / "energy.csv"])
        assert table.rows[0][0] == "lonely"

    def test_duplicate_source_channel_pairs_rejected(self, tmp_path):
        files = self._write_two_nodes(tmp_path)
        with pytest.raises(MergeError, match="duplicate"):
            merge_energy_tables([files[0], files[0]])

    def test_schema_mismatch_names_the_file(self, tmp_path):
        export_tables(export_of([wavy_series()]), tmp_path)
        with pytest.raises(MergeError, match="power.csv"):
            merge_energy_tables([tmp_path / "energy.csv", tmp_path / "power.csv"])
