"""Shared test helpers."""

from __future__ import annotations

import os
import sys
from pathlib import Path

from powermeter.core import ChannelId, PowerSeries

SRC_DIR = Path(__file__).resolve().parent.parent / "src"

# Child processes spawned by the wrapper and the sweep must find the package
# even when it is not installed into the interpreter they run under.
os.environ["PYTHONPATH"] = str(SRC_DIR) + os.pathsep + os.environ.get("PYTHONPATH", "")

PYTHON = sys.executable


def make_series(pairs, channel: ChannelId | None = None) -> PowerSeries:
    """Build a series from (t, power) pairs, poll rounds numbered from 0."""
    series = PowerSeries(channel or ChannelId("synthetic", "0"))
    for i, (t, power) in enumerate(pairs):
        series.add(float(t), float(power), i)
    return series


def sampled(fn, start: float, stop: float, step: float):
    """(t, fn(t)) pairs over [start, stop] inclusive on a uniform grid."""
    n = round((stop - start) / step)
    return [(start + i * step, fn(start + i * step)) for i in range(n + 1)]


def make_hwmon_tree(root: Path, nodes: dict[str, dict[str, str]]) -> Path:
    """Fabricate an hwmon directory tree: node name -> {file: content}."""
    for node, files in nodes.items():
        node_dir = root / node
        node_dir.mkdir(parents=True)
        for name, content in files.items():
            (node_dir / name).write_text(content)
    return root
