"""Mock training workload: burns CPU proportional to the batch size and
prints iteration lines in the style the sweep extract rules expect."""

from __future__ import annotations

import argparse
import time


def _burn(units: int) -> float:
    acc = 0.0
    for i in range(units):
        acc += (i & 7) * 0.5
    return acc


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mockwork")
    parser.add_argument("--kind", choices=("llm", "resnet"), default="llm")
    parser.add_argument("--global-batch-size", type=int, required=True)
    parser.add_argument("--seq-len", type=int, default=1024)
    parser.add_argument("--iters", type=int, default=3)
    parser.add_argument("--work-scale", type=int, default=2000,
                        help="busy-loop units per batch element")
    ns = parser.parse_args(argv)
    if ns.global_batch_size < 1:
        parser.error("--global-batch-size must be >= 1")
    if ns.iters < 1:
        parser.error("--iters must be >= 1")

    units = ns.global_batch_size * ns.work_scale
    if ns.kind == "llm":
        units = max(1, units * ns.seq_len // 1024)

    for _ in range(ns.iters):
        t0 = time.perf_counter()
        _burn(units)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        print(f"elapsed ms/iter: {elapsed_ms:.4f}", flush=True)
    print(f"samples processed: {ns.global_batch_size * ns.iters}", flush=True)
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
