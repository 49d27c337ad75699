"""Benchmark the compiled stepping kernel against the pure-Python fallback.

Both backends implement ``segment_propagate`` (fourth-order stepping of the
transition factors plus the forced particular term over one mesh segment).
The benchmark times both on identical stage data across representative
state dimensions and step counts, checks that their outputs agree to
round-off, and reports the speedup.

Run:  python3 benchmarks/kernel_benchmark.py [--steps 512] [--repeats 7]
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from perimax import _kernel_py

try:
    from perimax import _kernel as _kernel_c
except ImportError:  # pragma: no cover - compiled extension not built
    _kernel_c = None


def stage_data(dim: int, steps: int, seed: int):
    """Periodic coefficient samples on the h/4 stage mesh of one segment."""
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, 1.0, 4 * steps + 1)
    base = rng.normal(size=(dim, dim)) / dim - 1.2 * np.eye(dim)
    wobble = rng.normal(size=(dim, dim)) / (2.0 * dim)
    F = base[None] + np.sin(2.0 * np.pi * ts)[:, None, None] * wobble[None]
    F = F.astype(complex)
    g = (rng.normal(size=(len(ts), dim)) + 1j * rng.normal(size=(len(ts), dim)))
    h = 1.0 / steps
    return np.ascontiguousarray(F), np.ascontiguousarray(g), h


def time_call(fn, *args, repeats: int) -> float:
    fn(*args)  # warm up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=512,
                        help="grid steps per segment (default 512)")
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repetitions, median reported (default 7)")
    args = parser.parse_args()

    if _kernel_c is None:
        print("compiled extension is not available; timing the fallback only")

    print(f"segment_propagate, {args.steps} steps, median of {args.repeats} runs")
    header = f"{'dim':>4} {'python':>12} {'compiled':>12} {'speedup':>9} {'max dev':>10}"
    print(header)
    print("-" * len(header))
    for dim in (1, 2, 3, 4, 6):
        F, g, h = stage_data(dim, args.steps, seed=dim)
        t_py = time_call(_kernel_py.segment_propagate, F, g, h, repeats=args.repeats)
        if _kernel_c is None:
            print(f"{dim:>4} {t_py * 1e3:>10.3f} ms {'-':>12} {'-':>9} {'-':>10}")
            continue
        t_c = time_call(_kernel_c.segment_propagate, F, g, h, repeats=args.repeats)
        phi_py, psi_py = _kernel_py.segment_propagate(F, g, h)
        phi_c, psi_c = _kernel_c.segment_propagate(F, g, h)
        dev = max(
            float(np.max(np.abs(phi_py - phi_c))),
            float(np.max(np.abs(psi_py - psi_c))),
        )
        print(
            f"{dim:>4} {t_py * 1e3:>10.3f} ms {t_c * 1e3:>9.3f} ms "
            f"{t_py / t_c:>8.1f}x {dev:>10.2e}"
        )


if __name__ == "__main__":
    main()
