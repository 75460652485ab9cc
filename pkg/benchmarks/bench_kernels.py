"""Compare compiled and pure-Python kernels on a simulated click stream.

    python3 benchmarks/bench_kernels.py [--pairs N] [--repeat R]
"""
import argparse
import time

import numpy as np

from biphoton_eraser import kernels
from biphoton_eraser.coincidence import CoincidenceConfig, match_coincidences
from biphoton_eraser.events import format_events
from biphoton_eraser.montecarlo import SimConfig, simulate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    events, _ = simulate(SimConfig(pairs=args.pairs))
    data = format_events(events).encode("ascii")
    cfg = CoincidenceConfig()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    tasks = {
        "match": lambda b: match_coincidences(events, cfg, backend=b),
        "format": lambda b: kernels.format_rows(events.event_id, events.detector,
                                                events.time_ps, events.x_um, backend=b),
        "parse": lambda b: kernels.parse_rows(data, -1, -1, backend=b),
    }
    print(f"{len(events)} events, {len(data) / 1e6:.1f} MB of CSV, best of {args.repeat}")
    print(f"{'kernel':<8}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, task in tasks.items():
        t = {b: best_of(lambda: task(b), args.repeat) for b in backends}
        row = f"{name:<8}" + "".join(f"{t[b]:>11.3f}s" for b in backends)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:>9.1f}x"
        print(row)
    if "cython" in backends:
        a = np.asarray(tasks["match"]("python").idler_id)
        b = np.asarray(tasks["match"]("cython").idler_id)
        print("outputs identical:", bool(np.array_equal(a, b))
              and tasks["format"]("python") == tasks["format"]("cython"))


if __name__ == "__main__":
    main()
