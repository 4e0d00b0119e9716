"""Wall-clock comparison of the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--events 20] [--seconds 0.1]
"""
import argparse
import time

import numpy as np

from pehsense.harvester import default_device_bank, simulate_resistive_batch
from pehsense.seh import SEHParams, simulate_seh_batch
from pehsense.signal import AccelerationTrace


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--events", type=int, default=20)
    p.add_argument("--seconds", type=float, default=0.1)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    fs = 12000.0
    rng = np.random.default_rng(0)
    n = int(args.seconds * fs)
    events = [AccelerationTrace(rng.standard_normal(n), fs) for _ in range(args.events)]
    dev = default_device_bank()[8]
    seh = SEHParams(10e-6)
    cases = {
        "resistive": lambda b: simulate_resistive_batch(dev, events, backend=b),
        "seh": lambda b: simulate_seh_batch(dev, seh, events, backend=b),
    }
    print(f"{args.events} events x {args.seconds:g} s at {fs:g} Hz, best of {args.repeat}")
    print(f"{'case':<10} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}")
    for name, run in cases.items():
        run("numba")  # compile outside the timing
        t_nb = best_of(lambda: run("numba"), args.repeat)
        t_np = best_of(lambda: run("numpy"), 1)
        print(f"{name:<10} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>8.1f}")


if __name__ == "__main__":
    main()
