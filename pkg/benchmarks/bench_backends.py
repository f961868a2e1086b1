"""Time the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_backends.py [--repeat 5] [--batch 64]
"""

import argparse
import time

import numpy as np

from pestctl import ModelParams, _kernels
from pestctl.control import ObjectiveWeights, fbsm
from pestctl.integrate import (ControlSchedule, TimeGrid, integrate_adjoint_backward, integrate_forward,
                               integrate_many)

S0 = (0.2, 0.07, 0.05, 0.5)


def best_of(fn, repeat):
    fn()  # warm-up (includes jit compilation for numba)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(batch):
    p = ModelParams.table1()
    w = ObjectiveWeights()
    g600 = TimeGrid.from_step(600.0)
    g60 = TimeGrid.from_step(60.0)
    u = ControlSchedule(g60, np.random.default_rng(0).uniform(0, 1, (len(g60), 3)))
    traj = integrate_forward(p, S0, g60, u)
    batch_p = [p.replace(alpha=a) for a in np.linspace(0.05, 1.5, batch)]
    return {
        "forward tf=600": lambda b: integrate_forward(p, S0, g600, backend=b),
        "adjoint tf=60": lambda b: integrate_adjoint_backward(p, traj, u, w, backend=b),
        f"forward batch={batch} tf=600": lambda b: integrate_many(batch_p, S0, g600, backend=b),
        "fbsm tf=60": lambda b: fbsm(p, w, S0, g60, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=64)
    args = ap.parse_args(argv)
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':<28}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fn in cases(args.batch).items():
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:<28}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
