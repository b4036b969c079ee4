"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 3] [--n 2000]

The first numba call of each kernel is a warm-up (compilation or cache
load) and is excluded. Both paths must agree; the script checks that too.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qsnn import kernels, trainer
from qsnn.encoder import EncodeConfig
from qsnn.neuro import make_kernel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n", type=int, default=2000, help="images per batch")
    args = ap.parse_args()
    if not kernels._accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    cfg = EncodeConfig()
    n, p = args.n, 784
    rates = rng.random((n, p)) * (rng.random((n, p)) < 0.2)
    t0 = rng.integers(0, 31, (n, p))
    ids = np.arange(n)
    weights = make_kernel().step_weights(cfg.n_steps)
    x = rng.random((n, p))
    y = np.clip(x + rng.normal(0, 0.3, (n, p)), 0, 1)
    psp = rng.random((n, p)) * (rng.random((n, p)) < 0.2)
    labels = rng.integers(0, 10, n)

    def psp_run(backend):
        return lambda: kernels.window_psp(rates, t0, ids, 7, cfg.n_window, cfg.spike_probability,
                                          weights, backend=backend)

    def blend_run(backend):
        return lambda: kernels.solve_blend_angle(x[: n // 4], y[: n // 4], backend=backend)

    def epoch_run(backend):
        def go():
            net = trainer.init_network(p, 256, 10, seed=1)
            trainer.train_epoch(net, psp[:500], labels[:500], 1, 3, backend=backend)
            return net.hidden.weights
        return go

    rows = []
    for name, make, check in (("window_psp", psp_run, "equal"),
                              ("solve_blend_angle", blend_run, "close"),
                              ("train_epoch (bs=1, 500 samples)", epoch_run, "close")):
        make("numba")()  # warm-up
        t_nb, out_nb = best_of(make("numba"), args.repeat)
        t_np, out_np = best_of(make("numpy"), args.repeat)
        if check == "equal":
            agree = np.array_equal(out_nb, out_np)
        else:
            agree = np.allclose(out_nb, out_np, rtol=0, atol=1e-9)
        rows.append((name, t_nb, t_np, agree))

    print(f"{'kernel':<34}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  agree")
    for name, t_nb, t_np, agree in rows:
        print(f"{name:<34}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>9.1f}  {agree}")


if __name__ == "__main__":
    main()
