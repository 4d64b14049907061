"""Forward-pass wall time across worker counts."""

import csv
import time

import numpy as np

from .network import Network, PyramidSpec, FCSpec, init_uniform, network_forward
from .parallel import threads

REFERENCE_WIDTHS = [PyramidSpec(16), FCSpec(25, "tanh"), PyramidSpec(32), FCSpec(45, "tanh"),
                PyramidSpec(64), FCSpec(2, "softmax")]


def bench_forward(dims=(128, 128, 16), channels=1, specs=None, thread_counts=(1, 2, 4, 8),
                  repeats=1, seed=0, dtype=np.float64):
    """Time ``network_forward`` at each worker count.

    Returns ``(rows, identical)``: one ``(threads, wall_ms, speedup)`` row per
    count (best of ``repeats``; speedup relative to the first count) and whether
    every count produced bit-identical output. ``dtype=np.float32`` runs the
    whole pass in single precision.
    """
    net = init_uniform(Network(channels, specs or REFERENCE_WIDTHS), seed)
    x = np.random.default_rng(seed).standard_normal(tuple(dims) + (channels,))
    if dtype != np.float64:
        net.params = net.params.astype(dtype)
        net.layers = net.bind(net.params)
        x = x.astype(dtype)
    rows, outputs = [], []
    for n in thread_counts:
        best = np.inf
        with threads(n):
            for _ in range(repeats):
                t0 = time.perf_counter()
                out, _ = network_forward(x, net, keep_cache=False)
                best = min(best, time.perf_counter() - t0)
        outputs.append(out)
        rows.append((n, best * 1e3))
    base = rows[0][1]
    rows = [(n, ms, base / ms) for n, ms in rows]
    identical = all(np.array_equal(outputs[0], o) for o in outputs[1:])
    return rows, identical


def write_bench_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threads", "wall_ms", "speedup"])
        for n, ms, sp in rows:
            w.writerow([n, f"{ms:.3f}", f"{sp:.4f}"])
