"""
Forward-pass timing across worker counts
=========================================

Within a plane, pixels are split into fixed row chunks that workers pick up,
so the result does not depend on how many workers there are. The speedup you
see depends on how many cores the machine actually gives you.
"""

import os

from pyramidlstm.bench import bench_forward
from pyramidlstm.network import FCSpec, PyramidSpec

print("cores available:", len(os.sched_getaffinity(0)))

specs = [PyramidSpec(8, 5), FCSpec(12, "tanh"), PyramidSpec(8, 5), FCSpec(2, "softmax")]
rows, identical = bench_forward((64, 64, 8), 1, specs, thread_counts=(1, 2, 4), repeats=2)
for n, ms, speedup in rows:
    print(f"{n} threads  {ms:8.1f} ms  speedup {speedup:.2f}")
print("bit-identical outputs:", identical)
