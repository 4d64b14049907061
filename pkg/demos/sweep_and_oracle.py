"""
One directional sweep, checked against the slow reference
==========================================================

A sweep walks a volume plane by plane along one axis. Every pixel of a plane
is computed at once from the input plane and the previous plane's hidden
state, which is what makes the recurrence cheap to parallelise.
"""

import numpy as np

from pyramidlstm import DIRECTIONS, CLSTMParams, sweep_forward
from pyramidlstm.oracle import naive_sweep
from pyramidlstm.volume import flip

rng = np.random.default_rng(0)

## A random volume and random gate weights (3x3 filters, 2 hidden units)
x = rng.normal(size=(6, 5, 4, 3))
p = CLSTMParams(rng.uniform(-0.5, 0.5, (3, 3, 3, 8)),
                rng.uniform(-0.5, 0.5, (3, 3, 2, 8)),
                rng.uniform(-0.5, 0.5, 8))

## All six directions against the pixel-by-pixel loop
for d in DIRECTIONS:
    h, cache = sweep_forward(x, p, d)
    ref = naive_sweep(x, p, d)
    print(f"{str(d):>3}  output {h.shape}  max |diff| vs loop {np.abs(h - ref).max():.1e}")

## Planes ahead of the sweep have no influence on planes behind it
h, _ = sweep_forward(x, p, DIRECTIONS[0])   # +z
y = x.copy()
y[:, :, 3] += 10.0
h2, _ = sweep_forward(y, p, DIRECTIONS[0])
print("planes z<3 unchanged:", np.array_equal(h[:, :, :3], h2[:, :, :3]))

## Reversing the traversal is the same as flipping the volume
a, _ = sweep_forward(flip(x, "z"), p, DIRECTIONS[0])
b, _ = sweep_forward(x, p, DIRECTIONS[1])
print("flip symmetry exact:", np.array_equal(a, flip(b, "z")))
