"""
Scoring a segmentation
======================

Overlap, surface distance, volume difference and the two error scores used
for electron-microscopy stacks, on a pair of small synthetic masks.
"""

import numpy as np

from pyramidlstm.metrics import avd, dice, evaluate, hausdorff95, pixel_error, rand_error
from pyramidlstm.oracle import brute_hausdorff, brute_rand

ref = np.zeros((12, 12, 6), np.uint8)
ref[2:6, 2:6, 1:4] = 1
ref[7:10, 7:10, 1:4] = 1
pred = ref.copy()
pred[6, 2:10, 2] = 1      # a bridge that merges the two objects
pred[2, 2:6, 1:4] = 0     # and a shaved face

print("dice          ", round(dice(pred, ref, 1), 4))
print("avd %         ", round(avd(pred, ref, 1), 2))
print("hausdorff95 mm", hausdorff95(pred, ref, 1, spacing=(1.0, 1.0, 2.0)))
print("pixel error   ", round(pixel_error(pred, ref), 4))
print("rand error    ", round(rand_error(pred, ref), 4))

## The fast versions agree exactly with brute-force enumeration
print("hausdorff oracle agrees:", hausdorff95(pred, ref, 1, (1, 1, 2)) == brute_hausdorff(pred == 1, ref == 1, (1, 1, 2)))
print("rand oracle agrees:     ", rand_error(pred, ref) == brute_rand(pred, ref))

## evaluate() gives the rows the CLI writes; None marks an undefined value
for row in evaluate(pred, ref, classes=[1]):
    print(row)
print(hausdorff95(pred, np.zeros_like(ref), 1))
