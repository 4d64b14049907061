"""
From raw MR slices to network channels
=======================================

Each MR modality can contribute its original slices, a pre-processed version
(background subtraction with a 31x31 Gaussian, then CLAHE), or both. Every
channel ends up with zero mean and unit variance per slice.
"""

import numpy as np

from pyramidlstm.datapipe import (MR_DATASET, assemble_channels, clahe, gaussian_kernel_2d,
                                  gaussian_subtract)

rng = np.random.default_rng(3)

## A fake slice stack: a smooth bias field plus a bright blob plus noise
xx, yy = np.meshgrid(np.arange(64.0), np.arange(64.0), indexing="ij")
bias = 50 + 0.5 * xx
blob = 40 * np.exp(-((xx - 40) ** 2 + (yy - 20) ** 2) / 50)
vol = np.stack([bias + blob + rng.normal(0, 2, (64, 64)) for _ in range(3)], axis=2)[..., None]

## Background subtraction removes the slow trend
k = gaussian_kernel_2d()
print("kernel", k.shape, "sum", k.sum())
flat = gaussian_subtract(vol)
print("column means before", vol[::16, :, 0, 0].mean(axis=1).round(1))
print("column means after ", flat[::16, :, 0, 0].mean(axis=1).round(1))

## CLAHE stretches local contrast into [0, 1]
eq = clahe(flat)
print("CLAHE range", eq.min().round(3), eq.max().round(3))

## The MR configuration gives five channels
raw = {"t1": vol, "ir": vol * 0.7, "flair": vol[::-1]}
x = assemble_channels(raw, MR_DATASET)
print("channels", x.shape[3], "per-slice means", np.abs(x.mean(axis=(0, 1))).max().round(12))
