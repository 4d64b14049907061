"""Synthetic hollow-ellipsoid volumes whose labels need non-local context.

The input shows only a thin noisy ellipsoidal shell; the label marks every
voxel on or inside the shell. Interior and exterior voxels away from the shell
look identical locally, so a classifier has to integrate context along the
sweeps to tell them apart.
"""

import numpy as np

from .rng import substream
from .volume import LabelVolume


def hollow_ellipsoid(rng, dims=(32, 32, 16), shell=0.8, noise=0.1):
    """One ``(input, labels)`` pair; the ellipsoid lies fully inside the volume."""
    dims = tuple(int(n) for n in dims)
    if min(dims) < 8:
        raise ValueError(f"toy volumes need every extent >= 8, got {dims}")
    radii = np.array([rng.uniform(0.22, 0.4) * n for n in dims])
    radii = np.minimum(np.maximum(radii, 2.5), (np.array(dims) - 3.0) / 2.0)
    center = np.array([rng.uniform(r + 1.0, n - r - 2.0) for r, n in zip(radii, dims)])
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    q = np.sqrt(sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii)))
    # distance to the surface in voxels, roughly: scale by the local radius
    delta = shell / radii.min()
    on_shell = np.abs(q - 1.0) <= delta
    labels = (q <= 1.0 + delta).astype(np.uint8)
    x = on_shell.astype(np.float64) + noise * rng.standard_normal(dims)
    return x[..., None], LabelVolume(labels, 2)


def toy_dataset(seed, count, dims=(32, 32, 16), **kw):
    """``count`` independent pairs from the seeded toy stream."""
    rng = substream(seed, "toy")
    return [hollow_ellipsoid(rng, dims, **kw) for _ in range(count)]
