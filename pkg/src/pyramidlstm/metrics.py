"""Segmentation metrics: DICE, 95th-percentile boundary Hausdorff, AVD, pixel and Rand error.

Metrics that are undefined for empty masks return ``None``.
"""

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ShapeError


def _labels(a):
    return np.asarray(a.labels if hasattr(a, "labels") else a)


def _pair(pred, ref):
    p, r = _labels(pred), _labels(ref)
    if p.shape != r.shape:
        raise ShapeError(f"prediction {p.shape} and reference {r.shape} differ in shape")
    return p, r


def labels_from_probs(probs):
    """Per-voxel argmax over channels; ties go to the lower class index."""
    return np.argmax(probs, axis=-1).astype(np.uint8)


def dice(pred, ref, k):
    p, r = _pair(pred, ref)
    a, b = p == k, r == k
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def boundary(mask):
    """Voxels of ``mask`` with at least one 6-neighbour outside it (or outside the volume)."""
    mask = np.asarray(mask, bool)
    interior = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(3, 1),
                                      border_value=0)
    return mask & ~interior


def _nearest_rank_p95(d):
    d = np.sort(d)
    return float(d[(95 * d.size + 99) // 100 - 1])


def _distance(a, b, spacing):
    dx = (a[..., 0] - b[..., 0]) * spacing[0]
    dy = (a[..., 1] - b[..., 1]) * spacing[1]
    dz = (a[..., 2] - b[..., 2]) * spacing[2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _directed(src, dst, spacing):
    tree = cKDTree(dst * spacing)
    approx, _ = tree.query(src * spacing)
    # re-evaluate every candidate within rounding distance of the nearest with
    # one fixed formula, so ties resolve to the same float regardless of which
    # neighbour the tree happened to return
    out = np.empty(len(src))
    cands = tree.query_ball_point(src * spacing, approx * (1 + 1e-9) + 1e-12)
    for n, (pt, idx) in enumerate(zip(src, cands)):
        out[n] = _distance(pt[None, :], dst[idx], spacing).min()
    return out


def hausdorff95(pred, ref, k, spacing=(1.0, 1.0, 1.0)):
    """max(P95(d(A->B)), P95(d(B->A))) over boundary voxels, spacing-scaled; None if empty."""
    p, r = _pair(pred, ref)
    pa = np.argwhere(boundary(p == k))
    pb = np.argwhere(boundary(r == k))
    if len(pa) == 0 or len(pb) == 0:
        return None
    s = np.asarray(spacing, dtype=np.float64)
    return max(_nearest_rank_p95(_directed(pa, pb, s)), _nearest_rank_p95(_directed(pb, pa, s)))


def avd(pred, ref, k):
    """Absolute volume difference in percent of the reference volume; None if the reference is empty."""
    p, r = _pair(pred, ref)
    na, nb = int((p == k).sum()), int((r == k).sum())
    if nb == 0:
        return None
    return 100.0 * abs(na - nb) / nb


def pixel_error(pred, ref, foreground=1):
    """1 - F1 of foreground voxels."""
    p, r = _pair(pred, ref)
    a, b = p == foreground, r == foreground
    tp = int((a & b).sum())
    fp = int((a & ~b).sum())
    fn = int((~a & b).sum())
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 1.0 - 2 * tp / denom


def components(mask, per_slice=False):
    """Connected components of a 3-D mask (6-connectivity, or 4-connectivity per z-slice)."""
    mask = np.asarray(mask, bool)
    if not per_slice:
        ids, _ = ndimage.label(mask, structure=ndimage.generate_binary_structure(3, 1))
        return ids
    ids = np.zeros(mask.shape, dtype=np.int64)
    offset = 0
    s2 = ndimage.generate_binary_structure(2, 1)
    for z in range(mask.shape[2]):
        lab, n = ndimage.label(mask[:, :, z], structure=s2)
        ids[:, :, z] = np.where(lab > 0, lab + offset, 0)
        offset += n
    return ids


def _pairs(counts):
    counts = counts.astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def rand_error(pred, ref, foreground=1, per_slice=False):
    """1 - F-score of the Rand index over foreground segments.

    Two voxels form a positive pair when they lie in the same connected
    foreground component; background voxels never pair.
    """
    p, r = _pair(pred, ref)
    sp = components(p == foreground, per_slice).ravel()
    sr = components(r == foreground, per_slice).ravel()
    same_p = _pairs(np.bincount(sp)[1:])
    same_r = _pairs(np.bincount(sr)[1:])
    both = (sp > 0) & (sr > 0)
    _, joint = np.unique(np.stack([sp[both], sr[both]]), axis=1, return_counts=True)
    tp = _pairs(joint)
    fp, fn = same_p - tp, same_r - tp
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 1.0 - 2 * tp / denom


def evaluate(pred, ref, classes, spacing=(1.0, 1.0, 1.0), foreground=1, per_slice=False):
    """Rows of ``(class, metric, value)``; value is None where undefined."""
    rows = []
    for k in classes:
        rows.append((k, "dice", dice(pred, ref, k)))
        rows.append((k, "hausdorff95", hausdorff95(pred, ref, k, spacing)))
        rows.append((k, "avd", avd(pred, ref, k)))
    rows.append((foreground, "pixel_error", pixel_error(pred, ref, foreground)))
    rows.append((foreground, "rand_error", rand_error(pred, ref, foreground, per_slice)))
    return rows
