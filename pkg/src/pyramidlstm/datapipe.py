"""Pre-processing, augmented sub-volume sampling and test-time stitching."""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError, CoverageError, ShapeError
from .volume import LabelVolume, as_volume, rotate_z


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class Modality:
    name: str
    use_original: bool = True
    use_preprocessed: bool = False


@dataclass(frozen=True)
class AugmentConfig:
    rotate_z: bool = False
    flip_x: bool = False
    flip_y: bool = False
    flip_z: bool = False


@dataclass(frozen=True)
class DatasetConfig:
    modalities: tuple
    num_classes: int
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    overlap: float = 0.5
    sigma_frac: float = 0.25
    gaussian_size: int = 31
    gaussian_sigma: float = 5.0
    clahe_tile: int = 16
    clahe_clip: float = 2.0

    @property
    def channels(self):
        return sum(m.use_original + m.use_preprocessed for m in self.modalities)


EM_DATASET = DatasetConfig(
    modalities=(Modality("em", True, False),), num_classes=2,
    augment=AugmentConfig(rotate_z=True, flip_x=True, flip_y=True, flip_z=True))

# original IR is left out; everything else is used both raw and pre-processed
MR_DATASET = DatasetConfig(
    modalities=(Modality("t1", True, True), Modality("ir", False, True),
                Modality("flair", True, True)),
    num_classes=5, augment=AugmentConfig(flip_x=True))


# -- per-slice pre-processing ---------------------------------------------------

def normalize_slices(v):
    """Zero mean, unit population variance for every z-slice of every channel.

    Constant slices become all zeros.
    """
    v = as_volume(v)
    mean = v.mean(axis=(0, 1), keepdims=True)
    centered = v - mean
    std = np.sqrt(np.mean(centered * centered, axis=(0, 1), keepdims=True))
    constant = np.ptp(v, axis=(0, 1), keepdims=True) == 0
    return np.where(constant, 0.0, centered / np.where(constant, 1.0, std))


def gaussian_kernel_1d(size=31, sigma=5.0):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-r * r / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_kernel_2d(size=31, sigma=5.0):
    k = gaussian_kernel_1d(size, sigma)
    return np.outer(k, k)


def gaussian_subtract(v, size=31, sigma=5.0):
    """Subtract the Gaussian-smoothed version of every z-slice (edge-replicated borders)."""
    v = as_volume(v)
    k = gaussian_kernel_1d(size, sigma)
    smooth = correlate1d(correlate1d(v, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")
    return v - smooth


def _tile_edges(n, tile):
    count = max(1, n // tile)
    return np.linspace(0, n, count + 1).round().astype(np.int64)


def clahe_luts(s, tile=16, clip=2.0, bins=256):
    """Clipped-histogram equalisation maps of one 2-D slice.

    Returns ``(luts, bin_index, x_edges, y_edges)`` where ``luts`` has shape
    ``(tiles_x, tiles_y, bins)`` and each map is non-decreasing in the bin.
    """
    s = np.asarray(s, dtype=np.float64)
    lo, hi = s.min(), s.max()
    scale = bins / (hi - lo) if hi > lo else 0.0
    idx = np.minimum(((s - lo) * scale).astype(np.int64), bins - 1)
    xe, ye = _tile_edges(s.shape[0], tile), _tile_edges(s.shape[1], tile)
    luts = np.empty((len(xe) - 1, len(ye) - 1, bins))
    for i in range(len(xe) - 1):
        for j in range(len(ye) - 1):
            block = idx[xe[i]:xe[i + 1], ye[j]:ye[j + 1]]
            hist = np.bincount(block.ravel(), minlength=bins).astype(np.float64)
            limit = clip * block.size / bins
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / bins
            luts[i, j] = np.cumsum(hist) / block.size
    return luts, idx, xe, ye


def _interp_axis(n, edges):
    # neighbouring tile indices and weight of the upper one for every pixel
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.arange(n, dtype=np.float64)
    k1 = np.searchsorted(centers, pos, side="right")
    k0 = np.clip(k1 - 1, 0, len(centers) - 1)
    k1 = np.clip(k1, 0, len(centers) - 1)
    span = centers[k1] - centers[k0]
    w = np.where(span > 0, (pos - centers[k0]) / np.where(span > 0, span, 1.0), 0.0)
    return k0, k1, np.clip(w, 0.0, 1.0)


def clahe_apply(luts, idx, xe, ye):
    """Bilinear blend of the four nearest tile maps at every pixel."""
    x0, x1, wx = _interp_axis(idx.shape[0], xe)
    y0, y1, wy = _interp_axis(idx.shape[1], ye)
    X0, X1, WX = x0[:, None], x1[:, None], wx[:, None]
    Y0, Y1, WY = y0[None, :], y1[None, :], wy[None, :]
    return ((1 - WX) * (1 - WY) * luts[X0, Y0, idx] + WX * (1 - WY) * luts[X1, Y0, idx]
            + (1 - WX) * WY * luts[X0, Y1, idx] + WX * WY * luts[X1, Y1, idx])


def clahe(v, tile=16, clip=2.0, bins=256):
    """Contrast-limited adaptive histogram equalisation of every z-slice.

    Values are binned over each slice's min-max range; output lies in [0, 1].
    Constant slices map to zero.
    """
    v = as_volume(v)
    out = np.zeros_like(v)
    for z in range(v.shape[2]):
        for ch in range(v.shape[3]):
            s = v[:, :, z, ch]
            if s.max() > s.min():
                out[:, :, z, ch] = clahe_apply(*clahe_luts(s, tile, clip, bins))
    return out


def preprocess_modality(v, cfg):
    return clahe(gaussian_subtract(v, cfg.gaussian_size, cfg.gaussian_sigma),
                 cfg.clahe_tile, cfg.clahe_clip)


def assemble_channels(raw, cfg):
    """Stack enabled original / pre-processed channels, each slice-normalised.

    ``raw`` maps modality name to a single-channel volume.
    """
    chans = []
    for m in cfg.modalities:
        if m.name not in raw:
            raise ConfigError(f"no data for modality {m.name!r}", field=f"preprocess.{m.name}")
        v = np.asarray(raw[m.name], dtype=np.float64)
        if v.ndim == 3:
            v = v[..., None]
        if v.ndim != 4 or v.shape[3] != 1:
            raise ShapeError(f"modality {m.name!r} must be single-channel, got {v.shape}")
        if m.use_original:
            chans.append(normalize_slices(v))
        if m.use_preprocessed:
            chans.append(normalize_slices(preprocess_modality(v, cfg)))
    if not chans:
        raise ConfigError("no input channel enabled", field="preprocess.modalities")
    shapes = {c.shape for c in chans}
    if len(shapes) > 1:
        raise ShapeError(f"modalities have different shapes: {sorted(shapes)}")
    return np.concatenate(chans, axis=3)


# -- sampling -------------------------------------------------------------------

@dataclass(frozen=True)
class TransformRecord:
    origin: tuple
    dims: tuple
    flips: tuple = (False, False, False)
    angle: float | None = None


@dataclass
class SubVolumeSample:
    input: np.ndarray
    target: LabelVolume | None
    origin: tuple
    transforms: TransformRecord


def apply_transforms(source, target, record):
    """Crop, rotate about z, then flip, as described by ``record``."""
    (x0, y0, z0), (w, h, d) = record.origin, record.dims
    x = source[x0:x0 + w, y0:y0 + h, z0:z0 + d]
    lab = None if target is None else target.labels[x0:x0 + w, y0:y0 + h, z0:z0 + d]
    if record.angle is not None:
        x = rotate_z(x, record.angle, "bilinear")
        if lab is not None:
            lab = rotate_z(lab[..., None], record.angle, "nearest")[..., 0]
    for axis, flipped in enumerate(record.flips):
        if flipped:
            x = np.flip(x, axis)
            if lab is not None:
                lab = np.flip(lab, axis)
    x = np.ascontiguousarray(x)
    lv = None if lab is None else LabelVolume(lab, target.num_classes)
    return x, lv


def sample_subvolume(source, target, dims, rng, augment=None):
    """Random crop of size ``dims`` with the enabled augmentations.

    Draw order from ``rng``: origin x, y, z; one coin per enabled flip axis
    (x, y, z order); then the rotation angle, uniform in [0, 2*pi).
    """
    augment = augment or AugmentConfig()
    dims = tuple(int(v) for v in dims)
    if any(s > v for s, v in zip(dims, source.shape[:3])):
        raise ConfigError(f"sub-volume {dims} does not fit in {source.shape[:3]}",
                          field="schedule.stages")
    if target is not None and target.shape != source.shape[:3]:
        raise ShapeError(f"labels {target.shape} do not match input {source.shape[:3]}")
    origin = tuple(int(rng.integers(0, n - s + 1)) for n, s in zip(source.shape[:3], dims))
    enabled = (augment.flip_x, augment.flip_y, augment.flip_z)
    flips = tuple(bool(on and rng.random() < 0.5) for on in enabled)
    angle = float(rng.uniform(0.0, 2.0 * np.pi)) if augment.rotate_z else None
    record = TransformRecord(origin, dims, flips, angle)
    x, lab = apply_transforms(source, target, record)
    return SubVolumeSample(x, lab, origin, record)


# -- stitching --------------------------------------------------------------------

def tile_origins(full_dims, tile_dims, overlap=0.5):
    """Origins of tiles covering ``full_dims`` with the given fractional overlap."""
    per_axis = []
    for n, t in zip(full_dims, tile_dims):
        if t > n:
            raise ConfigError(f"tile {tuple(tile_dims)} larger than volume {tuple(full_dims)}",
                              field="predict.tile")
        step = max(1, int(round(t * (1.0 - overlap))))
        starts = list(range(0, n - t + 1, step))
        if starts[-1] != n - t:
            starts.append(n - t)
        per_axis.append(starts)
    return [(x, y, z) for x in per_axis[0] for y in per_axis[1] for z in per_axis[2]]


def gaussian_window(dims, sigma_frac=0.25):
    """Separable Gaussian weight centred in a tile, sigma = sigma_frac * extent per axis."""
    ws = []
    for n in dims:
        r = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
        ws.append(np.exp(-r * r / (2.0 * (sigma_frac * n) ** 2)))
    return ws[0][:, None, None] * ws[1][None, :, None] * ws[2][None, None, :]


def stitch(predictions, full_dims, sigma_frac=0.25):
    """Gaussian-weighted average of overlapping tile predictions.

    ``predictions`` is a list of ``(volume, origin)`` pairs. Weights are
    normalised per voxel before accumulation, so a voxel covered by a single
    tile receives that tile's value exactly.
    """
    full_dims = tuple(full_dims)
    if not predictions:
        raise CoverageError("no predictions to stitch", voxel=(0, 0, 0))
    channels = predictions[0][0].shape[3]
    wsum = np.zeros(full_dims)
    placed = []
    for pred, (x0, y0, z0) in predictions:
        w, h, d, c = pred.shape
        if c != channels:
            raise ShapeError(f"prediction has {c} channels, expected {channels}")
        region = (slice(x0, x0 + w), slice(y0, y0 + h), slice(z0, z0 + d))
        if wsum[region].shape != (w, h, d):
            raise ShapeError(f"tile at {(x0, y0, z0)} with shape {(w, h, d)} exceeds {full_dims}")
        win = gaussian_window((w, h, d), sigma_frac)
        wsum[region] += win
        placed.append((pred, region, win))
    uncovered = np.argwhere(wsum == 0)
    if len(uncovered):
        v = tuple(int(i) for i in uncovered[0])
        raise CoverageError(f"{len(uncovered)} voxels not covered by any tile, first {v}", voxel=v)
    out = np.zeros(full_dims + (channels,))
    for pred, region, win in placed:
        out[region] += pred * (win / wsum[region])[..., None]
    return out
