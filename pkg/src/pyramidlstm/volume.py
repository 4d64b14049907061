"""Dense 4-D volumes and the VOL1 binary format.

A volume is a ``numpy.ndarray`` of shape ``(W, H, D, C)`` (x, y, z, channel),
float64 unless stated otherwise. Its canonical linear layout puts x fastest,
then y, z and c, i.e. Fortran order; the file format and
:func:`linear_offset` use that layout while in-memory arrays stay C-ordered
so that the channel axis is contiguous for the convolution kernels.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, FormatError, ShapeError

AXES = {"x": 0, "y": 1, "z": 2}

MAGIC = b"PVOL"
VERSION = 1
DTYPE_F64 = 1
DTYPE_U8 = 2


def axis_index(axis):
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"unknown axis {axis!r}")
    return int(axis)


def as_volume(a, dtype=np.float64):
    """Validate ``a`` as a volume and return it as a C-contiguous array."""
    v = np.ascontiguousarray(a, dtype=dtype)
    if v.ndim != 4:
        raise ShapeError(f"volume must be 4-D (W, H, D, C), got shape {v.shape}")
    if min(v.shape) < 1:
        raise ShapeError(f"all volume dimensions must be >= 1, got {v.shape}")
    return v


def zeros(w, h, d, c, dtype=np.float64):
    return np.zeros((w, h, d, c), dtype=dtype)


def linear_offset(shape, x, y, z, c):
    """Offset of element ``(x, y, z, c)`` in the canonical linear layout."""
    w, h, d, _ = shape
    return x + w * (y + h * (z + d * c))


def to_linear(v):
    return np.asarray(v).ravel(order="F")


def from_linear(data, shape):
    data = np.asarray(data)
    if data.size != int(np.prod(shape)):
        raise ShapeError(f"{data.size} values cannot fill shape {tuple(shape)}")
    return np.ascontiguousarray(data.reshape(shape, order="F"))


def plane(v, axis, index):
    """View of all voxels whose coordinate along ``axis`` equals ``index``.

    The result has shape ``(A, B, C)`` where A, B are the two free spatial
    axes in x, y, z order.
    """
    ax = axis_index(axis)
    n = v.shape[ax]
    if not 0 <= index < n:
        raise BoundsError(f"plane index {index} out of range [0, {n}) on axis {'xyz'[ax]}")
    return v[(slice(None),) * ax + (index,)]


def set_plane(v, axis, index, p):
    view = plane(v, axis, index)
    if view.shape != np.shape(p):
        raise ShapeError(f"plane shape {np.shape(p)} does not match {view.shape}")
    view[...] = p


def flip(v, axis):
    return np.ascontiguousarray(np.flip(v, axis=axis_index(axis)))


def add(a, b):
    _same_shape(a, b)
    return a + b


def multiply(a, b):
    _same_shape(a, b)
    return a * b


def scale(a, s):
    return a * s


def fill(shape, value, dtype=np.float64):
    return np.full(shape, value, dtype=dtype)


def vmap(fn, a):
    """Apply a vectorised pointwise function; the shape must be preserved."""
    out = np.asarray(fn(a))
    _same_shape(a, out)
    return out


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def rotate_z(v, angle, interp="bilinear"):
    """Rotate every z-slice by ``angle`` radians about ((W-1)/2, (H-1)/2).

    Output pixels whose source falls outside the slice read 0. ``interp`` is
    ``"bilinear"`` for intensities or ``"nearest"`` for label data; nearest
    mode never creates new values.
    """
    v = np.asarray(v)
    w, h = v.shape[0], v.shape[1]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cos, sin = np.cos(angle), np.sin(angle)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64) - cx,
                         np.arange(h, dtype=np.float64) - cy, indexing="ij")
    # inverse map: output pixel -> source position
    sx = cx + cos * xs + sin * ys
    sy = cy - sin * xs + cos * ys
    if interp == "nearest":
        ix = np.rint(sx).astype(np.int64)
        iy = np.rint(sy).astype(np.int64)
        return _gather(v, ix, iy)
    if interp != "bilinear":
        raise ValueError(f"unknown interpolation {interp!r}")
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[:, :, None, None]
    fy = (sy - y0)[:, :, None, None]
    out = (_gather(v, x0, y0) * ((1 - fx) * (1 - fy))
           + _gather(v, x0 + 1, y0) * (fx * (1 - fy))
           + _gather(v, x0, y0 + 1) * ((1 - fx) * fy)
           + _gather(v, x0 + 1, y0 + 1) * (fx * fy))
    return out.astype(v.dtype, copy=False)


def _gather(v, ix, iy):
    w, h = v.shape[0], v.shape[1]
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = v[np.clip(ix, 0, w - 1), np.clip(iy, 0, h - 1)]
    mask = inside.reshape(inside.shape + (1,) * (v.ndim - 2))
    return np.where(mask, out, np.zeros((), dtype=v.dtype))


@dataclass
class LabelVolume:
    """Per-voxel class labels, shape ``(W, H, D)``."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 3 or min(self.labels.shape) < 1:
            raise ShapeError(f"label volume must be 3-D with positive dims, got {self.labels.shape}")
        if not 1 <= self.num_classes <= 256:
            raise ShapeError(f"num_classes must be in [1, 256], got {self.num_classes}")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ShapeError(f"label {int(self.labels.max())} >= num_classes {self.num_classes}")

    @property
    def shape(self):
        return self.labels.shape

    def one_hot(self, dtype=np.float64):
        return np.eye(self.num_classes, dtype=dtype)[self.labels]


# -- VOL1 files ---------------------------------------------------------------

_HEAD = struct.Struct("<4sBB")
_DIMS = struct.Struct("<4I")
_NCLS = struct.Struct("<I")


def _write(path, dtype_code, dims, payload, num_classes=None):
    with open(path, "wb") as f:
        f.write(_HEAD.pack(MAGIC, VERSION, dtype_code))
        if num_classes is not None:
            f.write(_NCLS.pack(num_classes))
        f.write(_DIMS.pack(*dims))
        f.write(payload)


def _read(path):
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise FormatError(f"no such file: {path}", field="path") from None
    if len(raw) < _HEAD.size:
        raise FormatError(f"{path}: file too short for header", field="magic")
    magic, version, dtype_code = _HEAD.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", field="magic")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", field="version")
    pos = _HEAD.size
    num_classes = None
    if dtype_code == DTYPE_U8:
        if len(raw) < pos + _NCLS.size:
            raise FormatError(f"{path}: truncated header", field="num_classes")
        (num_classes,) = _NCLS.unpack_from(raw, pos)
        pos += _NCLS.size
    elif dtype_code != DTYPE_F64:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}", field="dtype")
    if len(raw) < pos + _DIMS.size:
        raise FormatError(f"{path}: truncated header", field="dims")
    dims = _DIMS.unpack_from(raw, pos)
    pos += _DIMS.size
    for name, n in zip("WHDC", dims):
        if n == 0:
            raise FormatError(f"{path}: dimension {name} is zero", field=name)
    itemsize = 8 if dtype_code == DTYPE_F64 else 1
    expected = int(np.prod(dims, dtype=np.int64)) * itemsize
    if len(raw) - pos != expected:
        raise FormatError(
            f"{path}: data length {len(raw) - pos} bytes, expected {expected}", field="data")
    return dtype_code, dims, num_classes, raw[pos:]


def write_vol(path, v):
    v = as_volume(v)
    data = to_linear(v).astype("<f8", copy=False)
    _write(path, DTYPE_F64, v.shape, data.tobytes())


def read_vol(path):
    code, dims, _, payload = _read(path)
    if code != DTYPE_F64:
        raise FormatError(f"{path}: expected f64 volume, found label file", field="dtype")
    return from_linear(np.frombuffer(payload, dtype="<f8").astype(np.float64), dims)


def write_labels(path, lv):
    dims = lv.labels.shape + (1,)
    _write(path, DTYPE_U8, dims, to_linear(lv.labels).tobytes(), num_classes=lv.num_classes)


def read_labels(path):
    code, dims, num_classes, payload = _read(path)
    if code != DTYPE_U8:
        raise FormatError(f"{path}: expected label volume, found f64 file", field="dtype")
    if dims[3] != 1:
        raise FormatError(f"{path}: label volume must have C = 1, got {dims[3]}", field="C")
    labels = from_linear(np.frombuffer(payload, dtype=np.uint8), dims)[..., 0]
    try:
        return LabelVolume(labels, num_classes)
    except ShapeError as e:
        raise FormatError(f"{path}: {e}", field="num_classes") from None
