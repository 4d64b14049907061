"""Pyramid layers, per-voxel fully-connected layers and whole networks.

All parameters of a :class:`Network` live in one flat float64 vector
(``net.params``); the layer objects hold reshaped views into it. Gradients
use the same layout, which keeps the optimizer and checkpoint code trivial.
The declaration order is: layers in order; within a pyramid layer the six
directions in :data:`~pyramidlstm.clstm.DIRECTIONS` order, each contributing
``wx``, ``wh``, ``bias``; within a fully-connected layer ``weights`` then
``bias``. Arrays are flattened in C order.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .clstm import DIRECTIONS, CLSTMParams, sweep_backward, sweep_forward
from .errors import FormatError, ShapeError
from .rng import substream

ACTIVATIONS = ("tanh", "softmax")


@dataclass(frozen=True)
class PyramidSpec:
    hidden: int
    filter_size: int = 7


@dataclass(frozen=True)
class FCSpec:
    units: int
    activation: str = "tanh"


def reference_architecture(input_channels, num_classes, filter_size=7):
    """Three pyramid layers of 16, 32, 64 units with FC layers of 25, 45 and the classes."""
    return [PyramidSpec(16, filter_size), FCSpec(25, "tanh"),
            PyramidSpec(32, filter_size), FCSpec(45, "tanh"),
            PyramidSpec(64, filter_size), FCSpec(num_classes, "softmax")]


class PyramidLayer:
    def __init__(self, in_channels, spec, sweeps):
        self.in_channels = in_channels
        self.hidden = spec.hidden
        self.filter_size = spec.filter_size
        self.sweeps = sweeps  # one CLSTMParams per direction

    @property
    def out_channels(self):
        return self.hidden


class FCLayer:
    def __init__(self, in_units, spec, weights, bias):
        self.in_units = in_units
        self.activation = spec.activation
        self.weights = weights  # (in_units, out_units)
        self.bias = bias

    @property
    def out_channels(self):
        return self.weights.shape[1]


def _layer_shapes(in_channels, spec):
    if isinstance(spec, PyramidSpec):
        k, o = spec.filter_size, spec.hidden
        return [(k, k, in_channels, 4 * o), (k, k, o, 4 * o), (4 * o,)] * len(DIRECTIONS)
    return [(in_channels, spec.units), (spec.units,)]


def _validate(input_channels, specs):
    if input_channels < 1:
        raise ShapeError(f"input_channels must be >= 1, got {input_channels}")
    if not specs:
        raise ShapeError("network needs at least one layer")
    for n, s in enumerate(specs):
        if isinstance(s, PyramidSpec):
            if s.hidden < 1:
                raise ShapeError(f"layer {n}: hidden units must be >= 1")
            if s.filter_size < 1 or s.filter_size % 2 == 0:
                raise ShapeError(f"layer {n}: filter size must be odd, got {s.filter_size}")
        elif isinstance(s, FCSpec):
            if s.units < 1:
                raise ShapeError(f"layer {n}: units must be >= 1")
            if s.activation not in ACTIVATIONS:
                raise ShapeError(f"layer {n}: unknown activation {s.activation!r}")
        else:
            raise ShapeError(f"layer {n}: unknown layer spec {s!r}")


class Network:
    """Ordered stack of pyramid and fully-connected layers."""

    def __init__(self, input_channels, specs):
        specs = list(specs)
        _validate(input_channels, specs)
        self.input_channels = int(input_channels)
        self.specs = specs
        self.params = np.zeros(param_count_formula(input_channels, specs))
        self.layers = self.bind(self.params)

    def bind(self, flat):
        """Build layer objects whose arrays are views into ``flat``."""
        layers = []
        pos = 0
        c = self.input_channels

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            view = flat[pos:pos + n].reshape(shape)
            pos += n
            return view

        for spec in self.specs:
            if isinstance(spec, PyramidSpec):
                k, o = spec.filter_size, spec.hidden
                sweeps = [CLSTMParams(take((k, k, c, 4 * o)), take((k, k, o, 4 * o)), take((4 * o,)))
                          for _ in DIRECTIONS]
                layer = PyramidLayer(c, spec, sweeps)
            else:
                layer = FCLayer(c, spec, take((c, spec.units)), take((spec.units,)))
            layers.append(layer)
            c = layer.out_channels
        assert pos == flat.size
        return layers

    @property
    def output_channels(self):
        return self.layers[-1].out_channels

    @property
    def ends_in_softmax(self):
        last = self.specs[-1]
        return isinstance(last, FCSpec) and last.activation == "softmax"

    def named_arrays(self):
        """``(name, array)`` for every parameter array in declaration order."""
        out = []
        for n, layer in enumerate(self.layers):
            if isinstance(layer, PyramidLayer):
                for d, p in zip(DIRECTIONS, layer.sweeps):
                    out += [(f"{n}.{d}.wx", p.wx), (f"{n}.{d}.wh", p.wh), (f"{n}.{d}.bias", p.bias)]
            else:
                out += [(f"{n}.weights", layer.weights), (f"{n}.bias", layer.bias)]
        return out

    def descriptor(self):
        layers = []
        for s in self.specs:
            kind = "pyramid" if isinstance(s, PyramidSpec) else "fc"
            layers.append({"type": kind, **asdict(s)})
        return {"input_channels": self.input_channels, "layers": layers}

    @classmethod
    def from_descriptor(cls, desc):
        specs = []
        for entry in desc["layers"]:
            entry = dict(entry)
            kind = entry.pop("type")
            specs.append(PyramidSpec(**entry) if kind == "pyramid" else FCSpec(**entry))
        return cls(desc["input_channels"], specs)

    def copy(self):
        net = Network(self.input_channels, self.specs)
        net.params[:] = self.params
        return net


def param_count_formula(input_channels, specs):
    """Closed-form parameter count."""
    total = 0
    c = input_channels
    for s in specs:
        if isinstance(s, PyramidSpec):
            k2, o = s.filter_size ** 2, s.hidden
            total += len(DIRECTIONS) * (k2 * c * 4 * o + k2 * o * 4 * o + 4 * o)
            c = o
        else:
            total += c * s.units + s.units
            c = s.units
    return total


def param_count(net):
    return net.params.size


def layer_param_counts(net):
    """``(description, count)`` per layer."""
    rows = []
    c = net.input_channels
    for s in net.specs:
        n = param_count_formula(c, [s])
        if isinstance(s, PyramidSpec):
            rows.append((f"pyramid {c}->{s.hidden} ({s.filter_size}x{s.filter_size})", n))
            c = s.hidden
        else:
            rows.append((f"fc {c}->{s.units} {s.activation}", n))
            c = s.units
    return rows


def init_uniform(net, seed, low=-0.1, high=0.1):
    """Fill every weight and bias i.i.d. from U(low, high) with a seeded generator."""
    net.params[:] = substream(seed, "init").uniform(low, high, size=net.params.size)
    return net


# -- forward / backward -------------------------------------------------------

def pyramid_forward(x, layer, keep_cache=True):
    """Sum of the six directional sweeps; returns ``(h, caches)``.

    ``caches`` is None when ``keep_cache`` is false (inference only).
    """
    if x.shape[3] != layer.in_channels:
        raise ShapeError(f"input has {x.shape[3]} channels, layer expects {layer.in_channels}")
    h = None
    caches = []
    for d, p in zip(DIRECTIONS, layer.sweeps):
        hd, cache = sweep_forward(x, p, d, keep_cache)
        h = hd if h is None else h + hd
        caches.append(cache)
    return h, (caches if keep_cache else None)


def pyramid_backward(caches, layer, dh, grad_layer):
    """Accumulate parameter gradients into ``grad_layer``; return the input gradient."""
    dx = None
    for cache, p, g in zip(caches, layer.sweeps, grad_layer.sweeps):
        dxd, gp = sweep_backward(cache, p, dh)
        g.wx += gp.wx
        g.wh += gp.wh
        g.bias += gp.bias
        dx = dxd if dx is None else dx + dxd
    return dx


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def fc_forward(x, layer):
    """Per-voxel affine map over channels followed by tanh or softmax."""
    if x.shape[-1] != layer.in_units:
        raise ShapeError(f"input has {x.shape[-1]} channels, layer expects {layer.in_units}")
    z = (x.reshape(-1, layer.in_units) @ layer.weights + layer.bias)
    y = np.tanh(z) if layer.activation == "tanh" else softmax(z)
    return y.reshape(x.shape[:-1] + (layer.out_channels,))


def fc_backward(x, y, layer, dy, grad_layer):
    n_out = layer.out_channels
    yf = y.reshape(-1, n_out)
    dyf = dy.reshape(-1, n_out)
    if layer.activation == "tanh":
        dz = dyf * (1.0 - yf * yf)
    else:
        dz = yf * (dyf - np.sum(dyf * yf, axis=1, keepdims=True))
    xf = x.reshape(-1, layer.in_units)
    grad_layer.weights += xf.T @ dz
    grad_layer.bias += dz.sum(axis=0)
    return (dz @ layer.weights.T).reshape(x.shape)


def network_forward(x, net, keep_cache=True):
    """Run the whole network; returns ``(output, caches)``.

    With ``keep_cache=False`` no activations are retained (caches is None),
    which keeps inference memory to a few volumes per layer.
    """
    if x.ndim != 4:
        raise ShapeError(f"input must be a 4-D volume, got shape {x.shape}")
    caches = []
    a = x
    for layer in net.layers:
        if isinstance(layer, PyramidLayer):
            out, sweep_caches = pyramid_forward(a, layer, keep_cache)
            if keep_cache:
                caches.append((a, sweep_caches))
        else:
            out = fc_forward(a, layer)
            if keep_cache:
                caches.append((a, out))
        a = out
    return a, (caches if keep_cache else None)


def network_backward(net, caches, dout, return_input_grad=False):
    """Flat gradient (same layout as ``net.params``) of ``sum(dout * output)``."""
    grad = np.zeros_like(net.params)
    glayers = net.bind(grad)
    d = dout
    for layer, glayer, cache in zip(reversed(net.layers), reversed(glayers), reversed(caches)):
        if isinstance(layer, PyramidLayer):
            d = pyramid_backward(cache[1], layer, d, glayer)
        else:
            d = fc_backward(cache[0], cache[1], layer, d, glayer)
    return (grad, d) if return_input_grad else grad


def predict(x, net):
    """Forward pass without retaining activations."""
    return network_forward(x, net, keep_cache=False)[0]


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"PNET"
CKPT_VERSION = 1


def save_checkpoint(path, net, opt_state=None, epoch=0, seed=0):
    """Write network, optimizer buffers, epoch counter and seed.

    Layout: magic, u8 version, u32 descriptor length, UTF-8 JSON descriptor,
    parameters (f64 LE), optimizer mse then momentum (f64 LE), u64 epoch, u64
    seed. Missing optimizer state is written as zeros.
    """
    desc = json.dumps(net.descriptor(), sort_keys=True).encode()
    n = net.params.size
    mse = np.zeros(n) if opt_state is None else opt_state.mse
    mom = np.zeros(n) if opt_state is None else opt_state.momentum
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC + struct.pack("<BI", CKPT_VERSION, len(desc)) + desc)
        for arr in (net.params, mse, mom):
            f.write(np.asarray(arr, dtype="<f8").tobytes())
        f.write(struct.pack("<QQ", int(epoch), int(seed)))


def load_checkpoint(path, expect=None):
    """Read a checkpoint; returns ``(net, mse, momentum, epoch, seed)``.

    If ``expect`` (a descriptor dict or a Network) is given, the stored
    architecture must match it.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise FormatError(f"no such checkpoint: {path}", field="path") from None
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {raw[:4]!r}", field="magic")
    if len(raw) < 9:
        raise FormatError(f"{path}: truncated header", field="header")
    version, dlen = struct.unpack_from("<BI", raw, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}",
                          field="version")
    try:
        desc = json.loads(raw[9:9 + dlen].decode())
        net = Network.from_descriptor(desc)
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: unreadable architecture descriptor ({e})",
                          field="architecture") from None
    if expect is not None:
        want = expect.descriptor() if isinstance(expect, Network) else expect
        if want != net.descriptor():
            raise FormatError(f"{path}: architecture mismatch: checkpoint has {net.descriptor()}, "
                              f"expected {want}", field="architecture")
    n = net.params.size
    pos = 9 + dlen
    if len(raw) != pos + 3 * 8 * n + 16:
        raise FormatError(f"{path}: length {len(raw)} does not match architecture "
                          f"({pos + 3 * 8 * n + 16} expected)", field="data")
    arrs = np.frombuffer(raw, dtype="<f8", count=3 * n, offset=pos).astype(np.float64)
    net.params[:] = arrs[:n]
    epoch, seed = struct.unpack_from("<QQ", raw, pos + 24 * n)
    return net, arrs[n:2 * n].copy(), arrs[2 * n:].copy(), epoch, seed
