"""One directional convolutional LSTM sweep over a volume.

The sweep visits the planes orthogonal to its axis in order (reversed for a
negative direction). Gates at plane ``t`` depend on the input plane and on the
hidden plane ``t - 1`` only, so all pixels of a plane are independent and are
computed concurrently; planes themselves are strictly sequential.

Internally a volume is rearranged into "sweep coordinates" ``(T, A, B, C)``:
the sweep axis first, in traversal order, followed by the two free axes.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .conv2d import (check_kernel, conv_backward_input_stack, conv_backward_kernel_stack,
                     conv_forward_stack, im2col, kernel_matrix, pad_planes, row_chunks)
from .errors import ShapeError
from .parallel import run_tasks

GATES = ("i", "f", "c", "o")


class Direction(NamedTuple):
    axis: int  # 0 = x, 1 = y, 2 = z
    sign: int  # +1 or -1

    def __str__(self):
        return f"{'+' if self.sign > 0 else '-'}{'xyz'[self.axis]}"


# (., ., 1), (., ., -1), (., 1, .), (., -1, .), (1, ., .), (-1, ., .)
DIRECTIONS = (Direction(2, 1), Direction(2, -1), Direction(1, 1),
              Direction(1, -1), Direction(0, 1), Direction(0, -1))


def to_sweep(v, d):
    s = np.moveaxis(v, d.axis, 0)
    if d.sign < 0:
        s = s[::-1]
    return np.ascontiguousarray(s)


def from_sweep(s, d):
    if d.sign < 0:
        s = s[::-1]
    return np.ascontiguousarray(np.moveaxis(s, 0, d.axis))


@dataclass
class CLSTMParams:
    """Weights of one directional C-LSTM.

    The four gate kernels are stored side by side along the output axis in
    the order i, f, c (cell input), o: ``wx`` is ``(k, k, C, 4*O)``, ``wh`` is
    ``(k, k, O, 4*O)`` and ``bias`` is ``(4*O,)``. The per-gate properties
    return views.
    """

    wx: np.ndarray
    wh: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        check_kernel(self.wx)
        check_kernel(self.wh)
        o4 = self.wx.shape[3]
        if o4 % 4:
            raise ShapeError(f"output axis {o4} is not a multiple of 4 gates")
        o = o4 // 4
        if self.wh.shape != self.wx.shape[:2] + (o, o4):
            raise ShapeError(f"recurrent kernel shape {self.wh.shape} inconsistent with {self.wx.shape}")
        if self.bias.shape != (o4,):
            raise ShapeError(f"bias shape {self.bias.shape}, expected ({o4},)")

    @classmethod
    def zeros(cls, in_channels, hidden, filter_size=7, dtype=np.float64):
        k = filter_size
        return cls(np.zeros((k, k, in_channels, 4 * hidden), dtype),
                   np.zeros((k, k, hidden, 4 * hidden), dtype),
                   np.zeros(4 * hidden, dtype))

    @property
    def in_channels(self):
        return self.wx.shape[2]

    @property
    def hidden(self):
        return self.wx.shape[3] // 4

    @property
    def filter_size(self):
        return self.wx.shape[:2]

    def _gate(self, arr, name):
        o = self.hidden
        j = GATES.index(name)
        return arr[..., j * o:(j + 1) * o]

    theta_xi = property(lambda self: self._gate(self.wx, "i"))
    theta_xf = property(lambda self: self._gate(self.wx, "f"))
    theta_xc = property(lambda self: self._gate(self.wx, "c"))
    theta_xo = property(lambda self: self._gate(self.wx, "o"))
    theta_hi = property(lambda self: self._gate(self.wh, "i"))
    theta_hf = property(lambda self: self._gate(self.wh, "f"))
    theta_hc = property(lambda self: self._gate(self.wh, "c"))
    theta_ho = property(lambda self: self._gate(self.wh, "o"))
    bias_i = property(lambda self: self._gate(self.bias, "i"))
    bias_f = property(lambda self: self._gate(self.bias, "f"))
    bias_c = property(lambda self: self._gate(self.bias, "c"))
    bias_o = property(lambda self: self._gate(self.bias, "o"))

    def arrays(self):
        return (self.wx, self.wh, self.bias)


@dataclass
class SweepCache:
    """Activations retained by :func:`sweep_forward`, in sweep coordinates."""

    direction: Direction
    xs: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray  # tanh(c)
    h: np.ndarray

    @property
    def depth(self):
        return self.h.shape[0]


def sweep_forward(x, p, d, keep_cache=True):
    """Run the C-LSTM ``p`` over volume ``x`` (W, H, D, C) in direction ``d``.

    Returns the hidden volume (W, H, D, O) in the original orientation and
    the cache needed by :func:`sweep_backward`. With ``keep_cache=False`` only
    one plane of gate activations is held at a time and the cache is None;
    the output is bit-identical either way.
    """
    if x.ndim != 4 or x.shape[3] != p.in_channels:
        raise ShapeError(f"input shape {x.shape} does not match {p.in_channels} input channels")
    xs = to_sweep(x, d)
    t_, a_, b_, _ = xs.shape
    o = p.hidden
    kh, kw = p.filter_size
    dtype = np.result_type(xs, p.wx)

    zx = conv_forward_stack(xs, p.wx, p.bias) if keep_cache else None
    whmat = kernel_matrix(p.wh)
    depth = t_ if keep_cache else 1
    i, f, g, og, tc = (np.empty((depth, a_, b_, o), dtype) for _ in range(5))
    c = np.empty((t_ if keep_cache else 2, a_, b_, o), dtype)
    h = np.empty((t_, a_, b_, o), dtype)
    chunks = row_chunks(a_, b_)

    for t in range(t_):
        # first plane: no previous plane, recurrent term and carried cell are zero
        hpad = pad_planes(h[t - 1:t], kh // 2, kw // 2)[0] if t else None
        zt = zx[t] if keep_cache else conv_forward_stack(xs[t:t + 1], p.wx, p.bias)[0]
        s = t if keep_cache else 0
        cs, cp = (t, t - 1) if keep_cache else (t % 2, (t - 1) % 2)

        def task(rows, t=t, hpad=hpad, zt=zt, s=s, cs=cs, cp=cp):
            a0, a1 = rows
            z = zt[a0:a1]
            if hpad is not None:
                z = z + (im2col(hpad, a0, a1, kh, kw) @ whmat).reshape(z.shape)
            it = expit(z[..., :o])
            ft = expit(z[..., o:2 * o])
            gt = np.tanh(z[..., 2 * o:3 * o])
            ot = expit(z[..., 3 * o:])
            ct = gt * it
            if t:
                ct += c[cp, a0:a1] * ft
            tct = np.tanh(ct)
            i[s, a0:a1], f[s, a0:a1], g[s, a0:a1], og[s, a0:a1] = it, ft, gt, ot
            c[cs, a0:a1], tc[s, a0:a1] = ct, tct
            h[t, a0:a1] = ot * tct

        run_tasks(task, chunks)

    cache = SweepCache(d, xs, i, f, g, og, c, tc, h) if keep_cache else None
    return from_sweep(h, d), cache


def sweep_backward(cache, p, dh):
    """Reverse-mode pass of one sweep.

    ``dh`` is the gradient w.r.t. the sweep output (original orientation).
    Returns ``(dx, grads)`` where ``grads`` is a :class:`CLSTMParams` holding
    the parameter gradients.
    """
    d = cache.direction
    dhs = to_sweep(dh, d)
    if dhs.shape != cache.h.shape:
        raise ShapeError(f"gradient shape {dh.shape} does not match the sweep output")
    t_, a_, b_, o = dhs.shape
    kh, kw = p.filter_size
    dtype = np.result_type(dhs, cache.h)

    dz = np.empty((t_, a_, b_, 4 * o), dtype)
    dh_rec = np.zeros((a_, b_, o), dtype)
    dc_carry = np.zeros((a_, b_, o), dtype)
    chunks = row_chunks(a_, b_)

    for t in reversed(range(t_)):
        def task(rows, t=t, dh_rec=dh_rec):
            a0, a1 = rows
            it, ft, gt, ot = (arr[t, a0:a1] for arr in (cache.i, cache.f, cache.g, cache.o))
            tct = cache.tc[t, a0:a1]
            dht = dhs[t, a0:a1] + dh_rec[a0:a1]
            do = dht * tct
            dc = dc_carry[a0:a1] + dht * ot * (1.0 - tct * tct)
            dzt = dz[t, a0:a1]
            dzt[..., :o] = dc * gt * it * (1.0 - it)
            if t:
                dzt[..., o:2 * o] = dc * cache.c[t - 1, a0:a1] * ft * (1.0 - ft)
            else:
                dzt[..., o:2 * o] = 0.0
            dzt[..., 2 * o:3 * o] = dc * it * (1.0 - gt * gt)
            dzt[..., 3 * o:] = do * ot * (1.0 - ot)
            dc_carry[a0:a1] = dc * ft

        run_tasks(task, chunks)
        if t:
            dh_rec = conv_backward_input_stack(dz[t:t + 1], p.wh)[0]

    if t_ > 1:
        dwh, _ = conv_backward_kernel_stack(cache.h[:-1], dz[1:], (kh, kw))
    else:
        dwh = np.zeros_like(p.wh)
    dwx, dbias = conv_backward_kernel_stack(cache.xs, dz, (kh, kw))
    dxs = conv_backward_input_stack(dz, p.wx)
    return from_sweep(dxs, d), CLSTMParams(dwx, dwh, dbias)
