"""Stride-1 zero-padded ("same") 2-D convolution over planes.

Planes are arrays of shape ``(A, B, C)``; kernels are ``(kh, kw, Cin, Cout)``
with odd extents. Every routine also has a ``*_stack`` form taking a stack of
planes ``(T, A, B, C)`` so that all planes of a sweep can be processed in one
call.

Each output chunk is an im2col block multiplied by the flattened kernel. The
chunk grid depends only on array shapes, never on the worker count, so the
floating-point summation order (and therefore every bit of the result) is the
same for any number of threads.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .parallel import run_tasks

CHUNK_PIXELS = 1024


def check_kernel(k):
    if k.ndim != 4:
        raise ShapeError(f"kernel must be 4-D (kh, kw, Cin, Cout), got shape {k.shape}")
    kh, kw = k.shape[:2]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kh}x{kw}")


def row_chunks(a, b):
    rows = max(1, CHUNK_PIXELS // b)
    return [(a0, min(a, a0 + rows)) for a0 in range(0, a, rows)]


def pad_planes(stack, rh, rw):
    t, a, b, c = stack.shape
    out = np.zeros((t, a + 2 * rh, b + 2 * rw, c), dtype=stack.dtype)
    out[:, rh:rh + a, rw:rw + b] = stack
    return out


def im2col(padded, a0, a1, kh, kw):
    # padded: (A + kh - 1, B + kw - 1, C) -> ((a1 - a0) * B, kh * kw * C), (da, db, ci) order
    win = sliding_window_view(padded[a0:a1 + kh - 1], (kh, kw), axis=(0, 1))
    return win.transpose(0, 1, 3, 4, 2).reshape(win.shape[0] * win.shape[1], -1)


def kernel_matrix(k):
    kh, kw, cin, cout = k.shape
    return np.ascontiguousarray(k).reshape(kh * kw * cin, cout)


def adjoint_kernel(k):
    """Kernel whose forward convolution is the transpose of ``k``'s."""
    return np.ascontiguousarray(k[::-1, ::-1].transpose(0, 1, 3, 2))


def conv_forward_stack(ps, k, b=None):
    """Convolve every plane of ``ps`` (T, A, B, Cin) with ``k``; add bias ``b``."""
    check_kernel(k)
    if ps.ndim != 4:
        raise ShapeError(f"plane stack must be 4-D, got shape {ps.shape}")
    t_, a_, b_, cin = ps.shape
    kh, kw, kin, cout = k.shape
    if kin != cin:
        raise ShapeError(f"kernel expects {kin} input channels, plane has {cin}")
    if b is not None and np.shape(b) != (cout,):
        raise ShapeError(f"bias shape {np.shape(b)} does not match {cout} output channels")
    padded = pad_planes(ps, kh // 2, kw // 2)
    kmat = kernel_matrix(k)
    out = np.empty((t_, a_, b_, cout), dtype=np.result_type(ps, k))

    def task(job):
        t, a0, a1 = job
        z = im2col(padded[t], a0, a1, kh, kw) @ kmat
        if b is not None:
            z += b
        out[t, a0:a1] = z.reshape(a1 - a0, b_, cout)

    run_tasks(task, [(t, a0, a1) for t in range(t_) for a0, a1 in row_chunks(a_, b_)])
    return out


def conv_backward_input_stack(douts, k):
    """Gradient w.r.t. the input planes, given output gradients ``douts``."""
    check_kernel(k)
    if douts.shape[-1] != k.shape[3]:
        raise ShapeError(f"gradient has {douts.shape[-1]} channels, kernel outputs {k.shape[3]}")
    return conv_forward_stack(douts, adjoint_kernel(k))


def conv_backward_kernel_stack(ps, douts, kernel_size):
    """Kernel and bias gradients summed over every plane of the stack."""
    kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
    if ps.shape[:3] != douts.shape[:3]:
        raise ShapeError(f"input planes {ps.shape} and gradients {douts.shape} disagree")
    t_, a_, b_, cin = ps.shape
    cout = douts.shape[-1]
    padded = pad_planes(ps, kh // 2, kw // 2)
    chunks = row_chunks(a_, b_)

    def task(t):
        acc = np.zeros((kh * kw * cin, cout), dtype=np.result_type(ps, douts))
        for a0, a1 in chunks:
            acc += im2col(padded[t], a0, a1, kh, kw).T @ douts[t, a0:a1].reshape(-1, cout)
        return acc

    dk = np.zeros((kh * kw * cin, cout), dtype=np.result_type(ps, douts))
    for part in run_tasks(task, range(t_)):
        dk += part
    db = douts.reshape(-1, cout).sum(axis=0)
    return dk.reshape(kh, kw, cin, cout), db


def conv_forward(p, k, b=None):
    """Convolve one plane ``p`` (A, B, Cin); output has the same spatial shape."""
    if p.ndim != 3:
        raise ShapeError(f"plane must be 3-D (A, B, C), got shape {p.shape}")
    return conv_forward_stack(p[None], k, b)[0]


def conv_backward_input(dout, k):
    return conv_backward_input_stack(dout[None], k)[0]


def conv_backward_kernel(p, dout, kernel_size):
    return conv_backward_kernel_stack(p[None], dout[None], kernel_size)
