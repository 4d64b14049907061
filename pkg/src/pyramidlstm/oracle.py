"""Slow reference implementations used by the test-suite.

Nothing here imports the convolution, sweep or metric code of the main path,
so agreement between the two is evidence rather than tautology. Everything is
float64 and single-threaded.
"""

import math
from collections import deque

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


@njit(cache=True)
def _at(x, axis, t, a, b, ch):
    if axis == 0:
        return x[t, a, b, ch]
    if axis == 1:
        return x[a, t, b, ch]
    return x[a, b, t, ch]


@njit(cache=True)
def _naive_sweep(x, wxi, wxf, wxc, wxo, whi, whf, whc, who, bi, bf, bc, bo, axis, sign):
    nx, ny, nz, nc = x.shape
    no = bi.shape[0]
    kh, kw = wxi.shape[0], wxi.shape[1]
    rh, rw = kh // 2, kw // 2
    if axis == 0:
        nt, na, nb = nx, ny, nz
    elif axis == 1:
        nt, na, nb = ny, nx, nz
    else:
        nt, na, nb = nz, nx, ny
    out = np.zeros((nx, ny, nz, no))
    h_prev = np.zeros((na, nb, no))
    c_prev = np.zeros((na, nb, no))
    h_cur = np.zeros((na, nb, no))
    c_cur = np.zeros((na, nb, no))
    for step in range(nt):
        t = step if sign > 0 else nt - 1 - step
        for a in range(na):
            for b in range(nb):
                for u in range(no):
                    si = bi[u]
                    sf = bf[u]
                    sc = bc[u]
                    so = bo[u]
                    for da in range(kh):
                        aa = a + da - rh
                        if aa < 0 or aa >= na:
                            continue
                        for db in range(kw):
                            bb = b + db - rw
                            if bb < 0 or bb >= nb:
                                continue
                            for ch in range(nc):
                                xv = _at(x, axis, t, aa, bb, ch)
                                si += xv * wxi[da, db, ch, u]
                                sf += xv * wxf[da, db, ch, u]
                                sc += xv * wxc[da, db, ch, u]
                                so += xv * wxo[da, db, ch, u]
                            if step > 0:
                                for j in range(no):
                                    hv = h_prev[aa, bb, j]
                                    si += hv * whi[da, db, j, u]
                                    sf += hv * whf[da, db, j, u]
                                    sc += hv * whc[da, db, j, u]
                                    so += hv * who[da, db, j, u]
                    ig = _sigmoid(si)
                    fg = _sigmoid(sf)
                    cin = math.tanh(sc)
                    og = _sigmoid(so)
                    cell = cin * ig + c_prev[a, b, u] * fg
                    c_cur[a, b, u] = cell
                    h_cur[a, b, u] = og * math.tanh(cell)
        for a in range(na):
            for b in range(nb):
                for u in range(no):
                    if axis == 0:
                        out[t, a, b, u] = h_cur[a, b, u]
                    elif axis == 1:
                        out[a, t, b, u] = h_cur[a, b, u]
                    else:
                        out[a, b, t, u] = h_cur[a, b, u]
                    h_prev[a, b, u] = h_cur[a, b, u]
                    c_prev[a, b, u] = c_cur[a, b, u]
    return out


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def naive_sweep(x, params, direction):
    """Pixel-by-pixel evaluation of one directional C-LSTM.

    ``params`` needs the per-gate attributes ``theta_x*``, ``theta_h*`` and
    ``bias_*``; ``direction`` is an ``(axis, sign)`` pair.
    """
    axis, sign = direction
    p = params
    return _naive_sweep(
        _c(x), _c(p.theta_xi), _c(p.theta_xf), _c(p.theta_xc), _c(p.theta_xo),
        _c(p.theta_hi), _c(p.theta_hf), _c(p.theta_hc), _c(p.theta_ho),
        _c(p.bias_i), _c(p.bias_f), _c(p.bias_c), _c(p.bias_o), int(axis), int(sign))


def naive_pyramid(x, directed_params):
    """Sum of naive sweeps; ``directed_params`` is a list of (direction, params)."""
    total = None
    for d, p in directed_params:
        h = naive_sweep(x, p, d)
        total = h if total is None else total + h
    return total


def _plain_conv(plane, k):
    # plane (A, B, C), k (kh, kw, C, O); explicit shifted sums with zero padding
    a_, b_, _ = plane.shape
    kh, kw = k.shape[:2]
    rh, rw = kh // 2, kw // 2
    out = np.zeros((a_, b_, k.shape[3]))
    for da in range(kh):
        for db in range(kw):
            for a in range(a_):
                aa = a + da - rh
                if not 0 <= aa < a_:
                    continue
                for b in range(b_):
                    bb = b + db - rw
                    if 0 <= bb < b_:
                        out[a, b] += plane[aa, bb] @ k[da, db]
    return out


def gated_layer(x, params, axis):
    """Recurrence-free gated layer applied independently to every plane.

    Equals a sweep along ``axis`` whenever that axis has extent 1.
    """
    p = params
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    planes = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    outs = []
    for pl in planes:
        i = sig(_plain_conv(pl, p.theta_xi) + p.bias_i)
        g = np.tanh(_plain_conv(pl, p.theta_xc) + p.bias_c)
        o = sig(_plain_conv(pl, p.theta_xo) + p.bias_o)
        outs.append(o * np.tanh(g * i))
    return np.moveaxis(np.stack(outs), 0, axis)


def finite_diff(fn, theta, h=1e-5):
    """Central-difference gradient of scalar ``fn`` at the 1-D vector ``theta``."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        old = theta[j]
        theta[j] = old + h
        fp = fn(theta)
        theta[j] = old - h
        fm = fn(theta)
        theta[j] = old
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


# -- metrics ------------------------------------------------------------------

_NEIGHBOURS_6 = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def _boundary_points(mask):
    pts = []
    nx, ny, nz = mask.shape
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not mask[x, y, z]:
                    continue
                for dx, dy, dz in _NEIGHBOURS_6:
                    u, v, w = x + dx, y + dy, z + dz
                    if not (0 <= u < nx and 0 <= v < ny and 0 <= w < nz) or not mask[u, v, w]:
                        pts.append((x, y, z))
                        break
    return pts


def _p95(values):
    values = sorted(values)
    rank = (95 * len(values) + 99) // 100
    return values[rank - 1]


def brute_hausdorff(pred_mask, ref_mask, spacing=(1.0, 1.0, 1.0)):
    """All-pairs 95th-percentile boundary Hausdorff distance, or None if a mask is empty."""
    pa = _boundary_points(np.asarray(pred_mask, bool))
    pb = _boundary_points(np.asarray(ref_mask, bool))
    if not pa or not pb:
        return None
    sx, sy, sz = (float(s) for s in spacing)

    def directed(src, dst):
        out = []
        for x, y, z in src:
            best = math.inf
            for u, v, w in dst:
                dx, dy, dz = (x - u) * sx, (y - v) * sy, (z - w) * sz
                best = min(best, math.sqrt(dx * dx + dy * dy + dz * dz))
            out.append(best)
        return out

    return max(_p95(directed(pa, pb)), _p95(directed(pb, pa)))


def _components(mask, per_slice):
    # BFS labelling with 6-connectivity (4-connectivity within z-slices if per_slice)
    ids = np.zeros(mask.shape, dtype=np.int64)
    nxt = 0
    nx, ny, nz = mask.shape
    nbrs = _NEIGHBOURS_6[:4] if per_slice else _NEIGHBOURS_6
    for start in zip(*np.nonzero(mask)):
        if ids[start]:
            continue
        nxt += 1
        ids[start] = nxt
        queue = deque([start])
        while queue:
            x, y, z = queue.popleft()
            for dx, dy, dz in nbrs:
                u, v, w = x + dx, y + dy, z + dz
                if 0 <= u < nx and 0 <= v < ny and 0 <= w < nz and mask[u, v, w] and not ids[u, v, w]:
                    ids[u, v, w] = nxt
                    queue.append((u, v, w))
    return ids


def brute_rand(pred_labels, ref_labels, foreground=1, per_slice=False):
    """Rand error by enumerating every unordered voxel pair."""
    sp = _components(np.asarray(pred_labels) == foreground, per_slice).ravel()
    sr = _components(np.asarray(ref_labels) == foreground, per_slice).ravel()
    tp = fp = fn = 0
    n = sp.size
    for j in range(n):
        for k in range(j + 1, n):
            same_p = sp[j] > 0 and sp[j] == sp[k]
            same_r = sr[j] > 0 and sr[j] == sr[k]
            if same_p and same_r:
                tp += 1
            elif same_p:
                fp += 1
            elif same_r:
                fn += 1
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 1.0 - 2 * tp / denom
