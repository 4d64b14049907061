import numpy as np
import pytest

from pyramidlstm.clstm import DIRECTIONS, CLSTMParams, Direction, sweep_backward, sweep_forward
from pyramidlstm.errors import ShapeError
from pyramidlstm.oracle import finite_diff, gated_layer, naive_sweep
from pyramidlstm.volume import flip

from conftest import max_rel_err, random_params

AXIS_NAME = "xyz"


def test_six_distinct_directions():
    assert len(set(DIRECTIONS)) == 6
    assert {(d.axis, d.sign) for d in DIRECTIONS} == {(a, s) for a in range(3) for s in (1, -1)}


def test_params_validation():
    with pytest.raises(ShapeError):
        CLSTMParams(np.zeros((3, 3, 1, 8)), np.zeros((5, 5, 2, 8)), np.zeros(8))
    with pytest.raises(ShapeError):
        CLSTMParams(np.zeros((2, 2, 1, 8)), np.zeros((2, 2, 2, 8)), np.zeros(8))
    p = CLSTMParams.zeros(3, 2, 5)
    assert (p.in_channels, p.hidden, p.filter_size) == (3, 2, (5, 5))
    assert p.theta_xf.shape == (5, 5, 3, 2) and p.bias_o.shape == (2,)


def test_zero_params_give_zero_output(rng):
    x = rng.normal(size=(4, 3, 5, 2))
    for d in DIRECTIONS:
        h, cache = sweep_forward(x, CLSTMParams.zeros(2, 3, 3), d)
        assert not h.any()
        assert np.allclose(cache.i, 0.5) and np.allclose(cache.f, 0.5) and np.allclose(cache.o, 0.5)


def test_single_voxel_hand_value():
    p = CLSTMParams(np.ones((1, 1, 1, 4)), np.ones((1, 1, 1, 4)), np.zeros(4))
    h, _ = sweep_forward(np.zeros((1, 1, 1, 1)), p, Direction(2, 1))
    assert h.ravel().tolist() == [0.0]
    # a nonzero input exercises every gate once
    x = 0.3
    h, _ = sweep_forward(np.full((1, 1, 1, 1), x), p, Direction(2, 1))
    s = 1 / (1 + np.exp(-x))
    assert abs(h.item() - s * np.tanh(np.tanh(x) * s)) <= 1e-15


@pytest.mark.parametrize("d", DIRECTIONS, ids=str)
def test_matches_oracle(rng, d):
    x = rng.normal(size=(6, 5, 4, 3))
    p = random_params(rng, 3, 2)
    h, cache = sweep_forward(x, p, d)
    assert np.max(np.abs(h - naive_sweep(x, p, d))) <= 1e-12
    assert cache.depth == x.shape[d.axis]


@pytest.mark.parametrize("shape", [(1, 4, 3, 1), (4, 1, 3, 2), (3, 4, 1, 1), (1, 1, 5, 1)])
def test_degenerate_shapes_match_oracle(rng, shape):
    p = random_params(rng, shape[3], 2)
    x = rng.normal(size=shape)
    for d in DIRECTIONS:
        assert np.max(np.abs(sweep_forward(x, p, d)[0] - naive_sweep(x, p, d))) <= 1e-12


def test_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        sweep_forward(np.zeros((3, 3, 3, 2)), random_params(rng, 1, 2), DIRECTIONS[0])


@pytest.mark.parametrize("d", DIRECTIONS, ids=str)
def test_causality(rng, d):
    x = rng.normal(size=(5, 4, 6, 2))
    p = random_params(rng, 2, 2)
    h, _ = sweep_forward(x, p, d)
    n = x.shape[d.axis]
    for k in range(n):
        later = slice(k + 1, None) if d.sign > 0 else slice(0, k)
        y = x.copy()
        idx = [slice(None)] * 4
        idx[d.axis] = later
        y[tuple(idx)] += rng.normal(size=y[tuple(idx)].shape)
        h2, _ = sweep_forward(y, p, d)
        here = [slice(None)] * 4
        here[d.axis] = k
        assert np.array_equal(h2[tuple(here)], h[tuple(here)])


@pytest.mark.parametrize("axis", range(3))
def test_direction_symmetry(rng, axis):
    x = rng.normal(size=(4, 5, 3, 2))
    p = random_params(rng, 2, 3)
    name = AXIS_NAME[axis]
    fwd, _ = sweep_forward(flip(x, name), p, Direction(axis, 1))
    bwd, _ = sweep_forward(x, p, Direction(axis, -1))
    assert np.array_equal(fwd, flip(bwd, name))


def test_gate_ranges(rng):
    x = rng.normal(size=(5, 5, 7, 2))
    p = random_params(rng, 2, 3)
    h, c = sweep_forward(x, p, Direction(2, 1))
    for g in (c.i, c.f, c.o):
        assert g.min() > 0 and g.max() < 1
    assert np.abs(c.g).max() < 1 and np.abs(h).max() < 1
    # cache planes are stored in traversal order, so |c_t| <= t + 1
    bound = np.arange(1, 8).reshape(7, 1, 1, 1)
    assert np.all(np.abs(c.c) <= bound)


def test_gate_ranges_saturated(rng):
    # float64 sigmoid rounds to exactly 0 or 1 far out, so only closed bounds hold
    x = rng.normal(scale=3.0, size=(5, 5, 7, 2))
    p = random_params(rng, 2, 3, scale=2.0)
    h, c = sweep_forward(x, p, Direction(2, 1))
    for g in (c.i, c.f, c.o):
        assert g.min() >= 0 and g.max() <= 1
    assert np.abs(h).max() <= 1 and np.all(np.isfinite(c.c))


def test_zero_dh_gives_zero_grads(rng):
    x = rng.normal(size=(3, 3, 3, 2))
    p = random_params(rng, 2, 2)
    h, cache = sweep_forward(x, p, DIRECTIONS[3])
    dx, dp = sweep_backward(cache, p, np.zeros_like(h))
    assert not dx.any()
    assert not any(a.any() for a in dp.arrays())


def test_dh_shape_mismatch(rng):
    x = rng.normal(size=(3, 3, 3, 2))
    p = random_params(rng, 2, 2)
    h, cache = sweep_forward(x, p, DIRECTIONS[0])
    with pytest.raises(ShapeError):
        sweep_backward(cache, p, np.zeros((3, 3, 2, 2)))


def _sweep_grads_numeric(x, p, d, r):
    def f_x(v):
        return np.sum(r * sweep_forward(v.reshape(x.shape), p, d)[0])

    def f_p(v):
        n1, n2 = p.wx.size, p.wh.size
        q = CLSTMParams(v[:n1].reshape(p.wx.shape), v[n1:n1 + n2].reshape(p.wh.shape), v[n1 + n2:])
        return np.sum(r * sweep_forward(x, q, d)[0])

    theta = np.concatenate([a.ravel() for a in p.arrays()])
    return finite_diff(f_x, x.ravel()), finite_diff(f_p, theta)


@pytest.mark.parametrize("d", DIRECTIONS, ids=str)
def test_backward_finite_difference(rng, d):
    x = rng.normal(size=(4, 4, 3, 2))
    p = random_params(rng, 2, 2)
    h, cache = sweep_forward(x, p, d)
    r = rng.normal(size=h.shape)
    dx, dp = sweep_backward(cache, p, r)
    num_x, num_p = _sweep_grads_numeric(x, p, d, r)
    analytic_p = np.concatenate([a.ravel() for a in dp.arrays()])
    assert max_rel_err(dx, num_x) <= 1e-5
    assert max_rel_err(analytic_p, num_p) <= 1e-5


@pytest.mark.parametrize("axis", range(3))
def test_depth_one_is_gated_layer(rng, axis):
    shape = [4, 3, 5, 2]
    shape[axis] = 1
    x = rng.normal(size=shape)
    p = random_params(rng, 2, 2)
    d = Direction(axis, 1)
    h, cache = sweep_forward(x, p, d)
    assert np.max(np.abs(h - gated_layer(x, p, axis))) <= 1e-12
    r = rng.normal(size=h.shape)
    dx, dp = sweep_backward(cache, p, r)
    # the recurrent kernels never contribute at depth 1
    assert not dp.wh.any()
    n1 = p.wx.size

    def f(v):
        q = CLSTMParams(v[:n1].reshape(p.wx.shape), p.wh, v[n1:])
        return np.sum(r * gated_layer(x, q, axis))

    num = finite_diff(f, np.concatenate([p.wx.ravel(), p.bias]))
    assert max_rel_err(np.concatenate([dp.wx.ravel(), dp.bias]), num) <= 1e-5


@pytest.mark.parametrize("d", DIRECTIONS, ids=str)
def test_no_cache_path_identical(rng, d):
    x = rng.normal(size=(5, 4, 6, 2))
    p = random_params(rng, 2, 3)
    h, cache = sweep_forward(x, p, d)
    h2, none = sweep_forward(x, p, d, keep_cache=False)
    assert none is None and h.tobytes() == h2.tobytes()
