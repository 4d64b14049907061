import csv

import numpy as np
import pytest

from pyramidlstm.datapipe import AugmentConfig
from pyramidlstm.errors import ConfigError, ShapeError
from pyramidlstm.network import FCSpec, Network, PyramidSpec, init_uniform
from pyramidlstm.train import (DESK_SCHEDULE, OptimizerState, Schedule, loss_and_grad, lr,
                               resume, rmsprop_step, train_loop)
from pyramidlstm.volume import LabelVolume

FLIPS = AugmentConfig(rotate_z=True, flip_x=True, flip_y=True, flip_z=True)


def one_weight(g):
    net = Network(1, [FCSpec(1, "tanh")])
    return net, OptimizerState.zeros(net.params.size), np.full(net.params.size, float(g))


def test_rmsprop_hand_values():
    net, opt, g = one_weight(1.0)
    rmsprop_step(net, opt, g, 0.01)
    assert abs(opt.mse[0] - 0.1) <= 1e-15
    big_g = 1.0 / (np.sqrt(0.1) + 1e-5)
    assert abs(big_g - 3.16218) <= 1e-5
    assert abs(opt.momentum[0] - 0.1 * big_g) <= 1e-15
    assert abs(net.params[0] + 0.01 * 0.1 * big_g) <= 1e-17
    assert abs(net.params[0] + 3.16218e-3) <= 1e-8


def test_rmsprop_zero_gradient():
    net, opt, g = one_weight(0.0)
    rmsprop_step(net, opt, g, 0.01)
    assert not net.params.any() and not opt.mse.any()
    with pytest.raises(ShapeError):
        rmsprop_step(net, opt, np.zeros(5), 0.01)


@pytest.mark.parametrize("g", [1e-6, 1.0, 1e6, -3.0])
def test_update_magnitude_normalised(g):
    net, opt, grads = one_weight(g)
    for _ in range(500):
        before = net.params.copy()
        rmsprop_step(net, opt, grads, 0.01)
        assert np.all(opt.mse >= 0)
    step = abs(net.params[0] - before[0])
    # eps keeps |G| just under 1 for tiny gradients
    expected = 0.01 * abs(g) / (abs(g) + 1e-5)
    assert abs(step - expected) <= 1e-12 * 0.01 + 1e-3 * expected


def test_lr_values():
    assert lr(0) == 1e-6 + 1e-2
    assert abs(lr(0) - 0.010001) <= 1e-17
    assert abs(lr(100) - 0.005001) <= 1e-15
    for e in (0, 13, 50, 250, 999):
        assert abs((lr(e + 100) - 1e-6) / ((lr(e) - 1e-6) / 2) - 1) <= 1e-15
        assert lr(e + 1) < lr(e)
    assert abs(lr(10_000) - 1e-6) <= 1e-30 + 1e-2 * 0.5 ** 100


def test_loss_examples():
    target = LabelVolume(np.zeros((1, 1, 1), np.uint8), 2)
    loss, grad = loss_and_grad(np.full((1, 1, 1, 2), 0.5), target)
    assert loss == 0.25
    assert grad.ravel().tolist() == [-0.5, 0.5]
    loss, grad = loss_and_grad(target.one_hot(), target)
    assert loss == 0.0 and not grad.any()
    with pytest.raises(ShapeError):
        loss_and_grad(np.zeros((1, 1, 1, 3)), target)


def test_schedule_locate():
    s = Schedule([(3, (2, 2, 2)), (2, (4, 4, 4))])
    assert s.total_epochs == 5
    assert s.locate(2) == (0, 2, (2, 2, 2))
    assert s.locate(3) == (1, 0, (4, 4, 4))
    with pytest.raises(IndexError):
        s.locate(5)
    assert DESK_SCHEDULE.stages[0] == (300, (16, 16, 8))


def toy_data(seed=0, n=2, dims=(6, 6, 4)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = rng.normal(size=dims + (1,))
        out.append((x, LabelVolume((x[..., 0] > 0).astype(np.uint8), 2)))
    return out


def tiny_net(seed=0):
    return init_uniform(Network(1, [PyramidSpec(2, 3), FCSpec(2, "softmax")]), seed)


def test_lr_resets_each_stage():
    sched = Schedule([(3, (4, 4, 2)), (2, (5, 5, 3))])
    _, _, rows = train_loop(tiny_net(), toy_data(), sched, seed=1)
    rates = [r[2] for r in rows]
    assert rates[0] == rates[3] == lr(0)
    assert rates[4] == lr(1)
    assert [r[1] for r in rows] == [0, 0, 0, 1, 1]


def test_training_is_deterministic():
    sched = Schedule([(4, (4, 4, 3))])
    a = train_loop(tiny_net(), toy_data(), sched, seed=5, augment=FLIPS)[0]
    b = train_loop(tiny_net(), toy_data(), sched, seed=5, augment=FLIPS)[0]
    assert a.params.tobytes() == b.params.tobytes()


def test_resume_matches_uninterrupted(tmp_path):
    sched = Schedule([(3, (4, 4, 3)), (3, (6, 6, 4))])
    data = toy_data()
    full, full_opt, _ = train_loop(tiny_net(), data, sched, seed=9, augment=FLIPS)
    ckpt = tmp_path / "run.ckpt"
    log = tmp_path / "loss.csv"
    train_loop(tiny_net(), data, sched, seed=9, augment=FLIPS, stop_epoch=4,
               checkpoint_path=ckpt, log_path=log)
    net, opt, epoch, seed = resume(ckpt, expect=tiny_net())
    assert (epoch, seed) == (4, 9)
    net, opt, _ = train_loop(net, data, sched, seed, augment=FLIPS, opt=opt, start_epoch=epoch,
                             log_path=log)
    assert net.params.tobytes() == full.params.tobytes()
    assert opt.mse.tobytes() == full_opt.mse.tobytes()
    with open(log) as f:
        rows = list(csv.DictReader(f))
    assert [int(r["epoch"]) for r in rows] == list(range(6))
    assert list(rows[0]) == ["epoch", "stage", "lr", "loss", "wall_ms"]


def test_checkpoint_cadence(tmp_path):
    ckpt = tmp_path / "c.ckpt"
    train_loop(tiny_net(), toy_data(), Schedule([(4, (4, 4, 2))]), seed=0, stop_epoch=3,
               checkpoint_path=ckpt, checkpoint_every=2)
    assert resume(ckpt)[2] == 3


def test_config_errors():
    with pytest.raises(ConfigError):
        train_loop(tiny_net(), toy_data(), Schedule([(1, (7, 6, 4))]), seed=0)
    with pytest.raises(ConfigError):
        train_loop(tiny_net(), [], Schedule([(1, (2, 2, 2))]), seed=0)
    tanh_net = Network(1, [FCSpec(2, "tanh")])
    with pytest.raises(ConfigError):
        train_loop(tanh_net, toy_data(), Schedule([(1, (2, 2, 2))]), seed=0)


def test_loss_decreases_on_constant_target():
    rng = np.random.default_rng(2)
    data = [(rng.normal(size=(6, 6, 4, 1)), LabelVolume(np.ones((6, 6, 4), np.uint8), 2))]
    _, _, rows = train_loop(tiny_net(3), data, Schedule([(150, (6, 6, 4))]), seed=3)
    means = [np.mean([r[3] for r in rows[k:k + 50]]) for k in (0, 50, 100)]
    assert means[0] > means[1] > means[2]
