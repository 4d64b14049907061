"""Squared loss, RMSprop with momentum, learning-rate decay and the staged training loop."""

import csv
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .datapipe import AugmentConfig, sample_subvolume
from .errors import ConfigError, ShapeError
from .network import load_checkpoint, network_backward, network_forward, save_checkpoint
from .rng import substream

log = logging.getLogger(__name__)

LR_FLOOR = 1e-6
LR_SCALE = 1e-2
LR_HALF_LIFE = 100


def lr(epoch):
    """Learning rate at ``epoch``: floor 1e-6 plus 1e-2 halved every 100 epochs."""
    # (0.5 ** (1/100)) ** epoch, evaluated as one power so the rounding error
    # of the 100th root is not raised to the epoch-th power
    return LR_FLOOR + LR_SCALE * 0.5 ** (epoch / LR_HALF_LIFE)


@dataclass
class OptimizerState:
    mse: np.ndarray
    momentum: np.ndarray
    eps: float = 1e-5
    rho_mse: float = 0.9
    rho_m: float = 0.9

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def rmsprop_step(net, opt, grads, lr_value):
    """One in-place update of ``net.params`` and ``opt``.

    mse <- rho*mse + (1-rho)*g^2; G = g / (sqrt(mse) + eps);
    momentum <- rho_m*momentum + (1-rho_m)*G; theta <- theta - lr*momentum.
    """
    if grads.shape != net.params.shape:
        raise ShapeError(f"gradient length {grads.size} != parameter count {net.params.size}")
    opt.mse *= opt.rho_mse
    opt.mse += (1.0 - opt.rho_mse) * grads * grads
    g = grads / (np.sqrt(opt.mse) + opt.eps)
    opt.momentum *= opt.rho_m
    opt.momentum += (1.0 - opt.rho_m) * g
    net.params -= lr_value * opt.momentum
    return net, opt


def loss_and_grad(probs, target):
    """Mean squared difference to the one-hot target and its gradient w.r.t. ``probs``."""
    y_star = target.one_hot() if hasattr(target, "one_hot") else np.asarray(target, dtype=np.float64)
    if y_star.shape != probs.shape:
        raise ShapeError(f"target shape {y_star.shape} does not match output {probs.shape}")
    diff = probs - y_star
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


@dataclass
class Schedule:
    """Bootstrapping stages as ``(epochs, (w, h, d))`` sub-volume sizes."""

    stages: list = field(default_factory=list)

    def __post_init__(self):
        self.stages = [(int(e), tuple(int(v) for v in dims)) for e, dims in self.stages]
        for e, dims in self.stages:
            if e < 0 or len(dims) != 3 or min(dims) < 1:
                raise ConfigError(f"bad stage ({e}, {dims})", field="schedule.stages")

    @property
    def total_epochs(self):
        return sum(e for e, _ in self.stages)

    def locate(self, global_epoch):
        """``(stage index, epoch within stage, dims)`` of a global epoch number."""
        start = 0
        for s, (e, dims) in enumerate(self.stages):
            if global_epoch < start + e:
                return s, global_epoch - start, dims
            start += e
        raise IndexError(f"epoch {global_epoch} beyond schedule of {start} epochs")


DESK_SCHEDULE = Schedule([(300, (16, 16, 8)), (200, (32, 32, 12)), (100, (48, 48, 16))])
FULL_SCHEDULE_EM = Schedule([(3000, (64, 64, 8)), (2000, (128, 128, 15)), (1000, (256, 256, 20))])
FULL_SCHEDULE_MR = Schedule([(3000, (64, 64, 8)), (2000, (128, 128, 15)), (1000, (240, 240, 25))])


def train_step(net, opt, x, target, lr_value):
    probs, caches = network_forward(x, net)
    loss, dprobs = loss_and_grad(probs, target)
    grads = network_backward(net, caches, dprobs)
    rmsprop_step(net, opt, grads, lr_value)
    return loss


LOG_FIELDS = ("epoch", "stage", "lr", "loss", "wall_ms")


def train_loop(net, data, schedule, seed, augment=None, opt=None, start_epoch=0,
               stop_epoch=None, log_path=None, checkpoint_path=None, checkpoint_every=0):
    """Staged training; one sampled sub-volume per epoch, one update per epoch.

    ``data`` is a list of ``(input volume, LabelVolume)`` pairs. The
    learning-rate epoch counter restarts at 0 in every stage. All randomness
    for epoch ``e`` is drawn from generators keyed on ``(seed, e)``, so a run
    resumed at ``start_epoch`` continues exactly like an uninterrupted one.
    Returns ``(net, opt, rows)`` with one log row per epoch run.
    """
    if not data:
        raise ConfigError("training data is empty", field="data.train_inputs")
    if not net.ends_in_softmax:
        raise ConfigError("last layer must be a softmax FC layer", field="arch.layers")
    augment = augment or AugmentConfig()
    for _, dims in schedule.stages:
        for x, lab in data:
            if any(s > v for s, v in zip(dims, x.shape[:3])):
                raise ConfigError(f"sub-volume {dims} larger than data volume {x.shape[:3]}",
                                  field="schedule.stages")
    if opt is None:
        opt = OptimizerState.zeros(net.params.size)
    stop = schedule.total_epochs if stop_epoch is None else min(stop_epoch, schedule.total_epochs)

    writer = fh = None
    if log_path is not None:
        fresh = start_epoch == 0 or not os.path.exists(log_path)
        fh = open(log_path, "w" if fresh else "a", newline="")
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(LOG_FIELDS)

    rows = []
    try:
        for epoch in range(start_epoch, stop):
            stage, local, dims = schedule.locate(epoch)
            t0 = time.perf_counter()
            pick = substream(seed, "sampling", epoch).integers(len(data))
            x, lab = data[pick]
            sample = sample_subvolume(x, lab, dims, substream(seed, "augment", epoch), augment)
            rate = lr(local)
            loss = train_step(net, opt, sample.input, sample.target, rate)
            row = (epoch, stage, rate, loss, (time.perf_counter() - t0) * 1e3)
            rows.append(row)
            if writer is not None:
                writer.writerow([epoch, stage, repr(rate), repr(loss), f"{row[4]:.3f}"])
            if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, net, opt, epoch + 1, seed)
            log.debug("epoch %d stage %d lr %.6g loss %.6g", epoch, stage, rate, loss)
    finally:
        if fh is not None:
            fh.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, net, opt, stop, seed)
    return net, opt, rows


def resume(path, expect=None):
    """Load ``(net, opt, epoch, seed)`` from a checkpoint written by :func:`train_loop`."""
    net, mse, mom, epoch, seed = load_checkpoint(path, expect=expect)
    return net, OptimizerState(mse, mom), epoch, seed
