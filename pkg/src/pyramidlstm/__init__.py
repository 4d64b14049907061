"""PyraMiD-LSTM: plane-parallel convolutional LSTM sweeps for volumetric segmentation."""

from .clstm import DIRECTIONS, CLSTMParams, Direction, sweep_backward, sweep_forward
from .network import (FCSpec, Network, PyramidSpec, init_uniform, load_checkpoint,
                      network_backward, network_forward, reference_architecture, param_count,
                      save_checkpoint)
from .parallel import get_num_threads, set_num_threads, threads
from .train import OptimizerState, Schedule, loss_and_grad, lr, rmsprop_step, train_loop

__version__ = "0.1.0"

__all__ = [
    "DIRECTIONS", "CLSTMParams", "Direction", "sweep_backward", "sweep_forward",
    "FCSpec", "Network", "PyramidSpec", "init_uniform", "load_checkpoint", "network_backward",
    "network_forward", "reference_architecture", "param_count", "save_checkpoint",
    "get_num_threads", "set_num_threads", "threads",
    "OptimizerState", "Schedule", "loss_and_grad", "lr", "rmsprop_step", "train_loop",
]
