"""Self-contained differentiable function-approximator kit."""

from .autodiff import Tensor
from .dynamics_model import DynamicsModel, RunningStats, train_dynamics
from .nets import (Adam, DenseNet, Linear, adam_step, gradients,
                   load_checkpoint, save_checkpoint)
from .replay import ReplayBuffer

__all__ = [
    "Adam", "DenseNet", "DynamicsModel", "Linear", "ReplayBuffer", "RunningStats",
    "Tensor", "adam_step", "gradients", "load_checkpoint", "save_checkpoint",
    "train_dynamics",
]
