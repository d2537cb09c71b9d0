"""Learned one-step dynamics: normalized observation deltas from (obs, action).

The network predicts deltas of the seven dynamic observation components; the
setpoint components are not modeled and pass through unchanged at planning
time. Inputs and delta targets are standardized by running statistics, which
keeps training well-scaled from the first gradient step of a deployment.
"""

from __future__ import annotations

import numpy as np

from ..env import N_DYNAMIC, OBS_DIM, ACT_DIM
from .autodiff import Tensor
from .nets import Adam, DenseNet
from .replay import ReplayBuffer


class RunningStats:
    """Per-dimension Welford accumulator with a floored standard deviation."""

    def __init__(self, dim: int, std_floor: float = 1e-3):
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)
        self.std_floor = std_floor

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.maximum(np.sqrt(self._m2 / self.count), self.std_floor)


class DynamicsModel:
    """MLP delta-model plus its standardizers and optimizer."""

    def __init__(self, rng: np.random.Generator, hidden: tuple[int, ...] = (200, 200),
                 lr: float = 3e-4, dtype=np.float32):
        widths = (OBS_DIM + ACT_DIM, *hidden, N_DYNAMIC)
        self.net = DenseNet(widths, rng=rng, dtype=dtype)
        self.opt = Adam(self.net.parameters(), lr=lr)
        self.in_stats = RunningStats(OBS_DIM + ACT_DIM)
        self.delta_stats = RunningStats(N_DYNAMIC)
        self.dtype = dtype
        self.updates = 0

    def observe(self, obs: np.ndarray, action: np.ndarray, next_obs: np.ndarray) -> None:
        """Fold one transition into the running input/target statistics."""
        self.in_stats.update(np.concatenate([obs, action]).astype(float))
        self.delta_stats.update((next_obs[:N_DYNAMIC] - obs[:N_DYNAMIC]).astype(float))

    def _standardize_input(self, x: np.ndarray) -> np.ndarray:
        mu = self.in_stats.mean.astype(self.dtype)
        sd = self.in_stats.std.astype(self.dtype)
        return (x - mu) / sd

    def train_step(self, buffer: ReplayBuffer, batch_size: int = 128) -> float | None:
        """One MSE gradient step on predicted deltas; None if data is short."""
        if len(buffer) < batch_size:
            return None
        batch = buffer.sample(batch_size)
        x = self._standardize_input(np.concatenate([batch["obs"], batch["act"]], axis=1))
        delta = batch["nxt"][:, :N_DYNAMIC] - batch["obs"][:, :N_DYNAMIC]
        mu = self.delta_stats.mean.astype(self.dtype)
        sd = self.delta_stats.std.astype(self.dtype)
        target = (delta - mu) / sd

        self.net.zero_grad()
        pred = self.net(Tensor(x))
        loss = (pred - Tensor(target)).square().mean()
        loss.backward()
        self.opt.step()
        self.updates += 1
        return float(loss.data)

    def predict(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Batched next-observation prediction (setpoints pass through)."""
        x = self._standardize_input(
            np.concatenate([obs, action], axis=1).astype(self.dtype, copy=False))
        delta = self.net.forward(x)
        mu = self.delta_stats.mean.astype(self.dtype)
        sd = self.delta_stats.std.astype(self.dtype)
        nxt = obs.astype(self.dtype, copy=True)
        nxt[:, :N_DYNAMIC] += delta * sd + mu
        return nxt


def train_dynamics(model: DynamicsModel, buffer: ReplayBuffer,
                   batch_size: int = 128) -> float | None:
    """One training step on the dynamics model; the spec-level entry point."""
    return model.train_step(buffer, batch_size)
