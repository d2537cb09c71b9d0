"""Uniform FIFO replay buffer over preallocated arrays."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


class ReplayBuffer:
    """Ring buffer of ``(obs, action, reward, next_obs)`` transitions.

    Oldest records are evicted at capacity; sampling is uniform with
    replacement from the generator handed in at construction.
    """

    def __init__(self, capacity: int, rng: np.random.Generator,
                 obs_dim: int = 9, act_dim: int = 2, dtype=np.float32):
        if capacity < 1:
            raise InvalidInputError("capacity must be positive")
        self.capacity = capacity
        self._rng = rng
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.act = np.zeros((capacity, act_dim), dtype=dtype)
        self.rew = np.zeros(capacity, dtype=dtype)
        self.nxt = np.zeros((capacity, obs_dim), dtype=dtype)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def append(self, obs, action, reward, next_obs) -> None:
        i = self._head
        self.obs[i] = obs
        self.act[i] = action
        self.rew[i] = reward
        self.nxt[i] = next_obs
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise InvalidInputError("cannot sample from an empty buffer")
        idx = self._rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "nxt": self.nxt[idx],
        }
