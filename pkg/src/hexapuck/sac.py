"""Soft actor-critic baseline: twin critics, squashed Gaussian policy,
target-network smoothing, fixed entropy temperature."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import ACT_DIM, OBS_DIM
from .errors import InvalidInputError
from .learnkit import Adam, DenseNet, ReplayBuffer, Tensor
from .learnkit.nets import Linear

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SacConfig:
    reward_scale: float = 0.1
    tau: float = 0.005
    discount: float = 0.99
    hidden: tuple[int, ...] = (256, 256)
    batch_size: int = 128
    lr: float = 3e-4
    entropy_temp: float = 1.0
    auto_temp: bool = False
    replay_capacity: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise InvalidInputError("tau must lie in (0, 1]")
        if not 0.0 < self.discount < 1.0:
            raise InvalidInputError("discount must lie in (0, 1)")
        if self.reward_scale <= 0.0:
            raise InvalidInputError("reward_scale must be positive")


class SquashedGaussianPolicy:
    """Rectifier trunk with mean and log-std heads; actions are tanh-squashed."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: tuple[int, ...],
                 rng: np.random.Generator, dtype=np.float32):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.dtype = dtype
        widths = (obs_dim, *hidden)
        self.trunk = [Linear(widths[i], widths[i + 1], rng, dtype=dtype)
                      for i in range(len(widths) - 1)]
        self.mean_head = Linear(widths[-1], act_dim, rng, dtype=dtype, weight_scale=1e-2)
        self.log_std_head = Linear(widths[-1], act_dim, rng, dtype=dtype, weight_scale=1e-2)

    def parameters(self) -> list[Tensor]:
        params = []
        for layer in self.trunk:
            params.extend((layer.W, layer.b))
        params.extend((self.mean_head.W, self.mean_head.b,
                       self.log_std_head.W, self.log_std_head.b))
        return params

    def _heads_raw(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = obs.astype(self.dtype, copy=False)
        for layer in self.trunk:
            h = layer.apply_raw(h)
            np.maximum(h, 0.0, out=h)
        mean = self.mean_head.apply_raw(h)
        log_std = np.clip(self.log_std_head.apply_raw(h), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        """Single-observation action; squashed mean when deterministic."""
        mean, log_std = self._heads_raw(np.asarray(obs, dtype=self.dtype)[None, :])
        if deterministic:
            return np.tanh(mean[0]).astype(float)
        eps = rng.normal(0.0, 1.0, self.act_dim).astype(self.dtype)
        return np.tanh(mean[0] + np.exp(log_std[0]) * eps).astype(float)

    def sample_np(self, obs: np.ndarray, eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tape-free reparameterized sample and its log-probability."""
        mean, log_std = self._heads_raw(obs)
        std = np.exp(log_std)
        pre = mean + std * eps
        act = np.tanh(pre)
        log_prob = (-0.5 * eps * eps - log_std - HALF_LOG_2PI
                    - np.log(1.0 - act * act + SQUASH_EPS)).sum(axis=1, keepdims=True)
        return act, log_prob

    def sample_tape(self, obs: np.ndarray, eps: np.ndarray) -> tuple[Tensor, Tensor]:
        """Differentiable reparameterized sample; mirrors `sample_np` op for op."""
        h = Tensor(obs.astype(self.dtype, copy=False))
        for layer in self.trunk:
            h = layer(h).relu()
        mean = self.mean_head(h)
        log_std = self.log_std_head(h).clip(LOG_STD_MIN, LOG_STD_MAX)
        std = log_std.exp()
        eps_t = Tensor(eps.astype(self.dtype, copy=False))
        pre = mean + std * eps_t
        act = pre.tanh()
        log_prob = (Tensor(np.asarray(-0.5, dtype=self.dtype)) * eps_t.square()
                    - log_std
                    - HALF_LOG_2PI
                    - (1.0 - act.square() + SQUASH_EPS).log()).sum_axis1()
        return act, log_prob


def target_soft_update(critics: list[Tensor], targets: list[Tensor], tau: float) -> list[Tensor]:
    """Parameterwise convex blend ``target <- (1 - tau) * target + tau * critic``."""
    if len(critics) != len(targets):
        raise InvalidInputError("parameter lists must align")
    for c, t in zip(critics, targets):
        t.data = (1.0 - tau) * t.data + tau * c.data
    return targets


class SacAgent:
    """Off-policy learner stepping one critic and one policy update per env step."""

    def __init__(self, cfg: SacConfig, obs_scales: np.ndarray,
                 seed: np.random.SeedSequence, dtype=np.float32):
        init_seq, runtime_seq, buffer_seq = seed.spawn(3)
        init_rng = np.random.Generator(np.random.PCG64(init_seq))
        self.cfg = cfg
        self.scales = np.asarray(obs_scales, dtype=float)
        self.dtype = dtype
        self.policy = SquashedGaussianPolicy(OBS_DIM, ACT_DIM, cfg.hidden, init_rng, dtype)
        critic_widths = (OBS_DIM + ACT_DIM, *cfg.hidden, 1)
        self.critics = [DenseNet(critic_widths, init_rng, dtype=dtype) for _ in range(2)]
        self.targets = [DenseNet(critic_widths, init_rng, dtype=dtype) for _ in range(2)]
        for c, t in zip(self.critics, self.targets):
            for cl, tl in zip(c.layers, t.layers):
                tl.W.data = cl.W.data.copy()
                tl.b.data = cl.b.data.copy()
        self.critic_opts = [Adam(c.parameters(), lr=cfg.lr) for c in self.critics]
        self.policy_opt = Adam(self.policy.parameters(), lr=cfg.lr)
        self.log_temp = math.log(cfg.entropy_temp)
        self._temp_m = self._temp_v = 0.0
        self._temp_t = 0
        self._rng = np.random.Generator(np.random.PCG64(runtime_seq))
        self.buffer = ReplayBuffer(cfg.replay_capacity,
                                   np.random.Generator(np.random.PCG64(buffer_seq)),
                                   dtype=dtype)
        self.frozen = False
        self.last_losses: dict = {}

    @property
    def entropy_temp(self) -> float:
        return math.exp(self.log_temp)

    # -- bench-facing interface ------------------------------------------------

    def act(self, obs: np.ndarray, step: int) -> np.ndarray:
        obs_norm = np.asarray(obs, dtype=float) / self.scales
        return self.policy_act(obs_norm, deterministic=self.frozen)

    def policy_act(self, obs_norm: np.ndarray, deterministic: bool = False) -> np.ndarray:
        action = self.policy.act(obs_norm, self._rng, deterministic)
        return np.clip(action, -1.0, 1.0)

    def observe(self, obs, action, rew, next_obs) -> None:
        if self.frozen:
            return
        self.buffer.append(np.asarray(obs, dtype=float) / self.scales, action, rew,
                           np.asarray(next_obs, dtype=float) / self.scales)

    def update(self) -> None:
        if self.frozen or len(self.buffer) < self.cfg.batch_size:
            return
        batch = self.buffer.sample(self.cfg.batch_size)
        closs = self.critic_update(batch)
        ploss = self.policy_update(batch)
        target_soft_update(
            [p for c in self.critics for p in c.parameters()],
            [p for t in self.targets for p in t.parameters()], self.cfg.tau)
        self.last_losses = {"critic": closs, "policy": ploss}

    # -- updates -----------------------------------------------------------------

    def critic_update(self, batch: dict) -> tuple[float, float]:
        """One Bellman regression step per critic against the twin targets."""
        eps = self._rng.normal(0.0, 1.0, (batch["nxt"].shape[0], ACT_DIM)).astype(self.dtype)
        next_act, next_logp = self.policy.sample_np(batch["nxt"], eps)
        target_in = np.concatenate([batch["nxt"], next_act], axis=1)
        q_next = np.minimum(self.targets[0].forward(target_in),
                            self.targets[1].forward(target_in))
        y = (self.cfg.reward_scale * batch["rew"][:, None]
             + self.cfg.discount * q_next
             - self.entropy_temp * next_logp).astype(self.dtype)

        critic_in = Tensor(np.concatenate([batch["obs"], batch["act"]], axis=1)
                           .astype(self.dtype))
        losses = []
        for critic, opt in zip(self.critics, self.critic_opts):
            opt.zero_grad()
            loss = (critic(critic_in) - Tensor(y)).square().mean()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        return tuple(losses)

    def policy_update(self, batch: dict) -> float:
        eps = self._rng.normal(0.0, 1.0, (batch["obs"].shape[0], ACT_DIM)).astype(self.dtype)
        self.policy_opt.zero_grad()
        act, log_prob = self.policy.sample_tape(batch["obs"], eps)
        q_in = Tensor.concat([Tensor(batch["obs"].astype(self.dtype)), act], axis=1)
        q_min = self.critics[0](q_in).minimum(self.critics[1](q_in))
        loss = (self.entropy_temp * log_prob - q_min).mean()
        loss.backward()
        self.policy_opt.step()
        if self.cfg.auto_temp:
            self._update_temperature(log_prob.data)
        return float(loss.data)

    def _update_temperature(self, log_prob: np.ndarray) -> None:
        """Dual-gradient step on the entropy temperature (target entropy -act_dim)."""
        grad = -float(np.mean(log_prob + ACT_DIM))
        self._temp_t += 1
        self._temp_m = 0.9 * self._temp_m + 0.1 * grad
        self._temp_v = 0.999 * self._temp_v + 0.001 * grad * grad
        m_hat = self._temp_m / (1.0 - 0.9 ** self._temp_t)
        v_hat = self._temp_v / (1.0 - 0.999 ** self._temp_t)
        self.log_temp -= self.cfg.lr * m_hat / (math.sqrt(v_hat) + 1e-8)
