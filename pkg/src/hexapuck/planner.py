"""Sampling-based model-predictive planners over the learned dynamics model.

`mppi_plan` draws noise-perturbed action sequences around a nominal plan,
scores them by model rollouts of the exact environment reward, and
exponentially reweights them by return. The Max-Diffusion variant adds a
temperature-weighted path-diversity bonus (log-determinant of the covariance
of successive predicted state differences) that is annealed away during the
second half of training; at zero temperature it reduces bitwise to MPPI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import ACT_DIM, N_DYNAMIC, OBS_DIM, OBS_SX, OBS_X, OBS_XDOT, OBS_YDOT, RewardParams, reward_kernel
from .errors import InvalidInputError
from .learnkit import DynamicsModel, ReplayBuffer, train_dynamics

STATE_CLIP = 1e6  # keeps exploded float32 rollouts finite; they score terribly anyway


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 20
    samples: int = 4096
    temperature: float = 0.1       # return-weighting temperature
    discount: float = 0.95
    noise_std: float = 0.3         # exploration noise, normalized action units
    alpha: float = 0.1             # diversity temperature; 0 recovers plain MPPI
    covariance_jitter: float = 1e-6

    def __post_init__(self):
        if self.horizon < 0 or self.samples < 1:
            raise InvalidInputError("horizon must be >= 0 and samples >= 1")
        if self.temperature <= 0 or not 0.0 < self.discount <= 1.0 or self.alpha < 0:
            raise InvalidInputError("bad planner temperatures/discount")


def new_nominal_plan(horizon: int) -> np.ndarray:
    return np.zeros((horizon, ACT_DIM))


def shift_plan(nominal: np.ndarray) -> np.ndarray:
    """Receding-horizon shift: drop the executed action, zero-fill the tail."""
    shifted = np.empty_like(nominal)
    shifted[:-1] = nominal[1:]
    shifted[-1] = 0.0
    return shifted


def _batch_rollout(
    model: DynamicsModel,
    obs_norm: np.ndarray,
    action_seqs: np.ndarray,
    scales: np.ndarray,
    params: RewardParams,
    discount: float,
    collect_paths: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (discounted returns (K,), dynamic-state paths (K,H,7) or None).

    Each step feeds the current predicted observation and the step's action to
    the delta model and scores the *successor* observation with the exact
    environment reward, mirroring one control period of the real loop.
    """
    k, horizon, _ = action_seqs.shape
    dtype = model.dtype
    states = np.repeat(obs_norm.astype(dtype)[None, :], k, axis=0)
    returns = np.zeros(k)
    paths = np.empty((k, horizon, N_DYNAMIC), dtype=dtype) if collect_paths else None
    pos_scale = scales.astype(dtype)
    gamma_t = 1.0
    for t in range(horizon):
        act = action_seqs[:, t, :].astype(dtype)
        states = model.predict(states, act)
        np.clip(states, -STATE_CLIP, STATE_CLIP, out=states)
        if collect_paths:
            paths[:, t, :] = states[:, :N_DYNAMIC]
        meters = states * pos_scale
        dx = meters[:, OBS_SX] - meters[:, OBS_X]
        dy = meters[:, OBS_SX + 1] - meters[:, OBS_X + 1]
        rew = reward_kernel(dx, dy, meters[:, OBS_XDOT], meters[:, OBS_YDOT],
                            act[:, 0], act[:, 1], params)
        returns += gamma_t * rew
        gamma_t *= discount
    return returns, paths


def rollout(
    model: DynamicsModel,
    obs_norm: np.ndarray,
    actions: np.ndarray,
    scales: np.ndarray,
    params: RewardParams,
    discount: float,
) -> tuple[np.ndarray, float]:
    """Single-sequence rollout: (predicted normalized states (H,9), return)."""
    obs = np.asarray(obs_norm, dtype=float)
    if obs.shape != (OBS_DIM,) or not np.isfinite(obs).all():
        raise InvalidInputError("rollout needs a finite 9-vector observation")
    acts = np.asarray(actions, dtype=float)
    if acts.ndim != 2 or acts.shape[1] != ACT_DIM:
        raise InvalidInputError("actions must be an (H, 2) sequence")
    horizon = acts.shape[0]
    if horizon == 0:
        return np.zeros((0, OBS_DIM)), 0.0
    states = np.empty((horizon, OBS_DIM))
    current = obs.astype(model.dtype)[None, :]
    total = 0.0
    gamma_t = 1.0
    for t in range(horizon):
        current = model.predict(current, acts[None, t].astype(model.dtype))
        np.clip(current, -STATE_CLIP, STATE_CLIP, out=current)
        states[t] = current[0]
        meters = states[t] * scales
        dx = meters[OBS_SX] - meters[OBS_X]
        dy = meters[OBS_SX + 1] - meters[OBS_X + 1]
        total += gamma_t * float(reward_kernel(dx, dy, meters[OBS_XDOT], meters[OBS_YDOT],
                                               acts[t, 0], acts[t, 1], params))
        gamma_t *= discount
    return states, total


def maxdiff_bonus(predicted_states: np.ndarray, alpha: float,
                  jitter: float = 1e-6) -> float:
    """Path-diversity bonus: alpha/2 times the log-determinant of the
    (jittered) covariance of successive dynamic-state differences."""
    states = np.asarray(predicted_states, dtype=float)[:, :N_DYNAMIC]
    if states.shape[0] < 2:
        raise InvalidInputError("need at least two predicted states")
    return alpha * float(_path_logdet(states[None, :, :], jitter)[0]) / 2.0


def _path_logdet(paths: np.ndarray, jitter: float) -> np.ndarray:
    """log det of per-path step-difference covariances; paths (K, H, D)."""
    diffs = np.diff(paths.astype(float), axis=1)
    centered = diffs - diffs.mean(axis=1, keepdims=True)
    cov = np.einsum("kti,ktj->kij", centered, centered) / diffs.shape[1]
    cov += jitter * np.eye(paths.shape[2])
    _, logdet = np.linalg.slogdet(cov)
    return logdet


def anneal_alpha(step: int, total_steps: int, cfg: PlannerConfig) -> float:
    """Constant over the first half of training, then exponential decay to
    alpha/100 at the final step."""
    if not 0 <= step <= total_steps:
        raise InvalidInputError("step must lie in [0, total_steps]")
    half = total_steps / 2.0
    if step < half:
        return cfg.alpha
    return cfg.alpha * 0.01 ** ((step - half) / (total_steps - half))


def mppi_plan(
    model: DynamicsModel,
    obs_norm: np.ndarray,
    nominal: np.ndarray,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    scales: np.ndarray,
    params: RewardParams,
    alpha: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One planning step; returns (first action, new nominal, diagnostics).

    The new nominal is the return-weighted average of the sampled sequences
    (weights ``softmax((R - max R) / temperature)``); callers shift it with
    `shift_plan` after executing the first action.
    """
    horizon = cfg.horizon
    noise = rng.normal(0.0, 1.0, (cfg.samples, horizon, ACT_DIM)) * cfg.noise_std
    seqs = np.clip(nominal[None, :, :] + noise, -1.0, 1.0)

    returns, paths = _batch_rollout(model, obs_norm, seqs, scales, params,
                                    cfg.discount, collect_paths=alpha != 0.0)
    if alpha != 0.0:
        returns = returns + alpha * _path_logdet(paths, cfg.covariance_jitter) / 2.0

    valid = np.isfinite(returns)
    info = {"valid": int(valid.sum()), "alpha": alpha}
    if not valid.any():
        info["fallback"] = True
        return np.zeros(ACT_DIM), np.zeros_like(nominal), info

    shifted = np.where(valid, returns - returns[valid].max(), -np.inf)
    weights = np.exp(shifted / cfg.temperature)
    weights[~valid] = 0.0
    weights /= weights.sum()
    new_nominal = np.einsum("k,khj->hj", weights, seqs)

    info["best_return"] = float(returns[valid].max())
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(weights > 0.0, weights * np.log(weights), 0.0))
    info["weight_entropy"] = float(ent)
    return new_nominal[0].copy(), new_nominal, info


class MppiAgent:
    """Receding-horizon planning agent with an online-trained dynamics model.

    NN-MPPI is the ``alpha = 0`` special case; Max-Diffusion sets ``alpha > 0``
    and anneals it against ``total_steps``.
    """

    def __init__(
        self,
        planner_cfg: PlannerConfig,
        total_steps: int,
        obs_scales: np.ndarray,
        reward_params: RewardParams,
        seed: np.random.SeedSequence,
        model_hidden: tuple[int, ...] = (200, 200),
        lr: float = 3e-4,
        batch_size: int = 128,
        replay_capacity: int = 100_000,
        dtype=np.float32,
    ):
        init_seq, plan_seq, buffer_seq = seed.spawn(3)
        self.cfg = planner_cfg
        self.total_steps = total_steps
        self.scales = np.asarray(obs_scales, dtype=float)
        self.reward_params = reward_params
        self.batch_size = batch_size
        self.model = DynamicsModel(np.random.Generator(np.random.PCG64(init_seq)),
                                   hidden=model_hidden, lr=lr, dtype=dtype)
        self.buffer = ReplayBuffer(replay_capacity,
                                   np.random.Generator(np.random.PCG64(buffer_seq)),
                                   dtype=dtype)
        self._plan_rng = np.random.Generator(np.random.PCG64(plan_seq))
        self.nominal = new_nominal_plan(planner_cfg.horizon)
        self.frozen = False
        self.last_info: dict = {}
        self.last_loss: float | None = None

    def current_alpha(self, step: int) -> float:
        step = min(step, self.total_steps)
        return anneal_alpha(step, self.total_steps, self.cfg)

    def act(self, obs: np.ndarray, step: int) -> np.ndarray:
        obs_norm = np.asarray(obs, dtype=float) / self.scales
        action, nominal, info = mppi_plan(
            self.model, obs_norm, self.nominal, self.cfg, self._plan_rng,
            self.scales, self.reward_params, alpha=self.current_alpha(step))
        self.nominal = shift_plan(nominal)
        self.last_info = info
        return np.clip(action, -1.0, 1.0)

    def observe(self, obs, action, rew, next_obs) -> None:
        if self.frozen:
            return
        obs_norm = np.asarray(obs, dtype=float) / self.scales
        next_norm = np.asarray(next_obs, dtype=float) / self.scales
        self.buffer.append(obs_norm, action, rew, next_norm)
        self.model.observe(obs_norm, np.asarray(action, dtype=float), next_norm)

    def update(self) -> None:
        if self.frozen:
            return
        self.last_loss = train_dynamics(self.model, self.buffer, self.batch_size)
