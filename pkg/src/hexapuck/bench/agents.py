"""Agent construction plus the scripted controllers used for harness checks."""

from __future__ import annotations

import numpy as np

from ..env import BalanceEnv, OBS_SX, OBS_SY, OBS_X, OBS_XDOT, OBS_Y, OBS_YDOT
from ..errors import InvalidInputError
from ..planner import MppiAgent, PlannerConfig
from ..sac import SacAgent
from .config import RunConfig

from dataclasses import replace


class ZeroAgent:
    """Emits zero actions; exercises harness robustness."""

    frozen = False

    def act(self, obs, step):
        return np.zeros(2)

    def observe(self, *args):
        pass

    def update(self):
        pass


class OraclePdAgent:
    """Hand-tuned PD on the true simulator state; the harness ceiling.

    Not a learning agent: it reads the puck state directly from the simulator
    (bypassing sensor noise) and inverts the small-angle tilt-to-acceleration
    map. Used to establish what the evaluation protocol can measure.
    """

    frozen = False

    def __init__(self, env: BalanceEnv, kp: float = 14.0, kd: float = 6.5,
                 deadband_pos: float = 0.004, deadband_vel: float = 0.01):
        self.env = env
        self.kp, self.kd = kp, kd
        self.deadband_pos, self.deadband_vel = deadband_pos, deadband_vel

    def act(self, obs, step):
        state = self.env.sim.state
        err = state.puck_pos - self.env.setpoint
        vel = state.puck_vel
        if np.hypot(*err) < self.deadband_pos and np.hypot(*vel) < self.deadband_vel:
            return np.zeros(2)
        accel = -self.kp * err - self.kd * vel
        g = self.env.sim.params.gravity
        tilt = self.env.cfg.tilt_limit
        # a_x = +g*sin(pitch), a_y = -g*sin(roll)
        pitch_cmd = accel[0] / g / tilt
        roll_cmd = -accel[1] / g / tilt
        return np.clip([roll_cmd, pitch_cmd], -1.0, 1.0)

    def observe(self, *args):
        pass

    def update(self):
        pass


def build_agent(cfg: RunConfig, env: BalanceEnv, seed: np.random.SeedSequence):
    if cfg.algorithm in ("nn-mppi", "maxdiff"):
        planner_cfg = cfg.planner
        if cfg.algorithm == "nn-mppi" and planner_cfg.alpha != 0.0:
            planner_cfg = replace(planner_cfg, alpha=0.0)
        return MppiAgent(
            planner_cfg, total_steps=cfg.training_steps, obs_scales=env.obs_scales,
            reward_params=cfg.reward, seed=seed,
            model_hidden=cfg.learn.model_hidden, lr=cfg.learn.lr,
            batch_size=cfg.learn.batch_size, replay_capacity=cfg.learn.replay_capacity)
    if cfg.algorithm == "sac":
        return SacAgent(cfg.sac, env.obs_scales, seed)
    if cfg.algorithm == "oracle-pd":
        return OraclePdAgent(env)
    if cfg.algorithm == "zero":
        return ZeroAgent()
    raise InvalidInputError(f"unknown algorithm {cfg.algorithm!r}")
