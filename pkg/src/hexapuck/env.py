"""Single-shot balancing environment around the simulator.

Observations are nine-vectors ``[x, y, x_dot, y_dot, phi, theta, psi, X, Y]``:
puck position/velocity relative to the plate center, plate Euler angles, and
the balancing setpoint, all in SI units. Actions are normalized roll/pitch
commands in ``[-1, 1]^2``. The environment never terminates and never resets;
the only sanctioned discontinuity is an explicitly logged puck placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import FaultConfig, PhysicsParams, Simulator
from .errors import InvalidInputError
from .geometry import HsaParams, PlatformGeometry, tilt_to_strut_commands

OBS_DIM = 9
ACT_DIM = 2
# observation layout
OBS_X, OBS_Y, OBS_XDOT, OBS_YDOT, OBS_PHI, OBS_THETA, OBS_PSI, OBS_SX, OBS_SY = range(9)
N_DYNAMIC = 7  # components the learned model predicts; setpoint passes through


@dataclass(frozen=True)
class RewardParams:
    a_pos: float = 250.0
    b_vel: float = 24.0
    c_act: float = 50.0
    action_denom_floor: float = 0.01  # m, caps the control-cost singularity


@dataclass
class CurriculumState:
    """Expanding-radius setpoint sampler around the center equilibrium."""

    platform_radius: float               # R: largest reachable setpoint norm, m
    min_radius_frac: float = 0.2         # lambda_0
    curriculum_length: int = 50_000      # steps until the full radius is reached
    steps_per_setpoint: int = 900
    current_setpoint: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def speed(self) -> float:
        """Per-step growth rate of the radius fraction."""
        return (1.0 - self.min_radius_frac) / self.curriculum_length

    def radius_at(self, step_count: int) -> float:
        if step_count >= self.curriculum_length:
            return self.platform_radius
        frac = self.min_radius_frac + (1.0 - self.min_radius_frac) * (
            step_count / self.curriculum_length)
        return min(frac, 1.0) * self.platform_radius


def curriculum_sample(step_count: int, cs: CurriculumState, rng: np.random.Generator) -> np.ndarray:
    """Draw a setpoint from the disc of the current curriculum radius.

    The radius factor scales linearly with a uniform draw, so samples are
    center-dense by construction rather than area-uniform.
    """
    if step_count < 0:
        raise InvalidInputError("step_count must be nonnegative")
    lam = cs.radius_at(step_count)
    phi = rng.random()
    beta = rng.random()
    return np.array([lam * beta * math.sin(2.0 * math.pi * phi),
                     lam * beta * math.cos(2.0 * math.pi * phi)])


def smooth_action(new: np.ndarray, previous: np.ndarray, beta: float,
                  weight_on_previous: bool = True) -> np.ndarray:
    """Weighted average of the new and previous action, clamped to [-1, 1].

    ``beta`` weights the previous action (actuation inertia) by default;
    ``weight_on_previous=False`` flips the orientation for A/B comparisons.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError("smoothing beta must lie in [0, 1]")
    w_prev = beta if weight_on_previous else 1.0 - beta
    mixed = w_prev * np.asarray(previous, dtype=float) \
        + (1.0 - w_prev) * np.asarray(new, dtype=float)
    return np.clip(mixed, -1.0, 1.0)


def reward_kernel(dx, dy, vx, vy, act_roll, act_pitch, params: RewardParams):
    """Position/velocity/action reward; works on scalars and equally-shaped arrays.

    ``(dx, dy)`` is setpoint minus puck, so a positive velocity-goal dot
    product means progress toward the goal and goes unpenalized.
    """
    pos_term = -((5.0 * dx) ** 2) - (5.0 * dy) ** 2
    d2 = dx * dx + dy * dy
    toward = vx * dx + vy * dy
    vel_term = -d2 * np.square(np.minimum(toward, 0.0))
    denom = np.maximum(np.abs(dx) + np.abs(dy), params.action_denom_floor)
    act_term = -(act_roll ** 2 + act_pitch ** 2) / denom
    return params.a_pos * pos_term + params.b_vel * vel_term + params.c_act * act_term


def reward(obs: np.ndarray, applied_action: np.ndarray, params: RewardParams) -> float:
    """Reward of one observation/action pair (meter-scale quantities)."""
    o = np.asarray(obs, dtype=float)
    if o.shape != (OBS_DIM,) or not np.isfinite(o).all():
        raise InvalidInputError("observation must be nine finite values")
    a = np.asarray(applied_action, dtype=float)
    dx = o[OBS_SX] - o[OBS_X]
    dy = o[OBS_SY] - o[OBS_Y]
    return float(reward_kernel(dx, dy, o[OBS_XDOT], o[OBS_YDOT], a[0], a[1], params))


@dataclass(frozen=True)
class EnvConfig:
    mode: str = "center"                 # center | arbitrary
    control_hz: float = 10.0             # 10 Hz center task, 15 Hz arbitrary task
    smoothing_beta: float = 0.3          # 0.3 center, 0.7 arbitrary
    smoothing_on_previous: bool = True
    tilt_limit: float = 0.26             # rad, full-scale roll/pitch command
    velocity_filter_taps: int = 3

    def __post_init__(self):
        if self.mode not in ("center", "arbitrary"):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.tilt_limit <= 0:
            raise InvalidInputError("tilt_limit must be positive")


class BalanceEnv:
    """Reset-free control loop: smooth, map to struts, simulate, observe, score."""

    def __init__(
        self,
        geo: PlatformGeometry,
        hsas: tuple[HsaParams, ...],
        physics: PhysicsParams,
        cfg: EnvConfig,
        reward_params: RewardParams = RewardParams(),
        curriculum: CurriculumState | None = None,
        fault: FaultConfig = FaultConfig(),
        seed: int | np.random.SeedSequence = 0,
        puck_start: tuple[float, float] = (0.0, 0.0),
    ):
        self.geo = geo
        self.hsas = tuple(hsas)
        self.cfg = cfg
        self.reward_params = reward_params
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        sim_seq, curriculum_seq = seq.spawn(2)
        self.sim = Simulator(geo, hsas, physics, fault, seed=sim_seq, puck_start=puck_start)
        self._curriculum_rng = np.random.Generator(np.random.PCG64(curriculum_seq))

        substeps = 1.0 / cfg.control_hz / physics.physics_dt
        if abs(substeps - round(substeps)) > 1e-9:
            raise InvalidInputError("control period must be a multiple of physics_dt")
        self.n_substeps = int(round(substeps))

        self.reach_radius = geo.plate_inradius - physics.puck_radius
        if curriculum is None:
            curriculum = CurriculumState(platform_radius=self.reach_radius)
        self.curriculum = curriculum
        self.curriculum_enabled = cfg.mode == "arbitrary"

        self.step_count = 0
        self.prev_action = np.zeros(ACT_DIM)
        self.setpoint = np.zeros(2)
        self._sensor_pos: list[np.ndarray] = []
        self._sensor_angles = (0.0, 0.0, 0.0)
        self._seed_sensor_history()

    # -- observation plumbing ----------------------------------------------

    def _seed_sensor_history(self) -> None:
        pos, angles = self.sim.read_sensors()
        taps = self.cfg.velocity_filter_taps
        self._sensor_pos = [pos.copy() for _ in range(taps)]
        self._sensor_angles = angles

    def _push_read(self, pos: np.ndarray, angles: tuple[float, float, float]) -> None:
        self._sensor_pos.append(pos)
        del self._sensor_pos[:-self.cfg.velocity_filter_taps]
        self._sensor_angles = angles

    def _estimate_velocity(self) -> np.ndarray:
        """Filtered finite difference across the sensor history (60 Hz reads)."""
        taps = self._sensor_pos
        span = (len(taps) - 1) / 60.0
        return (taps[-1] - taps[0]) / span

    def observation(self) -> np.ndarray:
        pos = self._sensor_pos[-1]
        vel = self._estimate_velocity()
        roll, pitch, yaw = self._sensor_angles
        return np.array([pos[0], pos[1], vel[0], vel[1], roll, pitch, yaw,
                         self.setpoint[0], self.setpoint[1]])

    @property
    def obs_scales(self) -> np.ndarray:
        """Per-component divisors that place observations in roughly [-2, 2]."""
        ps = self.reach_radius / 2.0
        tl = self.cfg.tilt_limit
        return np.array([ps, ps, 1.0, 1.0, tl, tl, tl, ps, ps])

    # -- control loop --------------------------------------------------------

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, dict]:
        a = np.asarray(action, dtype=float)
        if a.shape != (ACT_DIM,) or not np.isfinite(a).all():
            raise InvalidInputError(f"action must be two finite values, got {action!r}")
        a = np.clip(a, -1.0, 1.0)

        if self.curriculum_enabled and self.step_count % self.curriculum.steps_per_setpoint == 0:
            self.setpoint = curriculum_sample(self.step_count, self.curriculum,
                                              self._curriculum_rng)
            self.curriculum.current_setpoint = self.setpoint.copy()

        applied = smooth_action(a, self.prev_action, self.cfg.smoothing_beta,
                                self.cfg.smoothing_on_previous)
        self.prev_action = applied

        cmds = tilt_to_strut_commands(self.cfg.tilt_limit * applied[0],
                                      self.cfg.tilt_limit * applied[1],
                                      self.geo, self.hsas)
        reads = self.sim.run_control_period(cmds.angles, self.step_count, self.n_substeps)
        for pos, angles in reads:
            self._push_read(pos, angles)

        obs = self.observation()
        rew = reward(obs, applied, self.reward_params)
        info = {
            "sim_time": self.sim.state.sim_time,
            "applied_action": applied.copy(),
            "setpoint": self.setpoint.copy(),
            "fault_active": self.sim.state.fault_active,
            "servo_saturated": bool(cmds.saturated.any()),
            "curriculum_radius": (self.curriculum.radius_at(self.step_count)
                                  if self.curriculum_enabled else 0.0),
        }
        self.step_count += 1
        return obs, rew, info

    # -- scripted interventions (logged by the caller) ----------------------

    def place_puck(self, pos: tuple[float, float], vel: tuple[float, float] = (0.0, 0.0)) -> None:
        """Teleport the puck, refreshing the sensor history so velocity reads zero."""
        self.sim.place_puck(pos, vel)
        self._seed_sensor_history()

    def set_setpoint(self, setpoint: tuple[float, float]) -> None:
        self.setpoint = np.array(setpoint, dtype=float)

    # -- snapshot / restore ---------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "sim": self.sim.snapshot(),
            "step_count": self.step_count,
            "prev_action": self.prev_action.copy(),
            "setpoint": self.setpoint.copy(),
            "sensor_pos": np.array(self._sensor_pos),
            "sensor_angles": np.array(self._sensor_angles),
            "curriculum_rng": repr(self._curriculum_rng.bit_generator.state),
            "curriculum_enabled": self.curriculum_enabled,
        }

    def restore(self, snap: dict) -> None:
        import ast
        self.sim.restore(snap["sim"])
        self.step_count = int(snap["step_count"])
        self.prev_action = np.array(snap["prev_action"], dtype=float)
        self.setpoint = np.array(snap["setpoint"], dtype=float)
        self._sensor_pos = [row.copy() for row in np.asarray(snap["sensor_pos"], dtype=float)]
        self._sensor_angles = tuple(np.asarray(snap["sensor_angles"], dtype=float))
        self._curriculum_rng.bit_generator.state = ast.literal_eval(str(snap["curriculum_rng"]))
        self.curriculum_enabled = bool(snap["curriculum_enabled"])
