"""Single-shot deployment protocols: train, evaluate, log, cache.

A deployment is one continuous environment lifetime: training steps followed
by a frozen-learning evaluation, with the puck state carried across the
boundary. The only discontinuities are scripted puck placements at corner
trial starts, each logged to ``interventions.csv`` so the single-shot audit
can account for every jump in the step log.

All CSV values are written with ``repr`` so parsing them back reproduces the
exact doubles; reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..dynamics import FaultConfig
from ..env import BalanceEnv, CurriculumState
from ..errors import InvalidInputError
from ..geometry import HsaParams, hexapod_geometry
from ..learnkit import save_checkpoint
from .agents import build_agent
from .config import GeometryConfig, RunConfig, run_key, save_config
from .grid import hexagon_grid
from .metrics import metrics

STEPS_HEADER = ("step,sim_time,obs_x,obs_y,obs_xdot,obs_ydot,obs_phi,obs_theta,obs_psi,"
                "obs_setx,obs_sety,act_roll,act_pitch,reward,alpha,setpoint_x,setpoint_y,"
                "fault_active")
EVAL_HEADER = "trial,point_x,point_y,mean_dist,mse,arc_len"
SUMMARY_HEADER = ("algorithm,task,seed,training_steps,fault_kind,n_trials,"
                  "mean_dist_mean,mean_dist_std,mse_mean,mse_std,arc_len_mean")
INTERVENTIONS_HEADER = "step,reason,x,y,vx,vy"
STRUTS_HEADER = "step," + ",".join(
    [f"len{i}" for i in range(6)] + [f"target{i}" for i in range(6)]
    + [f"excess{i}" for i in range(6)])
DONE_MARKER = "DONE"


def _f(v) -> str:
    return repr(float(v))


def build_platform(g: GeometryConfig):
    geo = hexapod_geometry(
        base_radius=g.base_radius, top_radius=g.top_radius,
        base_pairing=g.base_pairing, top_pairing=g.top_pairing, phase=g.phase,
        nominal_height=g.nominal_height, plate_side=g.plate_side)
    hsa = HsaParams(nominal_length=g.hsa_nominal_length,
                    extension_rate=g.hsa_extension_rate,
                    min_angle=g.hsa_min_angle, max_angle=g.hsa_max_angle)
    return geo, (hsa,) * 6


def corner_positions(env: BalanceEnv, n_corners: int, scale: float) -> np.ndarray:
    """Evaluation corners: vertices of the reachable hexagon (puck-center inset).

    The 4-corner protocol keeps the vertices nearest the plate diagonals;
    the 6-corner variant uses all of them.
    """
    if n_corners not in (4, 6):
        raise InvalidInputError("corner count must be 4 or 6")
    circum = env.reach_radius / math.cos(math.pi / 6.0) * scale
    az = math.pi / 3.0 * np.arange(6)
    verts = circum * np.column_stack([np.cos(az), np.sin(az)])
    if n_corners == 4:
        verts = verts[[1, 2, 4, 5]]
    return verts


@dataclass(frozen=True)
class TrialResult:
    trial: int
    point_x: float
    point_y: float
    mean_dist: float
    mse: float
    arc_len: float


@dataclass(frozen=True)
class EvalReport:
    algorithm: str
    task: str
    seed: int
    training_steps: int
    fault_kind: str
    trials: tuple[TrialResult, ...]

    @property
    def mean_dist_mean(self) -> float:
        return float(np.mean([t.mean_dist for t in self.trials]))

    @property
    def mean_dist_std(self) -> float:
        return float(np.std([t.mean_dist for t in self.trials]))

    @property
    def mse_mean(self) -> float:
        return float(np.mean([t.mse for t in self.trials]))

    @property
    def mse_std(self) -> float:
        return float(np.std([t.mse for t in self.trials]))

    @property
    def arc_len_mean(self) -> float:
        return float(np.mean([t.arc_len for t in self.trials]))


@dataclass(frozen=True)
class FaultReport:
    faulted: EvalReport
    unfaulted: EvalReport

    @property
    def distance_ratio(self) -> float:
        return self.faulted.mean_dist_mean / self.unfaulted.mean_dist_mean


class RunLogger:
    def __init__(self, out_dir: Path, log_struts: bool = False):
        self.steps = open(out_dir / "steps.csv", "w", encoding="utf-8", newline="\n")
        self.steps.write(STEPS_HEADER + "\n")
        self.interventions = open(out_dir / "interventions.csv", "w",
                                  encoding="utf-8", newline="\n")
        self.interventions.write(INTERVENTIONS_HEADER + "\n")
        self.struts = None
        if log_struts:
            self.struts = open(out_dir / "struts.csv", "w", encoding="utf-8", newline="\n")
            self.struts.write(STRUTS_HEADER + "\n")

    def log_step(self, step, sim_time, obs, action, rew, alpha, setpoint, fault_active):
        vals = [str(step), _f(sim_time)]
        vals += [_f(v) for v in obs]
        vals += [_f(action[0]), _f(action[1]), _f(rew), _f(alpha),
                 _f(setpoint[0]), _f(setpoint[1]), "1" if fault_active else "0"]
        self.steps.write(",".join(vals) + "\n")

    def log_intervention(self, step, reason, pos, vel=(0.0, 0.0)):
        self.interventions.write(
            f"{step},{reason},{_f(pos[0])},{_f(pos[1])},{_f(vel[0])},{_f(vel[1])}\n")

    def log_struts(self, step, state):
        if self.struts is None:
            return
        vals = [str(step)]
        for arr in (state.strut_len, state.strut_len_target, state.buckle_excess):
            vals += [_f(v) for v in arr]
        self.struts.write(",".join(vals) + "\n")

    def close(self):
        self.steps.close()
        self.interventions.close()
        if self.struts is not None:
            self.struts.close()


def _agent_alpha(agent) -> float:
    return float(getattr(agent, "last_info", {}).get("alpha", 0.0))


def _run_steps(env, agent, logger, cfg, start_step, n_steps, planning_step,
               learn: bool, obs):
    """Advance the deployment; returns (last obs, trajectory, setpoints)."""
    traj = np.empty((n_steps, 2))
    sps = np.empty((n_steps, 2))
    step = start_step
    for i in range(n_steps):
        action = agent.act(obs, planning_step if planning_step is not None else step)
        obs2, rew, info = env.step(action)
        if learn:
            agent.observe(obs, info["applied_action"], rew, obs2)
            agent.update()
        logger.log_step(step, info["sim_time"], obs2, info["applied_action"], rew,
                        _agent_alpha(agent), info["setpoint"], info["fault_active"])
        logger.log_struts(step, env.sim.state)
        traj[i] = obs2[:2]
        sps[i] = info["setpoint"]
        obs = obs2
        step += 1
    return obs, traj, sps


def _evaluate(cfg: RunConfig, env: BalanceEnv, agent, logger, obs, start_step):
    """Frozen-learning evaluation; returns trial results."""
    agent.frozen = True
    env.curriculum_enabled = False
    trials = []
    step = start_step
    n_eval = cfg.eval.steps_per_setpoint
    if cfg.task == "center":
        window = int(round(cfg.eval.final_window_seconds * cfg.env.control_hz))
        corners = corner_positions(env, cfg.eval.corners, cfg.eval.corner_scale)
        for i, corner in enumerate(corners):
            logger.log_intervention(step, "eval_placement", corner)
            env.place_puck(tuple(corner))
            env.set_setpoint((0.0, 0.0))
            obs = env.observation()
            obs, traj, sps = _run_steps(env, agent, logger, cfg, step, n_eval,
                                        cfg.training_steps, False, obs)
            step += n_eval
            mean_dist, mse, arc = metrics(traj, sps, score_start=n_eval - window)
            trials.append(TrialResult(i, corner[0], corner[1], mean_dist, mse, arc))
    else:
        settle = int(round(cfg.eval.settle_seconds * cfg.env.control_hz))
        points = hexagon_grid(env.reach_radius, cfg.eval.grid_points)
        for i, point in enumerate(points):
            env.set_setpoint(tuple(point))
            obs, traj, sps = _run_steps(env, agent, logger, cfg, step, n_eval,
                                        cfg.training_steps, False, obs)
            step += n_eval
            mean_dist, mse, arc = metrics(traj, sps, score_start=settle)
            trials.append(TrialResult(i, point[0], point[1], mean_dist, mse, arc))
    return trials, obs, step


def _write_eval_csv(out_dir: Path, trials) -> None:
    with open(out_dir / "eval.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EVAL_HEADER + "\n")
        for t in trials:
            fh.write(f"{t.trial},{_f(t.point_x)},{_f(t.point_y)},"
                     f"{_f(t.mean_dist)},{_f(t.mse)},{_f(t.arc_len)}\n")


def _write_summary_csv(out_dir: Path, report: EvalReport) -> None:
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        fh.write(",".join([
            report.algorithm, report.task, str(report.seed), str(report.training_steps),
            report.fault_kind, str(len(report.trials)),
            _f(report.mean_dist_mean), _f(report.mean_dist_std),
            _f(report.mse_mean), _f(report.mse_std), _f(report.arc_len_mean),
        ]) + "\n")


def _save_snapshot(out_dir: Path, cfg: RunConfig, env: BalanceEnv, agent) -> None:
    arrays: dict = {"algorithm": np.array(cfg.algorithm)}
    snap = env.snapshot()
    sim = snap.pop("sim")
    for key, val in snap.items():
        arrays[f"env_{key}"] = np.asarray(val)
    for key, val in sim.items():
        arrays[f"sim_{key}"] = np.asarray(val)
    if cfg.algorithm in ("nn-mppi", "maxdiff"):
        model = agent.model
        arrays["nominal"] = agent.nominal
        arrays["plan_rng"] = np.array(repr(agent._plan_rng.bit_generator.state))
        arrays["model_widths"] = np.array(model.net.widths)
        for i, layer in enumerate(model.net.layers):
            arrays[f"model_W{i}"] = layer.W.data
            arrays[f"model_b{i}"] = layer.b.data
        for tag, stats in (("in", model.in_stats), ("delta", model.delta_stats)):
            arrays[f"stats_{tag}_count"] = np.array(stats.count)
            arrays[f"stats_{tag}_mean"] = stats.mean
            arrays[f"stats_{tag}_m2"] = stats._m2
    elif cfg.algorithm == "sac":
        policy = agent.policy
        for i, layer in enumerate(policy.trunk):
            arrays[f"policy_W{i}"] = layer.W.data
            arrays[f"policy_b{i}"] = layer.b.data
        arrays["policy_mean_W"] = policy.mean_head.W.data
        arrays["policy_mean_b"] = policy.mean_head.b.data
        arrays["policy_logstd_W"] = policy.log_std_head.W.data
        arrays["policy_logstd_b"] = policy.log_std_head.b.data
    np.savez(out_dir / "state_snapshot.npz", **arrays)


def _restore_agent_from_snapshot(agent, data) -> None:
    if "model_widths" in data:
        agent.nominal = data["nominal"].copy()
        import ast
        agent._plan_rng.bit_generator.state = ast.literal_eval(str(data["plan_rng"]))
        for i, layer in enumerate(agent.model.net.layers):
            layer.W.data = data[f"model_W{i}"].copy()
            layer.b.data = data[f"model_b{i}"].copy()
        for tag, stats in (("in", agent.model.in_stats), ("delta", agent.model.delta_stats)):
            stats.count = int(data[f"stats_{tag}_count"])
            stats.mean = data[f"stats_{tag}_mean"].copy()
            stats._m2 = data[f"stats_{tag}_m2"].copy()
    elif "policy_mean_W" in data:
        policy = agent.policy
        for i, layer in enumerate(policy.trunk):
            layer.W.data = data[f"policy_W{i}"].copy()
            layer.b.data = data[f"policy_b{i}"].copy()
        policy.mean_head.W.data = data["policy_mean_W"].copy()
        policy.mean_head.b.data = data["policy_mean_b"].copy()
        policy.log_std_head.W.data = data["policy_logstd_W"].copy()
        policy.log_std_head.b.data = data["policy_logstd_b"].copy()


def _build_deployment(cfg: RunConfig, seed: int):
    if cfg.env.mode != cfg.task:
        raise InvalidInputError(f"env mode {cfg.env.mode!r} does not match task {cfg.task!r}")
    master = np.random.SeedSequence(seed)
    env_seq, agent_seq = master.spawn(2)
    geo, hsas = build_platform(cfg.geometry)
    reach = geo.plate_inradius - cfg.physics.puck_radius
    curriculum = CurriculumState(
        platform_radius=reach,
        min_radius_frac=cfg.curriculum.min_radius_frac,
        curriculum_length=cfg.curriculum.curriculum_length,
        steps_per_setpoint=cfg.curriculum.steps_per_setpoint)
    env = BalanceEnv(geo, hsas, cfg.physics, cfg.env, cfg.reward, curriculum,
                     cfg.fault, seed=env_seq)
    agent = build_agent(cfg, env, agent_seq)
    return env, agent


def deploy(cfg: RunConfig, seed: int, out_dir) -> EvalReport:
    """One full single-shot deployment: train, then evaluate, no resets."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(replace(cfg, seeds=(seed,), out_dir=str(out)), out / "config.txt")
    env, agent = _build_deployment(cfg, seed)
    logger = RunLogger(out, cfg.log_struts)

    t0 = time.perf_counter()
    obs = env.observation()
    obs, _, _ = _run_steps(env, agent, logger, cfg, 0, cfg.training_steps,
                           None, True, obs)
    train_wall = time.perf_counter() - t0

    if cfg.algorithm in ("nn-mppi", "maxdiff"):
        save_checkpoint(agent.model.net, out / "checkpoint.npz")
    _save_snapshot(out, cfg, env, agent)

    t1 = time.perf_counter()
    trials, obs, _ = _evaluate(cfg, env, agent, logger, obs, cfg.training_steps)
    eval_wall = time.perf_counter() - t1
    logger.close()

    report = EvalReport(cfg.algorithm, cfg.task, seed, cfg.training_steps,
                        cfg.fault.kind, tuple(trials))
    _write_eval_csv(out, trials)
    _write_summary_csv(out, report)
    with open(out / "run_meta.txt", "w", encoding="utf-8") as fh:
        fh.write(f"wall_clock_train_s = {train_wall:.3f}\n"
                 f"wall_clock_eval_s = {eval_wall:.3f}\n")
    (out / DONE_MARKER).write_text("ok\n", encoding="utf-8")
    return report


def resume_evaluation(run_dir, out_dir) -> EvalReport:
    """Re-run the evaluation phase of a finished deployment from its snapshot."""
    run_dir = Path(run_dir)
    from .config import load_config
    cfg = load_config(run_dir / "config.txt")
    seed = cfg.seeds[0]
    env, agent = _build_deployment(cfg, seed)
    with np.load(run_dir / "state_snapshot.npz", allow_pickle=False) as data:
        env_snap = {key[4:]: data[key] for key in data.files if key.startswith("env_")}
        env_snap["sim"] = {key[4:]: data[key] for key in data.files if key.startswith("sim_")}
        env.restore(env_snap)
        _restore_agent_from_snapshot(agent, data)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(replace(cfg, seeds=(seed,), out_dir=str(out)), out / "config.txt")
    logger = RunLogger(out, cfg.log_struts)
    obs = env.observation()
    trials, obs, _ = _evaluate(cfg, env, agent, logger, obs, cfg.training_steps)
    logger.close()
    report = EvalReport(cfg.algorithm, cfg.task, seed, cfg.training_steps,
                        cfg.fault.kind, tuple(trials))
    _write_eval_csv(out, trials)
    _write_summary_csv(out, report)
    return report


# -- protocols ---------------------------------------------------------------

def run_center(cfg: RunConfig, seed: int, out_dir) -> EvalReport:
    """Center balancing: train at the origin setpoint, evaluate corner recovery."""
    if cfg.task != "center":
        raise InvalidInputError("run_center requires task=center")
    if cfg.fault.kind != "none":
        raise InvalidInputError("run_center requires fault.kind=none; use run_fault")
    return deploy(cfg, seed, out_dir)


def run_arbitrary(cfg: RunConfig, seed: int, out_dir) -> EvalReport:
    """Arbitrary-point balancing with the expanding-radius curriculum."""
    if cfg.task != "arbitrary":
        raise InvalidInputError("run_arbitrary requires task=arbitrary")
    if cfg.fault.kind != "none":
        raise InvalidInputError("run_arbitrary does not take faults")
    return deploy(cfg, seed, out_dir)


def run_fault(cfg: RunConfig, seed: int, out_dir, cache_root=None) -> FaultReport:
    """Mid-training fault protocol plus an unfaulted companion for comparison."""
    if cfg.task != "center":
        raise InvalidInputError("fault protocol runs on the center task")
    if cfg.fault.kind not in ("buckle", "break"):
        raise InvalidInputError("run_fault requires fault.kind in {buckle, break}")
    if cfg.fault.trigger_step != cfg.training_steps // 2:
        raise InvalidInputError("fault must trigger halfway through training")
    if sorted(cfg.fault.affected_struts) not in ([0, 2, 4], [1, 3, 5]):
        raise InvalidInputError("fault must affect three alternating struts")
    out = Path(out_dir)
    faulted = deploy(cfg, seed, out / "faulted")
    companion_cfg = replace(cfg, fault=FaultConfig(), log_struts=False)
    if cache_root is not None:
        unfaulted, _ = ensure_run(companion_cfg, seed, cache_root)
    else:
        unfaulted = deploy(companion_cfg, seed, out / "unfaulted")
    report = FaultReport(faulted, unfaulted)
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fault_kind,faulted_mean_dist,unfaulted_mean_dist,ratio\n")
        fh.write(f"{cfg.fault.kind},{_f(faulted.mean_dist_mean)},"
                 f"{_f(unfaulted.mean_dist_mean)},{_f(report.distance_ratio)}\n")
    return report


def run_protocol(cfg: RunConfig, seed: int, out_dir, cache_root=None):
    if cfg.fault.kind != "none":
        return run_fault(cfg, seed, out_dir, cache_root)
    if cfg.task == "center":
        return run_center(cfg, seed, out_dir)
    return run_arbitrary(cfg, seed, out_dir)


# -- run cache -----------------------------------------------------------------

def load_report(run_dir) -> EvalReport:
    """Rebuild an EvalReport from a run directory's CSV outputs."""
    run_dir = Path(run_dir)
    from .config import load_config
    cfg = load_config(run_dir / "config.txt")
    trials = []
    with open(run_dir / "eval.csv", "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != EVAL_HEADER:
            raise InvalidInputError(f"unexpected eval.csv header in {run_dir}")
        for line in fh:
            tr, px, py, md, mse, arc = line.strip().split(",")
            trials.append(TrialResult(int(tr), float(px), float(py),
                                      float(md), float(mse), float(arc)))
    return EvalReport(cfg.algorithm, cfg.task, cfg.seeds[0], cfg.training_steps,
                      cfg.fault.kind, tuple(trials))


def cached_run_dir(cfg: RunConfig, seed: int, cache_root) -> Path:
    key = run_key(cfg, seed)
    name = f"{cfg.algorithm}_{cfg.task}_{cfg.fault.kind}_s{seed}_{key}"
    return Path(cache_root) / name


def ensure_run(cfg: RunConfig, seed: int, cache_root) -> tuple[EvalReport, Path]:
    """Run (or reuse) one deployment keyed by its canonical config and seed."""
    run_dir = cached_run_dir(cfg, seed, cache_root)
    marker = run_dir / DONE_MARKER
    if marker.exists():
        return load_report(run_dir), run_dir
    report = deploy(cfg, seed, run_dir)
    return report, run_dir
