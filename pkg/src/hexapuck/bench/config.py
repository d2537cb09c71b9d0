"""Run configuration: every tunable in one serializable bundle.

Configs round-trip through a flat ``section.key = value`` text format; the
text (minus the output directory) canonically identifies a run, so cached
results can be trusted across processes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import typing
from dataclasses import dataclass, field, fields, replace

from ..dynamics import FaultConfig, PhysicsParams
from ..env import EnvConfig, RewardParams
from ..errors import InvalidInputError
from ..planner import PlannerConfig
from ..sac import SacConfig

ALGORITHMS = ("nn-mppi", "maxdiff", "sac", "oracle-pd", "zero")
TASKS = ("center", "arbitrary")

# Per-task defaults: (control_hz, smoothing_beta, eval steps per setpoint)
TASK_DEFAULTS = {"center": (10.0, 0.3, 300), "arbitrary": (15.0, 0.7, 150)}
# Per-(algorithm, task) training lengths
TRAINING_STEPS = {
    ("nn-mppi", "center"): 10_000, ("nn-mppi", "arbitrary"): 100_000,
    ("maxdiff", "center"): 10_000, ("maxdiff", "arbitrary"): 100_000,
    ("sac", "center"): 50_000, ("sac", "arbitrary"): 100_000,
    ("oracle-pd", "center"): 200, ("oracle-pd", "arbitrary"): 200,
    ("zero", "center"): 200, ("zero", "arbitrary"): 200,
}


@dataclass(frozen=True)
class GeometryConfig:
    base_radius: float = 0.12
    top_radius: float = 0.12
    base_pairing: float = 0.6
    top_pairing: float = 0.3
    phase: float = 0.0
    nominal_height: float = 0.13
    plate_side: float = 0.24
    hsa_nominal_length: float = 0.136
    hsa_extension_rate: float = 0.0123
    hsa_min_angle: float = -2.0 * math.pi
    hsa_max_angle: float = 2.0 * math.pi


@dataclass(frozen=True)
class CurriculumConfig:
    min_radius_frac: float = 0.2
    curriculum_length: int = 50_000
    steps_per_setpoint: int = 900


@dataclass(frozen=True)
class LearnConfig:
    model_hidden: tuple[int, ...] = (200, 200)
    lr: float = 3e-4
    batch_size: int = 128
    replay_capacity: int = 100_000


@dataclass(frozen=True)
class EvalConfig:
    corners: int = 4                  # corner trials for the center protocol (4 or 6)
    corner_scale: float = 0.97        # corner placement radius, fraction of reachable vertex
    steps_per_setpoint: int = 300     # eval steps per corner/grid point
    settle_seconds: float = 3.0       # omitted lead-in for grid points
    final_window_seconds: float = 10.0  # scoring window for corner trials
    grid_points: int = 98


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "nn-mppi"
    task: str = "center"
    seeds: tuple[int, ...] = (0,)
    training_steps: int = 10_000
    out_dir: str = "results/run"
    log_struts: bool = False
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    learn: LearnConfig = field(default_factory=LearnConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    fault: FaultConfig = field(default_factory=FaultConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"algorithm must be one of {ALGORITHMS}")
        if self.task not in TASKS:
            raise InvalidInputError(f"task must be one of {TASKS}")
        if self.training_steps < 1:
            raise InvalidInputError("training_steps must be positive")


def default_run_config(algorithm: str, task: str, seeds: tuple[int, ...] = (0,),
                       out_dir: str = "results/run", **overrides) -> RunConfig:
    """Benchmark defaults for an (algorithm, task) pair."""
    control_hz, beta, eval_steps = TASK_DEFAULTS[task]
    planner = PlannerConfig(alpha=0.0) if algorithm == "nn-mppi" else PlannerConfig()
    cfg = RunConfig(
        algorithm=algorithm,
        task=task,
        seeds=tuple(seeds),
        training_steps=TRAINING_STEPS.get((algorithm, task), 10_000),
        out_dir=out_dir,
        env=EnvConfig(mode=task, control_hz=control_hz, smoothing_beta=beta),
        planner=planner,
        eval=EvalConfig(steps_per_setpoint=eval_steps),
    )
    return replace(cfg, **overrides) if overrides else cfg


def faulted_config(cfg: RunConfig, kind: str,
                   struts: tuple[int, ...] = (0, 2, 4)) -> RunConfig:
    """Center-protocol config with a mid-training fault on alternating struts."""
    fault = FaultConfig(kind=kind, affected_struts=struts,
                        trigger_step=cfg.training_steps // 2)
    return replace(cfg, fault=fault, log_struts=True)


# -- flat key=value serialization ---------------------------------------------

_SECTIONS: tuple[tuple[str, type], ...] = (
    ("geometry", GeometryConfig), ("physics", PhysicsParams), ("env", EnvConfig),
    ("reward", RewardParams), ("curriculum", CurriculumConfig), ("learn", LearnConfig),
    ("planner", PlannerConfig), ("sac", SacConfig), ("fault", FaultConfig),
    ("eval", EvalConfig),
)
_TOP_FIELDS = ("algorithm", "task", "seeds", "training_steps", "out_dir", "log_struts")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, ftype):
    origin = typing.get_origin(ftype)
    if origin is tuple:
        elem = typing.get_args(ftype)[0]
        if text.strip() == "":
            return ()
        return tuple(_parse_value(part.strip(), elem) for part in text.split(","))
    if ftype is bool:
        if text not in ("true", "false"):
            raise InvalidInputError(f"expected true/false, got {text!r}")
        return text == "true"
    if ftype is int:
        return int(text)
    if ftype is float:
        return float(text)
    return text


def config_to_text(cfg: RunConfig, include_out_dir: bool = True) -> str:
    """Flat, ordered ``section.key = value`` dump of every field."""
    lines = []
    for name in _TOP_FIELDS:
        if name == "out_dir" and not include_out_dir:
            continue
        lines.append(f"run.{name} = {_format_value(getattr(cfg, name))}")
    for section, _ in _SECTIONS:
        sub = getattr(cfg, section)
        for f in fields(sub):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> RunConfig:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInputError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()

    section_types = dict(_SECTIONS)
    kwargs: dict = {}
    per_section: dict[str, dict] = {name: {} for name, _ in _SECTIONS}
    top_hints = typing.get_type_hints(RunConfig)
    for key, value in entries.items():
        if "." not in key:
            raise InvalidInputError(f"config keys must be section.name, got {key!r}")
        section, name = key.split(".", 1)
        if section == "run":
            if name not in _TOP_FIELDS:
                raise InvalidInputError(f"unknown run field {name!r}")
            kwargs[name] = _parse_value(value, top_hints[name])
        elif section in per_section:
            hints = typing.get_type_hints(section_types[section])
            if name not in hints:
                raise InvalidInputError(f"unknown field {key!r}")
            per_section[section][name] = _parse_value(value, hints[name])
        else:
            raise InvalidInputError(f"unknown config section {section!r}")
    for section, cls in _SECTIONS:
        kwargs[section] = cls(**per_section[section])
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(cfg))


def run_key(cfg: RunConfig, seed: int) -> str:
    """Content hash identifying one seed of a run, ignoring the output path."""
    text = config_to_text(cfg, include_out_dir=False)
    text = "\n".join(line for line in text.splitlines() if not line.startswith("run.seeds"))
    digest = hashlib.sha256(f"{text}\nseed = {seed}\n".encode()).hexdigest()
    return digest[:12]
