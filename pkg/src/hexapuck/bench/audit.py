"""Single-shot integrity audit over a run's step log.

Confirms that a deployment contained no environment resets: step indices are
contiguous, simulated time advances by one control period everywhere, and
every puck-position jump larger than physics allows coincides with a logged
evaluation placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError

SPEED_LIMIT = 2.0  # m/s, above any speed the plate can impart


@dataclass
class AuditResult:
    ok: bool
    n_steps: int
    jumps: list[int] = field(default_factory=list)
    interventions: list[int] = field(default_factory=list)
    unexplained_jumps: list[int] = field(default_factory=list)
    time_violations: list[int] = field(default_factory=list)
    index_violations: list[int] = field(default_factory=list)
    training_interventions: list[int] = field(default_factory=list)


def read_steps(steps_csv) -> dict[str, np.ndarray]:
    path = Path(steps_csv)
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        raise InvalidInputError(f"empty step log {path}")
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def read_interventions(interventions_csv) -> list[int]:
    steps = []
    with open(interventions_csv, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                steps.append(int(line.split(",", 1)[0]))
    return steps


def audit_single_shot(steps_csv, interventions_csv, training_steps: int | None = None,
                      control_hz: float | None = None) -> AuditResult:
    """Audit one run directory's logs; ``ok`` is True for a clean single shot."""
    cols = read_steps(steps_csv)
    steps = cols["step"].astype(int)
    x, y, t = cols["obs_x"], cols["obs_y"], cols["sim_time"]
    n = len(steps)

    index_violations = list(np.nonzero(np.diff(steps) != 1)[0] + 1)

    dt = np.diff(t)
    period = 1.0 / control_hz if control_hz else float(np.median(dt))
    time_violations = list(np.nonzero(np.abs(dt - period) > 1e-9)[0] + 1)

    jump_limit = SPEED_LIMIT * period
    disp = np.hypot(np.diff(x), np.diff(y))
    jumps = [int(steps[i + 1]) for i in np.nonzero(disp > jump_limit)[0]]

    interventions = read_interventions(interventions_csv)
    allowed = set(interventions)
    unexplained = [j for j in jumps if j not in allowed]

    training_interventions = []
    if training_steps is not None:
        training_interventions = [s for s in interventions if s < training_steps]

    ok = not unexplained and not time_violations and not index_violations \
        and not training_interventions
    return AuditResult(ok=ok, n_steps=n, jumps=jumps, interventions=interventions,
                       unexplained_jumps=unexplained, time_violations=time_violations,
                       index_violations=index_violations,
                       training_interventions=training_interventions)


def audit_run_dir(run_dir) -> AuditResult:
    run_dir = Path(run_dir)
    from .config import load_config
    cfg = load_config(run_dir / "config.txt")
    return audit_single_shot(run_dir / "steps.csv", run_dir / "interventions.csv",
                             training_steps=cfg.training_steps,
                             control_hz=cfg.env.control_hz)
