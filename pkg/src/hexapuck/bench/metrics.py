"""Trajectory scoring: mean distance, mean squared error, arc length."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


def metrics(positions: np.ndarray, setpoints: np.ndarray,
            score_start: int = 0, score_stop: int | None = None) -> tuple[float, float, float]:
    """Score one uniformly sampled trajectory.

    Mean distance and MSE are time-averages of the puck-to-setpoint distance
    (and its square) over ``[score_start:score_stop]``; arc length sums the
    consecutive puck displacements over the whole trajectory.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
        raise InvalidInputError("positions must be a nonempty (N, 2) array")
    sp = np.asarray(setpoints, dtype=float)
    if sp.shape == (2,):
        sp = np.broadcast_to(sp, pos.shape)
    if sp.shape != pos.shape:
        raise InvalidInputError("setpoints must match positions")
    window = slice(score_start, score_stop)
    dist = np.hypot(pos[window, 0] - sp[window, 0], pos[window, 1] - sp[window, 1])
    if dist.size == 0:
        raise InvalidInputError("scoring window is empty")
    steps = np.diff(pos, axis=0)
    arc = float(np.hypot(steps[:, 0], steps[:, 1]).sum())
    return float(dist.mean()), float(np.square(dist).mean()), arc
