"""Evaluation grid: a triangular lattice clipped to the reachable hexagon."""

from __future__ import annotations

import math

import numpy as np

from ..dynamics import hexagon_edge_normals
from ..errors import InvalidInputError


def _lattice_points(spacing: float, inradius: float) -> np.ndarray:
    """Triangular lattice (origin included) clipped to the hexagon inradius."""
    row_height = spacing * math.sqrt(3.0) / 2.0
    j_max = int(inradius / row_height) + 2
    i_max = int(inradius / spacing) + 2
    jj, ii = np.meshgrid(np.arange(-j_max, j_max + 1), np.arange(-i_max, i_max + 1),
                         indexing="ij")
    x = (ii + 0.5 * (jj % 2)) * spacing
    y = jj * row_height
    pts = np.column_stack([x.ravel(), y.ravel()])
    inside = (pts @ hexagon_edge_normals().T <= inradius + 1e-12).all(axis=1)
    return pts[inside]


def hexagon_grid(inradius: float, n_points: int = 98) -> np.ndarray:
    """Exactly ``n_points`` lattice points inside the hexagon of ``inradius``.

    The lattice spacing is the largest (to binary-search precision) that still
    yields at least ``n_points``; if the lattice overshoots, the outermost
    points are dropped, so the pairwise minimum distance stays at the spacing.
    Points come back sorted by (y, x) for a deterministic traversal order.
    """
    if n_points < 1 or inradius <= 0:
        raise InvalidInputError("need a positive point count and inradius")
    lo, hi = 1e-4 * inradius, 2.5 * inradius
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if len(_lattice_points(mid, inradius)) >= n_points:
            lo = mid
        else:
            hi = mid
    pts = _lattice_points(lo, inradius)
    if len(pts) < n_points:
        raise InvalidInputError("lattice search failed to cover the grid")
    # drop outermost points first; break radius ties by angle then x
    radius = np.hypot(pts[:, 0], pts[:, 1])
    angle = np.arctan2(pts[:, 1], pts[:, 0])
    keep = np.lexsort((pts[:, 0], angle, radius))[:n_points]
    pts = pts[keep]
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    return pts[order]


def grid_spacing(points: np.ndarray) -> float:
    """Smallest pairwise distance in the grid."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())
