"""The penalised functional and its exact discrete gradient.

Dirichlet part: sum over grid edges touching at least one INTERIOR cell of
the squared forward difference (``|grad u|^2 h^2`` per edge). Penalty part:
midpoint rule ``beta * sum_cells prod_j u_j^2 * h^2`` over INTERIOR cells.
With these choices :func:`gradient` is the exact derivative of
:func:`j_beta` with respect to the INTERIOR unknowns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Field3, Grid


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    penalty: float
    total: float
    beta: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyBreakdown":
        return cls(float(d["dirichlet"]), float(d["penalty"]), float(d["total"]), float(d["beta"]))


def _edge_masks(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Masks of counted x-edges (shape (ny, nx-1)) and y-edges (shape (ny-1, nx))."""
    inner = grid.interior
    return inner[:, 1:] | inner[:, :-1], inner[1:, :] | inner[:-1, :]


def edge_differences(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y with uncounted edges zeroed."""
    mx, my = _edge_masks(grid)
    dx = np.diff(values, axis=-1) * mx
    dy = np.diff(values, axis=-2) * my
    return dx, dy


def dirichlet_energy(field: Field3) -> float:
    dx, dy = edge_differences(field.values, field.grid)
    return float(np.sum(dx * dx) + np.sum(dy * dy))


def cell_dirichlet_density(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-cell share of the edge energy (half of each incident edge), summed over components.

    Summing this over all cells reproduces :func:`dirichlet_energy`.
    """
    dx, dy = edge_differences(values, grid)
    ex = np.sum(dx * dx, axis=0)
    ey = np.sum(dy * dy, axis=0)
    dens = np.zeros(grid.shape)
    dens[:, 1:] += 0.5 * ex
    dens[:, :-1] += 0.5 * ex
    dens[1:, :] += 0.5 * ey
    dens[:-1, :] += 0.5 * ey
    return dens


def penalty(field: Field3, beta: float) -> float:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return 0.0
    v = field.values
    prod = (v[0] * v[1] * v[2]) ** 2
    return float(beta * np.sum(prod[field.grid.interior]) * field.grid.h**2)


def j_beta(field: Field3, beta: float) -> EnergyBreakdown:
    d = dirichlet_energy(field)
    p = penalty(field, beta)
    return EnergyBreakdown(d, p, d + p, float(beta))


def gradient(field: Field3, beta: float) -> np.ndarray:
    """Derivative of ``j_beta(field).total`` w.r.t. each INTERIOR value.

    Component ``i``: ``2 (-Delta_h u_i + beta u_i prod_{j != i} u_j^2) h^2``;
    zero on BOUNDARY and EXTERIOR cells.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    g = field.grid
    v = field.values
    out = np.zeros_like(v)
    c = v[:, 1:-1, 1:-1]
    lap = v[:, 2:, 1:-1] + v[:, :-2, 1:-1] + v[:, 1:-1, 2:] + v[:, 1:-1, :-2] - 4.0 * c
    out[:, 1:-1, 1:-1] = -2.0 * lap
    if beta > 0:
        sq = v * v
        others = np.stack([sq[1] * sq[2], sq[0] * sq[2], sq[0] * sq[1]])
        out += 2.0 * beta * g.h**2 * v * others
    out[:, ~g.interior] = 0.0
    return out
