"""Minimisers of the penalised and the hard-constrained triplet energy.

Both modes use red-black Gauss-Seidel sweeps: at each INTERIOR cell the
local scalar equation ``(4 + beta h^2 prod_{j!=i} u_j^2) u_i = sum of
neighbours`` is solved, damped by ``omega`` and clamped at zero. A sweep is
accepted only if the energy does not increase; otherwise the state is
restored and ``omega`` is halved (it is reset after the next accepted
sweep).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .energy import EnergyBreakdown, dirichlet_energy, gradient, j_beta
from .geometry import BoundaryData, Field3, Grid, GridError

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-12
MIN_DAMPING = 1.0 / 1024


class Mode(str, Enum):
    PENALIZED = "PENALIZED"
    HARD_CONSTRAINT = "HARD_CONSTRAINT"


class ConfigError(ValueError):
    pass


# JSON keys <-> attribute names
_CONFIG_KEYS = {
    "mode": "mode",
    "betaLadder": "beta_ladder",
    "maxSweeps": "max_sweeps",
    "tol": "tol",
    "damping": "damping",
    "seed": "seed",
}


@dataclass(frozen=True)
class SolverConfig:
    mode: Mode = Mode.PENALIZED
    beta_ladder: tuple[float, ...] = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
    max_sweeps: int = 20000
    tol: float = 1e-7
    damping: float = 1.0
    seed: int = 0
    check_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        ladder = tuple(float(b) for b in self.beta_ladder)
        object.__setattr__(self, "beta_ladder", ladder)
        if any(b <= 0 for b in ladder) and self.mode is Mode.PENALIZED:
            raise ConfigError("betaLadder entries must be positive")
        if any(b1 <= b0 for b0, b1 in zip(ladder, ladder[1:])):
            raise ConfigError("betaLadder must be strictly increasing")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not (0 < self.damping <= 1):
            raise ConfigError("damping must lie in (0, 1]")
        if int(self.max_sweeps) < 1:
            raise ConfigError("maxSweeps must be at least 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, a) for k, a in _CONFIG_KEYS.items()}
        d["mode"] = self.mode.value
        d["betaLadder"] = list(self.beta_ladder)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        unknown = set(d) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
        kwargs = {_CONFIG_KEYS[k]: v for k, v in d.items()}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class SolveReport:
    field: Field3
    energy_history: list[EnergyBreakdown]
    sweeps: int
    converged: bool
    penalty_residual: float
    beta: float
    residual: float
    mode: Mode = Mode.PENALIZED

    @property
    def energy(self) -> EnergyBreakdown:
        return self.energy_history[-1]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "beta": self.beta,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "penaltyResidual": self.penalty_residual,
            "residual": self.residual,
            "energy": asdict(self.energy),
            "energyHistory": [e.total for e in self.energy_history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _checkerboards(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    iy, ix = np.indices(grid.shape)
    red = (iy + ix) % 2 == 0
    return grid.interior & red, grid.interior & ~red


def _neighbour_sum(u: np.ndarray) -> np.ndarray:
    s = np.zeros_like(u)
    s[1:-1, 1:-1] = u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
    return s


def _relax(values: np.ndarray, colors, beta: float, h2: float, omega: float) -> None:
    """One red-black Gauss-Seidel sweep over all three components, in place."""
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        for mask in colors:
            u = values[i]
            nb = _neighbour_sum(u)
            diag = 4.0
            if beta > 0:
                diag = 4.0 + beta * h2 * (values[j] * values[k]) ** 2
            target = nb / diag
            if omega != 1.0:
                target = (1.0 - omega) * u + omega * target
            np.maximum(target, 0.0, out=target)
            u[mask] = target[mask]


def _relax_projected(values: np.ndarray, colors, omega: float) -> None:
    """Red-black sweep on the Dirichlet energy, projecting each colour right after its update.

    With ``omega = 1`` every half-sweep is an exact block minimisation over
    the cellwise constraint set, since the three harmonic updates at a cell
    are independent of each other.
    """
    for mask in colors:
        nb = np.stack([_neighbour_sum(values[i]) for i in range(3)])
        target = nb / 4.0
        if omega != 1.0:
            target = (1.0 - omega) * values + omega * target
        np.maximum(target, 0.0, out=target)
        values[:, mask] = target[:, mask]
        _project(values, mask)


def _project(values: np.ndarray, cells: np.ndarray) -> None:
    """Zero the smallest component on ``cells`` wherever all three are positive (lowest index wins ties)."""
    v = values[:, cells]
    bad = np.all(v > 0, axis=0)
    if np.any(bad):
        sub = v[:, bad]
        sub[np.argmin(sub, axis=0), np.arange(sub.shape[1])] = 0.0
        v[:, bad] = sub
        values[:, cells] = v


def _projected_residual(f: Field3) -> float:
    """Stationarity measure for the hard-constraint problem."""
    g = gradient(f, 0.0)
    v = f.values
    pos = v > 0
    others_pos = np.stack([pos[1] & pos[2], pos[0] & pos[2], pos[0] & pos[1]])
    r = np.where(pos, np.abs(g), np.where(others_pos, 0.0, np.maximum(-g, 0.0)))
    r[:, ~f.grid.interior] = 0.0
    return float(np.max(r))


def _penalized_residual(f: Field3, beta: float) -> float:
    g = gradient(f, beta)
    # at clamped zeros only a descent direction into the positive cone counts
    r = np.where(f.values > 0, np.abs(g), np.maximum(-g, 0.0))
    return float(np.max(r))


def _check_init(bdata: BoundaryData, init: Field3) -> None:
    if not init.grid.same_as(bdata.grid):
        raise GridError("init field and boundary data live on different grids")
    if not bdata.matches(init, atol=1e-12):
        raise GridError("init does not match the prescribed boundary traces")
    init.validate(atol=0.0)


def _run(
    bdata: BoundaryData,
    init: Field3,
    beta: float,
    cfg: SolverConfig,
    hard: bool,
) -> SolveReport:
    grid = bdata.grid
    values = init.values.copy()
    if hard:
        _project(values, grid.interior)
    f = Field3(values, grid)
    energy_fn = (lambda ff: j_beta(ff, 0.0)) if hard else (lambda ff: j_beta(ff, beta))
    resid_fn = _projected_residual if hard else (lambda ff: _penalized_residual(ff, beta))
    colors = _checkerboards(grid)
    h2 = grid.h**2
    current = energy_fn(f)
    history = [current]
    omega = cfg.damping
    residual = resid_fn(f)
    sweeps = 0
    converged = residual <= cfg.tol
    backup = np.empty_like(values)
    while not converged and sweeps < cfg.max_sweeps:
        backup[...] = values
        if hard:
            _relax_projected(values, colors, omega)
        else:
            _relax(values, colors, beta, h2, omega)
        sweeps += 1
        trial = energy_fn(f)
        if trial.total > current.total + DESCENT_SLACK:
            values[...] = backup
            omega *= 0.5
            if omega < MIN_DAMPING:
                log.debug("damping underflow after %d sweeps", sweeps)
                break
            continue
        current = trial
        history.append(current)
        omega = cfg.damping
        if sweeps % cfg.check_every == 0 or sweeps == cfg.max_sweeps:
            residual = resid_fn(f)
            converged = residual <= cfg.tol
    residual = resid_fn(f)
    converged = residual <= cfg.tol
    if not converged:
        log.info("solve did not converge: residual %.3e after %d sweeps", residual, sweeps)
    pen = j_beta(f, beta).penalty if not hard else 0.0
    return SolveReport(
        field=f,
        energy_history=history,
        sweeps=sweeps,
        converged=converged,
        penalty_residual=pen,
        beta=float(beta),
        residual=residual,
        mode=Mode.HARD_CONSTRAINT if hard else Mode.PENALIZED,
    )


def solve_penalized(grid: Grid, bdata: BoundaryData, beta: float, init: Field3, cfg: SolverConfig) -> SolveReport:
    """Relax towards a local minimiser of the penalised energy at fixed ``beta``.

    Non-convergence is reported through ``SolveReport.converged``; a
    mismatched initial field raises :class:`GridError`.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not grid.same_as(bdata.grid):
        raise GridError("boundary data belongs to a different grid")
    _check_init(bdata, init)
    return _run(bdata, init, beta, cfg, hard=False)


def sweep_beta(grid: Grid, bdata: BoundaryData, cfg: SolverConfig, init: Field3 | None = None) -> list[SolveReport]:
    """Penalised solves along ``cfg.beta_ladder``, each warm-started from the previous one."""
    if cfg.mode is not Mode.PENALIZED:
        raise ConfigError("sweep_beta needs mode PENALIZED")
    from .geometry import harmonic_extension

    current = init if init is not None else harmonic_extension(grid, bdata)
    reports = []
    for beta in cfg.beta_ladder:
        rep = solve_penalized(grid, bdata, beta, current, cfg)
        log.info("beta=%g sweeps=%d converged=%s total=%.6f penalty=%.3e",
                 beta, rep.sweeps, rep.converged, rep.energy.total, rep.penalty_residual)
        reports.append(rep)
        current = rep.field
    return reports


def solve_hard_constraint(grid: Grid, bdata: BoundaryData, init: Field3, cfg: SolverConfig) -> SolveReport:
    """Relaxation on the Dirichlet energy alternated with projection onto ``u1 u2 u3 = 0``."""
    if not grid.same_as(bdata.grid):
        raise GridError("boundary data belongs to a different grid")
    _check_init(bdata, init)
    return _run(bdata, init, 0.0, cfg, hard=True)
