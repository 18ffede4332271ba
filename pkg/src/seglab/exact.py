"""Closed-form reference objects.

The boundary datum ``psi`` places three copies of ``sin(3*theta/4)`` on
arcs of opening 4*pi/3 shifted by 2*pi/3, so that at every angle exactly
one component vanishes (two on the three shared endpoints). Its
3/4-homogeneous extension ``r**0.75 * psi(theta)`` is the explicit
minimiser of the constrained problem on the unit disc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Field3, Grid

TWO_PI = 2.0 * math.pi
GAMMA = 0.75
SUPPORT_LENGTH = 4.0 * math.pi / 3.0
SHIFT = 2.0 * math.pi / 3.0

# Universal Hölder threshold of the unrestricted problem; only its upper
# bound 2/3 is known, so it is never used in a computation.
NU_BAR_UPPER_BOUND = 2.0 / 3.0

C_INFTY = 1.5 * math.pi


class SupportError(ValueError):
    pass


def psi(theta):
    """Boundary datum evaluated at ``theta`` (any shape); returns shape (3, ...).

    The component that vanishes is chosen from the sector index of
    ``theta`` so that the triple product is exactly zero.
    """
    t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    out = np.empty((3,) + t.shape)
    for i in range(3):
        s = np.mod(t - i * SHIFT, TWO_PI)
        out[i] = np.where(s <= SUPPORT_LENGTH, np.sin(GAMMA * s), 0.0)
    np.maximum(out, 0.0, out=out)
    sector = np.minimum((t // SHIFT).astype(int), 2)
    # sector 0 -> psi2 vanishes, 1 -> psi3, 2 -> psi1
    vanishing = (sector + 1) % 3
    np.put_along_axis(out, vanishing[None, ...], 0.0, axis=0)
    return out


def exact_minimizer(r, theta):
    """``r**(3/4) * psi(theta)``, shape (3, ...)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    return np.power(r, GAMMA) * psi(theta)


def exact_field(grid: Grid, sigma: float = 1.0, boundary: str = "trace") -> Field3:
    """Sample the exact minimiser on ``grid``.

    With ``boundary="trace"`` BOUNDARY cells carry ``psi(theta)`` (the
    prescribed trace used by the solvers); ``"homogeneous"`` uses
    ``r**0.75 psi`` there too.
    """
    rr, th = grid.polar()
    vals = sigma * exact_minimizer(rr, th)
    if boundary == "trace":
        vals[:, grid.boundary] = sigma * psi(th[grid.boundary])
    elif boundary != "homogeneous":
        raise ValueError(f"unknown boundary mode {boundary!r}")
    vals[:, grid.exterior] = 0.0
    return Field3(vals, grid)


def exact_frequency_values(r: float) -> tuple[float, float, float]:
    """``(E, H, N)`` of the exact minimiser about the origin at radius ``r``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    scale = r**1.5
    return C_INFTY * scale, TWO_PI * scale, GAMMA


def exact_total_energy(r: float = 1.0, sigma: float = 1.0) -> float:
    """Minimal energy on the ball of radius ``r`` for traces ``sigma * psi`` rescaled."""
    return sigma**2 * C_INFTY * r**1.5


def pohozaev_sides(r: float) -> tuple[float, float]:
    """Closed-form sides of the 2D domain-variation identity on the circle of radius ``r``.

    Left: integral of ``sum |grad v|^2`` over the circle. Right: twice the
    integral of ``sum (d_nu v)^2``. Both equal ``4*pi*(9/16)*sqrt(r)``.
    """
    # per component: integral of psi_i^2 and of psi_i'^2 over the circle are both 2pi/3
    weight = GAMMA**2 * r ** (2 * GAMMA - 1)
    grad_sq = weight * 3 * (2 * math.pi / 3 + 2 * math.pi / 3)
    flux_sq = weight * 3 * (2 * math.pi / 3)
    return grad_sq, 2.0 * flux_sq


@dataclass(frozen=True)
class AngularSupport:
    """Per-component positivity arcs ``(a, b)`` with ``0 <= a < 2pi`` and ``a < b <= a + 2pi``."""

    per_component: tuple[tuple[tuple[float, float], ...], ...]
    nu: float | None = None

    def arc_count(self, i: int) -> int:
        """Number of connected arcs of component ``i`` on the circle."""
        return len(_merge_arcs(self.per_component[i]))


def _merge_arcs(arcs) -> list[tuple[float, float]]:
    pieces = []
    for a, b in arcs:
        if not (b > a):
            raise SupportError(f"empty or reversed arc ({a}, {b})")
        if b - a > TWO_PI + 1e-12:
            raise SupportError(f"arc ({a}, {b}) wraps more than once")
        a0 = math.fmod(a, TWO_PI) % TWO_PI
        b0 = a0 + (b - a)
        if b0 > TWO_PI:
            pieces += [(a0, TWO_PI), (0.0, b0 - TWO_PI)]
        else:
            pieces.append((a0, b0))
    pieces.sort()
    merged: list[list[float]] = []
    for a, b in pieces:
        if merged and a < merged[-1][1] - 1e-12:
            raise SupportError("overlapping arcs within one component")
        if merged and abs(a - merged[-1][1]) <= 1e-12:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    if len(merged) > 1 and merged[0][0] <= 1e-12 and merged[-1][1] >= TWO_PI - 1e-12:
        first = merged.pop(0)
        merged[-1][1] = TWO_PI + first[1]
    return [tuple(m) for m in merged]


def _covers(arcs, t: float) -> bool:
    for a, b in arcs:
        if a <= t < b or a <= t + TWO_PI < b:
            return True
    return False


def psi_support() -> AngularSupport:
    arcs = tuple(((i * SHIFT, i * SHIFT + SUPPORT_LENGTH),) for i in range(3))
    return AngularSupport(arcs, GAMMA)


def min_homogeneity(support: AngularSupport, connected: Sequence[bool] | None = None) -> float:
    """Smallest homogeneity compatible with the angular positivity pattern.

    Each positivity arc of a homogeneous harmonic profile ``sin(nu*theta)``
    has length ``pi/nu``. If every component is positive on a single arc,
    the three complementary zero arcs (each ``2pi - pi/nu``) must cover the
    circle, ``3(2pi - pi/nu) >= 2pi``, so ``nu >= 3/4``. If some component
    has two or more arcs, its zero set alone leaves room for at most
    ``2pi/nu <= 2pi``, so ``nu >= 1``.
    """
    comps = support.per_component
    if len(comps) != 3 or any(len(c) == 0 for c in comps):
        raise SupportError("need three components with at least one arc each")
    merged = [_merge_arcs(c) for c in comps]
    for m in merged:
        if any(b - a >= TWO_PI - 1e-12 for a, b in m):
            raise SupportError("a component positive on the whole circle forces the other two to vanish")
    # all three positive somewhere <=> some arc endpoint (or just after it) is covered thrice
    probes = sorted({p % TWO_PI for m in merged for a, b in m for p in (a, b)})
    probes = [0.0] + probes + [TWO_PI]
    for lo, hi in zip(probes[:-1], probes[1:]):
        mid = 0.5 * (lo + hi)
        if all(_covers(m, mid) for m in merged):
            raise SupportError(f"partial segregation violated near angle {mid:.6f}")
    if connected is None:
        connected = [len(m) == 1 for m in merged]
    if all(connected):
        # equality case of 3(2pi - pi/nu) >= 2pi
        return 3.0 * math.pi / (3.0 * TWO_PI - TWO_PI)
    # equality case of 2pi/nu <= 2pi
    return TWO_PI / TWO_PI
