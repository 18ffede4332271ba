"""Almgren frequency toolkit on sampled fields.

For a centre ``x0`` and radius ``r`` (planar case):

* ``E(r)`` -- Dirichlet energy in ``B_r(x0)`` (optionally plus the penalty),
* ``H(r)`` -- ``(1/r) * integral over S_r(x0) of sum_j v_j^2``,
* ``N(r) = E(r) / H(r)``.

Circle integrals use the trapezoid rule on bilinear interpolants; radial
derivatives are centred differences with step ``h``. The area integral
counts the cells whose centre lies in ``B_r(x0)``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .energy import cell_dirichlet_density
from .geometry import Domain, Field3, GridError, build_grid, interp_bilinear_many

MIN_SAMPLES = 64
BLOWUP_CELLS = 129
BLOWUP_HALF_WIDTH = 2.0


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class CircleIntegrals:
    sum_squares: float  # H: (1/r) * int sum v^2
    normal_flux: float  # int sum (d_nu v)^2
    tangential_flux: float  # int sum (d_tau v)^2
    cross: float  # int sum v d_nu v


def _sample_count(r: float, h: float, M: int | None) -> int:
    if M is None:
        M = max(MIN_SAMPLES, math.ceil(2 * math.pi * r / h))
    if M < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} circle samples")
    return int(M)


def _domain_radius_left(field: Field3, x0: Sequence[float]) -> float:
    """Distance from x0 to the edge of the physical domain."""
    g = field.grid
    if g.domain.kind == "disc":
        return 1.0 - math.hypot(x0[0], x0[1])
    x_lo, x_hi, y_lo, y_hi = g.domain.bounds
    return min(x0[0] - x_lo, x_hi - x0[0], x0[1] - y_lo, y_hi - x0[1])


def circle_integrals(field: Field3, x0: Sequence[float], r: float, M: int | None = None) -> CircleIntegrals:
    g = field.grid
    h = g.h
    M = _sample_count(r, h, M)
    if r <= 0:
        raise ValueError("radius must be positive")
    x_ext = (g.x[0], g.x[-1])
    y_ext = (g.y[0], g.y[-1])
    if (x0[0] - r < x_ext[0] or x0[0] + r > x_ext[1] or x0[1] - r < y_ext[0] or x0[1] + r > y_ext[1]):
        raise GridError(f"circle of radius {r} about {tuple(x0)} exits the grid extent")
    th = 2 * math.pi * np.arange(M) / M
    c, s = np.cos(th), np.sin(th)

    def ring(rad, dth=0.0):
        return interp_bilinear_many(field, x0[0] + rad * np.cos(th + dth), x0[1] + rad * np.sin(th + dth))

    v = ring(r)
    # centred radial difference, one-sided near the domain edge or the centre
    room = _domain_radius_left(field, x0)
    extent_room = min(x0[0] - x_ext[0], x_ext[1] - x0[0], x0[1] - y_ext[0], y_ext[1] - x0[1])
    outward_ok = r + h <= extent_room and (r + h <= room or r > room)
    r_out = r + h if outward_ok else r
    r_in = r - h if r - h > 0 else r
    if r_out == r_in:
        raise GridError("no room for a radial difference")
    dnu = (ring(r_out) - ring(r_in)) / (r_out - r_in)
    dth = h / r
    dtau = (ring(r, dth) - ring(r, -dth)) / (2 * h)
    w = 2 * math.pi * r / M
    return CircleIntegrals(
        sum_squares=float(np.sum(v * v) * w / r),
        normal_flux=float(np.sum(dnu * dnu) * w),
        tangential_flux=float(np.sum(dtau * dtau) * w),
        cross=float(np.sum(v * dnu) * w),
    )


def circle_quadrature(field: Field3, x0: Sequence[float], r: float, M: int | None = None) -> tuple[float, float]:
    """``(H, int sum (d_nu v)^2 dsigma)`` on the circle of radius ``r`` about ``x0``."""
    ci = circle_integrals(field, x0, r, M)
    return ci.sum_squares, ci.normal_flux


def pohozaev_residual(field: Field3, x0: Sequence[float], r: float, M: int | None = None) -> float:
    """Relative defect of ``int |grad v|^2 = 2 int (d_nu v)^2`` on ``S_r(x0)`` (planar case)."""
    ci = circle_integrals(field, x0, r, M)
    lhs = ci.normal_flux + ci.tangential_flux
    rhs = 2.0 * ci.normal_flux
    return abs(lhs - rhs) / max(lhs, rhs, 1e-14)


@dataclass(frozen=True)
class FrequencyProfile:
    center: tuple[float, float]
    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    N: np.ndarray
    included_penalty: bool = False

    def __post_init__(self):
        if np.any(self.H <= 0):
            raise ProfileError("H vanishes on the ladder; frequency undefined")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,E,H,N\n")
        for row in zip(self.radii, self.E, self.H, self.N):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def reversed(self) -> "FrequencyProfile":
        return FrequencyProfile(self.center, self.radii, self.E, self.H, self.N[::-1].copy(), self.included_penalty)


def geometric_ladder(rmin: float, rmax: float, K: int) -> np.ndarray:
    """``K + 1`` radii from ``rmin`` to ``rmax`` with constant ratio."""
    if not (0 < rmin < rmax):
        raise ValueError("need 0 < rmin < rmax")
    return rmin * (rmax / rmin) ** (np.arange(K + 1) / K)


def ball_energies(field: Field3, x0: Sequence[float], radii: np.ndarray, beta: float = 0.0) -> np.ndarray:
    """Area integral over ``B_r(x0)`` for each radius (cells counted by their centre)."""
    g = field.grid
    dens = cell_dirichlet_density(field.values, g)
    if beta > 0:
        v = field.values
        dens = dens + np.where(g.interior, beta * (v[0] * v[1] * v[2]) ** 2 * g.h**2, 0.0)
    X, Y = g.centers()
    dist = np.hypot(X - x0[0], Y - x0[1]).ravel()
    order = np.argsort(dist, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(dens.ravel()[order])])
    counts = np.searchsorted(dist[order], radii, side="left")
    return cum[counts]


def frequency_profile(
    field: Field3,
    x0: Sequence[float],
    rmin: float,
    rmax: float,
    K: int = 16,
    include_penalty: bool = False,
    beta: float = 0.0,
    M: int | None = None,
) -> FrequencyProfile:
    """E, H and N on a geometric radius ladder about ``x0``."""
    if K < 8:
        raise ValueError("ladder needs K >= 8")
    if rmax > _domain_radius_left(field, x0) + 1e-12:
        raise GridError("ladder reaches outside the domain")
    radii = geometric_ladder(rmin, rmax, K)
    E = ball_energies(field, x0, radii, beta if include_penalty else 0.0)
    H = np.array([circle_integrals(field, x0, r, M).sum_squares for r in radii])
    if np.any(H <= 0):
        raise ProfileError("H vanishes on the ladder; frequency undefined")
    return FrequencyProfile((float(x0[0]), float(x0[1])), radii, E, H, E / H, include_penalty)


def check_monotone(profile: FrequencyProfile, slack: float = 0.0) -> tuple[bool, float]:
    """Whether N is non-decreasing up to ``slack``; also the most negative increment."""
    inc = np.diff(profile.N)
    worst = float(inc.min()) if inc.size else 0.0
    return bool(np.all(inc >= -slack)), worst


def check_doubling(profile: FrequencyProfile, alpha_low: float, alpha_high: float, slack: float = 1.05) -> bool:
    """Both growth bounds of the doubling lemma on every pair of ladder radii.

    Lower bound: ``H(r2)/r2^(2 alpha_low) >= H(r1)/r1^(2 alpha_low)`` for radii
    above the first one where ``N >= alpha_low``. Upper bound:
    ``H(r2)/r2^(2 alpha_high) <= H(r1)/r1^(2 alpha_high)`` below the last
    radius where ``N <= alpha_high``. Each is allowed a factor ``slack``.
    """
    r, H, N = profile.radii, profile.H, profile.N
    ok = True
    hits = np.nonzero(N >= alpha_low)[0]
    if hits.size:
        q = H / r ** (2 * alpha_low)
        tail = q[hits[0]:]
        # every later value must dominate every earlier one
        ok &= bool(np.all(tail * slack >= np.maximum.accumulate(tail)))
    hits = np.nonzero(N <= alpha_high)[0]
    if hits.size:
        q = H / r ** (2 * alpha_high)
        head = q[: hits[-1] + 1]
        ok &= bool(np.all(head <= slack * np.minimum.accumulate(head)))
    return ok


def estimate_exponent(profile: FrequencyProfile) -> tuple[float, float]:
    """Half the least-squares slope of ``log H`` against ``log r``, with its R^2."""
    if profile.radii.size < 8:
        raise ValueError("need at least 8 radii")
    x = np.log(profile.radii)
    y = np.log(profile.H)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope / 2.0), r2


def log_derivative_H(profile: FrequencyProfile) -> np.ndarray:
    """Finite-difference ``d log H / d log r`` at ladder midpoints (equals 2N for minimisers)."""
    return np.diff(np.log(profile.H)) / np.diff(np.log(profile.radii))


def blow_up(field: Field3, x0: Sequence[float], rho: float, n: int = BLOWUP_CELLS) -> Field3:
    """``v(x0 + rho x) / sqrt(H(v, x0, rho))`` resampled on ``[-2, 2]^2``.

    Points of the reference grid that fall outside the source grid are set
    to zero.
    """
    H = circle_integrals(field, x0, rho).sum_squares
    if H < 1e-14:
        raise ProfileError(f"H(v, x0, rho) = {H:.3e} is too small to normalise")
    ref = build_grid(Domain.rectangle(-BLOWUP_HALF_WIDTH, BLOWUP_HALF_WIDTH, -BLOWUP_HALF_WIDTH, BLOWUP_HALF_WIDTH), n)
    X, Y = ref.centers()
    vals = interp_bilinear_many(field, x0[0] + rho * X, x0[1] + rho * Y, outside=0.0) / math.sqrt(H)
    return Field3(vals, ref)


def profile_summary(profile: FrequencyProfile, slack: float = 0.02, pohozaev_worst: float | None = None) -> str:
    gamma, _ = estimate_exponent(profile)
    ok, _ = check_monotone(profile, slack)
    return json.dumps({"gamma_fit": gamma, "monotone_ok": ok, "pohozaev_worst": pohozaev_worst}, sort_keys=True)
