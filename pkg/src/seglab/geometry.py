"""Structured 2D grids, boundary traces and grid-level primitives.

Cells are addressed ``[iy, ix]`` and carry one of three tags. Field values
live at cell centres; boundary values are imposed at BOUNDARY cell centres
(first-order boundary fitting).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INTERIOR = 0
BOUNDARY = 1
EXTERIOR = 2

CLASS_NAMES = {INTERIOR: "INTERIOR", BOUNDARY: "BOUNDARY", EXTERIOR: "EXTERIOR"}

MIN_CELLS = 16


class GridError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Domain:
    """Either the unit disc or an axis-aligned rectangle ``bounds=(x0, x1, y0, y1)``."""

    kind: str = "disc"
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("disc", "rectangle"):
            raise GridError(f"unknown domain kind {self.kind!r}")
        if self.kind == "rectangle":
            if self.bounds is None or len(self.bounds) != 4:
                raise GridError("rectangle domain needs bounds (x0, x1, y0, y1)")
            x0, x1, y0, y1 = map(float, self.bounds)
            if not (x1 > x0 and y1 > y0):
                raise GridError(f"degenerate rectangle {self.bounds}")
            object.__setattr__(self, "bounds", (x0, x1, y0, y1))

    @classmethod
    def disc(cls) -> "Domain":
        return cls("disc")

    @classmethod
    def rectangle(cls, x0=0.0, x1=1.0, y0=0.0, y1=1.0) -> "Domain":
        return cls("rectangle", (x0, x1, y0, y1))


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    h: float
    x: np.ndarray  # cell-centre abscissae, length nx
    y: np.ndarray  # cell-centre ordinates, length ny
    domain: Domain
    cell_class: np.ndarray  # int8, shape (ny, nx)

    @property
    def origin(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.y[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.cell_class.shape

    @property
    def interior(self) -> np.ndarray:
        return self.cell_class == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.cell_class == BOUNDARY

    @property
    def exterior(self) -> np.ndarray:
        return self.cell_class == EXTERIOR

    @property
    def active(self) -> np.ndarray:
        return self.cell_class != EXTERIOR

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of cell centres, each shape (ny, nx)."""
        return np.meshgrid(self.x, self.y)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Radius and angle in [0, 2*pi) of every cell centre."""
        X, Y = self.centers()
        return np.hypot(X, Y), np.mod(np.arctan2(Y, X), 2 * np.pi)

    def nearest_cell(self, point: Sequence[float]) -> tuple[int, int]:
        ix = int(np.clip(np.rint((point[0] - self.x[0]) / self.h), 0, len(self.x) - 1))
        iy = int(np.clip(np.rint((point[1] - self.y[0]) / self.h), 0, len(self.y) - 1))
        return iy, ix

    def same_as(self, other: "Grid") -> bool:
        return (
            self.domain == other.domain
            and self.n == other.n
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.cell_class, other.cell_class)
        )


def build_grid(domain: Domain | str, n: int) -> Grid:
    """Discretise ``domain`` with ``n`` cells per side.

    Disc grids use ``h = 2/(n-4)`` with cell centres ``(k - n//2) h`` so the
    origin is a cell centre and the extent is about ``[-1-2h, 1+2h]``.
    Rectangle grids are node-centred: the outermost rows and columns sit on
    the edges and are BOUNDARY.
    """
    if isinstance(domain, str):
        domain = Domain.disc() if domain == "disc" else Domain(domain)
    n = int(n)
    if n < MIN_CELLS:
        raise GridError(f"n={n} is too coarse; need n >= {MIN_CELLS}")

    if domain.kind == "disc":
        h = 2.0 / (n - 4)
        coords = (np.arange(n) - n // 2) * h
        X, Y = np.meshgrid(coords, coords)
        inside = np.hypot(X, Y) < 1.0 - h / 2
        cls = np.full((n, n), EXTERIOR, dtype=np.int8)
        cls[inside] = INTERIOR
        near = np.zeros_like(inside)
        near[1:, :] |= inside[:-1, :]
        near[:-1, :] |= inside[1:, :]
        near[:, 1:] |= inside[:, :-1]
        near[:, :-1] |= inside[:, 1:]
        cls[near & ~inside] = BOUNDARY
        return Grid(n, h, coords, coords.copy(), domain, cls)

    x0, x1, y0, y1 = domain.bounds
    h = (x1 - x0) / (n - 1)
    ny = int(round((y1 - y0) / h)) + 1
    if ny < 3:
        raise GridError("rectangle too thin for the requested resolution")
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, ny)
    cls = np.full((ny, n), BOUNDARY, dtype=np.int8)
    cls[1:-1, 1:-1] = INTERIOR
    return Grid(n, h, xs, ys, domain, cls)


@dataclass(eq=False)
class Field3:
    """Three nonnegative densities on a grid, ``values`` has shape (3, ny, nx)."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (3, *self.grid.shape):
            raise GridError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def validate(self, atol: float = 0.0) -> None:
        v = self.values
        if not np.all(np.isfinite(v)):
            raise GridError("field has non-finite values")
        if np.any(v[:, self.grid.active] < -atol):
            raise GridError("field has negative values")
        if np.any(v[:, self.grid.exterior] != 0.0):
            raise GridError("field is nonzero on EXTERIOR cells")

    def copy(self) -> "Field3":
        return Field3(self.values.copy(), self.grid)

    def scaled(self, sigma: float) -> "Field3":
        return Field3(sigma * self.values, self.grid)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field3":
        return cls(np.zeros((3, *grid.shape)), grid)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], Sequence[np.ndarray]]) -> "Field3":
        """Sample ``fn(X, Y) -> (u1, u2, u3)`` at the active cell centres."""
        X, Y = grid.centers()
        vals = np.stack([np.broadcast_to(np.asarray(c, dtype=float), X.shape) for c in fn(X, Y)])
        vals = np.where(grid.active, vals, 0.0)
        return cls(vals, grid)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Traces on BOUNDARY cells; ``traces`` has shape (3, ny, nx), zero elsewhere."""

    grid: Grid
    traces: np.ndarray

    def values_at_boundary(self) -> np.ndarray:
        """(3, nb) array of the prescribed triplets in row-major cell order."""
        return self.traces[:, self.grid.boundary]

    def apply(self, values: np.ndarray) -> None:
        """Overwrite BOUNDARY entries of ``values`` (3, ny, nx) in place."""
        mask = self.grid.boundary
        values[:, mask] = self.traces[:, mask]

    def matches(self, f: Field3, atol: float = 0.0) -> bool:
        mask = self.grid.boundary
        return bool(np.all(np.abs(f.values[:, mask] - self.traces[:, mask]) <= atol))


def _check_trace_triplets(vals: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(vals)):
        raise GridError(f"{what}: non-finite trace values")
    if np.any(vals < 0):
        raise GridError(f"{what}: negative trace values")
    if np.any(np.all(vals > 0, axis=0)):
        raise GridError(f"{what}: some triplet has all three components positive")


def sample_boundary(grid: Grid, trace: Callable) -> BoundaryData:
    """Evaluate ``trace(theta)`` at the polar angle of each BOUNDARY cell.

    ``trace`` may be vectorised (returning a (3, m) array for an m-vector of
    angles) or scalar; both are accepted.
    """
    mask = grid.boundary
    _, theta = grid.polar()
    angles = theta[mask]
    try:
        vals = np.asarray(trace(angles), dtype=float)
        if vals.shape != (3, angles.size):
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([np.asarray(trace(float(t)), dtype=float) for t in angles]).T.reshape(3, angles.size)
    _check_trace_triplets(vals, "sample_boundary")
    traces = np.zeros((3, *grid.shape))
    traces[:, mask] = vals
    return BoundaryData(grid, traces)


def constant_trace(c: Sequence[float]) -> Callable:
    c = np.asarray(c, dtype=float).reshape(3, 1)
    return lambda theta: np.repeat(c, np.size(theta), axis=1)


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian of the last two axes; edge rows/cols are left at zero."""
    out = np.zeros_like(values)
    out[..., 1:-1, 1:-1] = (
        values[..., 2:, 1:-1] + values[..., :-2, 1:-1] + values[..., 1:-1, 2:] + values[..., 1:-1, :-2]
        - 4.0 * values[..., 1:-1, 1:-1]
    ) / h**2
    return out


def _interior_operator(grid: Grid):
    """Matrix of -h^2 Delta_h on INTERIOR unknowns plus the boundary coupling."""
    mask = grid.interior
    ny, nx = grid.shape
    idx = -np.ones(grid.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    iy, ix = np.nonzero(mask)
    rows, cols, data = [idx[iy, ix]], [idx[iy, ix]], [np.full(iy.size, 4.0)]
    b_rows, b_cells = [], []
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        jy, jx = iy + dy, ix + dx
        nb = idx[jy, jx]
        inner = nb >= 0
        rows.append(idx[iy, ix][inner])
        cols.append(nb[inner])
        data.append(-np.ones(inner.sum()))
        b_rows.append(idx[iy, ix][~inner])
        b_cells.append(jy[~inner] * nx + jx[~inner])
    import scipy.sparse as sp  # deferred: keeps CLI start-up fast

    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(iy.size, iy.size))
    return A, idx, np.concatenate(b_rows), np.concatenate(b_cells)


def harmonic_extension(grid: Grid, bdata: BoundaryData, tol: float = 1e-11, maxiter: int | None = None) -> Field3:
    """Componentwise discrete-harmonic extension of the traces, clamped at 0.

    Solved by conjugate gradients; raises :class:`ConvergenceError` if the
    iteration limit is hit before the relative residual drops below ``tol``.
    """
    from scipy.sparse.linalg import cg

    A, idx, b_rows, b_cells = _interior_operator(grid)
    mask = grid.interior
    out = np.zeros((3, *grid.shape))
    maxiter = maxiter or 20 * max(grid.shape)
    for i in range(3):
        flat = bdata.traces[i].ravel()
        rhs = np.bincount(b_rows, weights=flat[b_cells], minlength=A.shape[0])
        if not np.any(rhs):
            sol = np.zeros(A.shape[0])
        else:
            sol, info = cg(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter)
            res = float(np.max(np.abs(A @ sol - rhs)))
            if info != 0:
                raise ConvergenceError(f"harmonic extension of component {i + 1} hit the iteration limit", res)
        comp = out[i]
        comp[mask] = sol
    bdata.apply(out)
    np.maximum(out, 0.0, out=out)
    return Field3(out, grid)


def interp_bilinear_many(f: Field3, px: np.ndarray, py: np.ndarray, outside: float | None = None) -> np.ndarray:
    """Bilinear interpolation at many points, returning shape (3, *px.shape).

    Points beyond the cell-centre extent raise :class:`GridError` unless
    ``outside`` is given, in which case they receive that value.
    """
    g = f.grid
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    fx = (px - g.x[0]) / g.h
    fy = (py - g.y[0]) / g.h
    nx, ny = len(g.x), len(g.y)
    eps = 1e-9
    out_of = (fx < -eps) | (fx > nx - 1 + eps) | (fy < -eps) | (fy > ny - 1 + eps)
    if np.any(out_of) and outside is None:
        raise GridError("interpolation point outside the grid extent")
    fx = np.clip(fx, 0, nx - 1)
    fy = np.clip(fy, 0, ny - 1)
    i0 = np.minimum(np.floor(fx).astype(int), nx - 2)
    j0 = np.minimum(np.floor(fy).astype(int), ny - 2)
    tx = fx - i0
    ty = fy - j0
    v = f.values
    res = (
        v[:, j0, i0] * (1 - tx) * (1 - ty)
        + v[:, j0, i0 + 1] * tx * (1 - ty)
        + v[:, j0 + 1, i0] * (1 - tx) * ty
        + v[:, j0 + 1, i0 + 1] * tx * ty
    )
    if np.any(out_of):
        res[:, out_of] = outside
    return res


def interp_bilinear(f: Field3, point: Sequence[float]) -> np.ndarray:
    """The three component values at a physical point."""
    return interp_bilinear_many(f, np.asarray([point[0]]), np.asarray([point[1]]))[:, 0]


# --- CSV field dumps -------------------------------------------------------

CSV_HEADER = ["x", "y", "u1", "u2", "u3", "cell_class"]


def dump_field(f: Field3, path: str | os.PathLike | io.TextIOBase) -> None:
    """Write ``x,y,u1,u2,u3,cell_class`` rows, row-major, 17 significant digits."""
    g = f.grid
    X, Y = g.centers()
    cols = [X.ravel(), Y.ravel(), *(f.values[i].ravel() for i in range(3))]
    cls = g.cell_class.ravel()
    lines = [",".join(CSV_HEADER)]
    for k in range(cls.size):
        lines.append(",".join(f"{c[k]:.17g}" for c in cols) + f",{CLASS_NAMES[int(cls[k])]}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def load_field(path: str | os.PathLike) -> Field3:
    """Inverse of :func:`dump_field`; rebuilds the grid and checks it matches."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise GridError(f"unexpected header {header}")
        rows = list(reader)
    data = np.array([[float(v) for v in r[:5]] for r in rows])
    names = {v: k for k, v in CLASS_NAMES.items()}
    cls = np.array([names[r[5]] for r in rows], dtype=np.int8)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    nx, ny = xs.size, ys.size
    if nx * ny != len(rows):
        raise GridError("CSV is not a full tensor grid")
    if np.any(cls == EXTERIOR):
        grid = build_grid(Domain.disc(), nx)
    else:
        grid = build_grid(Domain.rectangle(xs[0], xs[-1], ys[0], ys[-1]), nx)
    X, Y = grid.centers()
    if (
        grid.shape != (ny, nx)
        or not np.array_equal(X.ravel(), data[:, 0])
        or not np.array_equal(Y.ravel(), data[:, 1])
        or not np.array_equal(grid.cell_class.ravel(), cls)
    ):
        raise GridError("CSV coordinates do not match a supported grid")
    vals = data[:, 2:5].T.reshape(3, ny, nx).copy()
    return Field3(vals, grid)
