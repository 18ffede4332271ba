"""Nodal-set classification at cell resolution.

A component is treated as vanishing at a cell when it falls below
``tau * max(field)``. From that proxy we build the multiplicity map, the
triple-point clusters, the pairwise interfaces (zero contours of
``u_i - u_j`` where the third component is positive) and the loop count of
the interface graph.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist
from skimage.measure import find_contours

from .geometry import Field3, Grid

DEFAULT_TAU = 1e-2
PAIRS = ((0, 1), (0, 2), (1, 2))
# cells of slack between a thresholded zero set and the true one
BOUNDARY_TOLERANCE = 2
_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


def holder_tau(grid: Grid, c: float = 1.0) -> float:
    """Threshold ``c * h**(3/4)``, matched to the Hölder modulus at triple points."""
    return c * grid.h**0.75


def _scale(f: Field3) -> float:
    m = float(np.max(f.values[:, f.grid.active])) if np.any(f.grid.active) else 0.0
    if m <= 0:
        raise ValueError("field vanishes identically")
    return m


def zero_sets(f: Field3, tau: float) -> np.ndarray:
    """Boolean (3, ny, nx): component below ``tau * max`` on active cells."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return (f.values < tau * _scale(f)) & f.grid.active


def multiplicity_map(f: Field3, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Number of vanishing components per INTERIOR cell; -1 elsewhere."""
    z = zero_sets(f, tau)
    m = z.sum(axis=0).astype(np.int64)
    m[~f.grid.interior] = -1
    return m


@dataclass(frozen=True)
class TriplePoint:
    x: float
    y: float
    cells: int
    diameter: float

    @property
    def point(self) -> tuple[float, float]:
        return self.x, self.y


def detect_triple_points(mmap: np.ndarray, grid: Grid) -> list[TriplePoint]:
    """Centroids of 8-connected clusters of multiplicity-3 cells."""
    labels, count = ndimage.label(mmap == 3, structure=_EIGHT)
    out = []
    for lab in range(1, count + 1):
        iy, ix = np.nonzero(labels == lab)
        pts = np.column_stack([grid.x[ix], grid.y[iy]])
        diam = float(pdist(pts).max()) if len(pts) > 1 else 0.0
        c = pts.mean(axis=0)
        out.append(TriplePoint(float(c[0]), float(c[1]), len(pts), diam))
    out.sort(key=lambda t: (t.x, t.y))
    return out


def _to_physical(contour: np.ndarray, grid: Grid) -> np.ndarray:
    return np.column_stack([grid.x[0] + contour[:, 1] * grid.h, grid.y[0] + contour[:, 0] * grid.h])


def extract_interfaces(
    f: Field3,
    tau: float = DEFAULT_TAU,
    anchors: Sequence[Sequence[float]] | None = None,
) -> dict[tuple[int, int], list[np.ndarray]]:
    """Zero contours of ``u_i - u_j`` where the third component is at least ``tau * max``.

    Keys are 0-based component pairs. Each polyline is an (m, 2) array of
    physical points, oriented to start at the end nearest to an anchor
    (the triple points if given, else the origin); polylines are listed
    longest first.
    """
    g = f.grid
    scale = _scale(f)
    anchors = np.asarray(anchors if anchors else [[0.0, 0.0]], dtype=float)
    out = {}
    for i, j in PAIRS:
        k = 3 - i - j
        mask = (f.values[k] >= tau * scale) & g.active
        diff = np.where(g.active, f.values[i] - f.values[j], 0.0)
        lines = []
        for c in find_contours(diff, 0.0, mask=mask):
            if len(c) < 2:
                continue
            p = _to_physical(c, g)
            d0 = np.min(np.hypot(*(anchors - p[0]).T))
            d1 = np.min(np.hypot(*(anchors - p[-1]).T))
            if d1 < d0:
                p = p[::-1]
            lines.append(p)
        lines.sort(key=lambda p: -_length(p))
        out[(i, j)] = lines
    return out


def _length(p: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(p, axis=0).T)))


def _is_closed(p: np.ndarray, tol: float) -> bool:
    return len(p) > 2 and math.hypot(*(p[0] - p[-1])) <= tol


def interface_graph(
    interfaces: dict[tuple[int, int], list[np.ndarray]],
    triple_points: Sequence[TriplePoint],
    grid: Grid,
    snap: float | None = None,
) -> nx.MultiGraph:
    """Polylines as edges; endpoints within ``snap`` of each other (or of a triple
    cluster) are merged into one vertex."""
    snap = 2.0 * grid.h if snap is None else snap
    G = nx.MultiGraph()
    ends = []  # (point, edge_id, side)
    edges = []
    for pair in sorted(interfaces):
        for p in interfaces[pair]:
            eid = len(edges)
            edges.append((pair, p))
            if _is_closed(p, 1e-9):
                ends.append((p[0], eid, 0))
            else:
                ends.append((p[0], eid, 0))
                ends.append((p[-1], eid, 1))
    # union-find over endpoints and triple-point anchors
    pts = [e[0] for e in ends] + [np.array(t.point) for t in triple_points]
    radii = [snap] * len(ends) + [snap + 0.5 * t.diameter for t in triple_points]
    parent = list(range(len(pts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if math.hypot(*(pts[a] - pts[b])) <= max(radii[a], radii[b]):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    for a in range(len(pts)):
        G.add_node(find(a))
    by_edge: dict[int, list[int]] = {}
    for idx, (_, eid, _side) in enumerate(ends):
        by_edge.setdefault(eid, []).append(find(idx))
    for eid, (pair, p) in enumerate(edges):
        vs = by_edge[eid]
        u, v = (vs[0], vs[0]) if len(vs) == 1 else (vs[0], vs[1])
        G.add_edge(u, v, pair=pair, length=_length(p))
    return G


def count_loops(
    interfaces: dict[tuple[int, int], list[np.ndarray]],
    triple_points: Sequence[TriplePoint],
    grid: Grid,
    snap: float | None = None,
) -> int:
    """Cyclomatic number ``edges - vertices + components`` of the interface graph."""
    G = interface_graph(interfaces, triple_points, grid, snap)
    if G.number_of_nodes() == 0:
        return 0
    return G.number_of_edges() - G.number_of_nodes() + nx.number_connected_components(G)


def interface_directions(
    interfaces: dict[tuple[int, int], list[np.ndarray]],
    center: Sequence[float],
    rmin: float,
    rmax: float,
) -> dict[tuple[int, int], float]:
    """Mean direction (radians in [0, 2pi)) of each interface's points in the annulus about ``center``."""
    c = np.asarray(center, dtype=float)
    out = {}
    for pair, lines in interfaces.items():
        if not lines:
            continue
        pts = np.vstack(lines) - c
        r = np.hypot(pts[:, 0], pts[:, 1])
        sel = (r >= rmin) & (r <= rmax)
        if not np.any(sel):
            continue
        u = pts[sel] / r[sel, None]
        m = u.mean(axis=0)
        out[pair] = float(np.mod(math.atan2(m[1], m[0]), 2 * math.pi))
    return out


def pairwise_angles(directions: Sequence[float]) -> list[float]:
    """Consecutive angular gaps (radians) between sorted directions around the circle."""
    d = sorted(directions)
    if not d:
        return []
    return [(b - a) for a, b in zip(d, d[1:])] + [2 * math.pi - d[-1] + d[0]]


class PartitionCheck(NamedTuple):
    partition_ok: bool
    zero_closure_ok: bool


def _interior_of(mask: np.ndarray, grid: Grid, depth: int = 1) -> np.ndarray:
    # EXTERIOR cells count as members so the domain edge does not erode the set
    padded = mask | grid.exterior
    return ndimage.binary_erosion(padded, structure=_FOUR, iterations=depth, border_value=1) & mask


def check_partition(f: Field3, tau: float = DEFAULT_TAU, depth: int = BOUNDARY_TOLERANCE) -> PartitionCheck:
    """Open-partition and zero-set-closure checks at cell resolution.

    ``partition_ok``: the interiors (erosion by ``depth`` cells, matching the
    boundary tolerance of the threshold proxy) of the three zero sets are pairwise
    disjoint, and together with the band of zero-set cells outside those
    interiors they cover every INTERIOR cell.
    ``zero_closure_ok``: every below-threshold cell lies within two cells of
    an interior cluster (size >= 4) of the same zero set.
    """
    g = f.grid
    z = zero_sets(f, tau)
    ints = np.stack([_interior_of(z[i], g, depth) for i in range(3)])
    disjoint = not any(np.any(ints[i] & ints[j] & g.interior) for i, j in PAIRS)
    # zero-set cells outside every interior form the interface band
    band = z.any(axis=0) & ~ints.any(axis=0)
    cover = bool(np.all((ints.any(axis=0) | band)[g.interior]))

    closure = True
    for i in range(3):
        zi = z[i] & g.interior
        if not np.any(zi):
            continue
        labels, count = ndimage.label(ints[i], structure=_FOUR)
        sizes = ndimage.sum(np.ones_like(labels), labels, index=np.arange(1, count + 1))
        big = np.isin(labels, 1 + np.nonzero(np.asarray(sizes) >= 4)[0])
        near = ndimage.binary_dilation(big, structure=_EIGHT, iterations=2)
        if np.any(zi & ~near):
            closure = False
    return PartitionCheck(disjoint and cover, closure)


def vanishing_components(f: Field3, tau: float = DEFAULT_TAU) -> list[int]:
    """0-based components that are below threshold on every INTERIOR cell."""
    z = zero_sets(f, tau)
    return [i for i in range(3) if np.all(z[i][f.grid.interior])]


def nodal_free_boundary_agreement(f: Field3, tau: float = DEFAULT_TAU, reach: int = 1) -> tuple[bool, bool]:
    """Cell-level comparison of the nodal set (multiplicity >= 2) with the
    union of positivity-set boundaries, each within ``reach`` cells of the other.

    Returns ``(nodal near boundary, boundary near nodal)``.
    """
    g = f.grid
    z = zero_sets(f, tau)
    pos = ~z & g.active
    edge = np.zeros(g.shape, dtype=bool)
    for i in range(3):
        grown = ndimage.binary_dilation(pos[i], structure=_FOUR)
        shrunk = ndimage.binary_erosion(pos[i] | g.exterior, structure=_FOUR, border_value=1)
        edge |= (grown & ~pos[i]) | (pos[i] & ~shrunk)
    edge &= g.interior
    # a sharp discrete interface has its two zeros on neighbouring cells, so a
    # component counts as vanishing at a cell if it does so on the 4-stencil
    near_zero = np.stack([ndimage.binary_dilation(z[i] & g.active, structure=_FOUR) for i in range(3)])
    nodal = (near_zero.sum(axis=0) >= 2) & g.interior
    near_edge = ndimage.binary_dilation(edge, structure=_EIGHT, iterations=reach)
    near_nodal = ndimage.binary_dilation(nodal, structure=_EIGHT, iterations=reach)
    return bool(np.all(near_edge[nodal])), bool(np.all(near_nodal[edge]))


@dataclass
class NodalClassification:
    multiplicity: np.ndarray
    triple_points: list[TriplePoint]
    interfaces: dict[tuple[int, int], list[np.ndarray]]
    loop_count: int
    partition_ok: bool
    zero_closure_ok: bool
    tau: float
    vanishing: list[int] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return bool(self.vanishing)

    def to_dict(self) -> dict:
        return {
            "triple_points": [[t.x, t.y] for t in self.triple_points],
            "loop_count": self.loop_count,
            "partition_ok": self.partition_ok,
            "zero_closure_ok": self.zero_closure_ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write(self, outdir: str | os.PathLike) -> list[str]:
        """JSON summary plus one ``i-j.csv`` polyline file per pair (1-based names)."""
        os.makedirs(outdir, exist_ok=True)
        paths = [os.path.join(outdir, "nodal.json")]
        with open(paths[0], "w") as fh:
            fh.write(self.to_json() + "\n")
        for (i, j), lines in sorted(self.interfaces.items()):
            path = os.path.join(outdir, f"{i + 1}-{j + 1}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["segment_id", "x", "y"])
                for sid, p in enumerate(lines):
                    for x, y in p:
                        w.writerow([sid, f"{x:.17g}", f"{y:.17g}"])
            paths.append(path)
        return paths


def classify(f: Field3, tau: float = DEFAULT_TAU, partition_tau: float | None = None) -> NodalClassification:
    """Full nodal analysis at threshold ``tau``.

    The partition checks may use their own threshold: a Hölder-scaled ``tau``
    suits triple-point detection but widens the overlap bands between zero
    sets beyond the erosion depth.
    """
    mmap = multiplicity_map(f, tau)
    tps = detect_triple_points(mmap, f.grid)
    inter = extract_interfaces(f, tau, anchors=[t.point for t in tps] or None)
    loops = count_loops(inter, tps, f.grid)
    pc = check_partition(f, tau if partition_tau is None else partition_tau)
    return NodalClassification(
        multiplicity=mmap,
        triple_points=tps,
        interfaces=inter,
        loop_count=loops,
        partition_ok=pc.partition_ok,
        zero_closure_ok=pc.zero_closure_ok,
        tau=tau,
        vanishing=vanishing_components(f, tau),
    )
