"""Delaunay triangulation of pixel positions, point location and pixel binning.

Vertices live on the integer pixel grid, so every predicate is evaluated
exactly.  Cocircular configurations (ubiquitous on a grid) are resolved by
choosing the diagonal that touches the point with the smallest ``(y, x)``.
That rule is a consistent symbolic perturbation, so the triangulation of a
point set is unique: it does not depend on insertion order, and a decoder that
only knows the vertex positions rebuilds exactly the encoder's mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MAX_COORD = 16384


class DegenerateInputError(ValueError):
    """Too few or collinear vertices, or duplicated positions."""


class OutsideHullError(ValueError):
    """A vertex to insert lies outside the current convex hull."""


@dataclass(frozen=True)
class VertexSet:
    """Mesh vertices: integer ``(x, y)`` positions plus a mask/unknown role flag."""

    positions: np.ndarray
    is_mask: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.int64).reshape(-1, 2)
        roles = np.ascontiguousarray(self.is_mask, dtype=bool).reshape(-1)
        if roles.shape[0] != pos.shape[0]:
            raise ValueError("positions and is_mask lengths differ")
        if pos.size and (pos.min() < 0 or pos.max() >= MAX_COORD):
            raise ValueError(f"coordinates must lie in [0, {MAX_COORD})")
        pos.setflags(write=False)
        roles.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "is_mask", roles)

    @classmethod
    def from_pixels(cls, mask_pixels, unknown_pixels, width: int) -> VertexSet:
        """Canonical vertex order: mask block first, then unknown block, each as given."""
        mask_pixels = np.asarray(mask_pixels, dtype=np.int64)
        unknown_pixels = np.asarray(unknown_pixels, dtype=np.int64)
        pix = np.concatenate([mask_pixels, unknown_pixels])
        pos = np.stack([pix % width, pix // width], axis=1)
        roles = np.zeros(len(pix), dtype=bool)
        roles[: len(mask_pixels)] = True
        return cls(pos, roles)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def mask_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_mask)

    @property
    def unknown_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_mask)

    def pixel_indices(self, width: int) -> np.ndarray:
        return self.positions[:, 1] * width + self.positions[:, 0]

    def validate(self, width: int, height: int) -> None:
        """Check the invariants the inpainting pipeline relies on."""
        pos = self.positions
        if np.any(pos[:, 0] >= width) or np.any(pos[:, 1] >= height):
            raise ValueError("vertex outside the image")
        if len(np.unique(self.pixel_indices(width))) != len(self):
            raise DegenerateInputError("duplicate vertex positions")
        if not self.is_mask.any():
            raise ValueError("at least one mask vertex is required")
        corners = {(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)}
        present = set(map(tuple, pos.tolist()))
        if not corners <= present:
            raise ValueError("the four image corners must be vertices")


@dataclass(frozen=True)
class TriMesh:
    """Delaunay triangulation; triangles are CCW and listed in canonical order.

    Canonical order: each triangle starts at its smallest vertex index and the
    rows are sorted lexicographically.  ``neighbors[t, k]`` is the triangle
    across the edge opposite ``triangles[t, k]`` (-1 on the hull).
    """

    vertices: VertexSet
    triangles: np.ndarray
    neighbors: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def insert(self, positions, is_mask) -> TriMesh:
        """Return a new mesh with extra vertices appended (incremental Delaunay)."""
        positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
        is_mask = np.broadcast_to(np.asarray(is_mask, dtype=bool), (positions.shape[0],))
        vs = VertexSet(
            np.concatenate([self.vertices.positions, positions]),
            np.concatenate([self.vertices.is_mask, is_mask]),
        )
        n_old = self.n_vertices
        n_new = len(vs)
        cap = 2 * n_new + 8
        tv = np.empty((cap, 3), dtype=np.int32)
        tn = np.empty((cap, 3), dtype=np.int32)
        nt = self.n_triangles
        tv[:nt] = self.triangles
        tn[:nt] = self.neighbors
        order = np.arange(n_old, n_new, dtype=np.int64)
        order = order[_spatial_order(vs.positions[n_old:])]
        nt = _run_insert(vs, tv, tn, nt, order)
        return _finish(vs, tv[:nt], tn[:nt])

    def triangle_points(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (T, 3, 2)."""
        return self.vertices.positions[self.triangles]


def _spatial_order(pos: np.ndarray) -> np.ndarray:
    # snake through horizontal strips so consecutive points are close for the walk
    n = pos.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    span = max(int(np.ptp(pos[:, 1])) + 1, 1)
    strip = max(int(np.sqrt(span * (int(np.ptp(pos[:, 0])) + 1) / max(n, 1))) * 2, 1)
    row = pos[:, 1] // strip
    x = np.where(row % 2 == 0, pos[:, 0], -pos[:, 0])
    return np.lexsort((pos[:, 1], x, row))


def _run_insert(vs: VertexSet, tv, tn, nt: int, order) -> int:
    xs = np.ascontiguousarray(vs.positions[:, 0])
    ys = np.ascontiguousarray(vs.positions[:, 1])
    stack = np.empty(2 * tv.shape[0] + 16, dtype=np.int64)
    nt, status, bad = _kernels.insert_points(xs, ys, tv, tn, nt, order, nt - 1, stack)
    if status == _kernels.DUPLICATE:
        raise DegenerateInputError(f"vertex {bad} duplicates an existing position")
    if status == _kernels.OUTSIDE:
        raise OutsideHullError(f"vertex {bad} lies outside the convex hull")
    return nt


def _finish(vs: VertexSet, tv: np.ndarray, tn: np.ndarray) -> TriMesh:
    rot = np.argmin(tv, axis=1)
    cols = (rot[:, None] + np.arange(3)) % 3
    tv = np.take_along_axis(tv, cols, axis=1)
    tn = np.take_along_axis(tn, cols, axis=1)
    order = np.lexsort((tv[:, 2], tv[:, 1], tv[:, 0]))
    rank = np.empty(len(order), dtype=np.int32)
    rank[order] = np.arange(len(order), dtype=np.int32)
    tv = np.ascontiguousarray(tv[order], dtype=np.int32)
    tn = tn[order]
    tn = np.ascontiguousarray(np.where(tn >= 0, rank[np.maximum(tn, 0)], -1), dtype=np.int32)
    tv.setflags(write=False)
    tn.setflags(write=False)
    return TriMesh(vs, tv, tn)


def _convex_hull(pos: np.ndarray) -> list[int]:
    """Strict corners of the convex hull in CCW order (Andrew's monotone chain)."""
    idx = np.lexsort((pos[:, 1], pos[:, 0])).tolist()
    pts = pos.tolist()

    def cross(o, a, b):
        return (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) - (
            pts[a][1] - pts[o][1]
        ) * (pts[b][0] - pts[o][0])

    lower: list[int] = []
    for i in idx:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], i) <= 0:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(idx):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], i) <= 0:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def delaunay(vs: VertexSet) -> TriMesh:
    """Delaunay triangulation of ``vs``.

    The hull corners are fanned and flipped to Delaunay first, then the remaining vertices are inserted
    with Lawson flips.  The triangle list depends only on the positions and the
    vertex numbering.
    """
    pos = vs.positions
    n = len(vs)
    if n < 3:
        raise DegenerateInputError("need at least 3 vertices")
    keys = pos[:, 1] * MAX_COORD + pos[:, 0]
    if len(np.unique(keys)) != n:
        raise DegenerateInputError("duplicate vertex positions")
    hull = _convex_hull(pos)
    if len(hull) < 3:
        raise DegenerateInputError("all vertices are collinear")

    cap = 2 * n + 8
    tv = np.empty((cap, 3), dtype=np.int32)
    tn = np.empty((cap, 3), dtype=np.int32)
    h = len(hull)
    nt = h - 2
    for i in range(nt):
        tv[i] = (hull[0], hull[i + 1], hull[i + 2])
        tn[i] = (-1, i + 1 if i + 1 < nt else -1, i - 1)
    _kernels.legalize_all(np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1]),
                          tv, tn, nt)
    on_hull = np.zeros(n, dtype=bool)
    on_hull[hull] = True
    rest = np.flatnonzero(~on_hull)
    rest = rest[_spatial_order(pos[rest])]
    nt = _run_insert(vs, tv, tn, nt, rest.astype(np.int64))
    return _finish(vs, tv[:nt], tn[:nt])


@dataclass(frozen=True)
class Location:
    triangle: int
    weights: np.ndarray
    outside: bool = False


def _barycentric(mesh: TriMesh, t: int, px: float, py: float) -> np.ndarray:
    (ax, ay), (bx, by), (cx, cy) = mesh.vertices.positions[mesh.triangles[t]].tolist()
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    return np.array([w0, w1, w2], dtype=np.float64) / area2


def locate(mesh: TriMesh, p) -> Location:
    """Find the lowest-index triangle containing integer point ``p = (x, y)``.

    Points outside the hull fall back to the nearest triangle with clamped
    weights and ``outside=True``.
    """
    px, py = int(p[0]), int(p[1])
    xs = np.ascontiguousarray(mesh.vertices.positions[:, 0])
    ys = np.ascontiguousarray(mesh.vertices.positions[:, 1])
    t, status, k = _kernels.locate(xs, ys, mesh.triangles, mesh.neighbors, px, py, 0, 7)
    if status == _kernels.OUTSIDE:
        return _nearest_triangle(mesh, px, py)
    t = int(t)
    if status == _kernels.ON_EDGE:
        nb = int(mesh.neighbors[t, k])
        if 0 <= nb < t:
            t = nb
    elif status == _kernels.DUPLICATE:
        v = mesh.triangles[t, k]
        t = int(np.flatnonzero((mesh.triangles == v).any(axis=1))[0])
    return Location(t, _barycentric(mesh, t, px, py))


def _nearest_triangle(mesh: TriMesh, px, py) -> Location:
    tri = mesh.triangle_points().astype(np.float64)
    p = np.array([px, py], dtype=np.float64)
    best = np.full(mesh.n_triangles, np.inf)
    for k in range(3):
        a = tri[:, k]
        b = tri[:, (k + 1) % 3]
        ab = b - a
        s = np.clip(((p - a) * ab).sum(1) / (ab * ab).sum(1), 0.0, 1.0)
        d = ((a + s[:, None] * ab - p) ** 2).sum(1)
        best = np.minimum(best, d)
    t = int(np.argmin(best))
    w = np.clip(_barycentric(mesh, t, px, py), 0.0, None)
    return Location(t, w / w.sum(), outside=True)


@dataclass(frozen=True)
class PixelBinning:
    """Per-pixel owning triangle and barycentric weights, row-major pixel order."""

    width: int
    height: int
    owner: np.ndarray
    weights: np.ndarray

    def counts(self, n_triangles: int) -> np.ndarray:
        return np.bincount(self.owner, minlength=n_triangles)


def bin_pixels(mesh: TriMesh, width: int, height: int) -> PixelBinning:
    """Assign every pixel to one triangle; shared edges go to the lower index."""
    xs = np.ascontiguousarray(mesh.vertices.positions[:, 0])
    ys = np.ascontiguousarray(mesh.vertices.positions[:, 1])
    npix = width * height
    owner = np.full(npix, -1, dtype=np.int32)
    weights = np.zeros((npix, 3), dtype=np.float64)
    _kernels.rasterize(xs, ys, mesh.triangles, width, height, owner, weights)
    missing = np.flatnonzero(owner < 0)
    for i in missing.tolist():
        loc = locate(mesh, (i % width, i // width))
        owner[i] = loc.triangle
        weights[i] = loc.weights
    return PixelBinning(width, height, owner, weights)
