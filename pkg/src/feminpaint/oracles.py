"""Brute-force reference implementations for the test-suite.

Nothing here shares assembly, predicate or solver code with the main
modules.  Every entry point has a size guard so it cannot end up in the
production pipeline by accident.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .image import Image

MAX_FDM_PIXELS = 64 * 64
MAX_B_PIXELS = 256
MAX_B_MASK = 16


class OracleSizeError(ValueError):
    pass


def fdm_inpaint_dense(f: Image, mask_pixels) -> Image:
    """Dense 5-point harmonic inpainting with whole-sample mirrored boundaries.

    Mirroring about the boundary pixel (u[-1] = u[1]) is the reflecting
    condition that linear elements on the full pixel grid reproduce.
    """
    w, h = f.width, f.height
    n = w * h
    if n > MAX_FDM_PIXELS:
        raise OracleSizeError("fdm oracle limited to 64x64 images")
    known = np.zeros(n, dtype=bool)
    known[np.asarray(mask_pixels, dtype=np.int64)] = True
    fp = f.pixels()
    a = np.zeros((n, n))
    rhs = np.zeros((n, f.channels))
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if known[i]:
                a[i, i] = 1.0
                rhs[i] = fp[i]
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if nx < 0 or nx >= w:
                    nx = x - dx
                if ny < 0 or ny >= h:
                    ny = y - dy
                if not (0 <= nx < w and 0 <= ny < h):
                    continue  # 1-pixel-wide image: the mirrored neighbour is itself
                a[i, i] += 1.0
                a[i, ny * w + nx] -= 1.0
    u = np.linalg.solve(a, rhs)
    return Image(w, h, f.channels, u.ravel())


def _incircle(a, b, c, d) -> int:
    rows = [(p[0] - d[0], p[1] - d[1]) for p in (a, b, c)]
    m = [(x, y, x * x + y * y) for x, y in rows]
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _orient(a, b, c) -> int:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def delaunay_check(points, triangles) -> tuple[bool, list[tuple[int, int]]]:
    """Exhaustive empty-circumcircle test; returns (ok, [(triangle, vertex), ...])."""
    pts = [tuple(int(v) for v in p) for p in np.asarray(points).tolist()]
    bad = []
    for t, (i, j, k) in enumerate(np.asarray(triangles).tolist()):
        a, b, c = pts[i], pts[j], pts[k]
        sign = 1 if _orient(a, b, c) > 0 else -1
        for v, d in enumerate(pts):
            if v in (i, j, k):
                continue
            if sign * _incircle(a, b, c, d) > 0:
                bad.append((t, v))
    return not bad, bad


def contains(points, tri, p) -> bool:
    """Closed point-in-triangle test by three orientation signs."""
    a, b, c = (tuple(points[i]) for i in tri)
    o = [_orient(a, b, p), _orient(b, c, p), _orient(c, a, p)]
    return all(x >= 0 for x in o) or all(x <= 0 for x in o)


def locate_exhaustive(points, triangles, p) -> int:
    """Lowest-index triangle containing p, or -1."""
    pts = np.asarray(points).tolist()
    for t, tri in enumerate(np.asarray(triangles).tolist()):
        if contains(pts, tri, p):
            return t
    return -1


def all_triangulations(points):
    """Every triangulation of a small point set, as lists of index triples.

    Enumerates maximal sets of pairwise non-crossing segments (<= 8 points).
    """
    pts = [tuple(int(v) for v in p) for p in np.asarray(points).tolist()]
    n = len(pts)
    if n > 8:
        raise OracleSizeError("triangulation enumeration limited to 8 points")

    def on_segment(a, b, p):
        return (_orient(a, b, p) == 0 and min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))

    segs = [(i, j) for i, j in itertools.combinations(range(n), 2)
            if not any(on_segment(pts[i], pts[j], pts[k]) for k in range(n) if k not in (i, j))]

    def cross(s, t):
        a, b = pts[s[0]], pts[s[1]]
        c, d = pts[t[0]], pts[t[1]]
        if set(s) & set(t):
            return False
        o1, o2 = _orient(a, b, c), _orient(a, b, d)
        o3, o4 = _orient(c, d, a), _orient(c, d, b)
        return o1 * o2 < 0 and o3 * o4 < 0

    results = set()

    def extend(chosen, idx):
        if idx == len(segs):
            results.add(frozenset(chosen))
            return
        s = segs[idx]
        if not any(cross(s, t) for t in chosen):
            extend(chosen + [s], idx + 1)
            # skipping s is only allowed if something will block it
            if any(cross(s, t) for t in segs):
                extend(chosen, idx + 1)
        else:
            extend(chosen, idx + 1)

    extend([], 0)
    out = []
    for edges in results:
        es = set(edges)
        if any(not any(cross(s, t) for t in es) and s not in es for s in segs):
            continue  # not maximal
        tris = []
        for i, j, k in itertools.combinations(range(n), 3):
            if {(i, j), (i, k), (j, k)} <= es and _orient(pts[i], pts[j], pts[k]) != 0:
                if not any(contains(pts, (i, j, k), pts[q]) for q in range(n)
                           if q not in (i, j, k)):
                    tris.append((i, j, k))
        out.append(tris)
    return out


def min_angle(points, triangles) -> float:
    pts = np.asarray(points, dtype=np.float64)
    best = math.pi
    for tri in triangles:
        for c in range(3):
            p = pts[tri[c]]
            u = pts[tri[(c + 1) % 3]] - p
            v = pts[tri[(c + 2) % 3]] - p
            ang = math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(u @ v))
            best = min(best, ang)
    return best


def materialise_B(opr) -> np.ndarray:
    """Dense B, column j = apply(e_j)."""
    if opr.n_pixels > MAX_B_PIXELS or opr.n_mask > MAX_B_MASK:
        raise OracleSizeError("explicit B limited to 256 pixels and 16 mask points")
    eye = np.eye(opr.n_mask)
    return np.column_stack([opr.apply(eye[j]) for j in range(opr.n_mask)])


def dense_least_squares(b_mat: np.ndarray, f_vec) -> np.ndarray:
    """Solve min ||B g - f|| by dense normal equations."""
    b_mat = np.asarray(b_mat, dtype=np.float64)
    if b_mat.size > MAX_B_PIXELS * MAX_B_MASK:
        raise OracleSizeError("dense least squares limited to tiny systems")
    return np.linalg.solve(b_mat.T @ b_mat, b_mat.T @ np.asarray(f_vec, dtype=np.float64))
