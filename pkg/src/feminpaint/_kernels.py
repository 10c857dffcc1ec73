"""Numba kernels for the triangulation and pixel rasterisation.

Triangles are stored as two int32 arrays of shape (capacity, 3): ``tv`` holds
the vertex ids in counter-clockwise order and ``tn`` the neighbouring triangle
opposite each vertex (-1 on the convex hull).  All geometric predicates run on
int64 pixel coordinates and are exact for image sides up to 16384.
"""

import numpy as np
from numba import njit

# locate() status codes
INSIDE = 0
ON_EDGE = 1
OUTSIDE = -1
DUPLICATE = -2


@njit(cache=True, inline="always")
def orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True, inline="always")
def incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """Positive iff d lies strictly inside the circle through CCW a, b, c."""
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (adx * (bdy * cd - bd * cdy)
            - ady * (bdx * cd - bd * cdx)
            + ad * (bdx * cdy - bdy * cdx))


@njit(cache=True, inline="always")
def _lex_less(xs, ys, a, b):
    return ys[a] < ys[b] or (ys[a] == ys[b] and xs[a] < xs[b])


@njit(cache=True)
def _should_flip(xs, ys, p, a, b, d):
    """Edge ab of CCW triangle (p, a, b) is illegal w.r.t. the opposite vertex d.

    Cocircular ties go to the diagonal touching the (y, x)-smallest of the four
    points.  This equals a symbolic lifting perturbation, so the result does not
    depend on insertion order.
    """
    s = incircle(xs[p], ys[p], xs[a], ys[a], xs[b], ys[b], xs[d], ys[d])
    if s > 0:
        return True
    if s < 0:
        return False
    lo = p
    if _lex_less(xs, ys, d, lo):
        lo = d
    if _lex_less(xs, ys, a, lo) or _lex_less(xs, ys, b, lo):
        return False
    return True


@njit(cache=True, inline="always")
def _replace_neighbor(tn, t, old, new):
    if t < 0:
        return
    for k in range(3):
        if tn[t, k] == old:
            tn[t, k] = new
            return


@njit(cache=True)
def locate(xs, ys, tv, tn, px, py, start, seed):
    """Visibility walk from ``start``.  Returns (triangle, status, local index).

    For ON_EDGE the local index names the vertex opposite the hit edge; for
    DUPLICATE it names the coinciding vertex.
    """
    t = start
    state = seed
    steps = 0
    limit = 4 * tv.shape[0] + 16
    while steps < limit:
        steps += 1
        # cheap LCG to randomise the edge probing order and avoid walk cycles
        state = (state * 1103515245 + 12345) & 0x7FFFFFFF
        off = state % 3
        moved = False
        for kk in range(3):
            k = (kk + off) % 3
            a = tv[t, (k + 1) % 3]
            b = tv[t, (k + 2) % 3]
            if orient(xs[a], ys[a], xs[b], ys[b], px, py) < 0:
                nb = tn[t, k]
                if nb < 0:
                    return t, OUTSIDE, k
                t = nb
                moved = True
                break
        if not moved:
            zeros = 0
            zk = -1
            for k in range(3):
                a = tv[t, (k + 1) % 3]
                b = tv[t, (k + 2) % 3]
                if orient(xs[a], ys[a], xs[b], ys[b], px, py) == 0:
                    zeros += 1
                    zk = k
            if zeros == 0:
                return t, INSIDE, -1
            if zeros == 1:
                return t, ON_EDGE, zk
            for k in range(3):
                v = tv[t, k]
                if xs[v] == px and ys[v] == py:
                    return t, DUPLICATE, k
            return t, OUTSIDE, -1
    return t, OUTSIDE, -1


@njit(cache=True)
def _legalize(xs, ys, tv, tn, p, stack, top):
    while top > 0:
        top -= 1
        t = stack[top]
        i = -1
        for k in range(3):
            if tv[t, k] == p:
                i = k
        if i < 0:
            continue
        u = tn[t, i]
        if u < 0:
            continue
        a = tv[t, (i + 1) % 3]
        b = tv[t, (i + 2) % 3]
        j = -1
        for k in range(3):
            if tn[u, k] == t:
                j = k
        d = tv[u, j]
        if not _should_flip(xs, ys, p, a, b, d):
            continue
        n_bp = tn[t, (i + 1) % 3]
        n_pa = tn[t, (i + 2) % 3]
        n_ad = tn[u, (j + 1) % 3]
        n_db = tn[u, (j + 2) % 3]
        tv[t, 0] = p
        tv[t, 1] = a
        tv[t, 2] = d
        tn[t, 0] = n_ad
        tn[t, 1] = u
        tn[t, 2] = n_pa
        tv[u, 0] = p
        tv[u, 1] = d
        tv[u, 2] = b
        tn[u, 0] = n_db
        tn[u, 1] = n_bp
        tn[u, 2] = t
        _replace_neighbor(tn, n_ad, u, t)
        _replace_neighbor(tn, n_bp, t, u)
        stack[top] = t
        stack[top + 1] = u
        top += 2
    return top


@njit(cache=True)
def legalize_all(xs, ys, tv, tn, ntri):
    """Lawson flips over every interior edge until the triangulation is Delaunay.

    Returns the number of flips.  Used once on the initial hull fan, whose
    edges are never revisited by point insertion.
    """
    flips = 0
    changed = True
    while changed:
        changed = False
        for t in range(ntri):
            for i in range(3):
                u = tn[t, i]
                if u < 0:
                    continue
                p = tv[t, i]
                a = tv[t, (i + 1) % 3]
                b = tv[t, (i + 2) % 3]
                j = -1
                for k in range(3):
                    if tn[u, k] == t:
                        j = k
                d = tv[u, j]
                if not _should_flip(xs, ys, p, a, b, d):
                    continue
                n_bp = tn[t, (i + 1) % 3]
                n_pa = tn[t, (i + 2) % 3]
                n_ad = tn[u, (j + 1) % 3]
                n_db = tn[u, (j + 2) % 3]
                tv[t, 0] = p
                tv[t, 1] = a
                tv[t, 2] = d
                tn[t, 0] = n_ad
                tn[t, 1] = u
                tn[t, 2] = n_pa
                tv[u, 0] = p
                tv[u, 1] = d
                tv[u, 2] = b
                tn[u, 0] = n_db
                tn[u, 1] = n_bp
                tn[u, 2] = t
                _replace_neighbor(tn, n_ad, u, t)
                _replace_neighbor(tn, n_bp, t, u)
                flips += 1
                changed = True
                break
    return flips


@njit(cache=True)
def insert_points(xs, ys, tv, tn, ntri, order, start, stack):
    """Insert vertices ``order`` into the triangulation in place.

    Returns (new triangle count, status, offending vertex); status is 0 on
    success, OUTSIDE or DUPLICATE otherwise.
    """
    seed = 1
    for idx in range(order.shape[0]):
        p = order[idx]
        px = xs[p]
        py = ys[p]
        if start < 0 or start >= ntri:
            start = ntri - 1
        t, status, k = locate(xs, ys, tv, tn, px, py, start, seed + idx)
        if status == OUTSIDE or status == DUPLICATE:
            return ntri, status, p
        top = 0
        if status == INSIDE:
            v0 = tv[t, 0]
            v1 = tv[t, 1]
            v2 = tv[t, 2]
            n0 = tn[t, 0]
            n1 = tn[t, 1]
            n2 = tn[t, 2]
            t1 = ntri
            t2 = ntri + 1
            ntri += 2
            tv[t, 0] = v0
            tv[t, 1] = v1
            tv[t, 2] = p
            tn[t, 0] = t1
            tn[t, 1] = t2
            tn[t, 2] = n2
            tv[t1, 0] = v1
            tv[t1, 1] = v2
            tv[t1, 2] = p
            tn[t1, 0] = t2
            tn[t1, 1] = t
            tn[t1, 2] = n0
            tv[t2, 0] = v2
            tv[t2, 1] = v0
            tv[t2, 2] = p
            tn[t2, 0] = t
            tn[t2, 1] = t1
            tn[t2, 2] = n1
            _replace_neighbor(tn, n0, t, t1)
            _replace_neighbor(tn, n1, t, t2)
            stack[0] = t
            stack[1] = t1
            stack[2] = t2
            top = 3
        else:
            # p on the edge (v1, v2) of t, opposite local vertex k
            v0 = tv[t, k]
            v1 = tv[t, (k + 1) % 3]
            v2 = tv[t, (k + 2) % 3]
            n0 = tn[t, k]
            n1 = tn[t, (k + 1) % 3]
            n2 = tn[t, (k + 2) % 3]
            ta = ntri
            ntri += 1
            tv[t, 0] = v0
            tv[t, 1] = v1
            tv[t, 2] = p
            tv[ta, 0] = v0
            tv[ta, 1] = p
            tv[ta, 2] = v2
            u = n0
            ub = -1
            if u >= 0:
                j = -1
                for kk in range(3):
                    if tn[u, kk] == t:
                        j = kk
                w = tv[u, j]
                m1 = tn[u, (j + 1) % 3]  # opposite v2 in u: edge (v1, w)
                m2 = tn[u, (j + 2) % 3]  # opposite v1 in u: edge (w, v2)
                ub = ntri
                ntri += 1
                # u = (w, v2, p), ub = (w, p, v1)
                tv[u, 0] = w
                tv[u, 1] = v2
                tv[u, 2] = p
                tn[u, 0] = ta
                tn[u, 1] = ub
                tn[u, 2] = m2
                tv[ub, 0] = w
                tv[ub, 1] = p
                tv[ub, 2] = v1
                tn[ub, 0] = t
                tn[ub, 1] = m1
                tn[ub, 2] = u
                _replace_neighbor(tn, m1, u, ub)
            tn[t, 0] = ub
            tn[t, 1] = ta
            tn[t, 2] = n2
            tn[ta, 0] = u
            tn[ta, 1] = n1
            tn[ta, 2] = t
            _replace_neighbor(tn, n1, t, ta)
            stack[0] = t
            stack[1] = ta
            top = 2
            if u >= 0:
                stack[2] = u
                stack[3] = ub
                top = 4
        _legalize(xs, ys, tv, tn, p, stack, top)
        start = t
    return ntri, 0, -1


@njit(cache=True)
def rasterize(xs, ys, tv, width, height, owner, bary):
    """Assign every pixel to the lowest-index closed triangle containing it."""
    for t in range(tv.shape[0]):
        a = tv[t, 0]
        b = tv[t, 1]
        c = tv[t, 2]
        ax = xs[a]
        ay = ys[a]
        bx = xs[b]
        by = ys[b]
        cx = xs[c]
        cy = ys[c]
        area2 = orient(ax, ay, bx, by, cx, cy)
        x0 = max(min(ax, bx, cx), 0)
        x1 = min(max(ax, bx, cx), width - 1)
        y0 = max(min(ay, by, cy), 0)
        y1 = min(max(ay, by, cy), height - 1)
        inv = 1.0 / area2
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                i = y * width + x
                if owner[i] >= 0:
                    continue
                w0 = orient(bx, by, cx, cy, x, y)
                if w0 < 0:
                    continue
                w1 = orient(cx, cy, ax, ay, x, y)
                if w1 < 0:
                    continue
                w2 = orient(ax, ay, bx, by, x, y)
                if w2 < 0:
                    continue
                owner[i] = t
                bary[i, 0] = w0 * inv
                bary[i, 1] = w1 * inv
                bary[i, 2] = w2 * inv


@njit(cache=True)
def best_empty_pixels(owner, err, empty, ntri):
    """Per triangle, the owned empty pixel of largest error (lowest index on ties)."""
    best = np.full(ntri, -1, dtype=np.int64)
    best_err = np.full(ntri, -1.0)
    for i in range(owner.shape[0]):
        if not empty[i]:
            continue
        t = owner[i]
        if err[i] > best_err[t]:
            best_err[t] = err[i]
            best[t] = i
    return best


@njit(cache=True)
def cg_csr(indptr, indices, data, b, x, tol, max_iter, dinv):
    """Jacobi-preconditioned CG on a CSR matrix, updating ``x`` in place.

    ``dinv`` is the inverse diagonal, or all ones for plain CG.  The stopping
    test uses the unpreconditioned residual ||b - Ax|| / ||b||.  Returns
    (iterations, relative residual, curvature flag); the flag is set when
    p^T A p <= 0 was met and the iteration stopped.
    """
    n = b.shape[0]
    r = np.empty(n)
    p = np.empty(n)
    q = np.empty(n)
    bnorm2 = 0.0
    rr = 0.0
    rz = 0.0
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        ri = b[i] - s
        r[i] = ri
        p[i] = ri * dinv[i]
        bnorm2 += b[i] * b[i]
        rr += ri * ri
        rz += ri * ri * dinv[i]
    bnorm = np.sqrt(bnorm2)
    res = np.sqrt(rr) / bnorm
    it = 0
    while res > tol and it < max_iter:
        pq = 0.0
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * p[indices[k]]
            q[i] = s
            pq += p[i] * s
        if not pq > 0.0:
            return it, res, True
        alpha = rz / pq
        rr = 0.0
        rz_new = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            ri = r[i] - alpha * q[i]
            r[i] = ri
            rr += ri * ri
            rz_new += ri * ri * dinv[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = r[i] * dinv[i] + beta * p[i]
        it += 1
        res = np.sqrt(rr) / bnorm
    return it, res, False
