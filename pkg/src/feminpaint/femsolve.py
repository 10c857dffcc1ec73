"""Linear finite elements for harmonic inpainting on a triangle mesh."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .image import Image
from .mesh import PixelBinning, TriMesh, bin_pixels

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
# diagonal scaling keeps inner iteration counts flat as meshes grow
DEFAULT_PRECOND = "jacobi"


class AssemblyError(ValueError):
    pass


class SingularSystemError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    pass


def default_max_iter(n: int) -> int:
    return max(int(math.ceil(10 * math.sqrt(max(n, 1)))), 10)


def local_stiffness(tri_xy: np.ndarray) -> np.ndarray:
    """Element matrices for triangles ``tri_xy`` of shape (T, 3, 2).

    Off-diagonal (i, j) is -cot(angle opposite edge ij) / 2; rows sum to zero.
    """
    tri_xy = np.asarray(tri_xy, dtype=np.float64)
    k = np.zeros((tri_xy.shape[0], 3, 3))
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        ea = tri_xy[:, a] - tri_xy[:, c]
        eb = tri_xy[:, b] - tri_xy[:, c]
        cross = ea[:, 0] * eb[:, 1] - ea[:, 1] * eb[:, 0]
        if np.any(cross == 0):
            raise AssemblyError("zero-area triangle")
        w = 0.5 * (ea * eb).sum(1) / np.abs(cross)
        k[:, a, b] -= w
        k[:, b, a] -= w
        k[:, a, a] += w
        k[:, b, b] += w
    return k


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Global cotangent stiffness matrix (n_vertices x n_vertices, CSR)."""
    tri = mesh.triangles
    k = local_stiffness(mesh.triangle_points())
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    a = sp.coo_matrix((k.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    return a


def monotone_stiffness(a: sp.csr_matrix, is_mask) -> sp.csr_matrix:
    """Drop positive off-diagonal couplings, keeping rows summing to zero.

    On a Delaunay mesh these only occur on hull edges whose single opposite
    angle is obtuse.  Without them the matrix is a weighted graph Laplacian,
    so every unknown value is a convex combination of its neighbours and the
    discrete maximum principle holds.  If dropping them would cut an unknown
    vertex off from every mask vertex, ``a`` is returned unchanged.
    """
    a = a.tocoo()
    pos = (a.row != a.col) & (a.data > 0)
    if not pos.any():
        return a.tocsr()
    data = np.where(pos, 0.0, a.data)
    diag = a.row == a.col
    data[diag] += np.bincount(a.row[pos], weights=a.data[pos], minlength=a.shape[0])[a.row[diag]]
    b = sp.csr_matrix((data, (a.row, a.col)), shape=a.shape)
    b.eliminate_zeros()
    _, comp = connected_components(b, directed=False)
    if not np.isin(comp, comp[np.asarray(is_mask, dtype=bool)]).all():
        log.warning("monotone stiffness would isolate unknown vertices; keeping exact matrix")
        return a.tocsr()
    return b


def reduce_dirichlet(a: sp.csr_matrix, is_mask) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Split into the unknown-unknown block and the unknown-mask coupling."""
    is_mask = np.asarray(is_mask, dtype=bool)
    if not is_mask.any():
        raise SingularSystemError("no mask vertex: the Neumann problem is singular")
    u = np.flatnonzero(~is_mask)
    k = np.flatnonzero(is_mask)
    rows = a[u]
    return rows[:, u].tocsr(), rows[:, k].tocsr()


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cg_solve(a, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             x0=None, precond=None) -> CGResult:
    """Conjugate gradients for an SPD operator.

    ``a`` is anything supporting ``a @ x`` or a callable.  ``precond`` is None
    (plain CG), ``"jacobi"`` (needs a sparse matrix) or a callable applying an
    SPD preconditioner.  Stops once ||b - A x|| / ||b|| <= tol.
    """
    matvec = a if callable(a) else a.__matmul__
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, True)
    if sp.isspmatrix_csr(a) and (precond is None or isinstance(precond, str)):
        return _cg_csr(a, b, tol, max_iter, x0, precond)
    if isinstance(precond, str):
        raise ValueError(f"preconditioner {precond!r} needs a CSR matrix")
    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - matvec(x)
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = float(np.dot(r, z))
    res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while res > tol and it < max_iter:
        q = matvec(p)
        pq = float(np.dot(p, q))
        if not math.isfinite(pq):
            raise DivergenceError("non-finite value in conjugate gradients")
        if pq <= 0.0:
            raise DivergenceError(f"non-positive curvature {pq:g}: operator is not SPD")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        z = r if precond is None else precond(r)
        rz_new = float(np.dot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
    if not math.isfinite(res):
        raise DivergenceError("non-finite residual in conjugate gradients")
    if res > tol:
        log.debug("CG stopped at max_iter=%d with residual %.3g", max_iter, res)
    return CGResult(x, it, res, res <= tol)


def _cg_csr(a, b, tol, max_iter, x0, precond) -> CGResult:
    x = np.zeros(b.shape[0]) if x0 is None else np.array(x0, dtype=np.float64)
    if precond == "jacobi":
        dinv = 1.0 / a.diagonal()
    elif precond is None:
        dinv = np.ones(b.shape[0])
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")
    its, res, bad = _kernels.cg_csr(a.indptr, a.indices, a.data, b, x, tol, max_iter, dinv)
    if bad:
        raise DivergenceError("non-positive curvature: operator is not SPD")
    if not (math.isfinite(res) and np.all(np.isfinite(x))):
        raise DivergenceError("non-finite value in conjugate gradients")
    if res > tol:
        log.debug("CG stopped at max_iter=%d with residual %.3g", max_iter, res)
    return CGResult(x, its, res, res <= tol)


def interpolation_matrix(mesh: TriMesh, binning: PixelBinning) -> sp.csr_matrix:
    """Sparse (n_pixels x n_vertices) barycentric interpolation, 3 entries per row."""
    npix = binning.owner.shape[0]
    indices = np.ascontiguousarray(mesh.triangles[binning.owner].ravel(), dtype=np.int32)
    indptr = np.arange(0, 3 * npix + 1, 3, dtype=np.int32)
    return sp.csr_matrix((binning.weights.ravel(), indices, indptr),
                         shape=(npix, mesh.n_vertices))


@dataclass
class InpaintResult:
    vertex_values: np.ndarray   # (n_vertices, channels)
    image: Image
    iterations: int
    residual: float


class HarmonicSystem:
    """Assembled FEM system of one mesh, reusable across many right-hand sides.

    ``monotone`` applies :func:`monotone_stiffness`; pass False for the plain
    cotangent matrix.
    """

    def __init__(self, mesh: TriMesh, width: int, height: int,
                 binning: PixelBinning | None = None, precond: str | None = DEFAULT_PRECOND,
                 monotone: bool = True):
        self.mesh = mesh
        self.precond = precond
        self.width = width
        self.height = height
        vs = mesh.vertices
        self.mask_idx = vs.mask_indices
        self.unknown_idx = vs.unknown_indices
        a = assemble_stiffness(mesh)
        if monotone and vs.is_mask.any():
            a = monotone_stiffness(a, vs.is_mask)
        self.a_uu, self.a_uk = reduce_dirichlet(a, vs.is_mask)
        if binning is None:
            binning = bin_pixels(mesh, width, height)
        self.binning = binning
        self.interp = interpolation_matrix(mesh, binning)

    @property
    def n_mask(self) -> int:
        return self.mask_idx.shape[0]

    def solve_vertices(self, g, tol=DEFAULT_TOL, max_iter=None, x0=None):
        """Vertex values for one channel of mask values ``g``."""
        g = np.asarray(g, dtype=np.float64)
        v = np.empty(self.mesh.n_vertices)
        v[self.mask_idx] = g
        if self.unknown_idx.size == 0:
            return v, CGResult(np.zeros(0), 0, 0.0, True)
        res = cg_solve(self.a_uu, -(self.a_uk @ g), tol=tol, max_iter=max_iter, x0=x0,
                       precond=self.precond)
        v[self.unknown_idx] = res.x
        return v, res

    def inpaint(self, g, tol=DEFAULT_TOL, max_iter=None, x0=None) -> InpaintResult:
        """``g`` has shape (n_mask,) or (n_mask, channels); ``x0`` warm-starts unknowns."""
        g = np.asarray(g, dtype=np.float64)
        if g.shape[0] != self.n_mask:
            raise ValueError(f"expected {self.n_mask} mask values, got {g.shape[0]}")
        g2 = g.reshape(self.n_mask, -1)
        channels = g2.shape[1]
        verts = np.empty((self.mesh.n_vertices, channels))
        its, worst = 0, 0.0
        for c in range(channels):
            start = None if x0 is None else np.asarray(x0).reshape(-1, channels)[:, c]
            verts[:, c], res = self.solve_vertices(g2[:, c], tol, max_iter, start)
            its += res.iterations
            worst = max(worst, res.residual)
        pix = self.interp @ verts
        return InpaintResult(verts, Image(self.width, self.height, channels, pix), its, worst)


def inpaint(mesh: TriMesh, g, width: int, height: int, tol: float = DEFAULT_TOL,
            max_iter: int | None = None, precond: str | None = DEFAULT_PRECOND,
            monotone: bool = True) -> InpaintResult:
    """Harmonic inpainting from the mask vertices of ``mesh``, interpolated to pixels."""
    system = HarmonicSystem(mesh, width, height, precond=precond, monotone=monotone)
    return system.inpaint(g, tol=tol, max_iter=max_iter)
