"""Tonal optimisation: least-squares mask values via nested conjugate gradients.

The reconstruction is linear in the mask values, ``u = B g`` with
``B g = P [g; -A_uu^{-1} A_uk g]``.  ``B`` is dense, so it is never formed:
``B`` and ``B^T`` are applied with one inner CG solve each, and the outer CG
runs on the normal equations ``B^T B g = B^T f``.  Memory stays linear in the
number of pixels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .femsolve import DEFAULT_PRECOND, DivergenceError, HarmonicSystem, cg_solve
from .image import Image
from .mesh import PixelBinning, TriMesh

log = logging.getLogger(__name__)

INNER_TOL = 1e-6
OUTER_TOL = 1e-4
OUTER_MAX = 200


class ReconstructionOperator:
    """Matrix-free ``B`` (mask values -> pixels) for a fixed mesh.

    With ``warm_start`` the inner solves restart from the previous solution of
    the same kind; this changes the inexact operator slightly and is off by
    default.
    """

    def __init__(self, mesh: TriMesh, width: int, height: int,
                 inner_tol: float = INNER_TOL, binning: PixelBinning | None = None,
                 warm_start: bool = False, precond: str | None = DEFAULT_PRECOND,
                 monotone: bool = True):
        self.system = HarmonicSystem(mesh, width, height, binning, precond, monotone)
        self.width = width
        self.height = height
        self.inner_tol = inner_tol
        self.warm_start = warm_start
        self.inner_solves = 0
        self.inner_iterations = 0
        sysm = self.system
        # column split of the interpolation matrix: P_k (mask) and P_u (unknown)
        self._p = sysm.interp
        self._pt = sysm.interp.T
        self._last = {}
        # one binning per mesh is enough; drop it so only P is kept alive
        sysm.binning = None

    @property
    def n_mask(self) -> int:
        return self.system.n_mask

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def _inner(self, rhs, kind):
        x0 = self._last.get(kind) if self.warm_start else None
        res = cg_solve(self.system.a_uu, rhs, tol=self.inner_tol, x0=x0,
                       precond=self.system.precond)
        self.inner_solves += 1
        self.inner_iterations += res.iterations
        if self.warm_start:
            self._last[kind] = res.x
        return res.x

    def apply(self, g) -> np.ndarray:
        """Pixel vector ``B g`` for one channel."""
        s = self.system
        g = np.asarray(g, dtype=np.float64)
        v = np.empty(s.mesh.n_vertices)
        v[s.mask_idx] = g
        if s.unknown_idx.size:
            v[s.unknown_idx] = self._inner(-(s.a_uk @ g), "fwd")
        return self._p @ v

    def apply_adjoint(self, r) -> np.ndarray:
        """``B^T r``: P_k^T r - A_uk^T A_uu^{-1} P_u^T r (A_uu symmetric)."""
        s = self.system
        w = self._pt @ np.asarray(r, dtype=np.float64)
        out = w[s.mask_idx]
        if s.unknown_idx.size:
            y = self._inner(w[s.unknown_idx], "adj")
            out -= s.a_uk.T @ y
        return out

    def normal(self, g, weights=None) -> np.ndarray:
        """``B^T W B g`` (W = I when ``weights`` is None)."""
        u = self.apply(g)
        if weights is not None:
            u *= weights
        return self.apply_adjoint(u)


@dataclass
class TonalResult:
    g_opt: np.ndarray
    outer_iterations: int
    inner_solve_count: int
    grad_norm: float
    mse_before: float
    mse_after: float
    l1_history: list = field(default_factory=list)


def mask_samples(f: Image, opr: ReconstructionOperator) -> np.ndarray:
    """Values of ``f`` at the mask vertices, shape (n_mask, channels)."""
    s = opr.system
    pix = s.mesh.vertices.pixel_indices(f.width)[s.mask_idx]
    return f.pixels()[pix]


def _outer_cg(opr: ReconstructionOperator, f_c, g0, tol, max_iter, weights=None):
    """CG on B^T W B g = B^T W f.  Returns (g, iterations, relative gradient)."""
    wf = f_c if weights is None else weights * f_c
    b = opr.apply_adjoint(wf)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(g0), 0, 0.0

    def matvec(x):
        return opr.normal(x, weights)

    g = np.array(g0, dtype=np.float64)
    total = 0
    # re-check the true residual: inexact inner solves make the recursive one drift
    for _ in range(3):
        out = cg_solve(matvec, b, tol=tol, max_iter=max_iter - total, x0=g)
        g = out.x
        total += out.iterations
        res = float(np.linalg.norm(b - matvec(g))) / bnorm
        if res <= tol or total >= max_iter or out.iterations == 0:
            break
    return g, total, res


def _mse_channel(opr, g, f_c):
    d = opr.apply(g) - f_c
    return float(np.dot(d, d))


def tonal_optimise(opr: ReconstructionOperator, f: Image, outer_tol: float = OUTER_TOL,
                   outer_max: int = OUTER_MAX, g0=None) -> TonalResult:
    """Least-squares optimal mask values, each channel independently.

    Starts from ``g0`` (default: ``f`` sampled at the mask pixels).
    """
    _check_dims(opr, f)
    start_solves = opr.inner_solves
    g_init = mask_samples(f, opr) if g0 is None else np.asarray(g0, dtype=np.float64)
    g_init = g_init.reshape(opr.n_mask, f.channels)
    fpix = f.pixels()
    g_opt = np.empty_like(g_init)
    its, grad, se_before, se_after = 0, 0.0, 0.0, 0.0
    for c in range(f.channels):
        f_c = np.ascontiguousarray(fpix[:, c])
        se_before += _mse_channel(opr, g_init[:, c], f_c)
        g_opt[:, c], k, res = _outer_cg(opr, f_c, g_init[:, c], outer_tol, outer_max)
        its += k
        grad = max(grad, res)
        se_after += _mse_channel(opr, g_opt[:, c], f_c)
    n = f.data.size
    if grad > outer_tol:
        log.info("tonal optimisation stopped at relative gradient %.3g", grad)
    return TonalResult(g_opt, its, opr.inner_solves - start_solves, grad,
                       se_before / n, se_after / n)


def tonal_optimise_l1(opr: ReconstructionOperator, f: Image, irls_iters: int = 3,
                      epsilon: float = 1.0, outer_tol: float = OUTER_TOL,
                      outer_max: int = OUTER_MAX, g0=None) -> TonalResult:
    """Approximately minimise sum |B g - f| by iteratively reweighted least squares.

    The first step is the plain L2 optimum; each of the ``irls_iters``
    reweightings then solves B^T W B g = B^T W f with w_i = 1/max(|r_i|, eps).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_dims(opr, f)
    start_solves = opr.inner_solves
    first = tonal_optimise(opr, f, outer_tol, outer_max, g0)
    fpix = f.pixels()
    g = first.g_opt.copy()
    its = first.outer_iterations
    grad = first.grad_norm
    history = []
    se_after = 0.0
    for c in range(f.channels):
        f_c = np.ascontiguousarray(fpix[:, c])
        g_c = g[:, c]
        r = opr.apply(g_c) - f_c
        hist = [float(np.abs(r).sum())]
        for _ in range(irls_iters):
            w = 1.0 / np.maximum(np.abs(r), epsilon)
            g_c, k, res = _outer_cg(opr, f_c, g_c, outer_tol, outer_max, weights=w)
            its += k
            grad = max(grad, res)
            r = opr.apply(g_c) - f_c
            hist.append(float(np.abs(r).sum()))
        g[:, c] = g_c
        se_after += float(np.dot(r, r))
        history.append(hist)
    if not all(math.isfinite(h[-1]) for h in history):
        raise DivergenceError("IRLS produced non-finite residuals")
    # l1_history: per channel, L1 error after the L2 step and each reweighting
    return TonalResult(g, its, opr.inner_solves - start_solves, grad,
                       first.mse_before, se_after / f.data.size, history)


def _check_dims(opr, f: Image):
    if (f.width, f.height) != (opr.width, opr.height):
        raise ValueError(
            f"image {f.width}x{f.height} does not match operator {opr.width}x{opr.height}")
