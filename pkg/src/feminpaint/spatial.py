"""Coarse-to-fine densification of the inpainting mask guided by the error map."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .femsolve import DEFAULT_TOL, HarmonicSystem
from .image import ErrorMap, Image, error_map
from .mesh import PixelBinning, TriMesh, VertexSet, bin_pixels, delaunay

log = logging.getLogger(__name__)


class ImageTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class DensifyConfig:
    """``m`` mask pixels over ``n`` iterations with ``p`` unknown vertices (default m)."""

    m: int
    n: int = 100
    p: int | None = None
    seed: int = 0
    tol: float = DEFAULT_TOL

    @property
    def unknowns(self) -> int:
        return self.m if self.p is None else self.p

    def validate(self, width: int, height: int) -> None:
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 1 <= self.n <= self.m:
            raise ValueError("need 1 <= n <= m")
        if self.unknowns < 4:
            raise ValueError("p must be at least 4 (the image corners)")
        if width < 2 or height < 2:
            raise ImageTooSmallError("image must be at least 2x2")
        if self.m + self.unknowns > width * height:
            raise ImageTooSmallError(
                f"m + p = {self.m + self.unknowns} exceeds {width * height} pixels")


@dataclass(frozen=True)
class MaskSet:
    """Mask pixel indices (ascending) and their values, shape (m, channels)."""

    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64)
        vals = vals.reshape(pos.shape[0], -1)
        if len(np.unique(pos)) != pos.shape[0]:
            raise ValueError("mask positions must be distinct")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass
class DensifyResult:
    mask: MaskSet
    unknowns: np.ndarray        # unknown-vertex pixel indices, ascending
    mesh: TriMesh               # canonical vertex order: mask block, unknown block
    reconstruction: Image       # inpainting with g = f at the mask
    inpaintings: int
    cg_iterations: int
    history: list = field(default_factory=list)


def batch_sizes(m: int, n: int) -> list[int]:
    """Per-iteration insertion counts by cumulative rounding; they sum to m."""
    cum = [(2 * m * t + n) // (2 * n) for t in range(n + 1)]
    return [cum[t + 1] - cum[t] for t in range(n)]


def triangle_errors(e: ErrorMap, binning: PixelBinning, n_triangles: int) -> np.ndarray:
    """Total pixel error inside each triangle."""
    if e.values.shape[0] != binning.owner.shape[0]:
        raise ValueError("error map and binning sizes differ")
    return np.bincount(binning.owner, weights=e.values, minlength=n_triangles)


def canonical_mesh(mask_pixels, unknown_pixels, width: int) -> TriMesh:
    """Mesh in the order a decoder uses: ascending mask pixels, then ascending unknowns."""
    vs = VertexSet.from_pixels(np.sort(mask_pixels), np.sort(unknown_pixels), width)
    return delaunay(vs)


def initial_sample(rng: np.random.Generator, npix: int, width: int, height: int,
                   m0: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random unknown vertices (corners forced) and first mask pixels.

    A mask pixel landing on an unknown vertex promotes it; the unknown vertex
    is replaced by a fresh uniform sample.
    """
    corners = np.unique(np.array([0, width - 1, npix - width, npix - 1], dtype=np.int64))
    free = np.setdiff1d(np.arange(npix, dtype=np.int64), corners, assume_unique=True)
    unknown = np.concatenate([corners, rng.choice(free, p - len(corners), replace=False)])
    mask = rng.choice(npix, m0, replace=False).astype(np.int64)
    kept = np.setdiff1d(unknown, mask)
    short = p - len(kept)
    if short:
        taken = np.union1d(kept, mask)
        pool = np.setdiff1d(np.arange(npix, dtype=np.int64), taken, assume_unique=True)
        kept = np.concatenate([kept, rng.choice(pool, short, replace=False)])
    return mask, kept


def _select(errs, best, err_pix, empty, count):
    """Pick ``count`` new mask pixels: one per triangle by descending error, then global fill."""
    order = np.lexsort((np.arange(errs.shape[0]), -errs))
    chosen = []
    for t in order.tolist():
        if len(chosen) == count:
            break
        if errs[t] <= 0.0:
            break
        if best[t] >= 0:
            chosen.append(int(best[t]))
    if len(chosen) < count:
        cand = empty.copy()
        cand[chosen] = False
        idx = np.flatnonzero(cand)
        # stable descending sort keeps the lowest pixel index first on ties
        top = idx[np.argsort(-err_pix[idx], kind="stable")[: count - len(chosen)]]
        chosen.extend(top.tolist())
    return np.asarray(chosen, dtype=np.int64)


def densify(f: Image, cfg: DensifyConfig, callback=None) -> DensifyResult:
    """Grow a mask of ``cfg.m`` pixels in ``cfg.n`` inpainting iterations."""
    w, h = f.width, f.height
    cfg.validate(w, h)
    npix = w * h
    p = cfg.unknowns
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    sizes = batch_sizes(cfg.m, cfg.n)
    fpix = f.pixels()

    mask, unknown = initial_sample(rng, npix, w, h, sizes[0], p)
    vs = VertexSet.from_pixels(mask, unknown, w)
    mesh = delaunay(vs)
    is_vertex = np.zeros(npix, dtype=bool)
    is_vertex[mask] = True
    is_vertex[unknown] = True
    mask_list = [mask]

    inpaintings = 0
    cg_its = 0
    history = []
    warm = None
    for t in range(1, cfg.n):
        system = HarmonicSystem(mesh, w, h)
        g = fpix[mesh.vertices.pixel_indices(w)[system.mask_idx]]
        x0 = None if warm is None else warm[system.unknown_idx]
        res = system.inpaint(g, tol=cfg.tol, x0=x0)
        inpaintings += 1
        cg_its += res.iterations
        e = error_map(f, res.image)
        errs = triangle_errors(e, system.binning, mesh.n_triangles)
        empty = ~is_vertex
        best = _kernels.best_empty_pixels(system.binning.owner, e.values, empty,
                                          mesh.n_triangles)
        new = _select(errs, best, e.values, empty, sizes[t])
        history.append({"iteration": t, "error": float(e.values.sum()) / f.data.size,
                        "inserted": int(len(new)), "cg_iterations": res.iterations})
        if callback is not None:
            callback(t, mesh, res)
        is_vertex[new] = True
        mask_list.append(new)
        # new vertices start from the current reconstruction at their pixel
        warm = np.concatenate([res.vertex_values, res.image.pixels()[new]])
        mesh = mesh.insert(np.stack([new % w, new // w], axis=1), True)

    mask = np.sort(np.concatenate(mask_list))
    unknown = np.sort(unknown)
    if len(mask) != cfg.m:
        raise AssertionError(f"densification produced {len(mask)} mask pixels, expected {cfg.m}")
    final = canonical_mesh(mask, unknown, w)
    system = HarmonicSystem(final, w, h)
    values = fpix[mask]
    res = system.inpaint(values, tol=cfg.tol)
    inpaintings += 1
    cg_its += res.iterations
    log.debug("densify: %d inpaintings, %d CG iterations", inpaintings, cg_its)
    return DensifyResult(MaskSet(mask, values), unknown, final, res.image,
                         inpaintings, cg_its, history)
