"""Harmonic inpainting with linear finite elements on Delaunay meshes.

Spatial data optimisation grows the mask by error-map densification;
tonal optimisation solves the least-squares problem for the stored grey
values with nested conjugate gradients, never forming the dense operator.
"""

from .codec import Payload, decode, encode
from .femsolve import (HarmonicSystem, InpaintResult, assemble_stiffness, cg_solve,
                       inpaint, reduce_dirichlet)
from .image import ErrorMap, Image, error_map, load_image, mse, save_image
from .mesh import PixelBinning, TriMesh, VertexSet, bin_pixels, delaunay, locate
from .spatial import DensifyConfig, DensifyResult, MaskSet, densify, triangle_errors
from .tonal import ReconstructionOperator, TonalResult, tonal_optimise, tonal_optimise_l1

__version__ = "0.1.0"

__all__ = [
    "DensifyConfig", "DensifyResult", "ErrorMap", "HarmonicSystem", "Image",
    "InpaintResult", "MaskSet", "Payload", "PixelBinning", "ReconstructionOperator",
    "TonalResult", "TriMesh", "VertexSet", "assemble_stiffness", "bin_pixels",
    "cg_solve", "decode", "delaunay", "densify", "encode", "error_map", "inpaint",
    "load_image", "locate", "mse", "reduce_dirichlet", "save_image", "tonal_optimise",
    "tonal_optimise_l1", "triangle_errors",
]
