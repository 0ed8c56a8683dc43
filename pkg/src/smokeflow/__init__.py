"""Differentiable volumetric smoke reconstruction on regular grids.

Densities are transported by MacCormack advection along divergence-free
velocities given as curls of multi-scale vector potentials, rendered with an
emission-absorption ray marcher, and fitted to images by Adam.
"""

from .grid import Camera, LightConfig, ScalarGrid, VectorGrid, sample_trilinear
from .io import ConfigError, FormatError, read_pfm, read_vgrid, write_pfm, write_vgrid
from .loss import LossWeights
from .optim import ReconProblem, ReconResult, View, ablate_views, gradcheck, reconstruct
from .potential import compose_multiscale, curl, divergence
from .render import Renderer, render, unproject
from .synth import SceneConfig, gen_plume_sequence, load_scene, save_scene
from .transport import advect_maccormack, advect_sl

__all__ = [
    "Camera",
    "ConfigError",
    "FormatError",
    "LightConfig",
    "LossWeights",
    "ReconProblem",
    "ReconResult",
    "Renderer",
    "ScalarGrid",
    "SceneConfig",
    "VectorGrid",
    "View",
    "ablate_views",
    "advect_maccormack",
    "advect_sl",
    "compose_multiscale",
    "curl",
    "divergence",
    "gen_plume_sequence",
    "gradcheck",
    "load_scene",
    "read_pfm",
    "read_vgrid",
    "reconstruct",
    "render",
    "sample_trilinear",
    "save_scene",
    "unproject",
    "write_pfm",
    "write_vgrid",
]

__version__ = "0.1.0"
