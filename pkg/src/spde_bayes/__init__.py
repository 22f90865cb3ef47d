"""Simulation and Bayesian estimation of the reaction term in stochastic reaction-diffusion
equations observed on large domains."""
from .grid import SpatialGrid, SpaceTimePath, make_grid, read_path, write_path
from .reaction import ReactionModel, allen_cahn_truncated, reaction_from_config
from .simulate import SimConfig, simulate, replicate
from .wavelets import PriorSpec, WaveletBasis, build_daubechies, build_haar
from .inference import SufficientStats, accumulate_stats, posterior, credible_band

__version__ = "0.1.0"
