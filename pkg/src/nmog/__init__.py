"""Hyperspectral denoising with a non-i.i.d. mixture-of-Gaussians noise model
and ARD low-rank matrix factorization, fitted by variational Bayes."""

from .hsi_data import (
    Cube,
    CubeFormatError,
    ObservationMatrix,
    cube_to_matrix,
    load_cube,
    matrix_to_cube,
    normalize_bands,
    save_cube,
)
from .inference import InferenceConfig, InferenceReport, compute_elbo, denoise, run
from .noise_model import DivergenceError, Hyperparams
from .noise_sim import NoiseCase, NoiseMetadata, NoiseSpec, corrupt, planted_cube, realized_snr

__version__ = "0.1.0"
