"""Desk-scale adversarial training laboratory with an energy-based objective."""

import os as _os

# Pin BLAS/OpenMP pools to one thread before numpy spins them up: reruns and
# worker counts must not change the bit pattern of any result.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    _os.environ.setdefault(_var, "1")

from .tensor import Tensor, grad_check  # noqa: E402
from .config import ExperimentConfig, GridSpec, parse_config, expand_grid  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "grad_check",
    "ExperimentConfig",
    "GridSpec",
    "parse_config",
    "expand_grid",
]
