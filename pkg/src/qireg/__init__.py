"""Sample-and-query regression: SGD over sparse descriptions ``x = A^T v``."""
from .oracle import SpectralBounds, solve_exact, spectral_bounds, svd
from .output import SparseDescription, desc_norm, desc_query, desc_sample, desc_sample_many
from .sgd import HyperParams, SolveResult, derive_hyperparams, solve
from .sketch import SparseVector, choose_s, exact_rhs, sparsify_b
from .sq import (QueryLedger, SampledMatrix, SampledVector, SamplingError, build_matrix,
                 build_vector, make_rng)

__all__ = [
    "HyperParams", "QueryLedger", "SampledMatrix", "SampledVector", "SamplingError",
    "SolveResult", "SparseDescription", "SparseVector", "SpectralBounds",
    "build_matrix", "build_vector", "choose_s", "derive_hyperparams", "desc_norm",
    "desc_query", "desc_sample", "desc_sample_many", "exact_rhs", "make_rng", "solve",
    "solve_exact", "sparsify_b", "spectral_bounds", "svd",
]
__version__ = "0.1.0"
