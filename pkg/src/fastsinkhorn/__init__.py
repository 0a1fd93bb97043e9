"""Entropic Wasserstein-1 distances on uniform 1D and 2D grids.

Kernel products with ``K[i, j] = exp(-|i - j| h / eps)`` are evaluated by two
linear-time recursive sweeps instead of a dense matrix-vector product, which
makes each Sinkhorn iteration O(N) in the number of grid points.
"""

from .estimator import SinkhornW1, as_measure
from .exceptions import (
    FastSinkhornError,
    NonFiniteResultError,
    TooLargeError,
    ValidationError,
)
from .kernels import (
    fast_apply_1d,
    fast_apply_2d,
    fast_weighted_apply_1d,
    naive_apply_1d,
    naive_apply_2d,
    stabilized_fast_apply_1d,
    stabilized_fast_apply_2d,
    weighted_apply_2d,
)
from .problems import normalize_signal, random_pair_1d, random_pair_2d, ricker, ricker_pair
from .solver import absorb, exact_w1_1d, marginal_error, naive_solve, sinkhorn_halfstep, solve
from .types import (
    DiscreteMeasure,
    Grid1D,
    Grid2D,
    KernelSpec,
    SinkhornState,
    SolveReport,
    SolverConfig,
    TransportPlanView,
    plan_entry,
    plan_materialize,
    validate_measure,
)

__version__ = "0.1.0"
