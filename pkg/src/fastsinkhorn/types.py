"""Domain types: grids, measures, kernel parameters, solver state and reports.

Two-dimensional data is stored flat in column-major order: entry ``(i, j)`` of
an ``n x m`` array lives at flat position ``j * n + i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import (
    IndexOutOfRangeError,
    LengthMismatchError,
    MassNotOneError,
    NegativeWeightError,
    NonFiniteInputError,
    TooLargeError,
    ValidationError,
)
from .kernels import lambda_from, power_table

MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid with ``n`` points spaced ``h`` apart."""

    n: int
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"grid needs n >= 1 points, got {self.n!r}")
        if not self.h > 0 or not math.isfinite(self.h):
            raise ValidationError(f"grid spacing must be positive, got {self.h!r}")

    @property
    def size(self) -> int:
        return int(self.n)

    @property
    def shape(self) -> tuple[int]:
        return (int(self.n),)

    @property
    def ndim(self) -> int:
        return 1


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``n x m`` grid; ``h1`` is the vertical (row) spacing, ``h2`` the horizontal."""

    n: int
    m: int
    h1: float
    h2: float

    def __post_init__(self):
        for name in ("n", "m"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValidationError(f"grid needs {name} >= 1, got {val!r}")
        for name in ("h1", "h2"):
            val = getattr(self, name)
            if not val > 0 or not math.isfinite(val):
                raise ValidationError(f"grid spacing {name} must be positive, got {val!r}")

    @property
    def size(self) -> int:
        return int(self.n) * int(self.m)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.n), int(self.m))

    @property
    def ndim(self) -> int:
        return 2

    def unravel(self, flat_index: int) -> tuple[int, int]:
        """Flat column-major position to ``(row, column)``."""
        return flat_index % self.n, flat_index // self.n


Grid = Union[Grid1D, Grid2D]


def flatten(a) -> np.ndarray:
    """Column-major flattening of a 2D array."""
    return np.asarray(a, dtype=np.float64).ravel(order="F")


def unflatten(x, shape) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    return np.asarray(x, dtype=np.float64).reshape(shape, order="F")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative unit-mass weights on a grid (flat, column-major in 2D)."""

    weights: np.ndarray
    grid: Grid

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size != self.grid.size:
            raise LengthMismatchError(
                f"{w.size} weights for a grid of {self.grid.size} points")
        if not np.all(np.isfinite(w)):
            raise NonFiniteInputError("measure weights must be finite")
        if np.any(w < 0):
            raise NegativeWeightError(f"negative weight {w.min()!r}")
        total = w.sum()
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise MassNotOneError(f"total mass {total!r} differs from 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.weights > 0))

    def as_array(self) -> np.ndarray:
        """Weights in grid shape (``n`` or ``n x m``)."""
        return unflatten(self.weights, self.grid.shape)


def validate_measure(weights, grid: Grid) -> DiscreteMeasure:
    """Check ``weights`` against ``grid`` and wrap them; never renormalizes.

    A 2D ``weights`` array is flattened column-major first.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 2:
        if w.shape != grid.shape:
            raise LengthMismatchError(f"array of shape {w.shape} on grid {grid.shape}")
        w = flatten(w)
    elif w.ndim != 1:
        raise LengthMismatchError(f"weights must be 1D or 2D, got ndim={w.ndim}")
    return DiscreteMeasure(w, grid)


@dataclass(frozen=True)
class KernelSpec:
    """Regularization strength and the per-axis decay factors ``exp(-h/epsilon)``."""

    epsilon: float
    lambda1: float
    lambda2: float | None = None

    @classmethod
    def from_grid(cls, grid: Grid, epsilon: float) -> "KernelSpec":
        if isinstance(grid, Grid2D):
            return cls(epsilon, lambda_from(grid.h1, epsilon), lambda_from(grid.h2, epsilon))
        return cls(epsilon, lambda_from(grid.h, epsilon))

    @property
    def ndim(self) -> int:
        return 1 if self.lambda2 is None else 2


@dataclass(frozen=True)
class StabilizationEvent:
    iteration: int
    max_phi: float
    max_psi: float


@dataclass
class SinkhornState:
    """Scaling vectors plus the log potentials absorbed out of them.

    The coupling is ``exp((alpha_i + beta_j)/eps) * phi_i * K_ij * psi_j``.
    Only the owning solver mutates a state.
    """

    phi: np.ndarray
    psi: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, size: int) -> "SinkhornState":
        start = np.full(size, 1.0 / size)
        return cls(start.copy(), start.copy(), np.zeros(size), np.zeros(size))

    def copy(self) -> "SinkhornState":
        return SinkhornState(self.phi.copy(), self.psi.copy(), self.alpha.copy(),
                             self.beta.copy(), self.iteration)

    @property
    def absorbed(self) -> bool:
        """True once any magnitude has been moved into ``alpha``/``beta``."""
        return bool(np.any(self.alpha) or np.any(self.beta))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.psi)))


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.  ``tol = 0`` disables early stopping (fixed iteration runs)."""

    epsilon: float
    tol: float = 1e-9
    itr_max: int = 10000
    stabilized: bool = False
    tau: float = 1e10
    check_interval: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.tol >= 0:
            raise ValidationError(f"tol must be nonnegative, got {self.tol!r}")
        if int(self.itr_max) != self.itr_max or self.itr_max < 1:
            raise ValidationError(f"itr_max must be a positive integer, got {self.itr_max!r}")
        if not self.tau > 1:
            raise ValidationError(f"tau must exceed 1, got {self.tau!r}")
        if int(self.check_interval) != self.check_interval or self.check_interval < 1:
            raise ValidationError(f"check_interval must be >= 1, got {self.check_interval!r}")


@dataclass
class SolveReport:
    cost: float
    iterations: int
    converged: bool
    marginal_error_trace: list[tuple[int, float]] = field(default_factory=list)
    wall_time_seconds: float = 0.0
    aborted_nonfinite: bool = False
    stabilization_events: list[StabilizationEvent] = field(default_factory=list)
    # cumulative seconds at each entry of marginal_error_trace
    checkpoint_seconds: list[float] = field(default_factory=list)

    @property
    def final_marginal_error(self) -> float:
        if not self.marginal_error_trace:
            return math.nan
        return self.marginal_error_trace[-1][1]


@dataclass(frozen=True, eq=False)
class TransportPlanView:
    """Lazy view of the coupling; the full matrix is only built on request."""

    state: SinkhornState
    kernel: KernelSpec
    grid: Grid

    def _kernel_log(self, i: int, j: int) -> tuple[float, bool]:
        """(log K_ij, K_ij == 0)."""
        if isinstance(self.grid, Grid2D):
            (i1, j1), (i2, j2) = self.grid.unravel(i), self.grid.unravel(j)
            parts = [(abs(i1 - i2), self.kernel.lambda1), (abs(j1 - j2), self.kernel.lambda2)]
        else:
            parts = [(abs(i - j), self.kernel.lambda1)]
        total = 0.0
        for dist, lam in parts:
            if dist == 0:
                continue
            if lam == 0:
                return -math.inf, True
            total += dist * math.log(lam)
        return total, False

    def entry(self, i: int, j: int) -> float:
        size = self.grid.size
        if not (0 <= i < size and 0 <= j < size):
            raise IndexOutOfRangeError(f"({i}, {j}) outside a {size} x {size} plan")
        st = self.state
        log_k, zero = self._kernel_log(i, j)
        if zero:
            return 0.0
        log_scale = (st.alpha[i] + st.beta[j]) / self.kernel.epsilon
        return float(math.exp(log_scale + log_k) * st.phi[i] * st.psi[j])

    def materialize(self, max_size: int = 25_000_000) -> np.ndarray:
        size = self.grid.size
        if size * size > max_size:
            raise TooLargeError(f"plan of {size}x{size} entries exceeds max_size={max_size}")
        return self.rows(0, size)

    def rows(self, start: int, stop: int) -> np.ndarray:
        """Dense block of plan rows ``start:stop`` (all columns)."""
        size = self.grid.size
        if not 0 <= start <= stop <= size:
            raise IndexOutOfRangeError(f"rows {start}:{stop} outside a {size} x {size} plan")
        st, kern = self.state, self.kernel
        r = np.arange(start, stop)
        c = np.arange(size)
        if isinstance(self.grid, Grid2D):
            n, m = self.grid.shape
            d1 = np.abs((r % n)[:, None] - (c % n)[None, :])
            d2 = np.abs((r // n)[:, None] - (c // n)[None, :])
            k = power_table(kern.lambda1, n)[d1] * power_table(kern.lambda2, m)[d2]
            log_k = None
            if st.absorbed:
                log_k = _scaled_log(d1, kern.lambda1) + _scaled_log(d2, kern.lambda2)
        else:
            dist = np.abs(r[:, None] - c[None, :])
            k = power_table(kern.lambda1, size)[dist]
            log_k = _scaled_log(dist, kern.lambda1) if st.absorbed else None
        phi = st.phi[start:stop, None]
        if log_k is None:
            return phi * k * st.psi[None, :]
        log_scale = (st.alpha[start:stop, None] + st.beta[None, :]) / kern.epsilon
        with np.errstate(invalid="ignore"):
            scaled = np.exp(log_scale + log_k)
        scaled[np.isneginf(log_k)] = 0.0
        return phi * scaled * st.psi[None, :]


def _scaled_log(dist: np.ndarray, lam: float) -> np.ndarray:
    log_lam = math.log(lam) if lam > 0 else -math.inf
    out = np.zeros(dist.shape)
    nz = dist > 0
    out[nz] = dist[nz] * log_lam
    return out


def plan_entry(view: TransportPlanView, i: int, j: int) -> float:
    return view.entry(i, j)


def plan_materialize(view: TransportPlanView, max_size: int = 25_000_000) -> np.ndarray:
    return view.materialize(max_size)
