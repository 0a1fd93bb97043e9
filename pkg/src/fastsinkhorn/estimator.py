"""scikit-learn style wrapper around :func:`fastsinkhorn.solver.solve`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import NonFiniteResultError, ValidationError
from .solver import naive_solve, solve
from .types import (
    DiscreteMeasure,
    Grid1D,
    Grid2D,
    KernelSpec,
    SolverConfig,
    TransportPlanView,
    validate_measure,
)


def as_measure(x, grid=None) -> DiscreteMeasure:
    """Coerce ``x`` to a :class:`DiscreteMeasure`.

    Arrays without a grid get unit spacing: a vector becomes a 1D measure, a
    matrix a 2D measure in column-major order.
    """
    if isinstance(x, DiscreteMeasure):
        if grid is not None and grid != x.grid:
            raise ValidationError(f"measure lives on {x.grid}, expected {grid}")
        return x
    arr = np.asarray(x, dtype=np.float64)
    if grid is None:
        if arr.ndim == 1:
            grid = Grid1D(arr.size, 1.0)
        elif arr.ndim == 2:
            grid = Grid2D(arr.shape[0], arr.shape[1], 1.0, 1.0)
        else:
            raise ValidationError(f"expected a vector or matrix, got shape {arr.shape}")
    return validate_measure(arr, grid)


class SinkhornW1(BaseEstimator):
    """Entropic Wasserstein-1 distance between two measures on a uniform grid.

    Parameters
    ----------
    epsilon : float
        Entropic regularization.
    tol : float
        Marginal-error threshold; 0 runs exactly ``itr_max`` iterations.
    itr_max : int
        Iteration budget.
    stabilized : bool
        Absorb large scalings into log potentials.
    tau : float
        Absorption threshold on ``max(|phi|, |psi|)``.
    check_interval : int
        Iterations between termination checks.
    method : {"fs1", "naive"}
        Linear-time recursion or the quadratic reference implementation.
    raise_on_abort : bool
        Raise :class:`NonFiniteResultError` from :meth:`fit` when the
        iteration overflows instead of recording ``aborted_``.

    Attributes
    ----------
    cost_ : float
        Transport cost of the final plan (NaN after an abort).
    n_iter_ : int
    converged_ : bool
    aborted_ : bool
    report_ : SolveReport
    state_ : SinkhornState
    grid_ : Grid1D or Grid2D

    Examples
    --------
    >>> import numpy as np
    >>> from fastsinkhorn import SinkhornW1
    >>> u = np.array([0.5, 0.25, 0.25])
    >>> est = SinkhornW1(epsilon=0.05).fit(u, u[::-1])
    >>> bool(est.converged_)
    True
    """

    def __init__(self, epsilon=0.01, tol=1e-9, itr_max=10000, stabilized=False, tau=1e10,
                 check_interval=1, method="fs1", raise_on_abort=False):
        self.epsilon = epsilon
        self.tol = tol
        self.itr_max = itr_max
        self.stabilized = stabilized
        self.tau = tau
        self.check_interval = check_interval
        self.method = method
        self.raise_on_abort = raise_on_abort

    def _config(self) -> SolverConfig:
        return SolverConfig(self.epsilon, tol=self.tol, itr_max=self.itr_max,
                            stabilized=self.stabilized, tau=self.tau,
                            check_interval=self.check_interval)

    def fit(self, u, v, grid=None):
        """Solve between ``u`` and ``v`` (measures or weight arrays)."""
        if self.method not in ("fs1", "naive"):
            raise ValueError(f"method must be 'fs1' or 'naive', got {self.method!r}")
        config = self._config()
        u = as_measure(u, grid)
        v = as_measure(v, u.grid)
        fn = solve if self.method == "fs1" else naive_solve
        report, state = fn(u, v, config)
        if report.aborted_nonfinite and self.raise_on_abort:
            raise NonFiniteResultError(
                f"non-finite scaling at iteration {report.iterations}; "
                "try stabilized=True or a larger epsilon")
        self.grid_ = u.grid
        self.kernel_ = KernelSpec.from_grid(u.grid, config.epsilon)
        self.report_ = report
        self.state_ = state
        self.cost_ = report.cost
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.aborted_ = report.aborted_nonfinite
        return self

    def transport_plan(self) -> TransportPlanView:
        """Lazy view of the fitted coupling."""
        check_is_fitted(self, "state_")
        return TransportPlanView(self.state_, self.kernel_, self.grid_)

    def marginals(self):
        """Row and column sums of the fitted plan (materializes it; small grids only)."""
        plan = self.transport_plan().materialize()
        return plan.sum(axis=1), plan.sum(axis=0)

