"""Sinkhorn scaling iterations for the entropic Wasserstein-1 problem.

One iteration updates ``psi <- v / (K^T phi)`` and then ``phi <- u / (K psi)``.
``K`` is symmetric, so both half-steps use the same kernel product; in
stabilized mode the kernel carries the absorbed potentials,
``diag(exp(alpha/eps)) K diag(exp(beta/eps))``, and its transpose swaps the
roles of ``alpha`` and ``beta``.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from . import kernels
from .exceptions import (
    GridMismatchError,
    MassMismatchError,
    NonFiniteInputError,
    NonFiniteResultError,
    NonPositiveInputError,
    TooLargeError,
)
from .types import (
    DiscreteMeasure,
    Grid,
    Grid1D,
    Grid2D,
    KernelSpec,
    SinkhornState,
    SolveReport,
    SolverConfig,
    StabilizationEvent,
)

logger = logging.getLogger(__name__)

# outcomes of _KernelOperator.advance
_ADVANCED, _NEEDS_ABSORB, _NONFINITE = 0, 1, 2


class _KernelOperator:
    """Applies the (possibly rescaled) kernel to flat vectors on one grid."""

    naive = False

    def __init__(self, grid: Grid, kernel: KernelSpec):
        self.grid = grid
        self.kernel = kernel
        self.inv_eps = 1.0 / kernel.epsilon
        self.size = grid.size
        self._out = np.empty(self.size)
        if isinstance(grid, Grid2D):
            self._shape = grid.shape
            self._z = np.empty(grid.shape, order="F")
        else:
            self._shape = None
            self._buffers = kernels.RecursionBuffers.for_size(self.size)

    def _grid(self, x):
        return x.reshape(self._shape, order="F")

    def apply(self, x, inner=None, outer=None):
        """``diag(exp(outer/eps)) K diag(exp(inner/eps)) x`` or plain ``K x``.

        Returns an internal buffer that the next call overwrites.
        """
        k = self.kernel
        if inner is None:
            if self._shape is None:
                b = self._buffers
                return kernels._sweep(x, k.lambda1, b.p, b.q, self._out)
            out = self._grid(self._out)
            kernels._apply_2d(self._grid(x), k.lambda1, k.lambda2, self._z, out)
            return self._out
        if self._shape is None:
            return kernels._sweep_scaled(x, k.lambda1, inner, outer, self.inv_eps, self._out)
        out = self._grid(self._out)
        kernels._apply_2d_scaled(self._grid(x), k.lambda1, k.lambda2, self._grid(inner),
                                 self._grid(outer), self.inv_eps, self._z, out)
        return self._out

    def transpose_product(self, state: SinkhornState):
        """``K^T phi`` with the kernel rescaled by the state's potentials."""
        return _transpose_apply(self, state, state.absorbed)

    def prepare(self, state: SinkhornState):
        """Hook called whenever the absorbed potentials of ``state`` change."""

    def advance(self, state: SinkhornState, u, v, steps: int, tau: float):
        """Run up to ``steps`` full iterations in place; see :data:`_ADVANCED`."""
        absorbed = state.absorbed
        for it in range(1, steps + 1):
            state.psi = v / _transpose_apply(self, state, absorbed)
            state.phi = u / _direct_apply(self, state, absorbed)
            if not (_valid_scaling(state.phi) and _valid_scaling(state.psi)):
                return it, _NONFINITE
            if max(state.phi.max(), state.psi.max()) > tau:
                return it, _NEEDS_ABSORB
        return steps, _ADVANCED


class _FastOperator1D(_KernelOperator):
    """1D operator whose iterations run entirely in compiled code.

    The rescaled sweeps only depend on the absorbed potentials, which change
    at absorptions alone, so their exponentials are tabulated once per
    absorption instead of once per kernel product.
    """

    def __init__(self, grid: Grid, kernel: KernelSpec):
        super().__init__(grid, kernel)
        self._scaled = False
        n = max(self.size - 1, 0)
        self._fa = self._ga = self._fb = self._gb = np.zeros(n)
        self._scale = np.ones(self.size)

    def prepare(self, state: SinkhornState):
        self._scaled = state.absorbed
        if self._scaled:
            lam = self.kernel.lambda1
            self._fa, self._ga = kernels.step_factors(lam, state.alpha, self.inv_eps)
            self._fb, self._gb = kernels.step_factors(lam, state.beta, self.inv_eps)
            with np.errstate(over="ignore"):
                self._scale = np.exp((state.alpha + state.beta) * self.inv_eps)

    def advance(self, state: SinkhornState, u, v, steps: int, tau: float):
        b = self._buffers
        # the compiled loop updates phi/psi in place
        state.phi = _writable(state.phi)
        state.psi = _writable(state.psi)
        done, status = kernels._advance_1d(
            u, v, state.phi, state.psi, self.kernel.lambda1, self._fa, self._ga, self._fb,
            self._gb, self._scale, self._scaled, steps, tau, b.p, b.q, self._out)
        return int(done), int(status)

    def transpose_product(self, state: SinkhornState):
        if not self._scaled:
            return super().transpose_product(state)
        return kernels._sweep_factored(state.phi, self._fb, self._gb, self._scale, self._out)


def _valid_scaling(x) -> bool:
    """Finite and strictly positive; with positive weights a zero scaling only
    arises from a kernel product that overflowed to inf."""
    return bool(np.all(x > 0) and np.all(x < np.inf))


def _writable(x):
    x = np.asarray(x, dtype=np.float64)
    if x.flags.c_contiguous and x.flags.writeable:
        return x
    return x.copy()


class _NaiveKernelOperator(_KernelOperator):
    naive = True

    def __init__(self, grid: Grid, kernel: KernelSpec):
        super().__init__(grid, kernel)
        if isinstance(grid, Grid2D):
            if grid.size > kernels.NAIVE_MAX_2D:
                raise TooLargeError(f"naive 2D solve capped at {kernels.NAIVE_MAX_2D} points")
            self._pw1 = kernels.power_table(kernel.lambda1, grid.n)
            self._pw2 = kernels.power_table(kernel.lambda2, grid.m)
        else:
            if grid.size > kernels.NAIVE_MAX_1D:
                raise TooLargeError(f"naive solve capped at N={kernels.NAIVE_MAX_1D}")
            self._pw1 = kernels.power_table(kernel.lambda1, grid.size)
        self._log1 = kernels._log_lambda(kernel.lambda1)
        self._log2 = kernels._log_lambda(kernel.lambda2) if kernel.lambda2 is not None else 0.0

    def advance(self, state: SinkhornState, u, v, steps: int, tau: float):
        if self._shape is not None or state.absorbed:
            return super().advance(state, u, v, steps, tau)
        # same compiled loop structure as the fast 1D path, so timings differ
        # only in the kernel product
        state.phi = _writable(state.phi)
        state.psi = _writable(state.psi)
        done, status = kernels._advance_naive_1d(u, v, state.phi, state.psi, self._pw1,
                                                 steps, tau, self._out)
        return int(done), int(status)

    def apply(self, x, inner=None, outer=None):
        if inner is None:
            if self._shape is None:
                return kernels._naive_1d(x, self._pw1, self._out)
            kernels._naive_2d(self._grid(x), self._pw1, self._pw2, self._grid(self._out))
            return self._out
        if self._shape is None:
            return kernels._naive_1d_scaled(x, self._log1, inner, outer, self.inv_eps, self._out)
        kernels._naive_2d_scaled(self._grid(x), self._log1, self._log2, self._grid(inner),
                                 self._grid(outer), self.inv_eps, self._grid(self._out))
        return self._out


def _operator_for(grid: Grid, kernel: KernelSpec, naive: bool = False) -> _KernelOperator:
    if naive:
        return _NaiveKernelOperator(grid, kernel)
    if isinstance(grid, Grid1D):
        return _FastOperator1D(grid, kernel)
    return _KernelOperator(grid, kernel)


def _check_kernel(grid: Grid, kernel: KernelSpec):
    if (kernel.ndim == 2) != isinstance(grid, Grid2D):
        raise GridMismatchError(f"{kernel.ndim}D kernel on a {grid.ndim}D grid")


def _transpose_apply(op, state: SinkhornState, absorbed: bool):
    if absorbed:
        return op.apply(state.phi, state.alpha, state.beta)
    return op.apply(state.phi)


def _direct_apply(op, state: SinkhornState, absorbed: bool):
    if absorbed:
        return op.apply(state.psi, state.beta, state.alpha)
    return op.apply(state.psi)


def sinkhorn_halfstep(side: str, state: SinkhornState, target: DiscreteMeasure,
                      kernel: KernelSpec, naive: bool = False) -> SinkhornState:
    """Replace ``state.psi`` (``side="psi"``) or ``state.phi`` by the exact quotient.

    ``psi <- v / (K^T phi)`` or ``phi <- u / (K psi)``.  The state is updated in
    place and returned.  Raises :class:`NonFiniteResultError` if the quotient
    overflows or turns NaN; the state is left untouched in that case.
    """
    if side not in ("psi", "phi"):
        raise ValueError(f"side must be 'psi' or 'phi', got {side!r}")
    _check_kernel(target.grid, kernel)
    op = _operator_for(target.grid, kernel, naive)
    absorbed = state.absorbed
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if side == "psi":
            new = target.weights / _transpose_apply(op, state, absorbed)
        else:
            new = target.weights / _direct_apply(op, state, absorbed)
    if not _valid_scaling(new):
        raise NonFiniteResultError(f"{side} half-step overflowed (non-finite or zero entries)")
    setattr(state, side, new)
    return state


def absorb(state: SinkhornState, kernel: KernelSpec,
           events: list | None = None) -> SinkhornState:
    """Move the magnitude of ``phi``/``psi`` into the log potentials.

    ``alpha += eps*log(phi)``, ``beta += eps*log(psi)``, then ``phi = psi = 1``;
    every coupling entry is unchanged up to rounding.  Appends a
    :class:`StabilizationEvent` to ``events`` when given.
    """
    phi, psi = state.phi, state.psi
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
        raise NonFiniteInputError("cannot absorb a non-finite state")
    if np.any(phi <= 0) or np.any(psi <= 0):
        raise NonFiniteInputError("cannot absorb non-positive scalings")
    if events is not None:
        events.append(StabilizationEvent(state.iteration, float(phi.max()), float(psi.max())))
    eps = kernel.epsilon
    state.alpha = state.alpha + eps * np.log(phi)
    state.beta = state.beta + eps * np.log(psi)
    state.phi = np.ones_like(phi)
    state.psi = np.ones_like(psi)
    return state


def marginal_error(state: SinkhornState, v: DiscreteMeasure, kernel: KernelSpec,
                   naive: bool = False) -> float:
    """``sum_j |psi_j (K^T phi)_j - v_j|``; ``inf`` on non-finite intermediates."""
    op = _operator_for(v.grid, kernel, naive)
    op.prepare(state)
    return _marginal_error(op, state, v.weights)


def _marginal_error(op, state, v) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        err = float(np.abs(state.psi * op.transpose_product(state) - v).sum())
    return err if np.isfinite(err) else np.inf


def _cost_with(state: SinkhornState, kernel: KernelSpec, evaluate) -> float:
    if not (np.all(np.isfinite(state.phi)) and np.all(np.isfinite(state.psi))):
        raise NonFiniteResultError("transport cost is not finite")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        cost = evaluate(state)
        if not np.isfinite(cost) and np.all(state.phi > 0) and np.all(state.psi > 0):
            # huge but finite scalings overflow the sweep; the same plan with the
            # scalings moved into the potentials does not
            cost = evaluate(absorb(state.copy(), kernel))
    if not np.isfinite(cost):
        raise NonFiniteResultError("transport cost is not finite")
    return float(cost)


def transport_cost_1d(state: SinkhornState, kernel: KernelSpec, grid: Grid1D) -> float:
    """Transport part of the entropic objective, ``sum_ij gamma_ij |i-j| h``.

    Evaluated in linear time through the distance-weighted sweeps.
    """
    def evaluate(st):
        t = kernels.stabilized_weighted_apply_1d(st.psi, st.beta, st.alpha, kernel.lambda1,
                                                 grid.h, kernel.epsilon)
        return np.dot(st.phi, t)

    return _cost_with(state, kernel, evaluate)


def transport_cost_2d(state: SinkhornState, kernel: KernelSpec, grid: Grid2D) -> float:
    """2D transport cost with the Manhattan ground distance ``|di| h1 + |dj| h2``."""
    shape = grid.shape

    def evaluate(st):
        t = kernels.stabilized_weighted_apply_2d(
            st.psi.reshape(shape, order="F"), st.beta.reshape(shape, order="F"),
            st.alpha.reshape(shape, order="F"), kernel.lambda1, kernel.lambda2,
            grid.h1, grid.h2, kernel.epsilon)
        return np.dot(st.phi, t.ravel(order="F"))

    return _cost_with(state, kernel, evaluate)


def transport_cost(state: SinkhornState, kernel: KernelSpec, grid: Grid) -> float:
    if isinstance(grid, Grid2D):
        return transport_cost_2d(state, kernel, grid)
    return transport_cost_1d(state, kernel, grid)


def _check_inputs(u: DiscreteMeasure, v: DiscreteMeasure):
    if u.grid != v.grid:
        raise GridMismatchError(f"measures live on different grids: {u.grid} vs {v.grid}")
    if not (u.strictly_positive and v.strictly_positive):
        raise NonPositiveInputError(
            "solver needs strictly positive weights; floor them first "
            "(see fastsinkhorn.problems.normalize_signal)")


def _run(u: DiscreteMeasure, v: DiscreteMeasure, config: SolverConfig, naive: bool,
         state: SinkhornState | None = None):
    _check_inputs(u, v)
    grid = u.grid
    kernel = KernelSpec.from_grid(grid, config.epsilon)
    op = _operator_for(grid, kernel, naive)
    if state is None:
        state = SinkhornState.initial(grid.size)
    uw, vw = u.weights, v.weights
    report = SolveReport(cost=np.nan, iterations=0, converged=False)
    tol, tau = config.tol, config.tau

    tau = tau if config.stabilized else np.inf
    op.prepare(state)
    ell = 0
    next_check = min(config.check_interval, config.itr_max)

    start = time.perf_counter()
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        while ell < config.itr_max:
            done, status = op.advance(state, uw, vw, next_check - ell, tau)
            ell += done
            state.iteration += done
            report.iterations = ell
            if status == _NONFINITE:
                report.aborted_nonfinite = True
                report.marginal_error_trace.append((ell, np.inf))
                report.checkpoint_seconds.append(time.perf_counter() - start)
                logger.info("non-finite scaling at iteration %d, aborting", ell)
                break
            if status == _NEEDS_ABSORB:
                absorb(state, kernel, report.stabilization_events)
                op.prepare(state)
            if ell == next_check:
                err = _marginal_error(op, state, vw)
                report.marginal_error_trace.append((ell, err))
                report.checkpoint_seconds.append(time.perf_counter() - start)
                if not np.isfinite(err):
                    report.aborted_nonfinite = True
                    break
                if err <= tol:
                    report.converged = True
                    break
                next_check = min(next_check + config.check_interval, config.itr_max)
    report.wall_time_seconds = time.perf_counter() - start

    if not report.aborted_nonfinite:
        try:
            report.cost = transport_cost(state, kernel, grid)
        except NonFiniteResultError:
            # finite scalings whose plan still cannot be summed (e.g. 1e307 next to 0)
            logger.warning("transport cost overflowed at iteration %d; reporting NaN", ell)
    return report, state


def solve(u: DiscreteMeasure, v: DiscreteMeasure, config: SolverConfig):
    """Linear-time Sinkhorn solve of the entropic W1 problem between ``u`` and ``v``.

    Parameters
    ----------
    u, v : DiscreteMeasure
        Strictly positive unit-mass measures on the same grid.
    config : SolverConfig
        ``tol = 0`` runs exactly ``itr_max`` iterations.

    Returns
    -------
    report : SolveReport
        ``report.cost`` is ``sum_ij gamma_ij d_ij`` (NaN after an abnormal stop).
    state : SinkhornState
        Final scalings and potentials; wrap in a
        :class:`~fastsinkhorn.types.TransportPlanView` to inspect the plan.
    """
    return _run(u, v, config, naive=False)


def naive_solve(u: DiscreteMeasure, v: DiscreteMeasure, config: SolverConfig):
    """Same iteration as :func:`solve` with quadratic matrix-vector products."""
    return _run(u, v, config, naive=True)


def exact_w1_1d(u, v, h: float) -> float:
    """Unregularized W1 on a line: ``h * sum_k |sum_{i<=k} (u_i - v_i)|``."""
    uw = u.weights if isinstance(u, DiscreteMeasure) else np.asarray(u, dtype=np.float64)
    vw = v.weights if isinstance(v, DiscreteMeasure) else np.asarray(v, dtype=np.float64)
    if uw.shape != vw.shape:
        raise MassMismatchError(f"length mismatch {uw.shape} vs {vw.shape}")
    if abs(uw.sum() - vw.sum()) > 1e-9:
        raise MassMismatchError(f"masses differ: {uw.sum()!r} vs {vw.sum()!r}")
    return float(h * np.abs(np.cumsum(uw - vw)).sum())
