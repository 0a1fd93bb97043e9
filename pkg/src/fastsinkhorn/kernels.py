"""Kernel-vector products for the Wasserstein-1 Gibbs kernel on uniform grids.

The kernel is ``K[k, j] = lam ** |k - j|`` in 1D and the Kronecker product of two
such matrices in 2D.  ``fast_*`` functions apply it with one forward and one
backward Horner-style sweep per axis (linear time); ``naive_*`` functions sum
the full matrix entry by entry and only exist as oracles and benchmark foils.

Rescaled ("log-stabilized") variants apply
``diag(exp(outer/eps)) @ K @ diag(exp(inner/eps))`` using only exponentials of
neighbouring potential differences, so the rescaled matrix never overflows
even when the potentials themselves are huge.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import NonFiniteInputError, NonPositiveEpsilonError, TooLargeError

logger = logging.getLogger(__name__)

NAIVE_MAX_1D = 16384
NAIVE_MAX_2D = 65536

# reassociation lets LLVM vectorize the O(N^2) reductions; nan/inf semantics stay intact
_NAIVE_MATH = {"reassoc", "contract"}


class KernelWarning(UserWarning):
    """Raised for degenerate but computable decay factors (lam == 1)."""


def lambda_from(h: float, epsilon: float) -> float:
    """Per-axis decay factor ``exp(-h/epsilon)``; may underflow to 0."""
    if not epsilon > 0:
        raise NonPositiveEpsilonError(f"epsilon must be positive, got {epsilon!r}")
    if h < 0:
        raise ValueError(f"grid spacing must be nonnegative, got {h!r}")
    lam = math.exp(-h / epsilon)
    if lam == 0.0 and h > 0:
        logger.debug("lambda underflowed to 0 for h/eps=%g; kernel is diagonal", h / epsilon)
    return lam


@dataclass
class RecursionBuffers:
    """Scratch vectors for the two half-steps of an iteration.

    ``r``/``s`` hold the forward/backward partial sums of the phi-side sweep,
    ``p``/``q`` those of the psi-side sweep.
    """

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    s: np.ndarray

    @classmethod
    def for_size(cls, n: int) -> "RecursionBuffers":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))

    def __len__(self):
        return self.p.size


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"decay factor must lie in [0, 1], got {lam!r}")
    if lam == 1.0:
        warnings.warn("lam == 1: kernel is all ones, stability bound degenerates",
                      KernelWarning, stacklevel=3)
    return lam


def _as_finite_vector(x, name="x") -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError(f"{name} contains non-finite entries")
    return x


def _as_finite_grid(x, name="X") -> np.ndarray:
    x = np.asfortranarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError(f"{name} contains non-finite entries")
    return x


# --------------------------------------------------------------------------
# compiled sweeps
# --------------------------------------------------------------------------


@njit(cache=True)
def _sweep(x, lam, p, q, out):
    n = x.shape[0]
    p[0] = x[0]
    for k in range(n - 1):
        p[k + 1] = lam * p[k] + x[k + 1]
    q[n - 1] = 0.0
    for k in range(n - 2, -1, -1):
        q[k] = lam * (q[k + 1] + x[k + 1])
    for k in range(n):
        out[k] = p[k] + q[k]
    return out


@njit(cache=True)
def _step_factor(lam, diff, inv_eps):
    if lam == 0.0:
        return 0.0
    return lam * math.exp(diff * inv_eps)


@njit(cache=True)
def _sweep_scaled(x, lam, inner, outer, inv_eps, out):
    # out_k = exp(outer_k/eps) * sum_j lam^|k-j| exp(inner_j/eps) x_j
    n = x.shape[0]
    acc = math.exp((inner[0] + outer[0]) * inv_eps) * x[0]
    out[0] = acc
    for k in range(n - 1):
        acc = (_step_factor(lam, outer[k + 1] - outer[k], inv_eps) * acc
               + math.exp((inner[k + 1] + outer[k + 1]) * inv_eps) * x[k + 1])
        out[k + 1] = acc
    acc = 0.0
    for k in range(n - 2, -1, -1):
        acc = _step_factor(lam, outer[k] - outer[k + 1], inv_eps) * (
            acc + math.exp((inner[k + 1] + outer[k + 1]) * inv_eps) * x[k + 1])
        out[k] = out[k] + acc
    return out


@njit(cache=True)
def _sweep_weighted_scaled(x, lam, inner, outer, inv_eps, plain, weighted):
    # weighted_k = exp(outer_k/eps) sum_j |k-j| lam^|k-j| exp(inner_j/eps) x_j (unit spacing)
    n = x.shape[0]
    acc = math.exp((inner[0] + outer[0]) * inv_eps) * x[0]
    dacc = 0.0
    plain[0] = acc
    weighted[0] = 0.0
    for k in range(n - 1):
        f = _step_factor(lam, outer[k + 1] - outer[k], inv_eps)
        dacc = f * (dacc + acc)
        acc = f * acc + math.exp((inner[k + 1] + outer[k + 1]) * inv_eps) * x[k + 1]
        plain[k + 1] = acc
        weighted[k + 1] = dacc
    acc = 0.0
    dacc = 0.0
    for k in range(n - 2, -1, -1):
        g = _step_factor(lam, outer[k] - outer[k + 1], inv_eps)
        c = math.exp((inner[k + 1] + outer[k + 1]) * inv_eps) * x[k + 1]
        dacc = g * (dacc + acc + c)
        acc = g * (acc + c)
        plain[k] = plain[k] + acc
        weighted[k] = weighted[k] + dacc


@njit(cache=True)
def _apply_2d(x, lam1, lam2, z, out):
    n, m = x.shape
    # K0 on every column
    for j in range(m):
        acc = x[0, j]
        z[0, j] = acc
        for i in range(n - 1):
            acc = lam1 * acc + x[i + 1, j]
            z[i + 1, j] = acc
        acc = 0.0
        for i in range(n - 2, -1, -1):
            acc = lam1 * (acc + x[i + 1, j])
            z[i, j] = z[i, j] + acc
    # block recursion across columns
    for i in range(n):
        out[i, 0] = z[i, 0]
    for j in range(m - 1):
        for i in range(n):
            out[i, j + 1] = lam2 * out[i, j] + z[i, j + 1]
    q = np.zeros(n)
    for j in range(m - 2, -1, -1):
        for i in range(n):
            q[i] = lam2 * (q[i] + z[i, j + 1])
            out[i, j] = out[i, j] + q[i]
    return out


@njit(cache=True)
def _apply_2d_scaled(x, lam1, lam2, inner, outer, inv_eps, z, out):
    n, m = x.shape
    # columns carry the target potential of their own column; rows then swap
    # it for the target potential of the output column
    for j in range(m):
        _sweep_scaled(x[:, j], lam1, inner[:, j], outer[:, j], inv_eps, z[:, j])
    row_out = np.empty(m)
    for i in range(n):
        o = outer[i, :].copy()
        _sweep_scaled(z[i, :].copy(), lam2, -o, o, inv_eps, row_out)
        out[i, :] = row_out
    return out


@njit(cache=True)
def _weighted_2d_scaled(x, lam1, lam2, h1, h2, inner, outer, inv_eps, out):
    n, m = x.shape
    a = np.empty((n, m))
    b = np.empty((n, m))
    for j in range(m):
        _sweep_weighted_scaled(x[:, j], lam1, inner[:, j], outer[:, j], inv_eps,
                               a[:, j], b[:, j])
    pa = np.empty(m)
    wa = np.empty(m)
    pb = np.empty(m)
    wb = np.empty(m)
    for i in range(n):
        o = outer[i, :].copy()
        _sweep_weighted_scaled(a[i, :].copy(), lam2, -o, o, inv_eps, pa, wa)
        _sweep_weighted_scaled(b[i, :].copy(), lam2, -o, o, inv_eps, pb, wb)
        for j in range(m):
            out[i, j] = h1 * pb[j] + h2 * wa[j]
    return out


def step_factors(lam, outer, inv_eps):
    """Forward and backward neighbour factors ``lam * exp(+-(outer_{k+1} - outer_k)/eps)``."""
    diff = np.diff(outer) * inv_eps
    if lam == 0.0:
        return np.zeros(diff.size), np.zeros(diff.size)
    with np.errstate(over="ignore"):
        return lam * np.exp(diff), lam * np.exp(-diff)


@njit(cache=True)
def _sweep_factored(x, fwd, bwd, scale, out):
    # _sweep_scaled with the exponentials precomputed (see step_factors)
    n = x.shape[0]
    acc = scale[0] * x[0]
    out[0] = acc
    for k in range(n - 1):
        acc = fwd[k] * acc + scale[k + 1] * x[k + 1]
        out[k + 1] = acc
    acc = 0.0
    for k in range(n - 2, -1, -1):
        acc = bwd[k] * (acc + scale[k + 1] * x[k + 1])
        out[k] = out[k] + acc
    return out


@njit(cache=True, error_model="numpy")
def _finish_iteration(u, out, phi, psi, tau):
    """``phi = u / out``, then classify the iteration: 0 fine, 1 above ``tau``,
    2 a scaling left ``(0, inf)``."""
    bad = False
    top = 0.0
    for k in range(u.shape[0]):
        phi[k] = u[k] / out[k]
        a = phi[k]
        b = psi[k]
        # a zero scaling means the kernel product overflowed to inf
        if not (0.0 < a < np.inf and 0.0 < b < np.inf):
            bad = True
        if a > top:
            top = a
        if b > top:
            top = b
    if bad:
        return 2
    if top > tau:
        return 1
    return 0


@njit(cache=True, error_model="numpy")
def _advance_1d(u, v, phi, psi, lam, fwd_a, bwd_a, fwd_b, bwd_b, scale, scaled, steps, tau,
                p, q, out):
    """Run up to ``steps`` full iterations in place.

    Returns ``(done, status)``: status 0 finished, 1 the scalings exceeded ``tau``
    after iteration ``done``, 2 a scaling left ``(0, inf)`` in iteration ``done``.
    """
    n = u.shape[0]
    for it in range(steps):
        if scaled:
            _sweep_factored(phi, fwd_b, bwd_b, scale, out)
        else:
            _sweep(phi, lam, p, q, out)
        for k in range(n):
            psi[k] = v[k] / out[k]
        if scaled:
            _sweep_factored(psi, fwd_a, bwd_a, scale, out)
        else:
            _sweep(psi, lam, p, q, out)
        status = _finish_iteration(u, out, phi, psi, tau)
        if status != 0:
            return it + 1, status
    return steps, 0


# --------------------------------------------------------------------------
# compiled quadratic oracles
# --------------------------------------------------------------------------


@njit(cache=True, fastmath=_NAIVE_MATH)
def _naive_1d(x, powers, out):
    n = x.shape[0]
    for k in range(n):
        acc = 0.0
        for j in range(k):
            acc += powers[k - j] * x[j]
        for j in range(k, n):
            acc += powers[j - k] * x[j]
        out[k] = acc
    return out


@njit(cache=True, error_model="numpy")
def _advance_naive_1d(u, v, phi, psi, powers, steps, tau, out):
    """:func:`_advance_1d` for unabsorbed states with the quadratic product."""
    n = u.shape[0]
    for it in range(steps):
        _naive_1d(phi, powers, out)
        for k in range(n):
            psi[k] = v[k] / out[k]
        _naive_1d(psi, powers, out)
        status = _finish_iteration(u, out, phi, psi, tau)
        if status != 0:
            return it + 1, status
    return steps, 0


@njit(cache=True, fastmath=_NAIVE_MATH)
def _naive_1d_scaled(x, log_lam, inner, outer, inv_eps, out):
    n = x.shape[0]
    for k in range(n):
        acc = 0.0
        for j in range(n):
            d = abs(k - j)
            if d == 0:
                e = (outer[k] + inner[j]) * inv_eps
            elif log_lam == -np.inf:
                continue
            else:
                e = (outer[k] + inner[j]) * inv_eps + d * log_lam
            acc += math.exp(e) * x[j]
        out[k] = acc
    return out


@njit(cache=True, fastmath=_NAIVE_MATH)
def _naive_2d(x, pw1, pw2, out):
    n, m = x.shape
    for l in range(m):
        for k in range(n):
            acc = 0.0
            for j in range(m):
                w2 = pw2[abs(l - j)]
                for i in range(n):
                    acc += pw1[abs(k - i)] * w2 * x[i, j]
            out[k, l] = acc
    return out


@njit(cache=True, fastmath=_NAIVE_MATH)
def _naive_2d_scaled(x, log_lam1, log_lam2, inner, outer, inv_eps, out):
    n, m = x.shape
    for l in range(m):
        for k in range(n):
            acc = 0.0
            for j in range(m):
                d2 = abs(l - j)
                if d2 > 0 and log_lam2 == -np.inf:
                    continue
                for i in range(n):
                    d1 = abs(k - i)
                    if d1 > 0 and log_lam1 == -np.inf:
                        continue
                    e = (outer[k, l] + inner[i, j]) * inv_eps
                    if d1 > 0:
                        e += d1 * log_lam1
                    if d2 > 0:
                        e += d2 * log_lam2
                    acc += math.exp(e) * x[i, j]
            out[k, l] = acc
    return out


_TINY = np.finfo(np.float64).tiny


def power_table(lam: float, count: int) -> np.ndarray:
    """``[1, lam, lam**2, ...]`` built by repeated multiplication.

    Powers that fall below the smallest normal double are flushed to zero.
    That moves no entry by more than 2.2e-308, but it keeps subnormal operands
    out of the quadratic loops, where each one costs a slow microcode assist
    on common CPUs.
    """
    table = np.zeros(count)
    acc = 1.0
    for m in range(count):
        if acc < _TINY:
            break
        table[m] = acc
        acc *= lam
    return table


def _log_lambda(lam: float) -> float:
    return math.log(lam) if lam > 0 else -math.inf


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def fast_apply_1d(x, lam: float, buffers: RecursionBuffers | None = None, out=None) -> np.ndarray:
    """Compute ``y_k = sum_j lam**|k-j| x_j`` in two sweeps.

    The forward sweep accumulates the lower-triangular part ``p``, the backward
    sweep the strictly-upper part ``q``; ``y = p + q``.  ``buffers`` lets callers
    reuse scratch space across iterations.
    """
    x = _as_finite_vector(x)
    lam = _check_lambda(lam)
    if buffers is None or len(buffers) != x.size:
        buffers = RecursionBuffers.for_size(x.size)
    if out is None:
        out = np.empty(x.size)
    return _sweep(x, lam, buffers.p, buffers.q, out)


def naive_apply_1d(x, lam: float, max_n: int = NAIVE_MAX_1D) -> np.ndarray:
    """Quadratic-time reference for :func:`fast_apply_1d`."""
    x = _as_finite_vector(x)
    lam = _check_lambda(lam)
    if x.size > max_n:
        raise TooLargeError(f"naive apply capped at N={max_n}, got {x.size}")
    return _naive_1d(x, power_table(lam, x.size), np.empty(x.size))


def fast_weighted_apply_1d(x, lam: float, h: float) -> np.ndarray:
    """Compute ``t_k = sum_j |k-j| h lam**|k-j| x_j`` in linear time.

    Differentiates the two sweeps of :func:`fast_apply_1d` with respect to the
    distance exponent, so the forward partial ``p'`` obeys
    ``p'_{k+1} = lam (p'_k + p_k)`` and the backward one
    ``q'_k = lam (q'_{k+1} + q_{k+1} + x_{k+1})``.
    """
    x = _as_finite_vector(x)
    lam = _check_lambda(lam)
    zeros = np.zeros(x.size)
    plain = np.empty(x.size)
    weighted = np.empty(x.size)
    _sweep_weighted_scaled(x, lam, zeros, zeros, 1.0, plain, weighted)
    return h * weighted


def fast_apply_2d(x, lam1: float, lam2: float) -> np.ndarray:
    """Apply the block kernel ``K = T(lam2) kron T(lam1)`` to an ``N x M`` array.

    Equivalent to ``K @ vec(X)`` with column-major ``vec``: every column is
    first multiplied by the ``N x N`` block ``K0`` (sweeps along axis 0 with
    ``lam1``), then the block rows are combined by the same forward/backward
    recursion along axis 1 with ``lam2``.  Cost is ``O(N M)``.
    """
    x = _as_finite_grid(x)
    lam1, lam2 = _check_lambda(lam1), _check_lambda(lam2)
    z = np.empty(x.shape, order="F")
    out = np.empty(x.shape, order="F")
    return _apply_2d(x, lam1, lam2, z, out)


def naive_apply_2d(x, lam1: float, lam2: float, max_size: int = NAIVE_MAX_2D) -> np.ndarray:
    """Quadruple-loop reference for :func:`fast_apply_2d`."""
    x = _as_finite_grid(x)
    lam1, lam2 = _check_lambda(lam1), _check_lambda(lam2)
    if x.size > max_size:
        raise TooLargeError(f"naive 2D apply capped at {max_size} points, got {x.size}")
    n, m = x.shape
    return _naive_2d(x, power_table(lam1, n), power_table(lam2, m), np.empty(x.shape, order="F"))


def weighted_apply_2d(x, lam1: float, lam2: float, h1: float, h2: float) -> np.ndarray:
    """``T_kl = sum_ij lam1^|k-i| lam2^|l-j| (|k-i| h1 + |l-j| h2) X_ij`` in ``O(N M)``.

    Split as (weighted along rows, plain along columns) plus (plain along rows,
    weighted along columns).
    """
    x = _as_finite_grid(x)
    lam1, lam2 = _check_lambda(lam1), _check_lambda(lam2)
    zeros = np.zeros(x.shape, order="F")
    out = np.empty(x.shape, order="F")
    return _weighted_2d_scaled(x, lam1, lam2, float(h1), float(h2), zeros, zeros, 1.0, out)


def stabilized_fast_apply_1d(x, inner, outer, lam: float, epsilon: float) -> np.ndarray:
    """Apply ``diag(exp(outer/eps)) K diag(exp(inner/eps))`` to ``x``.

    Uses only ``exp((outer_{k+1} - outer_k)/eps)`` and ``exp((inner_k + outer_k)/eps)``,
    both of which stay bounded for dual potentials of a sensible coupling.
    With zero potentials this is exactly :func:`fast_apply_1d`.
    """
    x = _as_finite_vector(x)
    inner = _as_finite_vector(inner, "inner")
    outer = _as_finite_vector(outer, "outer")
    lam = _check_lambda(lam)
    if not epsilon > 0:
        raise NonPositiveEpsilonError(f"epsilon must be positive, got {epsilon!r}")
    return _sweep_scaled(x, lam, inner, outer, 1.0 / epsilon, np.empty(x.size))


def stabilized_fast_apply_2d(x, inner, outer, lam1: float, lam2: float, epsilon: float) -> np.ndarray:
    """2D counterpart of :func:`stabilized_fast_apply_1d` (potentials shaped like ``x``)."""
    x = _as_finite_grid(x)
    inner = _as_finite_grid(inner, "inner")
    outer = _as_finite_grid(outer, "outer")
    lam1, lam2 = _check_lambda(lam1), _check_lambda(lam2)
    z = np.empty(x.shape, order="F")
    out = np.empty(x.shape, order="F")
    return _apply_2d_scaled(x, lam1, lam2, inner, outer, 1.0 / epsilon, z, out)


def naive_stabilized_apply_1d(x, inner, outer, lam: float, epsilon: float,
                              max_n: int = NAIVE_MAX_1D) -> np.ndarray:
    """Entry-by-entry rescaled kernel product (oracle)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.size > max_n:
        raise TooLargeError(f"naive apply capped at N={max_n}, got {x.size}")
    return _naive_1d_scaled(x, _log_lambda(lam), np.ascontiguousarray(inner, dtype=np.float64),
                            np.ascontiguousarray(outer, dtype=np.float64), 1.0 / epsilon,
                            np.empty(x.size))


def naive_stabilized_apply_2d(x, inner, outer, lam1: float, lam2: float, epsilon: float,
                              max_size: int = NAIVE_MAX_2D) -> np.ndarray:
    x = np.asfortranarray(x, dtype=np.float64)
    if x.size > max_size:
        raise TooLargeError(f"naive 2D apply capped at {max_size} points, got {x.size}")
    return _naive_2d_scaled(x, _log_lambda(lam1), _log_lambda(lam2),
                            np.asfortranarray(inner, dtype=np.float64),
                            np.asfortranarray(outer, dtype=np.float64), 1.0 / epsilon,
                            np.empty(x.shape, order="F"))


def stabilized_weighted_apply_1d(x, inner, outer, lam: float, h: float, epsilon: float) -> np.ndarray:
    """Rescaled version of :func:`fast_weighted_apply_1d`."""
    x = _as_finite_vector(x)
    plain = np.empty(x.size)
    weighted = np.empty(x.size)
    _sweep_weighted_scaled(x, float(lam), np.ascontiguousarray(inner, dtype=np.float64),
                           np.ascontiguousarray(outer, dtype=np.float64), 1.0 / epsilon,
                           plain, weighted)
    return h * weighted


def stabilized_weighted_apply_2d(x, inner, outer, lam1: float, lam2: float, h1: float,
                                 h2: float, epsilon: float) -> np.ndarray:
    x = _as_finite_grid(x)
    out = np.empty(x.shape, order="F")
    return _weighted_2d_scaled(x, float(lam1), float(lam2), float(h1), float(h2),
                               np.asfortranarray(inner, dtype=np.float64),
                               np.asfortranarray(outer, dtype=np.float64), 1.0 / epsilon, out)
