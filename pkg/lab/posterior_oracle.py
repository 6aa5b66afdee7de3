"""
Exact reverse-time objects of a factorized forward process

Everything here is ground truth computed densely by Bayes' rule:
q_{s|t}(x_s | x_t) = q_{t|s}(x_t | x_s) q_s(x_s) / q_t(x_t).
"""

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .dist_core import (
    CHAIN_ATOL, DenseKernel, JointDistribution, column_marginals, product_columns,
)
from .exceptions import ArgumentError, CapabilityError, ConditioningError
from .forward_process import joint_rate, joint_transition_kernel, marginal_at, transition_matrix

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PosteriorContext:
    """Forward process plus data distribution, with a cache of q_t"""

    fwd: object
    q0: JointDistribution
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.q0.space != self.fwd.space:
            raise ArgumentError("data distribution and forward process live on different spaces")

    @property
    def space(self):
        return self.fwd.space

    @property
    def horizon(self):
        return self.fwd.horizon

    def memo(self, key, factory):
        """Return the cached value for ``key``, computing it on a miss"""
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        value = factory()
        with self._lock:
            return self._cache.setdefault(key, value)

    def marginal(self, t):
        """q_t, cached per time"""
        t = float(t)
        if t == 0.0:
            return self.q0
        return self.memo(('marginal', t), lambda: marginal_at(self.fwd, self.q0, t))

    def support(self, t):
        return self.marginal(t).probs > 0


def true_posterior_kernel(ctx, s, t):
    """q_{s|t}; columns with q_t(x_t) = 0 are filled with q_s and flagged"""
    s, t = ctx.fwd.check_times(s, t)
    return ctx.memo(('posterior', s, t), lambda: _posterior_kernel(ctx, s, t))


def _posterior_kernel(ctx, s, t):
    forward = joint_transition_kernel(ctx.fwd, s, t).matrix
    q_s = ctx.marginal(s).probs
    q_t = ctx.marginal(t).probs
    live = q_t > 0
    matrix = np.empty_like(forward)
    matrix[:, live] = forward.T[:, live] * q_s[:, None] / q_t[None, live]
    matrix[:, ~live] = q_s[:, None]
    flagged = np.flatnonzero(~live)
    return DenseKernel(ctx.space, matrix, flagged=flagged, atol=CHAIN_ATOL)


def posterior_marginal(ctx, s, t, x_t, d):
    """q^d_{s|t}(. | x_t)"""
    index = ctx.space.resolve(x_t)
    axis = ctx.space.axis(d)
    if ctx.marginal(t).probs[index] <= 0:
        raise ConditioningError(f"q_t(x_t) = 0 at t={t} for state {ctx.space.state(index)}")
    column = true_posterior_kernel(ctx, s, t).matrix[:, [index]]
    return column_marginals(ctx.space, column)[0, axis]


def analytical_denoiser_kernel(ctx, s, t):
    """Product of the true posterior marginals, column by column"""
    posterior = true_posterior_kernel(ctx, s, t)
    factors = column_marginals(ctx.space, posterior.matrix)
    return DenseKernel(
        ctx.space, product_columns(ctx.space, factors), flagged=posterior.flagged, atol=CHAIN_ATOL,
    )


def bridge_tensor(ctx, d, s, t):
    """q^d_{s|0,t}(x_s | x_0, x_t) as an array indexed [x_s, x_0, x_t]

    Pairs (x_0, x_t) the forward process cannot connect collapse onto x_s = x_t.
    """
    s, t = ctx.fwd.check_times(s, t)
    from_clean = transition_matrix(ctx.fwd, d, 0.0, s)
    step = transition_matrix(ctx.fwd, d, s, t)
    total = transition_matrix(ctx.fwd, d, 0.0, t)
    numerator = from_clean[:, :, None] * step.T[:, None, :]
    reachable = total.T > 0
    bridge = np.where(reachable[None, :, :], numerator / np.where(reachable, total.T, 1.0)[None], 0.0)
    unreachable_x0, unreachable_xt = np.nonzero(~reachable)
    bridge[unreachable_xt, unreachable_x0, unreachable_xt] = 1.0
    return bridge


def bridge_operators(ctx, s, t):
    """Per-dimension, per-column linear maps p_{0|t}^d -> p_{s|t}^d

    Returns an array B of shape (cols, D, S_s, S_0) with
    B[c, d] = bridge_tensor(d)[:, :, x_t^d] for x_t the state of column c.
    """
    s, t = ctx.fwd.check_times(s, t)
    return ctx.memo(('bridge', s, t), lambda: _bridge_operators(ctx, s, t))


def _bridge_operators(ctx, s, t):
    digits = ctx.space.digits
    operators = np.empty((ctx.space.size, ctx.space.num_dims, ctx.space.cardinality, ctx.space.cardinality))
    for axis in range(ctx.space.num_dims):
        bridge = bridge_tensor(ctx, axis + 1, s, t)
        operators[:, axis] = np.moveaxis(bridge[:, :, digits[:, axis]], -1, 0)
    operators.flags.writeable = False
    return operators


def reparametrized_factors(x0_probs, ctx, s, t):
    """Per-dimension p^d_{s|t}(. | x_t) from p^d_{0|t}(. | x_t)

    ``x0_probs`` has shape (..., cols, D, S); the result has the same shape.
    """
    operators = bridge_operators(ctx, s, t)
    return np.einsum('cdab,...cdb->...cda', operators, x0_probs)


def reparametrized_denoiser(x0_model, ctx, s, t):
    """Product kernel p_{s|t} = prod_d sum_{x_0^d} q^d_{s|0,t} p^d_{0|t}"""
    x0_model = np.asarray(x0_model, dtype=float)
    space = ctx.space
    expected = (space.size, space.num_dims, space.cardinality)
    if x0_model.shape != expected:
        raise ArgumentError(f"x0 model must have shape {expected}, got {x0_model.shape}")
    live = ctx.support(t)
    rows = x0_model[live]
    if rows.min(initial=0.0) < 0 or np.abs(rows.sum(axis=-1) - 1.0).max(initial=0.0) > CHAIN_ATOL:
        raise ConditioningError("x0 model does not supply distributions on the support of q_t")
    factors = reparametrized_factors(x0_model, ctx, s, t)
    return DenseKernel(
        space, product_columns(space, factors), flagged=np.flatnonzero(~live), atol=CHAIN_ATOL,
    )


@dataclass(frozen=True, eq=False)
class ReverseRate:
    """Time-reversal generator; undefined columns (q_t(x) = 0) hold NaN"""

    matrix: np.ndarray
    support: np.ndarray

    def column(self, x):
        if not self.support[x]:
            raise ConditioningError(f"reverse rate undefined at state index {x}")
        return self.matrix[:, x]


def reverse_rate(ctx, t):
    """R_t(y, x) = Q_t(x, y) q_t(y) / q_t(x) off the diagonal"""
    _, t = ctx.fwd.check_times(0.0, t)
    if t <= 0:
        raise ArgumentError("reverse rate needs t > 0")
    if not ctx.fwd.has_rate:
        raise CapabilityError("reverse rate needs a rate-form forward process")
    rate = joint_rate(ctx.fwd, t)
    q_t = ctx.marginal(t).probs
    live = q_t > 0
    live_index = np.flatnonzero(live)
    diagonal = (live_index, np.arange(live_index.size))
    off = rate.T[:, live] * q_t[:, None] / q_t[None, live]
    off[diagonal] = 0.0
    off[diagonal] = -off.sum(axis=0)
    matrix = np.full(rate.shape, np.nan)
    matrix[:, live] = off
    return ReverseRate(matrix, live)


def local_error_ratios(ctx, t, eps_list, x):
    """d_TV(q_{t-eps|t}(.|x), p_{t-eps|t}(.|x)) / eps^2 for each eps"""
    index = ctx.space.resolve(x)
    ratios = []
    for eps in eps_list:
        exact = true_posterior_kernel(ctx, t - eps, t).matrix[:, index]
        product = analytical_denoiser_kernel(ctx, t - eps, t).matrix[:, index]
        ratios.append(0.5 * np.abs(exact - product).sum() / eps ** 2)
    return np.array(ratios)
