"""
Generation procedures

- ancestral sampling through a kernel sequence, as chains or densely
- ancestral sampling from a mixture denoiser with one lambda per chain and step
- tau-leaping from the exact reverse rate
- confidence-based unmasking for masked diffusion, with Gumbel noise and
  classifier-free guidance

Chains run in fixed-size blocks, each with its own RNG stream spawned from the
master seed, so results do not depend on the thread count.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .denoisers import compose_steps, mixture_view
from .dist_core import (
    CHAIN_ATOL, LOG_FLOOR, DenseKernel, JointDistribution, product_columns, push, sample_categorical,
    sample_states,
)
from .exceptions import ArgumentError, CapabilityError
from .forward_process import MaskSchedule
from .parallel import chain_blocks, parallel_map
from .posterior_oracle import reverse_rate

logger = logging.getLogger(__name__)

GUMBEL_CLAMP = 1e-12
GUMBEL_SCALE = 4.5
PROB_CLAMP = 1e-30


@dataclass(frozen=True, eq=False)
class SampleRun:
    """Chains x_{t_N} -> ... -> x_{t_0}; ``trajectory[n]`` holds x_{t_n}

    Dense runs carry ``distribution`` instead of a trajectory.
    """

    seed: int
    times: tuple
    trajectory: np.ndarray = None
    distribution: JointDistribution = None
    clamps: int = 0

    @property
    def final(self):
        return self.trajectory[0]

    @property
    def count(self):
        return 0 if self.trajectory is None else self.trajectory.shape[1]


def empirical_distribution(space, states):
    if len(states) == 0:
        raise ArgumentError("no samples to summarize")
    counts = np.bincount(np.asarray(states), minlength=space.size)
    return JointDistribution(space, counts / counts.sum(), atol=CHAIN_ATOL)


def _run_blocks(step_block, count, seed, threads):
    blocks = chain_blocks(count, seed)
    results = parallel_map(lambda block: step_block(*block), blocks, threads)
    if not results:
        return None, 0
    trajectory = np.concatenate([r[0] for r in results], axis=1)
    return trajectory, sum(r[1] for r in results)


# -- ancestral ------------------------------------------------------------


def ancestral_sample(kernels, prior, count, seed, times=None, dense=False, threads=None):
    """Sample x_T ~ prior, then x_{t_{n-1}} ~ kernels[n - 1](. | x_{t_n})

    ``kernels[n - 1]`` is the step t_n -> t_{n-1}. Dense mode returns
    push(kernels[0] o ... o kernels[N-1], prior) without sampling.
    """
    steps = len(kernels)
    times = tuple(times) if times is not None else tuple(range(steps + 1))
    if dense:
        return SampleRun(seed, times, distribution=push(compose_steps(kernels), prior))
    matrices = [k.matrix for k in kernels]

    def block(size, rng):
        trajectory = np.empty((steps + 1, size), dtype=np.int64)
        trajectory[steps] = sample_states(prior, rng, size)
        for n in range(steps, 0, -1):
            trajectory[n - 1] = sample_categorical(matrices[n - 1][:, trajectory[n]].T, rng)
        return trajectory, 0

    trajectory, _ = _run_blocks(block, count, seed, threads)
    if trajectory is None:
        trajectory = np.empty((steps + 1, 0), dtype=np.int64)
    return SampleRun(seed, times, trajectory)


def ancestral_sample_model(model, ctx, prior, count, seed, argmax_final=False, threads=None):
    """Ancestral sampling from a denoiser; mixtures draw one lambda per chain and step"""
    space = ctx.space
    times = model.grid.times
    steps = model.grid.steps
    views = [mixture_view(model, ctx, times[n - 1], times[n]) for n in range(1, steps + 1)]

    def block(size, rng):
        trajectory = np.empty((steps + 1, size), dtype=np.int64)
        trajectory[steps] = sample_states(prior, rng, size)
        for n in range(steps, 0, -1):
            view = views[n - 1]
            x = trajectory[n]
            lam = sample_categorical(view.weights[x], rng)
            factors = view.factors[lam, x]
            if argmax_final and n == 1:
                digits = np.argmax(factors, axis=-1)
            else:
                digits = sample_categorical(factors, rng)
            trajectory[n - 1] = np.ravel_multi_index(tuple(digits.T), space.shape)
        return trajectory, 0

    trajectory, _ = _run_blocks(block, count, seed, threads)
    if trajectory is None:
        trajectory = np.empty((steps + 1, 0), dtype=np.int64)
    return SampleRun(seed, times, trajectory)


# -- tau-leaping ----------------------------------------------------------


def _jump_factors(rate, space, columns, eps):
    """Per-dimension one-step laws (cols, D, S) and the number of clamped columns

    factor[c, d, v] = eps R(x with x^d = v, x) for v != x^d; the rest stays.
    """
    digits = space.digits[columns]
    strides = space.cardinality ** np.arange(space.num_dims - 1, -1, -1)
    values = np.arange(space.cardinality)
    targets = (columns[:, None, None]
               + (values[None, None, :] - digits[:, :, None]) * strides[None, :, None])
    matrix = np.nan_to_num(rate.matrix, nan=0.0)
    factors = eps * matrix[targets, columns[:, None, None]]
    own = values[None, None, :] == digits[:, :, None]
    factors[own] = 0.0
    factors = np.maximum(factors, 0.0)
    mass = factors.sum(axis=-1)
    over = mass > 1.0
    clamps = int(over.any(axis=-1).sum())
    factors[over] /= mass[over][:, None]
    stay = np.where(over, 0.0, 1.0 - mass)
    factors[own] = stay.ravel()
    return factors, clamps


def tau_leap_kernel(rate, space, eps):
    """Dense one-step tau-leaping law; each dimension jumps independently"""
    if eps < 0:
        raise ArgumentError("step size must be >= 0")
    columns = np.arange(space.size)
    factors, clamps = _jump_factors(rate, space, columns, eps)
    if clamps:
        logger.warning("tau-leap step %g clamped %d columns with jump mass above 1", eps, clamps)
    undefined = np.flatnonzero(~rate.support)
    return DenseKernel(space, product_columns(space, factors), flagged=undefined, atol=CHAIN_ATOL)


def tau_leap_step(rate, space, x, eps, rng):
    """Move chains ``x`` from t to t - eps; returns (new states, clamped chains)"""
    x = np.asarray(x)
    if eps == 0 or x.size == 0:
        return x.copy(), 0
    factors, clamps = _jump_factors(rate, space, x, eps)
    digits = sample_categorical(factors, rng)
    return np.ravel_multi_index(tuple(digits.T), space.shape), clamps


def _check_rate_times(ctx, times):
    times = tuple(float(t) for t in times)
    if not ctx.fwd.has_rate:
        raise CapabilityError("tau-leaping needs a rate-form forward process")
    if any(b <= a for a, b in zip(times, times[1:])) or times[-1] <= 0:
        raise ArgumentError("tau-leaping times must be increasing and end above 0")
    return times


def tau_leap_sample(ctx, times, count, seed, prior=None, threads=None):
    """x_{t_N} ~ prior (default q_{t_N}); step n uses R_{t_n} over t_n - t_{n-1}"""
    times = _check_rate_times(ctx, times)
    prior = prior if prior is not None else ctx.marginal(times[-1])
    steps = len(times) - 1
    rates = [reverse_rate(ctx, times[n]) for n in range(1, steps + 1)]

    def block(size, rng):
        trajectory = np.empty((steps + 1, size), dtype=np.int64)
        trajectory[steps] = sample_states(prior, rng, size)
        clamps = 0
        for n in range(steps, 0, -1):
            eps = times[n] - times[n - 1]
            trajectory[n - 1], clamped = tau_leap_step(rates[n - 1], ctx.space, trajectory[n], eps, rng)
            clamps += clamped
        return trajectory, clamps

    trajectory, clamps = _run_blocks(block, count, seed, threads)
    if trajectory is None:
        trajectory = np.empty((steps + 1, 0), dtype=np.int64)
    if clamps:
        logger.warning("tau-leaping clamped %d chain steps", clamps)
    return SampleRun(seed, times, trajectory, clamps=clamps)


def tau_leap_distribution(ctx, times, prior=None):
    """Exact output law of tau-leaping over ``times``"""
    times = _check_rate_times(ctx, times)
    prior = prior if prior is not None else ctx.marginal(times[-1])
    kernels = [
        tau_leap_kernel(reverse_rate(ctx, times[n]), ctx.space, times[n] - times[n - 1])
        for n in range(1, len(times))
    ]
    return push(compose_steps(kernels), prior)


# -- masked generation ----------------------------------------------------


@dataclass(frozen=True)
class CfgConfig:
    """Guidance weight w(t) = w_cfg (1 - t/T) N / (N - 1), clipped at 0"""

    w_cfg: float = 0.0
    uncond: object = None

    def __post_init__(self):
        if self.w_cfg < 0:
            raise ArgumentError("guidance coefficient must be >= 0")

    def weight(self, t, steps, horizon=1.0):
        if steps < 2:
            return self.w_cfg
        return max(0.0, self.w_cfg * (1.0 - t / horizon) * steps / (steps - 1))


def cfg_combine(cond, uncond, w):
    """Per-dimension p ~ cond^(1 + w) uncond^(-w)"""
    cond = np.maximum(np.asarray(cond, dtype=float), PROB_CLAMP)
    uncond = np.maximum(np.asarray(uncond, dtype=float), PROB_CLAMP)
    return softmax((1.0 + w) * np.log(cond) - w * np.log(uncond), axis=-1)


def gumbel(rng, shape):
    u = np.clip(rng.random(shape), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


def gumbel_scale(t, steps, horizon=1.0):
    """c_gb(t) = 4.5 (t - 1/N)/(1 - 1/N) on the unit time scale, clipped at 0"""
    if steps < 2:
        return 0.0
    u = t / horizon
    return max(0.0, GUMBEL_SCALE * (u - 1.0 / steps) / (1.0 - 1.0 / steps))


@dataclass(frozen=True)
class UnmaskSchedule:
    """counts[i - 1] tokens are unmasked on the step t_i -> t_{i-1}"""

    counts: tuple

    @property
    def total(self):
        return sum(self.counts)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def unmask_schedule(num_dims, schedule, grid):
    """n(t_i, t_{i-1}) = round(D m_{t_i}) - round(D m_{t_{i-1}}), every step >= 1

    Zero counts are raised to 1 and the surplus is taken from the final
    step (t_1 -> t_0), then from the largest counts.
    """
    steps = grid.steps
    if steps > num_dims:
        raise ArgumentError(f"cannot unmask {num_dims} tokens in {steps} steps with at least one each")
    if not isinstance(schedule, MaskSchedule):
        raise ArgumentError("unmask schedule needs a MaskSchedule")
    levels = [_round_half_up(num_dims * schedule(t)) for t in grid.times]
    counts = [levels[i] - levels[i - 1] for i in range(1, steps + 1)]
    surplus = 0
    for i, n in enumerate(counts):
        if n < 1:
            surplus += 1 - n
            counts[i] = 1
    take = min(surplus, counts[0] - 1)
    counts[0] -= take
    surplus -= take
    while surplus > 0:
        largest = max(range(steps), key=lambda i: (counts[i], -i))
        counts[largest] -= 1
        surplus -= 1
    return UnmaskSchedule(tuple(counts))


def confidence_sample_step(probs, x_t, n_unmask, scale, rng, mask_index):
    """Unmask the ``n_unmask`` most confident masked coordinates of each chain

    ``probs`` is p_{0|t}(. | x_t) per chain and dimension, shape (count, D, S);
    ``x_t`` holds the coordinates, shape (count, D). Ties in confidence go to
    the lowest dimension index.
    """
    probs = np.array(probs, dtype=float)
    probs[..., mask_index] = 0.0
    probs = np.maximum(probs, 0.0)
    totals = probs.sum(axis=-1, keepdims=True)
    probs = np.where(totals > 0, probs / np.where(totals > 0, totals, 1.0), 1.0 / (probs.shape[-1] - 1))
    probs[..., mask_index] = 0.0
    proposal = sample_categorical(probs, rng)
    picked = np.take_along_axis(probs, proposal[..., None], axis=-1)[..., 0]
    confidence = np.log(np.maximum(picked, LOG_FLOOR))
    if scale > 0:
        confidence = confidence + scale * gumbel(rng, confidence.shape)
    masked = x_t == mask_index
    confidence = np.where(masked, confidence, -np.inf)
    limit = np.minimum(n_unmask, masked.sum(axis=1))
    order = np.argsort(-confidence, axis=1, kind='stable')
    ranks = np.argsort(order, axis=1)
    chosen = masked & (ranks < limit[:, None])
    return np.where(chosen, proposal, x_t)


def _component_draw(model, n, states, rng):
    probs = model.component_probs(n)
    weights = model.weights(n)[states]
    lam = sample_categorical(weights, rng)
    return probs[lam, states]


def confidence_sample(model, fwd, count, seed, guidance=None, threads=None):
    """Masked generation from all-MASK with the model's own grid"""
    if not fwd.is_masked:
        raise CapabilityError("confidence sampling needs a masked forward process")
    space = fwd.space
    grid = model.grid
    steps = grid.steps
    generator = fwd.generators[0]
    schedule = unmask_schedule(space.num_dims, generator.schedule, grid)
    mask_index = generator.mask_index
    guidance = guidance or CfgConfig()
    if guidance.w_cfg > 0 and guidance.uncond is None:
        raise ArgumentError("guidance needs an unconditional model")

    def block(size, rng):
        digits = np.full((size, space.num_dims), mask_index, dtype=np.int64)
        trajectory = np.empty((steps + 1, size), dtype=np.int64)
        trajectory[steps] = np.ravel_multi_index(tuple(digits.T), space.shape)
        for n in range(steps, 0, -1):
            t = grid.times[n]
            states = trajectory[n]
            probs = _component_draw(model, n, states, rng)
            w = guidance.weight(t, steps, grid.horizon)
            if w > 0:
                probs = cfg_combine(probs, _component_draw(guidance.uncond, n, states, rng), w)
            digits = confidence_sample_step(
                probs, digits, schedule.counts[n - 1], gumbel_scale(t, steps, grid.horizon), rng, mask_index,
            )
            trajectory[n - 1] = np.ravel_multi_index(tuple(digits.T), space.shape)
        return trajectory, 0

    trajectory, _ = _run_blocks(block, count, seed, threads)
    if trajectory is None:
        trajectory = np.empty((steps + 1, 0), dtype=np.int64)
    return SampleRun(seed, grid.times, trajectory)
