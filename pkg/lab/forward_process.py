"""
Factorized continuous-time forward processes

Each dimension evolves with its own generator; the joint transition kernel is
the Kronecker product of the per-dimension transition matrices, taken in the
big-endian state order of ``dist_core``.

Generator forms:
- Homogeneous(Q): q_{t|s} = expm((t - s) Q)
- Scheduled(Q, beta): q_{t|s} = expm((B(t) - B(s)) Q), B the cumulative rate
- Masked(m): absorbing diffusion into MASK (the last state) with masking
  probability m_t, no rate form
- UniformClosedForm: two states, Q = 1/2 - delta, closed-form transitions
"""

import logging
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import expm

from .dist_core import CHAIN_ATOL, DenseKernel, push
from .exceptions import (
    ArgumentError, CapabilityError, DegenerateStateError, DistributionValidationError,
)

logger = logging.getLogger(__name__)

TIME_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Generator Q(y, x) with column x the from-state"""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 2:
            raise DistributionValidationError(f"rate matrix must be square with size >= 2, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise DistributionValidationError("rate matrix entries must be finite")
        off = matrix - np.diag(np.diag(matrix))
        if off.min() < 0:
            raise DistributionValidationError("off-diagonal rates must be non-negative")
        scale = max(1.0, float(np.abs(matrix).max()))
        if np.abs(matrix.sum(axis=0)).max() > 1e-9 * scale:
            raise DistributionValidationError("rate matrix columns must sum to 0")
        matrix.flags.writeable = False
        object.__setattr__(self, 'matrix', matrix)

    @property
    def cardinality(self):
        return self.matrix.shape[0]


def uniform_rate(cardinality, scale=1.0):
    """Jump to each state (itself included) at rate scale/|S|"""
    q = np.full((cardinality, cardinality), scale / cardinality)
    q -= np.eye(cardinality) * scale
    return RateMatrix(q)


def ordinal_rate(cardinality, width=1.0, scale=1.0):
    """Gaussian-shaped jump rates between ordinal states, total rate ``scale``"""
    if width <= 0:
        raise ArgumentError("width must be positive")
    levels = np.arange(cardinality)
    weights = np.exp(-((levels[:, None] - levels[None, :]) ** 2) / (2.0 * width ** 2))
    np.fill_diagonal(weights, 0.0)
    q = scale * weights / weights.sum(axis=0, keepdims=True)
    q -= np.diag(q.sum(axis=0))
    return RateMatrix(q)


@dataclass(frozen=True)
class RateSchedule:
    """Time-varying rate scale beta(t) with cumulative B(t), B(0) = 0"""

    class Kind:
        CONSTANT = 'constant'
        LINEAR = 'linear'
        EXPONENTIAL = 'exponential'
        CHOICES = ('constant', 'linear', 'exponential')

    kind: str = Kind.CONSTANT
    low: float = 1.0
    high: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in self.Kind.CHOICES:
            raise ArgumentError(f"unknown rate schedule {self.kind!r}")
        if self.low < 0 or self.high < 0:
            raise ArgumentError("rate schedule bounds must be non-negative")
        if self.kind == self.Kind.EXPONENTIAL and (self.low <= 0 or self.high <= 1):
            raise ArgumentError("exponential schedule needs low > 0 and high > 1")

    def cumulative(self, t):
        u = t / self.horizon
        if self.kind == self.Kind.CONSTANT:
            return self.low * t
        if self.kind == self.Kind.LINEAR:
            return self.low * t + (self.high - self.low) * t * u / 2.0
        return self.low * (self.high ** u - 1.0)

    def rate(self, t):
        u = t / self.horizon
        if self.kind == self.Kind.CONSTANT:
            return self.low
        if self.kind == self.Kind.LINEAR:
            return self.low + (self.high - self.low) * u
        return self.low * math.log(self.high) * self.high ** u / self.horizon


@dataclass(frozen=True)
class MaskSchedule:
    """Masking probability m_t, nondecreasing with m_0 = 0 and m_T = 1"""

    class Kind:
        LINEAR = 'linear'
        ARCCOS = 'arccos'
        COSINE = 'cosine'
        CHOICES = ('linear', 'arccos', 'cosine')

    kind: str = Kind.LINEAR
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in self.Kind.CHOICES:
            raise ArgumentError(f"unknown mask schedule {self.kind!r}")

    def __call__(self, t):
        u = min(max(t / self.horizon, 0.0), 1.0)
        if u >= 1.0:
            return 1.0
        if self.kind == self.Kind.LINEAR:
            return u
        if self.kind == self.Kind.ARCCOS:
            return 2.0 * math.acos(1.0 - u) / math.pi
        return 1.0 - math.cos(math.pi * u / 2.0)


class Generator:
    """Per-dimension forward generator"""

    cardinality = None
    has_rate = False

    def transition(self, s, t):
        raise NotImplementedError

    def rate(self, t):
        raise CapabilityError(f"{type(self).__name__} has no rate form")


@dataclass(frozen=True, eq=False)
class Homogeneous(Generator):
    rate_matrix: RateMatrix
    has_rate = True

    @property
    def cardinality(self):
        return self.rate_matrix.cardinality

    def transition(self, s, t):
        return np.maximum(expm((t - s) * self.rate_matrix.matrix), 0.0)

    def rate(self, t):
        return np.array(self.rate_matrix.matrix)


@dataclass(frozen=True, eq=False)
class Scheduled(Generator):
    rate_matrix: RateMatrix
    schedule: RateSchedule
    has_rate = True

    @property
    def cardinality(self):
        return self.rate_matrix.cardinality

    def transition(self, s, t):
        elapsed = self.schedule.cumulative(t) - self.schedule.cumulative(s)
        return np.maximum(expm(elapsed * self.rate_matrix.matrix), 0.0)

    def rate(self, t):
        return self.schedule.rate(t) * np.array(self.rate_matrix.matrix)


@dataclass(frozen=True)
class Masked(Generator):
    """Absorbing diffusion; state ``cardinality - 1`` is MASK"""

    cardinality: int
    schedule: MaskSchedule = MaskSchedule()

    @property
    def mask_index(self):
        return self.cardinality - 1

    def transition(self, s, t):
        if t == s:
            return np.eye(self.cardinality)
        m_s, m_t = self.schedule(s), self.schedule(t)
        if m_s >= 1.0:
            raise DegenerateStateError(f"mask schedule is already 1 at s={s}")
        keep = (1.0 - m_t) / (1.0 - m_s)
        matrix = np.eye(self.cardinality) * keep
        matrix[self.mask_index, :] = 1.0 - keep
        matrix[self.mask_index, self.mask_index] = 1.0
        return matrix

    def sigma(self, t):
        """Cumulative masking intensity -log(1 - m_t)"""
        m = self.schedule(t)
        return math.inf if m >= 1.0 else -math.log1p(-m)


@dataclass(frozen=True)
class UniformClosedForm(Generator):
    """Two-state uniform diffusion with Q = 1/2 - delta"""

    cardinality = 2
    has_rate = True

    def transition(self, s, t):
        decay = math.exp(-(t - s))
        stay, move = 0.5 * (1.0 + decay), 0.5 * (1.0 - decay)
        return np.array([[stay, move], [move, stay]])

    def rate(self, t):
        return np.array([[-0.5, 0.5], [0.5, -0.5]])


@dataclass(frozen=True, eq=False)
class FactorizedForward:
    """Independent per-dimension forward processes on a StateSpace"""

    space: object
    generators: tuple
    horizon: float = 1.0

    def __post_init__(self):
        generators = self.generators
        if isinstance(generators, Generator):
            generators = (generators,) * self.space.num_dims
        generators = tuple(generators)
        if len(generators) != self.space.num_dims:
            raise ArgumentError(f"need {self.space.num_dims} generators, got {len(generators)}")
        for generator in generators:
            if generator.cardinality != self.space.cardinality:
                raise ArgumentError(
                    f"generator over {generator.cardinality} states on a space with |S|={self.space.cardinality}"
                )
        if not self.horizon > 0:
            raise ArgumentError("horizon T must be positive")
        object.__setattr__(self, 'generators', generators)

    @property
    def is_masked(self):
        return all(isinstance(g, Masked) for g in self.generators)

    @property
    def has_rate(self):
        return all(g.has_rate for g in self.generators)

    def generator(self, d):
        return self.generators[self.space.axis(d)]

    def check_times(self, s, t):
        """Validate 0 <= s <= t <= T; snap round-off at the endpoints"""
        if not (-TIME_ATOL <= s <= t + TIME_ATOL and t <= self.horizon + TIME_ATOL):
            raise ArgumentError(f"need 0 <= s <= t <= {self.horizon}, got s={s}, t={t}")
        t = min(max(float(t), 0.0), self.horizon)
        s = min(max(float(s), 0.0), t)
        return s, t


def transition_matrix(fwd, d, s, t):
    """q^d_{t|s} as an |S| x |S| column-stochastic matrix"""
    s, t = fwd.check_times(s, t)
    generator = fwd.generator(d)
    if s == t:
        return np.eye(fwd.space.cardinality)
    return generator.transition(s, t)


def joint_transition_kernel(fwd, s, t):
    s, t = fwd.check_times(s, t)
    matrices = [transition_matrix(fwd, d, s, t) for d in range(1, fwd.space.num_dims + 1)]
    return DenseKernel(fwd.space, reduce(np.kron, matrices), atol=CHAIN_ATOL)


def joint_rate(fwd, t):
    """Q_t(y, x) = sum_d Q^d_t(y^d, x^d) prod_{d' != d} delta(y^d', x^d')"""
    fwd.check_times(0.0, t)
    size = fwd.space.cardinality
    total = np.zeros((fwd.space.size, fwd.space.size))
    for axis, generator in enumerate(fwd.generators):
        before = np.eye(size ** axis)
        after = np.eye(size ** (fwd.space.num_dims - axis - 1))
        total += np.kron(np.kron(before, generator.rate(t)), after)
    return total


def marginal_at(fwd, q0, t):
    """q_t = push(q_{t|0}, q_0)"""
    return push(joint_transition_kernel(fwd, 0.0, t), q0)


def mask_sigma(fwd, t):
    generator = fwd.generators[0]
    if not isinstance(generator, Masked):
        raise CapabilityError("mask_sigma needs a masked forward process")
    return generator.sigma(t)
