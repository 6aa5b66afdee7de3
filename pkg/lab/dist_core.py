"""
Dense distributions over product state spaces

States x = (x^1, ..., x^D) of S^D are indexed big-endian,
index(x) = sum_d x^d * |S|^(D-d), so dimension 1 is the most significant
digit. Every module shares this convention; numpy's C-order
``ravel_multi_index`` implements it directly.

Kernels are column-stochastic: ``matrix[y, x] = p(y | x)``.
"""

import logging
from dataclasses import InitVar, dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import rel_entr, xlogy

from .exceptions import ArgumentError, DistributionValidationError

logger = logging.getLogger(__name__)

NORMALIZATION_ATOL = 1e-12
CHAIN_ATOL = 1e-10
LOG_FLOOR = 1e-300
DEFAULT_MAX_STATES = 1_000_000


@dataclass(frozen=True)
class StateSpace:
    """Product space S^D with |S| = cardinality"""

    cardinality: int
    num_dims: int
    max_states: int = field(default=DEFAULT_MAX_STATES, compare=False, repr=False)

    def __post_init__(self):
        if int(self.cardinality) < 2:
            raise ArgumentError(f"cardinality must be >= 2, got {self.cardinality}")
        if int(self.num_dims) < 1:
            raise ArgumentError(f"num_dims must be >= 1, got {self.num_dims}")
        if self.cardinality ** self.num_dims > self.max_states:
            raise ArgumentError(
                f"|S|^D = {self.cardinality}^{self.num_dims} exceeds the configured "
                f"maximum of {self.max_states} states"
            )

    @property
    def size(self):
        return self.cardinality ** self.num_dims

    @property
    def shape(self):
        return (self.cardinality,) * self.num_dims

    @cached_property
    def digits(self):
        """(size, D) table; row i holds the coordinates of state i"""
        table = np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=1)
        table.flags.writeable = False
        return table

    def index(self, state):
        state = tuple(int(v) for v in state)
        if len(state) != self.num_dims:
            raise ArgumentError(f"state {state} does not have {self.num_dims} coordinates")
        if any(v < 0 or v >= self.cardinality for v in state):
            raise ArgumentError(f"state {state} has a coordinate outside 0..{self.cardinality - 1}")
        return int(np.ravel_multi_index(state, self.shape))

    def state(self, index):
        if not 0 <= int(index) < self.size:
            raise ArgumentError(f"index {index} outside 0..{self.size - 1}")
        return tuple(int(v) for v in self.digits[int(index)])

    def resolve(self, x):
        """Accept an index or a coordinate tuple, return the index"""
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < self.size:
                raise ArgumentError(f"index {x} outside 0..{self.size - 1}")
            return int(x)
        return self.index(x)

    def axis(self, d):
        """Map a 1-based dimension to a 0-based axis"""
        if not 1 <= int(d) <= self.num_dims:
            raise ArgumentError(f"dimension {d} outside 1..{self.num_dims}")
        return int(d) - 1


def _frozen(array):
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability vector over S^D"""

    space: StateSpace
    probs: np.ndarray
    atol: InitVar[float] = NORMALIZATION_ATOL

    def __post_init__(self, atol):
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (self.space.size,):
            raise DistributionValidationError(
                f"expected {self.space.size} probabilities, got shape {probs.shape}"
            )
        if not np.all(np.isfinite(probs)):
            raise DistributionValidationError("probabilities must be finite")
        if probs.min() < -atol:
            raise DistributionValidationError(f"negative probability {probs.min():.3e}")
        total = probs.sum()
        if abs(total - 1.0) > atol:
            raise DistributionValidationError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, 'probs', _frozen(np.clip(probs, 0.0, None)))

    @classmethod
    def uniform(cls, space):
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def delta(cls, space, x):
        probs = np.zeros(space.size)
        probs[space.resolve(x)] = 1.0
        return cls(space, probs)

    def prob(self, x):
        return float(self.probs[self.space.resolve(x)])

    @property
    def support(self):
        return self.probs > 0


@dataclass(frozen=True, eq=False)
class DenseKernel:
    """Conditional distribution p(. | x) for every x, one column per x

    ``flagged`` lists columns filled by convention (conditioning states of
    probability zero).
    """

    space: StateSpace
    matrix: np.ndarray
    flagged: frozenset = frozenset()
    atol: InitVar[float] = NORMALIZATION_ATOL

    def __post_init__(self, atol):
        matrix = np.array(self.matrix, dtype=float)
        n = self.space.size
        if matrix.shape != (n, n):
            raise DistributionValidationError(f"kernel must be {n}x{n}, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise DistributionValidationError("kernel entries must be finite")
        if matrix.min() < -atol:
            raise DistributionValidationError(f"negative kernel entry {matrix.min():.3e}")
        sums = matrix.sum(axis=0)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        if abs(sums[worst] - 1.0) > atol:
            raise DistributionValidationError(
                f"kernel column {worst} sums to {sums[worst]!r}, not 1"
            )
        object.__setattr__(self, 'matrix', _frozen(np.clip(matrix, 0.0, None)))
        object.__setattr__(self, 'flagged', frozenset(int(c) for c in self.flagged))

    @classmethod
    def identity(cls, space):
        return cls(space, np.eye(space.size))

    def column(self, x):
        return JointDistribution(self.space, self.matrix[:, self.space.resolve(x)], atol=CHAIN_ATOL)


def _same_space(a, b):
    if a.space != b.space:
        raise ArgumentError(f"space mismatch: {a.space} vs {b.space}")


def marginal(p, d):
    """d-th marginal (1-based) of a joint distribution"""
    axis = p.space.axis(d)
    others = tuple(a for a in range(p.space.num_dims) if a != axis)
    return p.probs.reshape(p.space.shape).sum(axis=others)


def column_marginals(space, matrix):
    """Per-column marginals of a (size, cols) matrix as a (cols, D, S) array"""
    cols = matrix.shape[1]
    cube = matrix.reshape(space.shape + (cols,))
    out = np.empty((cols, space.num_dims, space.cardinality))
    for axis in range(space.num_dims):
        others = tuple(a for a in range(space.num_dims) if a != axis)
        out[:, axis, :] = cube.sum(axis=others).T
    return out


def product_columns(space, factors):
    """Joint matrix (size, cols) of per-column product distributions

    ``factors`` has shape (cols, D, S); column c of the result is
    prod_d factors[c, d, x^d].
    """
    dims = np.arange(space.num_dims)[None, :]
    gathered = factors[:, dims, space.digits]
    return np.prod(gathered, axis=-1).T


def product_distribution(space, marginals):
    factors = np.asarray(marginals, dtype=float)[None, :, :]
    return JointDistribution(space, product_columns(space, factors)[:, 0], atol=CHAIN_ATOL)


def tv_distance(p, q):
    _same_space(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def kl_divergence(p, q):
    """KL(p || q); +inf when p charges a state q does not"""
    _same_space(p, q)
    return float(rel_entr(p.probs, q.probs).sum())


def cross_entropy(p, q):
    _same_space(p, q)
    return float(-xlogy(p.probs, q.probs).sum())


def entropy(p):
    return float(-xlogy(p.probs, p.probs).sum())


def total_correlation(p):
    """sum_d H(p^d) - H(p); zero iff p is a product distribution"""
    marginal_entropy = sum(
        float(-xlogy(m, m).sum()) for m in (marginal(p, d) for d in range(1, p.space.num_dims + 1))
    )
    return marginal_entropy - entropy(p)


def expected_column_kl(weights, target, model):
    """sum_c weights[c] KL(target[:, c] || model[:, c]) over weighted columns"""
    live = np.flatnonzero(np.asarray(weights) > 0)
    if live.size == 0:
        return 0.0
    per_column = rel_entr(target[:, live], model[:, live]).sum(axis=0)
    return float(np.dot(weights[live], per_column))


def expected_column_tv(weights, first, second):
    """sum_c weights[c] d_TV(first[:, c], second[:, c])"""
    per_column = 0.5 * np.abs(np.asarray(first) - np.asarray(second)).sum(axis=0)
    return float(np.dot(weights, per_column))


def compose(outer, inner):
    """(outer o inner)(x | z) = sum_y outer(x | y) inner(y | z)"""
    _same_space(outer, inner)
    return DenseKernel(outer.space, outer.matrix @ inner.matrix, flagged=inner.flagged, atol=CHAIN_ATOL)


def push(kernel, prior):
    """E_{y ~ prior}[kernel(. | y)]"""
    _same_space(kernel, prior)
    return JointDistribution(kernel.space, kernel.matrix @ prior.probs, atol=CHAIN_ATOL)


def random_distribution(space, rng, concentration=1.0):
    return JointDistribution(space, rng.dirichlet(np.full(space.size, concentration)))


def random_kernel(space, rng, concentration=1.0):
    columns = rng.dirichlet(np.full(space.size, concentration), size=space.size)
    return DenseKernel(space, columns.T)


def sample_categorical(probs, rng):
    """Draw one index per row of ``probs`` (last axis is the category)

    Exponential race: argmax p_i / E_i with E_i ~ Exp(1) is distributed as p.
    """
    probs = np.asarray(probs, dtype=float)
    race = rng.exponential(size=probs.shape)
    return np.argmax(probs / np.maximum(race, LOG_FLOOR), axis=-1)


def sample_states(p, rng, n):
    """n state indices drawn from ``p`` by inverse-CDF"""
    cdf = np.cumsum(p.probs)
    draws = np.searchsorted(cdf, rng.random(n) * cdf[-1], side='right')
    return np.minimum(draws, p.space.size - 1)
