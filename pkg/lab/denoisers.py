"""
Tabular denoisers

A denoiser stores logits of p^d_{0|t}(. | x_t) for every grid time t_n > 0,
conditioning state x_t and dimension d. p_{s|t} for s < t always comes from
the reparametrization through the forward bridge q_{s|0,t}.

The product model (teacher) has one component. The mixture model (student)
has K components lambda_1..lambda_K with weights w_k; its kernel is
sum_k w_k prod_d p^d(. | x_t; lambda_k).
"""

import json
import logging
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.special import softmax

from .dist_core import (
    CHAIN_ATOL, LOG_FLOOR, DenseKernel, JointDistribution, StateSpace, column_marginals, compose,
    product_columns,
)
from .exceptions import ArgumentError, DistributionValidationError
from .posterior_oracle import bridge_operators, true_posterior_kernel
from .reporting import atomic_output

logger = logging.getLogger(__name__)

LOGIT_CLAMP = 1e-30
GRID_ATOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """0 = t_0 < t_1 < ... < t_N = T"""

    times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2:
            raise ArgumentError("a time grid needs at least two points")
        if times[0] != 0.0:
            raise ArgumentError(f"time grid must start at 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ArgumentError("time grid must be strictly increasing")
        object.__setattr__(self, 'times', times)

    @classmethod
    def uniform(cls, steps, horizon=1.0):
        return cls(tuple(horizon * i / steps for i in range(steps + 1)))

    @classmethod
    def offset(cls, steps, horizon=1.0, delta=0.01):
        """t_0 = 0 and t_i = delta + (T - delta)(i - 1)/(N - 1) for i >= 1"""
        if steps == 1:
            return cls((0.0, horizon))
        if not 0 < delta < horizon:
            raise ArgumentError("offset must lie in (0, T)")
        inner = [delta + (horizon - delta) * (i - 1) / (steps - 1) for i in range(1, steps + 1)]
        inner[-1] = horizon
        return cls((0.0, *inner))

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def horizon(self):
        return self.times[-1]

    def nearest(self, t):
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    def index(self, t):
        n = self.nearest(t)
        if abs(self.times[n] - t) > GRID_ATOL:
            raise ArgumentError(f"time {t} is not on the grid")
        return n


@dataclass(eq=False)
class TabularProductDenoiser:
    """p^{psi,d}_{0|t}(. | x_t) = softmax(logits[n - 1, x_t, d])"""

    space: object
    grid: TimeGrid
    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        expected = (self.grid.steps, self.space.size, self.space.num_dims, self.space.cardinality)
        if self.logits.shape != expected:
            raise ArgumentError(f"product logits must have shape {expected}, got {self.logits.shape}")

    components = 1
    train_weights = False

    def component_probs(self, n):
        return softmax(self.logits[n - 1], axis=-1)[None]

    def weights(self, n):
        return np.ones((self.space.size, 1))

    def parameters(self):
        return {'logits': self.logits}

    def copy(self):
        return TabularProductDenoiser(self.space, self.grid, self.logits.copy())


@dataclass(eq=False)
class TabularMixtureDenoiser:
    """K product components with softmax weights

    ``weight_logits`` is either shape (K,) (global weights, trainable when
    ``train_weights``) or (N, size, K) (per conditioning state, as built by
    the universal constructions; never trained).
    """

    space: object
    grid: TimeGrid
    logits: np.ndarray
    weight_logits: np.ndarray = None
    train_weights: bool = False

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 5:
            raise ArgumentError("mixture logits must have shape (K, N, size, D, S)")
        expected = (self.grid.steps, self.space.size, self.space.num_dims, self.space.cardinality)
        if self.logits.shape[1:] != expected:
            raise ArgumentError(f"mixture logits must have trailing shape {expected}, got {self.logits.shape[1:]}")
        if self.weight_logits is None:
            self.weight_logits = np.zeros(self.components)
        self.weight_logits = np.array(self.weight_logits, dtype=float)
        if self.weight_logits.shape not in {(self.components,), (self.grid.steps, self.space.size, self.components)}:
            raise ArgumentError(f"bad weight logits shape {self.weight_logits.shape}")
        if self.train_weights and self.weight_logits.ndim != 1:
            raise ArgumentError("only global mixture weights can be trained")

    @property
    def components(self):
        return self.logits.shape[0]

    def component_probs(self, n):
        return softmax(self.logits[:, n - 1], axis=-1)

    def weights(self, n):
        if self.weight_logits.ndim == 1:
            return np.broadcast_to(softmax(self.weight_logits), (self.space.size, self.components))
        return softmax(self.weight_logits[n - 1], axis=-1)

    def parameters(self):
        params = {'logits': self.logits}
        if self.train_weights:
            params['weight_logits'] = self.weight_logits
        return params

    def copy(self):
        return TabularMixtureDenoiser(
            self.space, self.grid, self.logits.copy(), self.weight_logits.copy(), self.train_weights,
        )


@dataclass(frozen=True, eq=False)
class MixtureOfProducts:
    """Distribution sum_k w_k prod_d factors[k, d]"""

    space: object
    weights: np.ndarray
    factors: np.ndarray

    @property
    def components(self):
        return len(self.weights)

    def joint(self):
        probs = product_columns(self.space, self.factors) @ self.weights
        return JointDistribution(self.space, probs, atol=CHAIN_ATOL)


@dataclass(eq=False)
class MixtureView:
    """A denoiser evaluated at one (s, t) pair

    factors[k, c, d] = p^d_{s|t}(. | x_c; lambda_k), weights[c, k] = w_k.
    ``n`` is the grid index of t; n = 0 stands for the identity kernel.
    """

    space: object
    n: int
    x0: np.ndarray = None
    operators: np.ndarray = None
    factors: np.ndarray = None
    weights: np.ndarray = None
    _joint: np.ndarray = field(default=None, repr=False)

    @property
    def is_identity(self):
        return self.n == 0

    def joint(self):
        """(size, cols) mixture kernel matrix"""
        if self._joint is None:
            if self.is_identity:
                self._joint = np.eye(self.space.size)
            else:
                per_component = np.stack([product_columns(self.space, f) for f in self.factors])
                self._joint = np.einsum('kxc,ck->xc', per_component, self.weights)
        return self._joint

    def component_joints(self):
        return np.stack([product_columns(self.space, f) for f in self.factors])

    def marginals(self):
        """(cols, D, S) mixture marginals, the factors of p-bar"""
        return np.einsum('ck,kcda->cda', self.weights, self.factors)


def _check_pair(model, s, t):
    if not 0 <= s < t + GRID_ATOL:
        raise ArgumentError(f"need 0 <= s < t, got s={s}, t={t}")
    return model.grid.index(t)


def mixture_view(model, ctx, s, t):
    """Evaluate ``model`` at (s, t); t = 0 gives the identity"""
    if t == 0:
        return MixtureView(ctx.space, 0)
    n = _check_pair(model, s, t)
    x0 = model.component_probs(n)
    operators = bridge_operators(ctx, s, model.grid.times[n])
    factors = np.einsum('cdab,kcdb->kcda', operators, x0)
    return MixtureView(ctx.space, n, x0, operators, factors, np.array(model.weights(n)))


def denoiser_kernel(model, ctx, s, t):
    """p_{s|t} of a product or mixture denoiser"""
    if not s < t:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    view = mixture_view(model, ctx, s, t)
    flagged = np.flatnonzero(~ctx.support(t))
    return DenseKernel(ctx.space, view.joint(), flagged=flagged, atol=CHAIN_ATOL)


def marginal_product_kernel(model, ctx, s, t):
    """prod_d of the mixture marginals, column by column"""
    if not s < t:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    view = mixture_view(model, ctx, s, t)
    flagged = np.flatnonzero(~ctx.support(t))
    return DenseKernel(ctx.space, product_columns(ctx.space, view.marginals()), flagged=flagged, atol=CHAIN_ATOL)


def fit_product_to_oracle(ctx, grid):
    """Product denoiser whose p_{0|t_n} marginals are the true posterior marginals"""
    space = ctx.space
    logits = np.zeros((grid.steps, space.size, space.num_dims, space.cardinality))
    for n, t in enumerate(grid.times[1:]):
        live = ctx.support(t)
        marginals = column_marginals(space, true_posterior_kernel(ctx, 0.0, t).matrix)
        logits[n, live] = np.log(np.maximum(marginals[live], LOGIT_CLAMP))
    return TabularProductDenoiser(space, grid, logits)


def mixture_from_product(teacher, components=8, init_noise=0.0, rng=None, train_weights=False):
    """Student initialized as K copies of the teacher

    Gaussian logit noise of scale ``init_noise`` goes on components 2..K.
    """
    if components < 1:
        raise ArgumentError("a mixture needs at least one component")
    logits = np.repeat(teacher.logits[None], components, axis=0)
    if init_noise > 0 and components > 1:
        rng = rng if rng is not None else np.random.default_rng()
        logits[1:] += rng.normal(scale=init_noise, size=logits[1:].shape)
    return TabularMixtureDenoiser(teacher.space, teacher.grid, logits, np.zeros(components), train_weights)


def _delta_factors(space, states):
    factors = np.zeros((len(states), space.num_dims, space.cardinality))
    for k, z in enumerate(states):
        factors[k, np.arange(space.num_dims), space.digits[z]] = 1.0
    return factors


def universal_mixture_from_joint(p):
    """One delta-product component per support point, weighted by p(z)"""
    support = np.flatnonzero(p.probs > 0)
    return MixtureOfProducts(p.space, p.probs[support].copy(), _delta_factors(p.space, support))


def universal_mixture_denoiser(space, grid, kernels):
    """Mixture whose p_{0|t_n} equals ``kernels[n - 1]`` column by column

    Every state z is a delta component; the per-state weights are the kernel
    columns.
    """
    if len(kernels) != grid.steps:
        raise ArgumentError(f"need {grid.steps} kernels, got {len(kernels)}")
    factors = _delta_factors(space, range(space.size))
    component_logits = np.log(np.maximum(factors, LOG_FLOOR))
    logits = np.broadcast_to(
        component_logits[:, None, None], (space.size, grid.steps, space.size) + component_logits.shape[1:],
    ).copy()
    weight_logits = np.stack([np.log(np.maximum(k.matrix.T, LOG_FLOOR)) for k in kernels])
    return TabularMixtureDenoiser(space, grid, logits, weight_logits)


def rollout_kernels(model, ctx):
    """[p_{t_0|t_1}, ..., p_{t_{N-1}|t_N}]"""
    times = model.grid.times
    return [denoiser_kernel(model, ctx, times[n - 1], times[n]) for n in range(1, len(times))]


def compose_steps(kernels):
    """K_1 o K_2 o ... o K_N"""
    return reduce(compose, kernels)


def save_model(model, path):
    """Binary .npz (bit-exact) or .json checkpoint"""
    path = str(path)
    header = {
        'kind': 'mixture' if isinstance(model, TabularMixtureDenoiser) else 'product',
        'cardinality': model.space.cardinality,
        'num_dims': model.space.num_dims,
        'times': list(model.grid.times),
        'train_weights': bool(model.train_weights),
    }
    weight_logits = getattr(model, 'weight_logits', np.zeros(1))
    with atomic_output(path) as tmp:
        if path.endswith('.json'):
            payload = dict(
                header,
                logits_shape=list(model.logits.shape),
                logits=model.logits.ravel().tolist(),
                weight_shape=list(weight_logits.shape),
                weight_logits=weight_logits.ravel().tolist(),
            )
            with open(tmp, 'w') as fh:
                json.dump(payload, fh)
        else:
            with open(tmp, 'wb') as fh:
                np.savez(fh, header=np.array(json.dumps(header)), logits=model.logits, weight_logits=weight_logits)


def load_model(path):
    path = str(path)
    if path.endswith('.json'):
        with open(path) as fh:
            payload = json.load(fh)
        header = payload
        logits = np.array(payload['logits'], dtype=float).reshape(payload['logits_shape'])
        weight_logits = np.array(payload['weight_logits'], dtype=float).reshape(payload['weight_shape'])
    else:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data['header'][()]))
            logits = data['logits']
            weight_logits = data['weight_logits']
    try:
        space = StateSpace(header['cardinality'], header['num_dims'])
        grid = TimeGrid(tuple(header['times']))
    except KeyError as exc:
        raise DistributionValidationError(f"checkpoint header is missing {exc}") from exc
    if header['kind'] == 'product':
        return TabularProductDenoiser(space, grid, logits)
    return TabularMixtureDenoiser(space, grid, logits, weight_logits, header['train_weights'])
