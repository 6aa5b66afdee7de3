"""
Di4C loss suite

Exact losses are evaluated densely over every conditioning state. Each exact
loss can also accumulate its analytic gradient with respect to the student's
logits into a ``Gradient``:

- distillation:  E_{x ~ r_delta} KL(teacher_{0|delta} || student_{0|delta})
- consistency:   E_{x ~ r_t} KL(student_{s|u} o teacher_{u|t} || student_{s|t})
- data:          E_{q_{0,t}} [-log student_{0|t}(x_0 | x_t)]
- marginal:      E_{x ~ r_t} sum_d KL(teacher^d_{0|t} || student^d_{0|t})
- correlation:   E_{q_{0,t}} [-log student_{0|t} + log pbar_{0|t}]

pbar is the product of the student's mixture marginals.

The consistency loss also has Monte Carlo estimators, plain and with a
dimensionally independent control variate, which share their sampling path.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp, rel_entr, xlogy

from .denoisers import LOGIT_CLAMP, mixture_view
from .dist_core import (
    JointDistribution, column_marginals, expected_column_kl, product_columns, sample_categorical,
)
from .exceptions import ArgumentError
from .forward_process import transition_matrix
from .posterior_oracle import true_posterior_kernel

logger = logging.getLogger(__name__)


class Alpha:
    ZERO = 'zero'
    ONE = 'one'
    LINEAR = 'linear'
    SIGMOID = 'sigmoid'
    SCALED_SIGMOID = 'scaled-sigmoid'
    CHOICES = (ZERO, ONE, LINEAR, SIGMOID, SCALED_SIGMOID)


class Reference:
    DATA = 'data'
    TEACHER = 'teacher'
    CHOICES = (DATA, TEACHER)


def alpha_weight(kind, t, horizon=1.0):
    """alpha_t in [0, 1]; the sigmoid is g(t) = 1 / (1 + exp(10 - 20 t/T))"""
    u = t / horizon
    if kind == Alpha.ZERO:
        return 0.0
    if kind == Alpha.ONE:
        return 1.0
    if kind == Alpha.LINEAR:
        return min(max(u, 0.0), 1.0)
    if kind == Alpha.SIGMOID:
        return float(expit(20.0 * u - 10.0))
    if kind == Alpha.SCALED_SIGMOID:
        return 0.1 * float(expit(20.0 * u - 10.0))
    raise ArgumentError(f"unknown alpha schedule {kind!r}")


@dataclass(frozen=True)
class LossConfig:
    """Loss weights, reference source and Monte Carlo sizes"""

    delta: float = 0.01
    dt_low: float = 0.001
    dt_high: float = 0.01
    alpha: str = Alpha.SIGMOID
    reference: str = Reference.DATA
    samples: int = 64
    lambda_samples: int = 1
    lambda_batch: int = 1
    use_control_variates: bool = False
    cv_kind: str = 'marginal'
    enumerate_components: bool = True
    stop_gradient: bool = True
    distil_mode: str = 'exact'
    objective: str = 'standard'

    def __post_init__(self):
        if not self.delta > 0:
            raise ArgumentError("delta must be positive")
        if not 0 < self.dt_low <= self.dt_high:
            raise ArgumentError("need 0 < dt_low <= dt_high")
        if self.alpha not in Alpha.CHOICES:
            raise ArgumentError(f"unknown alpha schedule {self.alpha!r}")
        if self.reference not in Reference.CHOICES:
            raise ArgumentError(f"unknown reference source {self.reference!r}")
        if min(self.samples, self.lambda_samples, self.lambda_batch) < 1:
            raise ArgumentError("Monte Carlo sizes must be >= 1")
        if self.cv_kind not in ('marginal', 'convex'):
            raise ArgumentError(f"unknown control variate {self.cv_kind!r}")
        if self.distil_mode not in ('exact', 'surrogate'):
            raise ArgumentError(f"unknown distillation mode {self.distil_mode!r}")
        if self.objective not in ('standard', 'gated'):
            raise ArgumentError(f"unknown objective form {self.objective!r}")


class Workspace:
    """Per-evaluation memo of model views"""

    def __init__(self, ctx):
        self.ctx = ctx
        self._views = {}

    def view(self, model, s, t):
        key = (id(model), float(s), float(t))
        if key not in self._views:
            self._views[key] = mixture_view(model, self.ctx, s, t)
        return self._views[key]

    def kernel(self, model, s, t):
        return self.view(model, s, t).joint()


def _workspace(ctx, workspace):
    return workspace if workspace is not None else Workspace(ctx)


class Gradient:
    """Accumulates dL/d(parameters) of one denoiser"""

    def __init__(self, model):
        self.model = model
        self.arrays = {name: np.zeros_like(value) for name, value in model.parameters().items()}

    def add_factors(self, view, d_factors, d_weights=None):
        """Backpropagate through the bridge and the softmaxes of ``view``"""
        if view.is_identity:
            return
        d_x0 = np.einsum('cdab,kcda->kcdb', view.operators, d_factors)
        d_logits = view.x0 * (d_x0 - (view.x0 * d_x0).sum(axis=-1, keepdims=True))
        logits = self.arrays['logits']
        if logits.ndim == 4:
            logits[view.n - 1] += d_logits[0]
        else:
            logits[:, view.n - 1] += d_logits
        if d_weights is not None and 'weight_logits' in self.arrays:
            w = view.weights
            self.arrays['weight_logits'] += (w * (d_weights - (w * d_weights).sum(axis=-1, keepdims=True))).sum(axis=0)

    def add_joint(self, view, d_joint):
        """dL/d joint[x, c] for the mixture kernel of ``view``"""
        if view.is_identity:
            return
        self.add_factors(view, *_joint_backward(view, d_joint))

    def add_marginals(self, view, d_marginals):
        """dL/d marginals[c, d, v] for the mixture marginals of ``view``"""
        if view.is_identity:
            return
        d_factors = view.weights.T[:, :, None, None] * d_marginals[None]
        d_weights = np.einsum('cda,kcda->ck', d_marginals, view.factors)
        self.add_factors(view, d_factors, d_weights)

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays.values())

    def __iadd__(self, other):
        for name, value in other.arrays.items():
            self.arrays[name] += value
        return self


def _gathered(view):
    """factors[k, c, d, x^d] laid out as (K, cols, size, D)"""
    space = view.space
    dims = np.arange(space.num_dims)[None, :]
    return view.factors[:, :, dims, space.digits]


def _joint_backward(view, d_joint):
    space = view.space
    gathered = _gathered(view)
    d_cols = d_joint.T
    d_weights = np.einsum('cx,kcx->ck', d_cols, gathered.prod(axis=-1))
    d_factors = np.zeros_like(view.factors)
    weighted = d_cols[None] * view.weights.T[:, :, None]
    states = np.arange(space.cardinality)[None, :]
    for axis in range(space.num_dims):
        others = np.prod(np.delete(gathered, axis, axis=-1), axis=-1)
        onehot = (space.digits[:, axis][:, None] == states).astype(float)
        d_factors[:, :, axis, :] = (others * weighted) @ onehot
    return d_factors, d_weights


def _safe(p):
    return np.maximum(p, LOGIT_CLAMP)


def _ratio(target, model):
    """target / model where target > 0, zero elsewhere"""
    return np.where(target > 0, target / _safe(model), 0.0)


# -- distillation ---------------------------------------------------------


def distil_loss_exact(student, teacher, ctx, r, delta, grad=None, workspace=None):
    ws = _workspace(ctx, workspace)
    target = ws.kernel(teacher, 0.0, delta)
    view = ws.view(student, 0.0, delta)
    weights = r.probs
    value = expected_column_kl(weights, target, view.joint())
    if grad is not None:
        grad.add_joint(view, -weights[None, :] * _ratio(target, view.joint()))
    return value


def distil_loss_surrogate(student, teacher, ctx, r, delta, grad=None, workspace=None):
    """E_lambda sum_d KL of per-dimension factors; dominates the exact loss"""
    ws = _workspace(ctx, workspace)
    teacher_view = ws.view(teacher, 0.0, delta)
    view = ws.view(student, 0.0, delta)
    weights = r.probs
    per_pair = rel_entr(teacher_view.factors[:, None], view.factors[None]).sum(axis=(-1, -2))
    pair_weights = np.einsum('cj,ck->jkc', teacher_view.weights, view.weights)
    value = float(np.einsum('c,jkc,jkc->', weights, pair_weights, per_pair))
    if grad is not None:
        teacher_marginals = teacher_view.marginals()
        d_factors = -(weights[None, :, None, None] * view.weights.T[:, :, None, None]
                      * _ratio(teacher_marginals[None], view.factors))
        d_weights = weights[:, None] * np.einsum('cj,jkc->ck', teacher_view.weights, per_pair)
        grad.add_factors(view, d_factors, d_weights)
    return value


# -- consistency ----------------------------------------------------------


def consistency_target(student, teacher, ctx, s, u, t, workspace=None):
    """student_{s|u} o teacher_{u|t} as a (size, cols) matrix"""
    ws = _workspace(ctx, workspace)
    return ws.kernel(student, s, u) @ ws.kernel(teacher, u, t)


def consis_loss_exact(student, teacher, ctx, r, s, u, t, grad=None, stop_gradient=True, workspace=None):
    if not s <= u < t:
        raise ArgumentError(f"need s <= u < t, got {s}, {u}, {t}")
    ws = _workspace(ctx, workspace)
    inner = ws.kernel(teacher, u, t)
    outer_view = ws.view(student, s, u)
    target = outer_view.joint() @ inner
    view = ws.view(student, s, t)
    weights = r.probs
    value = expected_column_kl(weights, target, view.joint())
    if grad is not None:
        grad.add_joint(view, -weights[None, :] * _ratio(target, view.joint()))
        if not stop_gradient and not outer_view.is_identity:
            log_gap = np.where(target > 0, np.log(_safe(target)) - np.log(_safe(view.joint())), 0.0)
            grad.add_joint(outer_view, (weights[None, :] * log_gap) @ inner.T)
    return value


def consis_cross_entropy_exact(student, teacher, ctx, r, s, u, t, workspace=None):
    """E_{x_t ~ r} H(student_{s|u} o teacher_{u|t}, student_{s|t}), the estimators' target"""
    ws = _workspace(ctx, workspace)
    target = consistency_target(student, teacher, ctx, s, u, t, ws)
    model = ws.kernel(student, s, t)
    live = r.probs > 0
    per_column = -xlogy(target[:, live], model[:, live]).sum(axis=0)
    return float(np.dot(r.probs[live], per_column))


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate; ``variance`` is that of one replication's mean"""

    value: float
    variance: float
    samples: int
    replicates: np.ndarray = field(default=None, repr=False)

    @property
    def standard_error(self):
        """Standard error of ``value`` (the mean over all replications)"""
        count = 1 if self.replicates is None else len(self.replicates)
        return math.sqrt(self.variance / count)


@dataclass(frozen=True)
class _Paths:
    x_t: np.ndarray
    x_s: np.ndarray
    x_s_digits: np.ndarray
    q_eta: np.ndarray


def _draw_paths(student, teacher, ctx, r, s, u, t, count, rng, ws):
    """x_t ~ r, x_u ~ teacher_{u|t}, lambda ~ w, x_s ~ prod_d student^d_{s|u}(. ; lambda)"""
    space = ctx.space
    x_t = sample_categorical(np.broadcast_to(r.probs, (count, space.size)), rng)
    inner = ws.kernel(teacher, u, t)
    x_u = sample_categorical(inner[:, x_t].T, rng)
    outer = ws.view(student, s, u)
    if outer.is_identity:
        q_eta = np.zeros((count, space.num_dims, space.cardinality))
        q_eta[np.arange(count)[:, None], np.arange(space.num_dims)[None, :], space.digits[x_u]] = 1.0
    else:
        lam = sample_categorical(outer.weights[x_u], rng)
        q_eta = outer.factors[lam, x_u]
    digits = sample_categorical(q_eta, rng)
    x_s = np.ravel_multi_index(tuple(digits.T), space.shape)
    return _Paths(x_t, x_s, digits, q_eta)


def _component_log_probs(view, x_t, digits):
    """log prod_d f[k, x_t, d, x_s^d] as (K, n)"""
    dims = np.arange(view.space.num_dims)[None, :]
    picked = view.factors[:, x_t[:, None], dims, digits]
    return np.log(_safe(picked)).sum(axis=-1)


def _mixture_log_probs(view, x_t, digits, cfg=None, rng=None):
    """log p_{s|t}(x_s | x_t) by log-sum-exp over components"""
    log_components = _component_log_probs(view, x_t, digits)
    weights = view.weights[x_t]
    if cfg is None or cfg.enumerate_components:
        return logsumexp(log_components + np.log(_safe(weights)).T, axis=0)
    count = x_t.size
    draws = sample_categorical(np.repeat(weights[None], cfg.lambda_samples, axis=0), rng)
    picked = log_components[draws, np.arange(count)[None, :]]
    return logsumexp(picked, axis=0) - math.log(cfg.lambda_samples)


def _marginal_log_probs(view, x_t, digits):
    dims = np.arange(view.space.num_dims)[None, :]
    return np.log(_safe(view.marginals()[x_t[:, None], dims, digits])).sum(axis=-1)


def _summarize(per_sample, replications, cfg):
    grouped = per_sample.reshape(replications, cfg.samples, cfg.lambda_batch).mean(axis=-1)
    means = grouped.mean(axis=1)
    if cfg.samples > 1:
        variance = float(grouped.var(axis=1, ddof=1).mean() / cfg.samples)
    elif replications > 1:
        variance = float(means.var(ddof=1))
    else:
        variance = 0.0
    return Estimate(float(means.mean()), variance, cfg.samples * cfg.lambda_batch, means)


def _sample_count(cfg, replications):
    return replications * cfg.samples * cfg.lambda_batch


def _empirical_target(space, paths, count):
    target = np.zeros((space.size, space.size))
    np.add.at(target, (paths.x_s, paths.x_t), 1.0 / count)
    return target


def consis_loss_mc(student, teacher, ctx, r, s, u, t, cfg, rng, replications=1, grad=None, exhaustive=False):
    """Two-fold Monte Carlo estimate of the consistency cross entropy"""
    ws = Workspace(ctx)
    if exhaustive:
        return _consis_mc_exhaustive(student, teacher, ctx, r, s, u, t, cfg, ws)
    count = _sample_count(cfg, replications)
    paths = _draw_paths(student, teacher, ctx, r, s, u, t, count, rng, ws)
    x_t = paths.x_t
    view = ws.view(student, s, t)
    per_sample = -_mixture_log_probs(view, x_t, paths.x_s_digits, cfg, rng)
    if grad is not None:
        target = _empirical_target(ctx.space, paths, count)
        grad.add_joint(view, -_ratio(target, view.joint()))
    return _summarize(per_sample, replications, cfg)


def _consis_mc_exhaustive(student, teacher, ctx, r, s, u, t, cfg, ws):
    space = ctx.space
    target = consistency_target(student, teacher, ctx, s, u, t, ws)
    view = ws.view(student, s, t)
    x_t = np.repeat(np.arange(space.size), space.size)
    x_s = np.tile(np.arange(space.size), space.size)
    weights = r.probs[x_t] * target[x_s, x_t]
    live = weights > 0
    log_probs = _mixture_log_probs(view, x_t[live], space.digits[x_s[live]])
    return Estimate(float(-np.dot(weights[live], log_probs)), 0.0, int(live.sum()))


def consis_loss_cv(student, teacher, ctx, r, s, u, t, cfg, rng, replications=1, grad=None, exhaustive=False):
    """Consistency cross entropy with a dimensionally independent control variate

    With q = student_{s|u} o teacher_{u|t}(. | x_t) and eta = (x_u, lambda),
    H(q, p) = E_{x_s ~ q}[-log p(x_s) + log g(x_s)] + E_eta[-E_{q^eta} log g]
    where g is pbar (``cv_kind='marginal'``) or exp E_lambda log p^lambda
    (``cv_kind='convex'``). The second term is computed dimension by dimension.
    """
    ws = Workspace(ctx)
    if exhaustive:
        return _consis_cv_exhaustive(student, teacher, ctx, r, s, u, t, cfg, ws)
    count = _sample_count(cfg, replications)
    paths = _draw_paths(student, teacher, ctx, r, s, u, t, count, rng, ws)
    view = ws.view(student, s, t)
    x_t, digits, q_eta = paths.x_t, paths.x_s_digits, paths.q_eta
    log_p = _mixture_log_probs(view, x_t, digits, cfg, rng)
    if cfg.cv_kind == 'marginal':
        log_marginals = np.log(_safe(view.marginals()[x_t]))
        control = _marginal_log_probs(view, x_t, digits)
        expectation = (q_eta * log_marginals).sum(axis=(1, 2))
    else:
        weights = view.weights[x_t].T
        control = (weights * _component_log_probs(view, x_t, digits)).sum(axis=0)
        log_factors = np.log(_safe(view.factors[:, x_t]))
        expectation = (weights * (q_eta[None] * log_factors).sum(axis=(2, 3))).sum(axis=0)
    per_sample = -log_p + control - expectation
    if grad is not None:
        if cfg.cv_kind != 'marginal':
            raise ArgumentError("stochastic gradients support the marginal control variate only")
        target = _empirical_target(ctx.space, paths, count)
        grad.add_joint(view, -_ratio(target, view.joint()))
        q_hat = np.zeros_like(view.marginals())
        np.add.at(q_hat, x_t, q_eta / count)
        d_marginals = (column_marginals(ctx.space, target) - q_hat) / _safe(view.marginals())
        grad.add_marginals(view, d_marginals)
    return _summarize(per_sample, replications, cfg)


def _consis_cv_exhaustive(student, teacher, ctx, r, s, u, t, cfg, ws):
    """Both control-variate terms by enumeration over x_t, x_u, lambda and x_s"""
    target = consistency_target(student, teacher, ctx, s, u, t, ws)
    inner = ws.kernel(teacher, u, t)
    outer = ws.view(student, s, u)
    view = ws.view(student, s, t)
    model = view.joint()
    live = r.probs > 0
    if cfg.cv_kind == 'marginal':
        control = product_columns(ctx.space, view.marginals())
        first = -xlogy(target, model) + xlogy(target, control)
    else:
        log_components = np.log(_safe(view.component_joints()))
        first = -xlogy(target, model) + target * np.einsum('ck,kxc->xc', view.weights, log_components)
    first_term = float(np.dot(r.probs[live], first[:, live].sum(axis=0)))

    if outer.is_identity:
        eta_factors = np.zeros((1, ctx.space.size, ctx.space.num_dims, ctx.space.cardinality))
        dims = np.arange(ctx.space.num_dims)[None, :]
        eta_factors[0, np.arange(ctx.space.size)[:, None], dims, ctx.space.digits] = 1.0
        eta_weights = np.ones((ctx.space.size, 1))
    else:
        eta_factors, eta_weights = outer.factors, outer.weights
    if cfg.cv_kind == 'marginal':
        log_g = np.log(_safe(view.marginals()))[None]
    else:
        log_g = np.log(_safe(view.factors))
    # cross[k, x_u, j, c]: -sum_{d,v} q^{(x_u, k)}_d(v) log g_j[c, d, v]
    cross = -np.einsum('kuda,jcda->kujc', eta_factors, log_g)
    if cfg.cv_kind == 'marginal':
        second_per_eta = cross[:, :, 0, :]
    else:
        second_per_eta = np.einsum('kujc,cj->kuc', cross, view.weights)
    second = np.einsum('uc,uk,kuc->c', inner, eta_weights, second_per_eta)
    second_term = float(np.dot(r.probs[live], second[live]))
    return Estimate(first_term + second_term, 0.0, int(live.sum()))


# -- data, marginal and correlation ---------------------------------------


def data_loss(student, ctx, t, grad=None, workspace=None):
    """E_{(x_0, x_t) ~ q_{0,t}}[-log p_{0|t}(x_0 | x_t)], exact"""
    ws = _workspace(ctx, workspace)
    posterior = true_posterior_kernel(ctx, 0.0, t).matrix
    weights = ctx.marginal(t).probs
    view = ws.view(student, 0.0, t)
    live = weights > 0
    per_column = -xlogy(posterior[:, live], view.joint()[:, live]).sum(axis=0)
    value = float(np.dot(weights[live], per_column))
    if grad is not None:
        grad.add_joint(view, -weights[None, :] * _ratio(posterior, view.joint()))
    return value


def data_loss_mc(student, ctx, t, samples, rng):
    """Same loss from generated pairs x_0 ~ q_0, x_t ~ q_{t|0}"""
    space = ctx.space
    x0 = sample_categorical(np.broadcast_to(ctx.q0.probs, (samples, space.size)), rng)
    digits = space.digits[x0]
    noisy = np.empty_like(digits)
    for axis in range(space.num_dims):
        forward = transition_matrix(ctx.fwd, axis + 1, 0.0, t)
        noisy[:, axis] = sample_categorical(forward[:, digits[:, axis]].T, rng)
    x_t = np.ravel_multi_index(tuple(noisy.T), space.shape)
    view = mixture_view(student, ctx, 0.0, t)
    log_components = _component_log_probs(view, x_t, digits)
    per_sample = -logsumexp(log_components + np.log(_safe(view.weights[x_t])).T, axis=0)
    variance = float(per_sample.var(ddof=1) / samples) if samples > 1 else 0.0
    return Estimate(float(per_sample.mean()), variance, samples)


def conditional_entropy(ctx, t):
    """E_{x_t ~ q_t} H(q_{0|t}(. | x_t)), the minimum of the data loss"""
    posterior = true_posterior_kernel(ctx, 0.0, t).matrix
    weights = ctx.marginal(t).probs
    live = weights > 0
    return float(np.dot(weights[live], -xlogy(posterior[:, live], posterior[:, live]).sum(axis=0)))


def marginal_loss(student, teacher, ctx, r, t, grad=None, workspace=None):
    ws = _workspace(ctx, workspace)
    teacher_marginals = ws.view(teacher, 0.0, t).marginals()
    view = ws.view(student, 0.0, t)
    marginals = view.marginals()
    weights = r.probs
    live = weights > 0
    per_column = rel_entr(teacher_marginals[live], marginals[live]).sum(axis=(1, 2))
    value = float(np.dot(weights[live], per_column))
    if grad is not None:
        grad.add_marginals(view, -weights[:, None, None] * _ratio(teacher_marginals, marginals))
    return value


def marginal_cross_entropy(student, ctx, t, workspace=None):
    """E_{q_{0,t}}[-log pbar_{0|t}(x_0 | x_t)], computed dimension-wise"""
    ws = _workspace(ctx, workspace)
    posterior_marginals = column_marginals(ctx.space, true_posterior_kernel(ctx, 0.0, t).matrix)
    weights = ctx.marginal(t).probs
    live = weights > 0
    marginals = ws.view(student, 0.0, t).marginals()
    per_column = -xlogy(posterior_marginals[live], marginals[live]).sum(axis=(1, 2))
    return float(np.dot(weights[live], per_column))


def corr_loss(student, ctx, t, grad=None, workspace=None):
    """E_{q_{0,t}}[-log p_{0|t} + log pbar_{0|t}]; zero for a product student"""
    ws = _workspace(ctx, workspace)
    value = data_loss(student, ctx, t, grad=grad, workspace=ws) - marginal_cross_entropy(student, ctx, t, ws)
    if grad is not None:
        posterior_marginals = column_marginals(ctx.space, true_posterior_kernel(ctx, 0.0, t).matrix)
        weights = ctx.marginal(t).probs
        view = ws.view(student, 0.0, t)
        grad.add_marginals(view, weights[:, None, None] * _ratio(posterior_marginals, view.marginals()))
    return value


# -- references -----------------------------------------------------------


def teacher_rollout(teacher, ctx, prior=None):
    """r_{t_n} for n = 0..N: the teacher's ancestral marginals started at r_T"""
    times = teacher.grid.times
    current = prior if prior is not None else ctx.marginal(times[-1])
    rollout = [None] * len(times)
    rollout[-1] = current
    ws = Workspace(ctx)
    for n in range(len(times) - 1, 0, -1):
        step = ws.kernel(teacher, times[n - 1], times[n])
        current = JointDistribution(ctx.space, step @ current.probs, atol=1e-10)
        rollout[n - 1] = current
    return rollout


class References:
    """r_t from the data (q_t) or from the teacher rollout"""

    def __init__(self, source, ctx, teacher):
        self.source = source
        self.ctx = ctx
        self.teacher = teacher
        self._rollout = None

    def at(self, t):
        if self.source == Reference.DATA:
            return self.ctx.marginal(t)
        if self._rollout is None:
            self._rollout = teacher_rollout(self.teacher, self.ctx)
        return self._rollout[self.teacher.grid.index(t)]


# -- reports --------------------------------------------------------------


@dataclass(frozen=True)
class LossRow:
    name: str
    exact: float
    estimate: float = math.nan
    variance: float = math.nan
    samples: int = 0
    lambda_samples: int = 0
    seed: int = None


@dataclass
class LossReport:
    rows: list = field(default_factory=list)

    HEADER = ('loss', 'exact', 'estimate', 'variance', 'M', 'N_lambda', 'seed')

    def add(self, row):
        self.rows.append(row)
        return row

    def get(self, name):
        return next(row for row in self.rows if row.name == name)

    def csv_rows(self):
        return [
            (row.name, row.exact, row.estimate, row.variance, row.samples, row.lambda_samples, row.seed)
            for row in self.rows
        ]


def loss_report(student, teacher, ctx, cfg, delta, u, t, seed=0, replications=1):
    """Every loss at one set of times, with both consistency estimators"""
    rng = np.random.default_rng(seed)
    references = References(cfg.reference, ctx, teacher)
    ws = Workspace(ctx)
    r_delta, r_t = references.at(delta), references.at(t)
    report = LossReport()
    report.add(LossRow('distil', distil_loss_exact(student, teacher, ctx, r_delta, delta, workspace=ws)))
    report.add(LossRow('distil_surrogate', distil_loss_surrogate(student, teacher, ctx, r_delta, delta, workspace=ws)))
    report.add(LossRow('consis', consis_loss_exact(student, teacher, ctx, r_t, 0.0, u, t, workspace=ws)))
    target = consis_cross_entropy_exact(student, teacher, ctx, r_t, 0.0, u, t, workspace=ws)
    for name, estimator in (('consis_mc', consis_loss_mc), ('consis_cv', consis_loss_cv)):
        estimate = estimator(student, teacher, ctx, r_t, 0.0, u, t, cfg, rng, replications=replications)
        report.add(LossRow(
            name, target, estimate.value, estimate.variance, estimate.samples, cfg.lambda_samples, seed,
        ))
    data = data_loss(student, ctx, t, workspace=ws)
    data_estimate = data_loss_mc(student, ctx, t, cfg.samples, rng)
    report.add(LossRow('data', data, data_estimate.value, data_estimate.variance, cfg.samples, 0, seed))
    report.add(LossRow('marginal', marginal_loss(student, teacher, ctx, r_t, t, workspace=ws)))
    report.add(LossRow('corr', corr_loss(student, ctx, t, workspace=ws)))
    return report

