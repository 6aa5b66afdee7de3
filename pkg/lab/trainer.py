"""
Gradient-descent distillation of a tabular mixture student

The objective is assembled from the exact losses in ``di4c_losses`` (or, in
stochastic mode, from the consistency estimators) and minimized by plain
gradient descent with optional momentum and a linear learning-rate warm-up.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .denoisers import compose_steps, denoiser_kernel, rollout_kernels
from .di4c_losses import (
    Gradient, LossConfig, References, Workspace, alpha_weight, consis_loss_cv, consis_loss_exact,
    consis_loss_mc, corr_loss, distil_loss_exact, distil_loss_surrogate, marginal_loss,
)
from .dist_core import push, tv_distance
from .exceptions import ArgumentError, TrainingError
from .theory_harness import audit_models

logger = logging.getLogger(__name__)


class TimeSampling:
    RANDOM = 'random'
    SWEEP = 'sweep'
    CHOICES = (RANDOM, SWEEP)


class Mode:
    EXACT = 'exact'
    STOCHASTIC = 'stochastic'
    CHOICES = (EXACT, STOCHASTIC)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    iterations: int = 1000
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    delta_fixed_prob: float = 0.5
    delta_band: tuple = (0.01, 0.02)
    time_sampling: str = TimeSampling.RANDOM
    momentum: float = 0.0
    warmup: int = 0
    init_noise: float = 1e-2
    rounds: int = 1
    eval_every: int = 0
    divergence_factor: float = 10.0
    divergence_patience: int = 100
    mode: str = Mode.EXACT

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError("learning rate must be positive")
        if self.iterations < 0:
            raise ArgumentError("iterations must be >= 0")
        if self.rounds < 1:
            raise ArgumentError("rounds must be >= 1")
        if not 0 <= self.delta_fixed_prob <= 1:
            raise ArgumentError("delta_fixed_prob must lie in [0, 1]")
        low, high = self.delta_band
        if not 0 < low <= high:
            raise ArgumentError("delta band needs 0 < low <= high")
        if not 0 <= self.momentum < 1:
            raise ArgumentError("momentum must lie in [0, 1)")
        if self.time_sampling not in TimeSampling.CHOICES:
            raise ArgumentError(f"unknown time sampling {self.time_sampling!r}")
        if self.mode not in Mode.CHOICES:
            raise ArgumentError(f"unknown training mode {self.mode!r}")
        object.__setattr__(self, 'delta_band', (float(low), float(high)))


@dataclass(frozen=True)
class SampledTimes:
    """One objective evaluation point; all times lie on the model grid

    ``u`` = 0 makes the consistency term collapse to distillation at ``t``.
    """

    delta: float
    u: float
    t: float

    @property
    def dt(self):
        return self.t - self.u


def sample_times(grid, cfg, rng):
    """Draw (delta, t - dt, t) and digitize to the nearest grid points"""
    times = grid.times
    if cfg.time_sampling == TimeSampling.SWEEP:
        return [SampledTimes(times[1], times[n - 1], times[n]) for n in range(1, grid.steps + 1)]
    loss = cfg.loss
    if rng.random() < cfg.delta_fixed_prob:
        delta = loss.delta
    else:
        delta = rng.uniform(*cfg.delta_band)
    dt = math.exp(rng.uniform(math.log(loss.dt_low), math.log(loss.dt_high)))
    if loss.objective == 'gated':
        t = rng.uniform(0.0, grid.horizon)
    else:
        t = rng.uniform(min(delta + dt, grid.horizon), grid.horizon)
    n_t = max(grid.nearest(t), 1)
    n_u = min(grid.nearest(t - dt), n_t - 1)
    n_delta = max(grid.nearest(delta), 1)
    return [SampledTimes(times[n_delta], times[n_u], times[n_t])]


def _distil(student, teacher, ctx, r, t, cfg, grad, ws):
    if cfg.loss.distil_mode == 'surrogate':
        return distil_loss_surrogate(student, teacher, ctx, r, t, grad=grad, workspace=ws)
    return distil_loss_exact(student, teacher, ctx, r, t, grad=grad, workspace=ws)


def _consis(student, teacher, ctx, r, point, cfg, grad, ws, rng):
    if cfg.mode == Mode.EXACT or point.u == 0:
        return consis_loss_exact(
            student, teacher, ctx, r, 0.0, point.u, point.t,
            grad=grad, stop_gradient=cfg.loss.stop_gradient, workspace=ws,
        )
    estimator = consis_loss_cv if cfg.loss.use_control_variates else consis_loss_mc
    return estimator(student, teacher, ctx, r, 0.0, point.u, point.t, cfg.loss, rng, grad=grad).value


def _term_gradient(grad, model):
    return Gradient(model) if grad is not None else None


def total_objective(student, teacher, ctx, cfg, points, references=None, rng=None, with_grad=True):
    """Objective summed over ``points``; returns (value, Gradient or None, breakdown)

    standard: L_distil(r_delta, delta) + L_consis(r_t, 0, u, t) + alpha_t L_corr + L_marginal
    gated:    1{u = 0}/dt L_distil(r_t, t) + 1{u > 0} L_consis(r_t, 0, u, t) + alpha_t L_corr + L_marginal
    Under the sweep law the standard form drops the separate distillation
    term; its first point (u = 0) already is distillation at t_1.
    """
    references = references or References(cfg.loss.reference, ctx, teacher)
    ws = Workspace(ctx)
    grad = Gradient(student) if with_grad else None
    breakdown = {'distil': 0.0, 'consis': 0.0, 'corr': 0.0, 'marginal': 0.0}
    horizon = ctx.horizon
    sweep = cfg.time_sampling == TimeSampling.SWEEP
    for point in points:
        r_t = references.at(point.t)
        if cfg.loss.objective == 'gated' and point.u == 0:
            weight = 1.0 if sweep else 1.0 / point.dt
            term = _term_gradient(grad, student)
            breakdown['distil'] += weight * _distil(student, teacher, ctx, r_t, point.t, cfg, term, ws)
            if term is not None:
                for name, value in term.arrays.items():
                    grad.arrays[name] += weight * value
        else:
            if cfg.loss.objective == 'standard' and not sweep:
                r_delta = references.at(point.delta)
                breakdown['distil'] += _distil(student, teacher, ctx, r_delta, point.delta, cfg, grad, ws)
            breakdown['consis'] += _consis(student, teacher, ctx, r_t, point, cfg, grad, ws, rng)
        alpha = alpha_weight(cfg.loss.alpha, point.t, horizon)
        if alpha > 0:
            term = _term_gradient(grad, student)
            breakdown['corr'] += alpha * corr_loss(student, ctx, point.t, grad=term, workspace=ws)
            if term is not None:
                for name, value in term.arrays.items():
                    grad.arrays[name] += alpha * value
        breakdown['marginal'] += marginal_loss(student, teacher, ctx, r_t, point.t, grad=grad, workspace=ws)
    return sum(breakdown.values()), grad, breakdown


@dataclass(frozen=True)
class Evaluation:
    iteration: int
    objective: float
    teacher_tv: float
    data_tv: float
    bound_lhs: float
    bound_rhs: float


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    wall_time: float = 0.0

    LOSS_HEADER = ('iteration', 'objective')
    EVAL_HEADER = ('iteration', 'objective', 'teacher_tv', 'data_tv', 'bound_lhs', 'bound_rhs')

    def loss_rows(self):
        return [(i + 1, value) for i, value in enumerate(self.losses)]

    def eval_rows(self):
        return [
            (e.iteration, e.objective, e.teacher_tv, e.data_tv, e.bound_lhs, e.bound_rhs)
            for e in self.evals
        ]

    @property
    def final(self):
        return self.evals[-1] if self.evals else None


def one_step_tv(model, ctx, target, prior=None):
    """d_TV(target, push(model_{0|T}, prior)); prior defaults to q_T"""
    horizon = model.grid.horizon
    prior = prior if prior is not None else ctx.marginal(horizon)
    return tv_distance(target, push(denoiser_kernel(model, ctx, 0.0, horizon), prior))


def teacher_output(teacher, ctx, prior=None):
    prior = prior if prior is not None else ctx.marginal(teacher.grid.horizon)
    return push(compose_steps(rollout_kernels(teacher, ctx)), prior)


def evaluate(student, teacher, ctx, iteration, objective):
    audit = audit_models(student, teacher, ctx)
    return Evaluation(
        iteration=iteration,
        objective=objective,
        teacher_tv=one_step_tv(student, ctx, teacher_output(teacher, ctx)),
        data_tv=one_step_tv(student, ctx, ctx.q0),
        bound_lhs=audit.lhs,
        bound_rhs=audit.rhs,
    )


def _learning_rate(cfg, iteration):
    if cfg.warmup > 0:
        return cfg.learning_rate * min(1.0, (iteration + 1) / cfg.warmup)
    return cfg.learning_rate


def train(student, teacher, ctx, cfg):
    """Distil ``teacher`` into a copy of ``student``; returns (student, TrainTrace)"""
    student = student.copy()
    rng = np.random.default_rng(cfg.seed)
    references = References(cfg.loss.reference, ctx, teacher)
    params = student.parameters()
    velocity = {name: np.zeros_like(value) for name, value in params.items()}
    trace = TrainTrace()
    started = time.perf_counter()
    initial = None
    over_limit = 0
    logger.info(
        "training K=%d student for %d iterations (lr=%g, sampling=%s, mode=%s)",
        student.components, cfg.iterations, cfg.learning_rate, cfg.time_sampling, cfg.mode,
    )
    for iteration in range(cfg.iterations):
        points = sample_times(student.grid, cfg, rng)
        value, grad, breakdown = total_objective(student, teacher, ctx, cfg, points, references, rng)
        if not math.isfinite(value) or not grad.is_finite():
            raise TrainingError(
                f"non-finite objective or gradient at iteration {iteration + 1}",
                diagnostics={'iteration': iteration + 1, 'objective': value, 'terms': breakdown,
                             'times': [vars(p) for p in points]},
                trace=trace,
            )
        if initial is None:
            initial = value
        if value > cfg.divergence_factor * max(initial, 1e-6):
            over_limit += 1
            if over_limit >= cfg.divergence_patience:
                raise TrainingError(
                    f"objective above {cfg.divergence_factor}x its initial value for "
                    f"{over_limit} iterations",
                    diagnostics={'iteration': iteration + 1, 'objective': value, 'initial': initial},
                    trace=trace,
                )
        else:
            over_limit = 0
        lr = _learning_rate(cfg, iteration)
        for name, step in velocity.items():
            step *= cfg.momentum
            step -= lr * grad.arrays[name]
            params[name] += step
        trace.losses.append(value)
        if cfg.eval_every and (iteration + 1) % cfg.eval_every == 0:
            trace.evals.append(evaluate(student, teacher, ctx, iteration + 1, value))
            logger.info(
                "iteration %d: objective %.6g, teacher TV %.6g, data TV %.6g",
                iteration + 1, value, trace.evals[-1].teacher_tv, trace.evals[-1].data_tv,
            )
    if not trace.evals or trace.evals[-1].iteration != cfg.iterations:
        final_value = trace.losses[-1] if trace.losses else math.nan
        trace.evals.append(evaluate(student, teacher, ctx, cfg.iterations, final_value))
    trace.wall_time = time.perf_counter() - started
    logger.info("training finished in %.2fs, teacher TV %.6g", trace.wall_time, trace.final.teacher_tv)
    return student, trace


def iterated_di4c(student, teacher, ctx, cfg):
    """``cfg.rounds`` rounds; each trained student becomes the next teacher"""
    traces = []
    for round_index in range(cfg.rounds):
        round_cfg = replace(cfg, seed=cfg.seed + round_index)
        trained, trace = train(student, teacher, ctx, round_cfg)
        traces.append(trace)
        logger.info("round %d of %d done", round_index + 1, cfg.rounds)
        teacher, student = trained, trained
    return student, traces


def check_gradient(student, teacher, ctx, cfg, points, h=1e-6):
    """Relative error of the analytic gradient against central differences

    The check runs in exact mode without stop-gradient, so the analytic
    gradient is the true derivative of the objective.
    """
    cfg = replace(cfg, mode=Mode.EXACT, loss=replace(cfg.loss, stop_gradient=False))
    references = References(cfg.loss.reference, ctx, teacher)
    model = student.copy()
    _, grad, _ = total_objective(model, teacher, ctx, cfg, points, references)
    analytic = grad.flat()
    numeric = []
    for array in model.parameters().values():
        flat = array.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            upper = total_objective(model, teacher, ctx, cfg, points, references, with_grad=False)[0]
            flat[i] = saved - h
            lower = total_objective(model, teacher, ctx, cfg, points, references, with_grad=False)[0]
            flat[i] = saved
            numeric.append((upper - lower) / (2.0 * h))
    numeric = np.array(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)
