"""
Numeric checks of the convergence and distillation bounds

- convergence_study: exact TV of N-step analytical sampling against the data
- ClosedFormExample: the two-bit uniform-diffusion example whose N-step
  product sampler is at least c/N away from q_delta
- theorem2_audit: d_TV(r_0, student_{0|T} r_T) against
  (1/sqrt 2)(sqrt L_distil + sum sqrt L_consis)
- property suites used by ``manage.py verify``
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .denoisers import (
    TimeGrid, denoiser_kernel, fit_product_to_oracle, mixture_from_product, mixture_view,
    rollout_kernels, universal_mixture_denoiser, universal_mixture_from_joint,
)
from .di4c_losses import (
    LossConfig, consis_cross_entropy_exact, consis_loss_cv, consis_loss_mc, distil_loss_exact,
    distil_loss_surrogate, loss_report,
)
from .dist_core import (
    CHAIN_ATOL, DenseKernel, JointDistribution, StateSpace, compose, expected_column_kl, expected_column_tv,
    kl_divergence, product_columns, push, random_distribution, random_kernel, tv_distance,
)
from .exceptions import ArgumentError, BoundViolation
from .forward_process import FactorizedForward, Homogeneous, UniformClosedForm, transition_matrix, uniform_rate
from .parallel import parallel_map
from .posterior_oracle import PosteriorContext, analytical_denoiser_kernel, true_posterior_kernel

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-9
EQUIVALENCE_ATOL = 1e-10
SLOPE_WINDOW = (-1.25, -0.85)
TV_FLOOR = 1e-300


# -- convergence ----------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    n_values: tuple
    tvs: tuple
    slope: float
    delta: float
    horizon: float

    HEADER = ('N', 'tv', 'n_times_tv')

    @property
    def n_times_tv(self):
        return tuple(n * tv for n, tv in zip(self.n_values, self.tvs))

    @property
    def exact(self):
        """True when every N reproduces the target (product model exact)"""
        return all(tv < 1e-9 for tv in self.tvs)

    @property
    def slope_in_window(self):
        low, high = SLOPE_WINDOW
        return low <= self.slope <= high

    def rows(self):
        return list(zip(self.n_values, self.tvs, self.n_times_tv))

    def summary(self):
        return {
            'N': list(self.n_values),
            'tv': list(self.tvs),
            'n_times_tv': list(self.n_times_tv),
            'slope': self.slope,
            'slope_in_window': self.slope_in_window,
            'exact': self.exact,
            'delta': self.delta,
            'horizon': self.horizon,
        }


def offset_times(delta, horizon, steps):
    """t_i = delta + i (T - delta)/N for i = 0..N"""
    times = [delta + i * (horizon - delta) / steps for i in range(steps + 1)]
    times[-1] = horizon
    return times


def analytical_output(ctx, times, prior=None):
    """push(p_{t_0|t_1} o ... o p_{t_{N-1}|t_N}, prior) for the analytical product sampler"""
    prior = prior if prior is not None else ctx.marginal(times[-1])
    current = prior.probs
    for n in range(len(times) - 1, 0, -1):
        current = analytical_denoiser_kernel(ctx, times[n - 1], times[n]).matrix @ current
    return JointDistribution(ctx.space, current, atol=CHAIN_ATOL)


def fit_slope(n_values, tvs):
    """Least-squares slope of log TV against log N over the largest half of N"""
    half = len(n_values) // 2
    n_fit = np.asarray(n_values[half:], dtype=float)
    tv_fit = np.maximum(np.asarray(tvs[half:], dtype=float), TV_FLOOR)
    if len(n_fit) < 2:
        return math.nan
    return float(np.polyfit(np.log(n_fit), np.log(tv_fit), 1)[0])


def convergence_study(ctx, n_list, delta=0.0, threads=None):
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise ArgumentError("convergence study needs N >= 1")
    horizon = ctx.horizon
    if not 0 <= delta < horizon:
        raise ArgumentError("offset delta must lie in [0, T)")
    target = ctx.marginal(delta)

    def one(steps):
        tv = tv_distance(target, analytical_output(ctx, offset_times(delta, horizon, steps)))
        logger.debug("N=%d: TV %.6g", steps, tv)
        return tv

    tvs = tuple(parallel_map(one, n_list, threads))
    return ConvergenceReport(tuple(n_list), tvs, fit_slope(n_list, tvs), delta, horizon)


# -- closed-form two-bit example ------------------------------------------


@dataclass(frozen=True)
class ClosedFormExample:
    """S = {a, b}, D = 2, Q = 1/2 - delta per dimension, q_0 = (delta_aa + delta_bb)/2

    a is state 0 and b is state 1.
    """

    delta: float = 0.1
    horizon: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta < self.horizon:
            raise ArgumentError("need 0 < delta < T")

    @property
    def constant(self):
        """c = (2^{1/delta} e)^{-2T} (T - delta)^2"""
        return (2.0 ** (1.0 / self.delta) * math.e) ** (-2.0 * self.horizon) * (self.horizon - self.delta) ** 2

    @staticmethod
    def forward(s, t, same):
        """q^d_{t|s}(a|a) when ``same`` else q^d_{t|s}(b|a)"""
        decay = math.exp(-(t - s))
        return 0.5 * (1.0 + decay) if same else 0.5 * (1.0 - decay)

    @staticmethod
    def marginal_aa(t):
        return (1.0 + math.exp(-2.0 * t)) / 4.0

    @staticmethod
    def marginal_ab(t):
        return (1.0 - math.exp(-2.0 * t)) / 4.0

    @staticmethod
    def posterior_aa_aa(s, t):
        return (1 + math.exp(-2 * s)) * (1 + math.exp(-(t - s))) ** 2 / (4 * (1 + math.exp(-2 * t)))

    @staticmethod
    def posterior_bb_aa(s, t):
        return (1 + math.exp(-2 * s)) * (1 - math.exp(-(t - s))) ** 2 / (4 * (1 + math.exp(-2 * t)))

    @staticmethod
    def posterior_ab_aa(s, t):
        return 0.25 - (math.exp(-2 * s) + math.exp(-2 * (t - s))) / (4 * (1 + math.exp(-2 * t)))

    @staticmethod
    def posterior_aa_ab(s, t):
        return 0.25 + (math.exp(-2 * s) - math.exp(-2 * (t - s))) / (4 * (1 - math.exp(-2 * t)))

    @staticmethod
    def product_aa_aa(s, t):
        return ((1 + math.exp(-(t + s))) * (1 + math.exp(-(t - s))) / (2 * (1 + math.exp(-2 * t)))) ** 2

    @staticmethod
    def product_bb_aa(s, t):
        return ((1 - math.exp(-(t + s))) * (1 - math.exp(-(t - s))) / (2 * (1 + math.exp(-2 * t)))) ** 2

    @staticmethod
    def product_diagonal_aa(s, t):
        """p_{s|t}(aa|aa) + p_{s|t}(bb|aa)"""
        return 0.5 + (math.exp(-(t + s)) + math.exp(-(t - s))) ** 2 / (2 * (1 + math.exp(-2 * t)) ** 2)

    @staticmethod
    def product_aa_ab(s, t):
        return 0.25 - ((math.exp(-(t - s)) - math.exp(-(t + s))) / (2 * (1 - math.exp(-2 * t)))) ** 2

    @staticmethod
    def p_step(t, eps, p_aa):
        """p^eps_{t-eps}(aa) from p^eps_t(aa)"""
        near, far = math.exp(-eps), math.exp(-(2 * t - eps))
        minus, plus = 1 - math.exp(-2 * t), 1 + math.exp(-2 * t)
        return (0.25 - (near - far) ** 2 / (4 * minus ** 2)
                + ((near + far) ** 2 / (2 * plus ** 2) + (near - far) ** 2 / (2 * minus ** 2)) * p_aa)

    @staticmethod
    def q_step(t, eps, q_aa):
        """q_{t-eps}(aa) from q_t(aa)"""
        near, far = math.exp(-2 * eps), math.exp(-2 * (t - eps))
        minus, plus = 1 - math.exp(-2 * t), 1 + math.exp(-2 * t)
        return (0.25 - (near - far) / (4 * minus)
                + ((near + far) / (2 * plus) + (near - far) / (2 * minus)) * q_aa)

    @staticmethod
    def delta_step(t, eps, p_aa, gap):
        """Delta_{t-eps} from p^eps_t(aa) and Delta_t = q_t(aa) - p^eps_t(aa)"""
        decay = math.exp(-2 * t)
        spread = (math.exp(eps) - math.exp(-eps)) ** 2
        source = (decay / (2 * (1 + decay) ** 2) * p_aa
                  + decay / (2 * (1 - decay) ** 2) * (0.5 - p_aa)) * spread
        carry = 1 + (1 + math.exp(-2 * (2 * t - eps))) / (1 - math.exp(-4 * t)) * (math.exp(-2 * eps) - 1)
        return source + carry * gap

    def context(self):
        """The same example on the generic engine"""
        space = StateSpace(2, 2)
        fwd = FactorizedForward(space, UniformClosedForm(), self.horizon)
        q0 = JointDistribution(space, [0.5, 0.0, 0.0, 0.5])
        return PosteriorContext(fwd, q0)


@dataclass(frozen=True)
class DeltaTrace:
    steps: int
    eps: float
    times: tuple
    p_aa: tuple
    q_aa: tuple
    gaps: tuple
    bound: float

    @property
    def final_gap(self):
        return self.gaps[-1]

    @property
    def holds(self):
        return all(g >= -1e-15 for g in self.gaps) and self.final_gap >= self.bound


def closed_form_delta(example, steps):
    """Iterate p^eps, q and Delta from t = T down to t = delta with eps = (T - delta)/N"""
    span = example.horizon - example.delta
    if steps < 2 * span / example.delta:
        raise ArgumentError(f"need N >= 2(T - delta)/delta = {2 * span / example.delta:g}, got {steps}")
    eps = span / steps
    t = example.horizon
    p_aa = q_aa = example.marginal_aa(t)
    gap = 0.0
    times, ps, qs, gaps = [t], [p_aa], [q_aa], [gap]
    for n in range(steps):
        gap = example.delta_step(t, eps, p_aa, gap)
        p_aa = example.p_step(t, eps, p_aa)
        q_aa = example.q_step(t, eps, q_aa)
        t = example.horizon - (n + 1) * eps
        times.append(t)
        ps.append(p_aa)
        qs.append(q_aa)
        gaps.append(gap)
    return DeltaTrace(steps, eps, tuple(times), tuple(ps), tuple(qs), tuple(gaps), example.constant / steps)


@dataclass(frozen=True)
class EquivalenceReport:
    points: int
    max_error: float
    worst: str

    @property
    def holds(self):
        return self.max_error <= EQUIVALENCE_ATOL


def closed_form_equivalence(example, points=20):
    """Every closed form against the generic engine over a grid of (s, t) pairs"""
    ctx = example.context()
    space = ctx.space
    aa, ab, bb = space.index((0, 0)), space.index((0, 1)), space.index((1, 1))
    side = max(2, int(math.ceil(math.sqrt(points))))
    pairs = []
    for i in range(1, side + 1):
        t = example.horizon * i / side
        pairs.extend((t * j / side, t) for j in range(side))
    pairs = pairs[:points]
    worst, max_error = '', 0.0
    for s, t in pairs:
        forward = transition_matrix(ctx.fwd, 1, s, t)
        posterior = true_posterior_kernel(ctx, s, t).matrix
        product = analytical_denoiser_kernel(ctx, s, t).matrix
        checks = {
            'q_t|s(a|a)': (example.forward(s, t, True), forward[0, 0]),
            'q_t|s(b|a)': (example.forward(s, t, False), forward[1, 0]),
            'q_t(aa)': (example.marginal_aa(t), ctx.marginal(t).probs[aa]),
            'q_t(ab)': (example.marginal_ab(t), ctx.marginal(t).probs[ab]),
            'q_s|t(aa|aa)': (example.posterior_aa_aa(s, t), posterior[aa, aa]),
            'q_s|t(bb|aa)': (example.posterior_bb_aa(s, t), posterior[bb, aa]),
            'q_s|t(ab|aa)': (example.posterior_ab_aa(s, t), posterior[ab, aa]),
            'q_s|t(aa|ab)': (example.posterior_aa_ab(s, t), posterior[aa, ab]),
            'p_s|t(aa|aa)': (example.product_aa_aa(s, t), product[aa, aa]),
            'p_s|t(bb|aa)': (example.product_bb_aa(s, t), product[bb, aa]),
            'p_s|t(aa+bb|aa)': (example.product_diagonal_aa(s, t), product[aa, aa] + product[bb, aa]),
            'p_s|t(aa|ab)': (example.product_aa_ab(s, t), product[aa, ab]),
        }
        for name, (closed, engine) in checks.items():
            error = abs(closed - engine)
            if error > max_error:
                max_error, worst = error, f"{name} at s={s:g}, t={t:g}"
    return EquivalenceReport(len(pairs), max_error, worst)


def engine_delta(example, steps):
    """q_delta(aa) - p^eps_delta(aa) through the generic engine"""
    ctx = example.context()
    times = offset_times(example.delta, example.horizon, steps)
    output = analytical_output(ctx, times)
    return ctx.marginal(example.delta).probs[0] - output.probs[0]


# -- teacher-student bound ------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    distil: float
    consis: tuple

    @property
    def vacuous(self):
        return math.isinf(self.rhs)

    @property
    def holds(self):
        return self.vacuous or self.lhs <= self.rhs + BOUND_SLACK

    def summary(self):
        return {
            'lhs': self.lhs, 'rhs': self.rhs, 'distil': self.distil, 'consis': list(self.consis),
            'holds': self.holds, 'vacuous': self.vacuous,
        }


def teacher_marginals(teacher_steps, r_T):
    """[r_{t_0}, ..., r_{t_N}] with r_{t_{n-1}} = teacher_steps[n - 1] r_{t_n}"""
    rollout = [None] * (len(teacher_steps) + 1)
    rollout[-1] = r_T
    for n in range(len(teacher_steps), 0, -1):
        rollout[n - 1] = push(teacher_steps[n - 1], rollout[n])
    return rollout


def theorem2_audit(student_jumps, teacher_steps, r_T, strict=True):
    """Check d_TV(r_0, student_{0|T} r_T) <= (1/sqrt 2)(sqrt L_distil + sum_n sqrt L_consis)

    ``student_jumps[n - 1]`` is student_{0|t_n}; ``teacher_steps[n - 1]`` is
    teacher_{t_{n-1}|t_n}. Both are DenseKernels, so hand-built matrices are
    validated on construction.
    """
    steps = len(teacher_steps)
    if len(student_jumps) != steps or steps < 1:
        raise ArgumentError("need one student jump and one teacher step per grid step")
    rollout = teacher_marginals(teacher_steps, r_T)
    distil = expected_column_kl(rollout[1].probs, teacher_steps[0].matrix, student_jumps[0].matrix)
    consis = []
    for n in range(1, steps):
        target = compose(student_jumps[n - 1], teacher_steps[n]).matrix
        consis.append(expected_column_kl(rollout[n + 1].probs, target, student_jumps[n].matrix))
    rhs = (math.sqrt(distil) + sum(math.sqrt(max(c, 0.0)) for c in consis)) / math.sqrt(2.0)
    lhs = tv_distance(rollout[0], push(student_jumps[-1], r_T))
    report = BoundReport(lhs, rhs, distil, tuple(consis))
    if report.vacuous:
        logger.info("bound is vacuous (infinite loss term)")
    if strict and not report.holds:
        raise BoundViolation(f"d_TV = {lhs:.17g} exceeds the bound {rhs:.17g}")
    return report


def audit_models(student, teacher, ctx, prior=None, strict=False):
    times = student.grid.times
    jumps = [denoiser_kernel(student, ctx, 0.0, t) for t in times[1:]]
    prior = prior if prior is not None else ctx.marginal(times[-1])
    return theorem2_audit(jumps, rollout_kernels(teacher, ctx), prior, strict=strict)


def composition_student(teacher, ctx):
    """Mixture student whose p_{0|t_n} is the teacher's n-step composition"""
    jumps = list(itertools.accumulate(rollout_kernels(teacher, ctx), compose))
    return universal_mixture_denoiser(ctx.space, teacher.grid, jumps)


def fixed_point_audit(teacher, ctx, prior=None):
    """Bound audit at the exact-composition student; both sides vanish"""
    return audit_models(composition_student(teacher, ctx), teacher, ctx, prior)


def random_theorem2_instance(space, steps, rng):
    """(student_jumps, teacher_steps, r_T) with Dirichlet columns"""
    jumps = [random_kernel(space, rng) for _ in range(steps)]
    teacher = [random_kernel(space, rng) for _ in range(steps)]
    return jumps, teacher, random_distribution(space, rng)


# -- suites ---------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    trials: int = 0
    failures: int = 0
    worst: float = -math.inf
    details: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.failures == 0

    def record(self, margin, tolerance=0.0):
        """``margin`` > tolerance counts as a failure"""
        self.trials += 1
        self.worst = max(self.worst, margin)
        if margin > tolerance:
            self.failures += 1

    def summary(self):
        return {
            'name': self.name, 'trials': self.trials, 'failures': self.failures,
            'worst': self.worst, 'holds': self.holds, **self.details,
        }


def theorem2_suite(trials=100, seed=0, space=None, steps=3):
    space = space or StateSpace(2, 2)
    rng = np.random.default_rng(seed)
    result = SuiteResult('theorem2')
    for _ in range(trials):
        report = theorem2_audit(*random_theorem2_instance(space, steps, rng), strict=False)
        result.record(report.lhs - report.rhs, BOUND_SLACK)
    return result


def _random_mixture(space, components, rng):
    weights = rng.dirichlet(np.ones(components))
    factors = rng.dirichlet(np.ones(space.cardinality), size=(components, space.num_dims))
    return weights, factors


def _blend(space, mix, a, b):
    return JointDistribution(space, mix * a.probs + (1 - mix) * b.probs, atol=CHAIN_ATOL)


def composition_tv_margin(outer, inner, outer_alt, inner_alt, q1, q2):
    """d_TV(outer o inner q1, outer' o inner' q2) minus its two-step bound

    The bound is d_TV(q1, q2) + E_{q1} d_TV(inner, inner') + E_{inner q1} d_TV(outer, outer').
    """
    lhs = tv_distance(push(compose(outer, inner), q1), push(compose(outer_alt, inner_alt), q2))
    rhs = (tv_distance(q1, q2)
           + expected_column_tv(q1.probs, inner.matrix, inner_alt.matrix)
           + expected_column_tv(push(inner, q1).probs, outer.matrix, outer_alt.matrix))
    return lhs - rhs


def inequality_suite(trials=100, seed=0, space=None):
    """Pinsker, KL convexity, TV triangle, TV under composition and surrogate dominance"""
    space = space or StateSpace(2, 2)
    rng = np.random.default_rng(seed)
    names = ('pinsker', 'kl_convexity', 'tv_triangle', 'tv_composition', 'surrogate')
    results = {name: SuiteResult(name) for name in names}
    for _ in range(trials):
        p, q, r = (random_distribution(space, rng) for _ in range(3))
        results['pinsker'].record(tv_distance(p, q) - math.sqrt(kl_divergence(p, q) / 2.0), 1e-12)

        mix = rng.random()
        p2, q2 = random_distribution(space, rng), random_distribution(space, rng)
        joint = kl_divergence(_blend(space, mix, p, p2), _blend(space, mix, q, q2))
        results['kl_convexity'].record(joint - mix * kl_divergence(p, q) - (1 - mix) * kl_divergence(p2, q2), 1e-12)

        results['tv_triangle'].record(tv_distance(p, r) - tv_distance(p, q) - tv_distance(q, r), 1e-12)

        outer, inner, outer_alt, inner_alt = (random_kernel(space, rng) for _ in range(4))
        results['tv_composition'].record(composition_tv_margin(outer, inner, outer_alt, inner_alt, p, q), 1e-12)

        tw, tf = _random_mixture(space, int(rng.integers(1, 4)), rng)
        sw, sf = _random_mixture(space, int(rng.integers(1, 4)), rng)
        teacher = product_columns(space, tf) @ tw
        student = product_columns(space, sf) @ sw
        exact = float(np.sum(np.where(teacher > 0, teacher * np.log(teacher / student), 0.0)))
        per_pair = (tf[:, None] * np.log(tf[:, None] / sf[None])).sum(axis=(-1, -2))
        surrogate = float(tw @ per_pair @ sw)
        results['surrogate'].record(exact - surrogate, 1e-12)
    return list(results.values())


def random_instance(space, steps, rng, components=2, init_noise=0.5):
    """Uniform-diffusion context with a random q_0, exact product teacher and noisy mixture student"""
    fwd = FactorizedForward(space, Homogeneous(uniform_rate(space.cardinality)), 1.0)
    ctx = PosteriorContext(fwd, random_distribution(space, rng))
    grid = TimeGrid.uniform(steps)
    teacher = fit_product_to_oracle(ctx, grid)
    student = mixture_from_product(teacher, components, init_noise, rng, train_weights=True)
    student.weight_logits = rng.normal(size=components)
    return ctx, teacher, student


def estimator_suite(instances=20, replications=10_000, seed=0, samples=1, space=None, steps=4):
    """Both consistency estimators lie within 4 standard errors of the exact cross entropy"""
    space = space or StateSpace(2, 2)
    rng = np.random.default_rng(seed)
    result = SuiteResult('estimators')
    ratios = []
    cfg = LossConfig(samples=samples)
    for _ in range(instances):
        ctx, teacher, student = random_instance(space, steps, rng)
        times = student.grid.times
        u, t = times[steps - 2], times[steps - 1]
        r_t = ctx.marginal(t)
        exact = consis_cross_entropy_exact(student, teacher, ctx, r_t, 0.0, u, t)
        variances = []
        for estimator in (consis_loss_mc, consis_loss_cv):
            estimate = estimator(student, teacher, ctx, r_t, 0.0, u, t, cfg, rng, replications=replications)
            error = abs(estimate.value - exact)
            result.record(error - 4.0 * estimate.standard_error, 1e-12)
            variances.append(estimate.variance)
        ratios.append(variances[1] / variances[0] if variances[0] > 0 else math.nan)
    result.details['variance_ratio_cv_over_mc'] = ratios
    return result


def estimator_loss_report(replications=10_000, seed=0, samples=1, space=None, steps=4):
    """Loss report of one estimator-suite instance, at the last two grid times"""
    space = space or StateSpace(2, 2)
    ctx, teacher, student = random_instance(space, steps, np.random.default_rng(seed), components=2)
    times = student.grid.times
    cfg = LossConfig(samples=samples)
    return loss_report(student, teacher, ctx, cfg, times[1], times[steps - 1], times[steps],
                       seed=seed, replications=replications)


def universality_suite(trials=20, seed=0, space=None, steps=3):
    """Mixtures of products reproduce any joint and any kernel sequence exactly"""
    space = space or StateSpace(2, 2)
    rng = np.random.default_rng(seed)
    result = SuiteResult('universality')
    fwd = FactorizedForward(space, Homogeneous(uniform_rate(space.cardinality)), 1.0)
    grid = TimeGrid.uniform(steps)
    for _ in range(trials):
        p = random_distribution(space, rng, concentration=0.5)
        rebuilt = universal_mixture_from_joint(p).joint()
        result.record(float(np.abs(rebuilt.probs - p.probs).max()), 1e-12)

        ctx = PosteriorContext(fwd, p)
        kernels = [random_kernel(space, rng) for _ in range(steps)]
        model = universal_mixture_denoiser(space, grid, kernels)
        for n, kernel in enumerate(kernels, start=1):
            joint = mixture_view(model, ctx, 0.0, grid.times[n]).joint()
            result.record(float(np.abs(joint - kernel.matrix).max()), 1e-10)
    return result


def surrogate_gap(student, teacher, ctx, r, delta):
    """Surrogate minus exact distillation loss; never negative"""
    return (distil_loss_surrogate(student, teacher, ctx, r, delta)
            - distil_loss_exact(student, teacher, ctx, r, delta))


def best_product_tv(q_T, q_0, resolution=5):
    """Smallest d_TV(q_0, push(K, q_T)) over product kernels K on a 2x2 space

    Each column's two Bernoulli factors range over ``resolution`` evenly
    spaced values in [0, 1], deltas included.
    """
    space = q_T.space
    if space.cardinality != 2 or space.num_dims != 2:
        raise ArgumentError("best_product_tv enumerates 2x2 spaces only")
    levels = np.linspace(0.0, 1.0, resolution)
    first, second = np.meshgrid(levels, levels, indexing='ij')
    factors = np.stack([
        np.stack([first.ravel(), 1 - first.ravel()], axis=-1),
        np.stack([second.ravel(), 1 - second.ravel()], axis=-1),
    ], axis=1)
    columns = product_columns(space, factors).T
    options = columns.shape[0]
    output = np.zeros((options,) * space.size + (space.size,))
    for x in range(space.size):
        shape = [1] * space.size + [space.size]
        shape[x] = options
        output = output + q_T.probs[x] * columns.reshape(shape)
    tv = 0.5 * np.abs(output - q_0.probs).sum(axis=-1)
    return float(tv.min())


def as_kernel(space, matrix):
    """Validate a hand-built matrix as a DenseKernel"""
    return DenseKernel(space, np.asarray(matrix, dtype=float))
