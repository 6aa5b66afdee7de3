"""
Validated experiment configuration

``ExperimentConfigSerializer.save()`` returns an ``Experiment``; the
management commands only ever see these immutable objects.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .denoisers import fit_product_to_oracle, load_model, mixture_from_product
from .exceptions import ArgumentError
from .posterior_oracle import PosteriorContext
from .trainer import TrainConfig

logger = logging.getLogger(__name__)


class Sampler:
    ANALYTICAL = 'analytical'
    MODEL = 'model'
    TAU_LEAP = 'tau-leap'
    CONFIDENCE = 'confidence'
    CHOICES = (ANALYTICAL, MODEL, TAU_LEAP, CONFIDENCE)


class Suite:
    THEOREM2 = 'theorem2'
    FIXED_POINT = 'fixed-point'
    INEQUALITIES = 'inequalities'
    CLOSED_FORM = 'closed-form'
    ESTIMATORS = 'estimators'
    UNIVERSALITY = 'universality'
    CHOICES = (THEOREM2, FIXED_POINT, INEQUALITIES, CLOSED_FORM, ESTIMATORS, UNIVERSALITY)


@dataclass(frozen=True)
class ModelSpec:
    components: int = 8
    train_weights: bool = False
    teacher_checkpoint: str = None
    student_checkpoint: str = None


@dataclass(frozen=True)
class SampleSpec:
    sampler: str = Sampler.ANALYTICAL
    count: int = 1000
    dense: bool = False
    argmax_final: bool = False
    checkpoint: str = None
    w_cfg: float = 0.0


@dataclass(frozen=True)
class ConvergeSpec:
    n_values: tuple = (4, 8, 16, 32, 64, 128, 256)
    delta: float = 0.0
    example: str = 'config'
    assert_rate: bool = False
    expect_exact: bool = False


@dataclass(frozen=True)
class VerifySpec:
    suites: tuple = Suite.CHOICES
    trials: int = 1000
    instances: int = 20
    replications: int = 10_000
    closed_form_steps: tuple = (20, 50, 100)
    kernels: dict = None


@dataclass(frozen=True, eq=False)
class Experiment:
    space: object
    fwd: object
    q0: object
    grid: object
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleSpec = field(default_factory=SampleSpec)
    converge: ConvergeSpec = field(default_factory=ConvergeSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    seed: int = 0
    output_dir: str = None
    raw: dict = field(default_factory=dict, repr=False)

    @cached_property
    def ctx(self):
        return PosteriorContext(self.fwd, self.q0)

    def with_seed(self, seed):
        """Override the experiment and training seeds together"""
        if seed is None:
            return self
        return replace(self, seed=int(seed), train=replace(self.train, seed=int(seed)))

    def teacher(self):
        """Product teacher from a checkpoint, else fitted to the true posterior marginals"""
        if self.model.teacher_checkpoint:
            return self.checked(load_model(self.model.teacher_checkpoint))
        return fit_product_to_oracle(self.ctx, self.grid)

    def student(self, teacher):
        if self.model.student_checkpoint:
            return self.checked(load_model(self.model.student_checkpoint))
        rng = np.random.default_rng(self.seed)
        return mixture_from_product(
            teacher, self.model.components, self.train.init_noise, rng, self.model.train_weights,
        )

    def checked(self, model):
        if model.space != self.space or model.grid != self.grid:
            raise ArgumentError("checkpoint does not match the configured space and grid")
        logger.info("loaded %s checkpoint with %d component(s)", type(model).__name__, model.components)
        return model
