"""
Serializers for experiment configuration files

Each serializer validates one section of the JSON config and ``create()``
turns it into the immutable domain object the numerical modules expect.
"""

import numpy as np
from django.conf import settings
from rest_framework import serializers

from .denoisers import TimeGrid
from .di4c_losses import Alpha, LossConfig, Reference
from .dist_core import JointDistribution, StateSpace, random_distribution
from .experiment import (
    ConvergeSpec, Experiment, ModelSpec, SampleSpec, Sampler, Suite, VerifySpec,
)
from .forward_process import (
    FactorizedForward, Homogeneous, Masked, MaskSchedule, RateMatrix, RateSchedule, Scheduled,
    UniformClosedForm, ordinal_rate, uniform_rate,
)
from .models import ExperimentRun
from .trainer import Mode, TimeSampling, TrainConfig


def _defaults(serializer_class):
    """Validated data of an empty section, i.e. every field default"""
    serializer = serializer_class(data={})
    serializer.is_valid(raise_exception=True)
    return dict(serializer.validated_data)


class SpaceSerializer(serializers.Serializer):
    """Product space S^D"""

    cardinality = serializers.IntegerField(min_value=2, default=2)
    num_dims = serializers.IntegerField(min_value=1, default=2)

    def validate(self, attrs):
        """Keep |S|^D under the configured maximum"""
        limit = settings.DI4C_MAX_STATES
        if attrs['cardinality'] ** attrs['num_dims'] > limit:
            raise serializers.ValidationError({
                'num_dims': f"|S|^D exceeds DI4C_MAX_STATES={limit}."
            })
        return attrs

    def create(self, validated_data):
        return StateSpace(max_states=settings.DI4C_MAX_STATES, **validated_data)


class ForwardProcessSerializer(serializers.Serializer):
    """Per-dimension forward generator, shared by every dimension

    Short keys are accepted too: ``T`` for horizon, ``rate`` for rate_matrix,
    ``schedule`` for the mask or rate schedule, and the kinds ``uniform2``,
    ``homogeneous`` and ``scheduled``.
    """

    KINDS = ('uniform', 'ordinal', 'custom', 'masked', 'uniform-closed-form')
    KEY_ALIASES = (('T', 'horizon'), ('rate', 'rate_matrix'))

    kind = serializers.ChoiceField(choices=KINDS, default='uniform')
    horizon = serializers.FloatField(default=1.0)
    scale = serializers.FloatField(min_value=0.0, default=1.0)
    width = serializers.FloatField(default=1.0)
    rate_matrix = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField()),
        required=False
    )
    rate_schedule = serializers.ChoiceField(choices=RateSchedule.Kind.CHOICES, default='constant')
    beta_low = serializers.FloatField(min_value=0.0, default=1.0)
    beta_high = serializers.FloatField(min_value=0.0, default=1.0)
    mask_schedule = serializers.ChoiceField(choices=MaskSchedule.Kind.CHOICES, default='linear')

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = self.expand_aliases(data)
        return super().to_internal_value(data)

    @classmethod
    def expand_aliases(cls, data):
        """Rewrite short keys and kinds into the long form"""
        data = dict(data)
        for short, name in cls.KEY_ALIASES:
            if short not in data:
                continue
            value = data.pop(short)
            if name in data and data[name] != value:
                raise serializers.ValidationError({short: f"Conflicts with {name}."})
            data[name] = value

        kind = data.get('kind')
        if kind == 'uniform2':
            data['kind'] = 'uniform-closed-form'
        elif kind in ('homogeneous', 'scheduled'):
            data['kind'] = 'custom' if 'rate_matrix' in data else 'uniform'

        if 'schedule' in data:
            name = 'mask_schedule' if data.get('kind') == 'masked' else 'rate_schedule'
            value = data.pop('schedule')
            if name in data and data[name] != value:
                raise serializers.ValidationError({'schedule': f"Conflicts with {name}."})
            data[name] = value
        if kind == 'homogeneous' and data.get('rate_schedule', 'constant') != 'constant':
            raise serializers.ValidationError({'schedule': "A homogeneous process has a constant rate."})
        if kind == 'scheduled':
            data.setdefault('rate_schedule', 'linear')
        return data

    def validate_horizon(self, value):
        if value <= 0:
            raise serializers.ValidationError("Horizon T must be positive.")
        return value

    def validate_width(self, value):
        if value <= 0:
            raise serializers.ValidationError("Width must be positive.")
        return value

    def validate(self, attrs):
        if attrs['kind'] == 'custom' and not attrs.get('rate_matrix'):
            raise serializers.ValidationError({
                'rate_matrix': "A custom forward process needs a rate matrix."
            })
        if attrs['rate_schedule'] == 'exponential' and (attrs['beta_low'] <= 0 or attrs['beta_high'] <= 1):
            raise serializers.ValidationError({
                'rate_schedule': "The exponential schedule needs beta_low > 0 and beta_high > 1."
            })
        return attrs

    def create(self, validated_data):
        """Build a FactorizedForward; ``space`` is passed in by the caller"""
        space = validated_data['space']
        kind = validated_data['kind']
        horizon = validated_data['horizon']
        if kind == 'masked':
            generator = Masked(space.cardinality, MaskSchedule(validated_data['mask_schedule'], horizon))
        elif kind == 'uniform-closed-form':
            generator = UniformClosedForm()
        else:
            if kind == 'uniform':
                rate = uniform_rate(space.cardinality, validated_data['scale'])
            elif kind == 'ordinal':
                rate = ordinal_rate(space.cardinality, validated_data['width'], validated_data['scale'])
            else:
                rate = RateMatrix(np.array(validated_data['rate_matrix'], dtype=float))
            schedule = RateSchedule(
                validated_data['rate_schedule'], validated_data['beta_low'], validated_data['beta_high'], horizon,
            )
            if schedule.kind == RateSchedule.Kind.CONSTANT and schedule.low == 1.0:
                generator = Homogeneous(rate)
            else:
                generator = Scheduled(rate, schedule)
        return FactorizedForward(space, generator, horizon)


class DataSerializer(serializers.Serializer):
    """Data distribution q_0: a named preset or an explicit probability vector"""

    PRESETS = ('two-bit-correlated', 'random', 'masked-pairs', 'probs')

    preset = serializers.ChoiceField(choices=PRESETS, default='two-bit-correlated')
    seed = serializers.IntegerField(min_value=0, default=0)
    concentration = serializers.FloatField(default=1.0)
    probs = serializers.ListField(child=serializers.FloatField(), required=False)

    def validate_concentration(self, value):
        if value <= 0:
            raise serializers.ValidationError("Dirichlet concentration must be positive.")
        return value

    def validate(self, attrs):
        if attrs['preset'] == 'probs' and not attrs.get('probs'):
            raise serializers.ValidationError({
                'probs': "The 'probs' preset needs an explicit probability vector."
            })
        return attrs

    def create(self, validated_data):
        space = validated_data['space']
        preset = validated_data['preset']
        if preset == 'two-bit-correlated':
            probs = np.zeros(space.size)
            probs[space.index((0,) * space.num_dims)] = 0.5
            probs[space.index((1,) * space.num_dims)] = 0.5
            return JointDistribution(space, probs)
        if preset == 'random':
            rng = np.random.default_rng(validated_data['seed'])
            return random_distribution(space, rng, validated_data['concentration'])
        if preset == 'masked-pairs':
            return masked_pairs(space)
        return JointDistribution(space, np.array(validated_data['probs'], dtype=float))


def masked_pairs(space):
    """Clean tokens over S minus MASK; dimensions (1, 2), (3, 4), ... share one uniform value"""
    clean = space.cardinality - 1
    digits = space.digits
    live = np.all(digits < clean, axis=1)
    for axis in range(0, space.num_dims - 1, 2):
        live &= digits[:, axis] == digits[:, axis + 1]
    probs = live / live.sum()
    return JointDistribution(space, probs)


class GridSerializer(serializers.Serializer):
    """Sampling grid 0 = t_0 < ... < t_N = T"""

    KINDS = ('uniform', 'offset', 'explicit')

    kind = serializers.ChoiceField(choices=KINDS, default='uniform')
    steps = serializers.IntegerField(min_value=1, default=4)
    delta = serializers.FloatField(default=0.01)
    times = serializers.ListField(child=serializers.FloatField(), required=False)

    def validate(self, attrs):
        if attrs['kind'] == 'explicit':
            times = attrs.get('times') or []
            if len(times) < 2 or times[0] != 0.0:
                raise serializers.ValidationError({
                    'times': "An explicit grid needs at least two times starting at 0."
                })
            if any(b <= a for a, b in zip(times, times[1:])):
                raise serializers.ValidationError({'times': "Grid times must be strictly increasing."})
        return attrs

    def create(self, validated_data):
        horizon = validated_data['horizon']
        kind = validated_data['kind']
        if kind == 'explicit':
            return TimeGrid(tuple(validated_data['times']))
        if kind == 'offset':
            return TimeGrid.offset(validated_data['steps'], horizon, validated_data['delta'])
        return TimeGrid.uniform(validated_data['steps'], horizon)


class ModelSpecSerializer(serializers.Serializer):
    components = serializers.IntegerField(min_value=1, default=8)
    train_weights = serializers.BooleanField(default=False)
    teacher_checkpoint = serializers.CharField(required=False)
    student_checkpoint = serializers.CharField(required=False)

    def create(self, validated_data):
        return ModelSpec(**validated_data)


class LossConfigSerializer(serializers.Serializer):
    """Loss options, see ``di4c_losses.LossConfig``"""

    delta = serializers.FloatField(default=0.01)
    dt_low = serializers.FloatField(default=0.001)
    dt_high = serializers.FloatField(default=0.01)
    alpha = serializers.ChoiceField(choices=Alpha.CHOICES, default=Alpha.SIGMOID)
    reference = serializers.ChoiceField(choices=Reference.CHOICES, default=Reference.DATA)
    samples = serializers.IntegerField(min_value=1, default=64)
    lambda_samples = serializers.IntegerField(min_value=1, default=1)
    lambda_batch = serializers.IntegerField(min_value=1, default=1)
    use_control_variates = serializers.BooleanField(default=False)
    cv_kind = serializers.ChoiceField(choices=('marginal', 'convex'), default='marginal')
    enumerate_components = serializers.BooleanField(default=True)
    stop_gradient = serializers.BooleanField(default=True)
    distil_mode = serializers.ChoiceField(choices=('exact', 'surrogate'), default='exact')
    objective = serializers.ChoiceField(choices=('standard', 'gated'), default='standard')

    def validate(self, attrs):
        if attrs['delta'] <= 0:
            raise serializers.ValidationError({'delta': "delta must be positive."})
        if not 0 < attrs['dt_low'] <= attrs['dt_high']:
            raise serializers.ValidationError({'dt_low': "Need 0 < dt_low <= dt_high."})
        return attrs

    def create(self, validated_data):
        return LossConfig(**validated_data)


class TrainConfigSerializer(serializers.Serializer):
    learning_rate = serializers.FloatField(default=0.5)
    iterations = serializers.IntegerField(min_value=0, default=1000)
    seed = serializers.IntegerField(min_value=0, default=0)
    loss = LossConfigSerializer(required=False)
    delta_fixed_prob = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    delta_band = serializers.ListField(
        child=serializers.FloatField(),
        min_length=2,
        max_length=2,
        default=[0.01, 0.02]
    )
    time_sampling = serializers.ChoiceField(choices=TimeSampling.CHOICES, default=TimeSampling.RANDOM)
    momentum = serializers.FloatField(min_value=0.0, default=0.0)
    warmup = serializers.IntegerField(min_value=0, default=0)
    init_noise = serializers.FloatField(min_value=0.0, default=1e-2)
    rounds = serializers.IntegerField(min_value=1, default=1)
    eval_every = serializers.IntegerField(min_value=0, default=0)
    divergence_factor = serializers.FloatField(default=10.0)
    divergence_patience = serializers.IntegerField(min_value=1, default=100)
    mode = serializers.ChoiceField(choices=Mode.CHOICES, default=Mode.EXACT)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate_momentum(self, value):
        if value >= 1:
            raise serializers.ValidationError("Momentum must be below 1.")
        return value

    def validate(self, attrs):
        low, high = attrs['delta_band']
        if not 0 < low <= high:
            raise serializers.ValidationError({'delta_band': "Need 0 < low <= high."})
        attrs.setdefault('loss', _defaults(LossConfigSerializer))
        return attrs

    def create(self, validated_data):
        loss = LossConfigSerializer().create(dict(validated_data.pop('loss')))
        delta_band = tuple(validated_data.pop('delta_band'))
        return TrainConfig(loss=loss, delta_band=delta_band, **validated_data)


class SampleSpecSerializer(serializers.Serializer):
    sampler = serializers.ChoiceField(choices=Sampler.CHOICES, default=Sampler.ANALYTICAL)
    count = serializers.IntegerField(min_value=0, default=1000)
    dense = serializers.BooleanField(default=False)
    argmax_final = serializers.BooleanField(default=False)
    checkpoint = serializers.CharField(required=False)
    w_cfg = serializers.FloatField(min_value=0.0, default=0.0)

    def validate(self, attrs):
        if attrs['dense'] and attrs['sampler'] == Sampler.CONFIDENCE:
            raise serializers.ValidationError({
                'dense': "The confidence sampler has no dense mode."
            })
        if attrs['w_cfg'] > 0 and attrs['sampler'] != Sampler.CONFIDENCE:
            raise serializers.ValidationError({
                'w_cfg': "Guidance is only available with the confidence sampler."
            })
        return attrs

    def create(self, validated_data):
        return SampleSpec(**validated_data)


class ConvergeSpecSerializer(serializers.Serializer):
    n_values = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=1,
        default=[4, 8, 16, 32, 64, 128, 256]
    )
    delta = serializers.FloatField(min_value=0.0, default=0.0)
    example = serializers.ChoiceField(choices=('config', 'closed-form'), default='config')
    assert_rate = serializers.BooleanField(default=False)
    expect_exact = serializers.BooleanField(default=False)

    def validate_n_values(self, value):
        if sorted(value) != value or len(set(value)) != len(value):
            raise serializers.ValidationError("N values must be strictly increasing.")
        return value

    def validate(self, attrs):
        if attrs['example'] == 'closed-form' and attrs['delta'] <= 0:
            raise serializers.ValidationError({
                'delta': "The closed-form example needs an offset delta > 0."
            })
        return attrs

    def create(self, validated_data):
        return ConvergeSpec(**dict(validated_data, n_values=tuple(validated_data['n_values'])))


class VerifySpecSerializer(serializers.Serializer):
    suites = serializers.MultipleChoiceField(choices=Suite.CHOICES, default=list(Suite.CHOICES))
    trials = serializers.IntegerField(min_value=1, default=1000)
    instances = serializers.IntegerField(min_value=1, default=20)
    replications = serializers.IntegerField(min_value=2, default=10_000)
    closed_form_steps = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        default=[20, 50, 100]
    )
    kernels = serializers.DictField(required=False)

    def validate_kernels(self, value):
        """Hand-built audit instance: student jumps, teacher steps and r_T"""
        missing = {'student', 'teacher', 'r_T'} - set(value)
        if missing:
            raise serializers.ValidationError(f"Missing {', '.join(sorted(missing))}.")
        if len(value['student']) != len(value['teacher']) or not value['teacher']:
            raise serializers.ValidationError("Need one student jump per teacher step.")
        return value

    def create(self, validated_data):
        suites = tuple(s for s in Suite.CHOICES if s in validated_data['suites'])
        return VerifySpec(
            suites=suites,
            trials=validated_data['trials'],
            instances=validated_data['instances'],
            replications=validated_data['replications'],
            closed_form_steps=tuple(validated_data['closed_form_steps']),
            kernels=validated_data.get('kernels'),
        )


class ExperimentConfigSerializer(serializers.Serializer):
    """Whole experiment file; every section is optional"""

    SECTIONS = {
        'space': SpaceSerializer,
        'forward': ForwardProcessSerializer,
        'data': DataSerializer,
        'grid': GridSerializer,
        'model': ModelSpecSerializer,
        'train': TrainConfigSerializer,
        'sample': SampleSpecSerializer,
        'converge': ConvergeSpecSerializer,
        'verify': VerifySpecSerializer,
    }

    space = SpaceSerializer(required=False)
    forward = ForwardProcessSerializer(required=False)
    data = DataSerializer(required=False)
    grid = GridSerializer(required=False)
    model = ModelSpecSerializer(required=False)
    train = TrainConfigSerializer(required=False)
    sample = SampleSpecSerializer(required=False)
    converge = ConvergeSpecSerializer(required=False)
    verify = VerifySpecSerializer(required=False)
    seed = serializers.IntegerField(min_value=0, default=0)
    output_dir = serializers.CharField(required=False)

    def validate(self, attrs):
        """Fill omitted sections and check the sections against each other"""
        for name, serializer_class in self.SECTIONS.items():
            if name not in attrs:
                attrs[name] = _defaults(serializer_class)
        space, forward = attrs['space'], attrs['forward']
        if forward['kind'] == 'uniform-closed-form' and space['cardinality'] != 2:
            raise serializers.ValidationError({
                'forward': "The closed-form uniform process needs |S| = 2."
            })
        if forward['kind'] == 'custom':
            shape = np.shape(forward['rate_matrix'])
            if shape != (space['cardinality'], space['cardinality']):
                raise serializers.ValidationError({
                    'forward': f"Rate matrix must be {space['cardinality']}x{space['cardinality']}, got {shape}."
                })
        preset = attrs['data']['preset']
        if preset == 'masked-pairs' and (forward['kind'] != 'masked' or space['cardinality'] < 3):
            raise serializers.ValidationError({
                'data': "The masked-pairs preset needs a masked forward process and |S| >= 3."
            })
        if preset == 'probs' and len(attrs['data']['probs']) != space['cardinality'] ** space['num_dims']:
            raise serializers.ValidationError({
                'data': "Explicit probabilities must have |S|^D entries."
            })
        grid = attrs['grid']
        if grid['kind'] == 'explicit' and abs(grid['times'][-1] - forward['horizon']) > 1e-12:
            raise serializers.ValidationError({'grid': "An explicit grid must end at the horizon T."})
        if grid['kind'] == 'offset' and not 0 < grid['delta'] < forward['horizon']:
            raise serializers.ValidationError({'grid': "The grid offset must lie in (0, T)."})
        sampler = attrs['sample']['sampler']
        if sampler == Sampler.CONFIDENCE and forward['kind'] != 'masked':
            raise serializers.ValidationError({
                'sample': "The confidence sampler needs a masked forward process."
            })
        if sampler == Sampler.TAU_LEAP and forward['kind'] == 'masked':
            raise serializers.ValidationError({
                'sample': "Tau-leaping needs a rate-form forward process."
            })
        if attrs['converge']['delta'] >= forward['horizon']:
            raise serializers.ValidationError({'converge': "The offset delta must lie below T."})
        return attrs

    def create(self, validated_data):
        space = SpaceSerializer().create(dict(validated_data['space']))
        fwd = ForwardProcessSerializer().create(dict(validated_data['forward'], space=space))
        q0 = DataSerializer().create(dict(validated_data['data'], space=space))
        grid = GridSerializer().create(dict(validated_data['grid'], horizon=fwd.horizon))
        seed = validated_data['seed']
        train = TrainConfigSerializer().create(dict(validated_data['train']))
        experiment = Experiment(
            space=space,
            fwd=fwd,
            q0=q0,
            grid=grid,
            model=ModelSpecSerializer().create(dict(validated_data['model'])),
            train=train,
            sample=SampleSpecSerializer().create(dict(validated_data['sample'])),
            converge=ConvergeSpecSerializer().create(dict(validated_data['converge'])),
            verify=VerifySpecSerializer().create(dict(validated_data['verify'])),
            seed=seed,
            output_dir=validated_data.get('output_dir'),
            raw=self.initial_data,
        )
        # a top-level seed also seeds training
        if 'seed' in self.initial_data:
            experiment = experiment.with_seed(seed)
        return experiment


class ExperimentRunSerializer(serializers.ModelSerializer):
    """Stored run, as listed by the API"""

    exit_code = serializers.IntegerField(read_only=True)
    duration = serializers.FloatField(read_only=True)

    class Meta:
        model = ExperimentRun
        fields = ('id', 'command', 'status', 'exit_code', 'seed', 'config', 'summary',
                  'output_dir', 'created_at', 'finished_at', 'duration')
        read_only_fields = fields
