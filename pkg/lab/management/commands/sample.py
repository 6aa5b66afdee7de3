"""
Draw samples (or the exact output law) from one of the samplers

USAGE: python manage.py sample --config <path> [--out <dir>] [--seed <int>] [--json]

Writes samples.csv (chain, index, x1..xD) or, with ``sample.dense``,
distribution.csv (index, x1..xD, prob).
"""

import numpy as np

from lab.denoisers import load_model, rollout_kernels
from lab.dist_core import total_correlation, tv_distance
from lab.experiment import Sampler
from lab.forward_process import Masked, mask_sigma
from lab.posterior_oracle import analytical_denoiser_kernel
from lab.reporting import write_csv
from lab.samplers import (
    CfgConfig, SampleRun, ancestral_sample, ancestral_sample_model, confidence_sample,
    empirical_distribution, tau_leap_distribution, tau_leap_sample,
)

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Runs a sampler over the configured grid and writes the samples'
    command = 'sample'

    def run(self, experiment, out):
        spec = experiment.sample
        run = self.draw(experiment, spec)
        space = experiment.space
        coords = tuple(f'x{d}' for d in range(1, space.num_dims + 1))
        summary = {'sampler': spec.sampler, 'dense': spec.dense, 'count': run.count, 'clamps': run.clamps}
        checks = {}

        if spec.dense:
            probs = run.distribution.probs
            write_csv(
                out / 'distribution.csv',
                ('index',) + coords + ('prob',),
                [(i, *space.digits[i], probs[i]) for i in range(space.size)],
            )
            summary['tv_to_data'] = tv_distance(experiment.q0, run.distribution)
            summary['total_correlation'] = total_correlation(run.distribution)
            summary['data_total_correlation'] = total_correlation(experiment.q0)
        else:
            final = run.final
            write_csv(
                out / 'samples.csv',
                ('chain', 'index') + coords,
                [(c, int(x), *space.digits[x]) for c, x in enumerate(final)],
            )
            if run.count:
                summary['empirical_tv_to_data'] = tv_distance(experiment.q0, empirical_distribution(space, final))
            if spec.sampler == Sampler.CONFIDENCE:
                mask_index = experiment.fwd.generators[0].mask_index
                checks['fully_unmasked'] = bool(np.all(space.digits[final] != mask_index))

        if isinstance(experiment.fwd.generators[0], Masked):
            summary['mask_sigma'] = [mask_sigma(experiment.fwd, t) for t in experiment.grid.times[:-1]]
        summary['checks'] = checks
        return summary

    def draw(self, experiment, spec):
        ctx = experiment.ctx
        grid = experiment.grid
        seed = experiment.seed
        prior = ctx.marginal(grid.horizon)

        if spec.sampler == Sampler.ANALYTICAL:
            kernels = [analytical_denoiser_kernel(ctx, grid.times[n - 1], grid.times[n])
                       for n in range(1, grid.steps + 1)]
            return ancestral_sample(kernels, prior, spec.count, seed, grid.times, dense=spec.dense)

        if spec.sampler == Sampler.TAU_LEAP:
            if spec.dense:
                return SampleRun(seed, grid.times, distribution=tau_leap_distribution(ctx, grid.times))
            return tau_leap_sample(ctx, grid.times, spec.count, seed)

        teacher = experiment.teacher()
        model = experiment.checked(load_model(spec.checkpoint)) if spec.checkpoint else teacher
        if spec.sampler == Sampler.CONFIDENCE:
            guidance = CfgConfig(spec.w_cfg, teacher) if spec.w_cfg > 0 else None
            return confidence_sample(model, experiment.fwd, spec.count, seed, guidance)
        if spec.dense:
            return ancestral_sample(rollout_kernels(model, ctx), prior, spec.count, seed, grid.times, dense=True)
        return ancestral_sample_model(model, ctx, prior, spec.count, seed, spec.argmax_final)
