"""
Exact convergence of N-step analytical sampling

USAGE: python manage.py converge --config <path> [--out <dir>] [--seed <int>] [--json]

Writes convergence.csv (N, tv, n_times_tv) and convergence.json.
"""

import numpy as np

from lab.posterior_oracle import local_error_ratios
from lab.reporting import write_csv, write_json
from lab.theory_harness import ClosedFormExample, ConvergenceReport, convergence_study

from ._base import ExperimentCommand

LARGE_N = 64
LOCAL_ERROR_STEPS = (1e-2, 5e-3, 2.5e-3)


def local_errors(ctx):
    """One-step product error over eps^2 at t = T/2, from the most likely state"""
    t = ctx.horizon / 2
    x = int(np.argmax(ctx.marginal(t).probs))
    eps_list = [eps * ctx.horizon for eps in LOCAL_ERROR_STEPS]
    return {'t': t, 'x': x, 'eps': eps_list, 'ratios': local_error_ratios(ctx, t, eps_list, x)}


class Command(ExperimentCommand):
    help = 'Measures TV between N-step analytical sampling and the data for each N'
    command = 'converge'

    def run(self, experiment, out):
        spec = experiment.converge
        example = None
        if spec.example == 'closed-form':
            example = ClosedFormExample(spec.delta, experiment.fwd.horizon)
            ctx = example.context()
        else:
            ctx = experiment.ctx

        report = convergence_study(ctx, spec.n_values, spec.delta)
        write_csv(out / 'convergence.csv', ConvergenceReport.HEADER, report.rows())

        summary = report.summary()
        summary['local_error_ratios'] = local_errors(ctx)
        checks = {}
        if spec.assert_rate:
            checks['slope_in_window'] = report.slope_in_window
        if spec.expect_exact:
            checks['exact'] = report.exact
        if example is not None:
            summary['constant'] = example.constant
            large = [value for n, value in zip(report.n_values, report.n_times_tv) if n >= LARGE_N]
            checks['above_constant'] = all(value >= example.constant for value in large)
        summary['checks'] = checks
        write_json(out / 'convergence.json', summary)
        return summary
