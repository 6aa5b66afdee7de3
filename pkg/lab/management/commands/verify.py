"""
Property suites for the bounds, the closed-form example and the estimators

USAGE: python manage.py verify --config <path> [--out <dir>] [--seed <int>] [--json]

A ``verify.kernels`` section audits a hand-built instance; non-stochastic
matrices there are rejected with exit code 3. Writes verify.json, plus
loss_report.csv when the estimator suite runs.
"""

import itertools

import numpy as np

from lab.denoisers import fit_product_to_oracle
from lab.di4c_losses import LossReport
from lab.dist_core import JointDistribution, StateSpace
from lab.experiment import Suite
from lab.reporting import write_csv, write_json
from lab.theory_harness import (
    BOUND_SLACK, ClosedFormExample, EQUIVALENCE_ATOL, SuiteResult, as_kernel, closed_form_delta,
    closed_form_equivalence, engine_delta, estimator_loss_report, estimator_suite, fixed_point_audit,
    inequality_suite, theorem2_audit, theorem2_suite, universality_suite,
)

from ._base import ExperimentCommand

THEOREM2_SHAPES = list(itertools.product((2, 3), (2, 3), (2, 3)))
UNIVERSALITY_SPACES = [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3)]


def merged(name, results):
    """Fold per-configuration suite results into one"""
    total = SuiteResult(name)
    for result in results:
        total.trials += result.trials
        total.failures += result.failures
        total.worst = max(total.worst, result.worst)
    return total


class Command(ExperimentCommand):
    help = 'Runs the bound audits and property suites and writes verify.json'
    command = 'verify'

    def run(self, experiment, out):
        spec = experiment.verify
        seed = experiment.seed
        suites = {}

        if spec.kernels:
            suites['injected'] = self.injected(experiment.space, spec.kernels)

        if Suite.THEOREM2 in spec.suites:
            per_shape = max(1, spec.trials // len(THEOREM2_SHAPES))
            suites[Suite.THEOREM2] = merged(Suite.THEOREM2, [
                theorem2_suite(per_shape, seed + i, StateSpace(s, d), steps)
                for i, (s, d, steps) in enumerate(THEOREM2_SHAPES)
            ]).summary()

        if Suite.FIXED_POINT in spec.suites:
            teacher = fit_product_to_oracle(experiment.ctx, experiment.grid)
            report = fixed_point_audit(teacher, experiment.ctx)
            suites[Suite.FIXED_POINT] = dict(
                report.summary(), holds=report.lhs < BOUND_SLACK and report.rhs < BOUND_SLACK,
            )

        if Suite.INEQUALITIES in spec.suites:
            for result in inequality_suite(spec.trials, seed):
                suites[result.name] = result.summary()

        if Suite.CLOSED_FORM in spec.suites:
            suites[Suite.CLOSED_FORM] = self.closed_form(spec.closed_form_steps)

        if Suite.ESTIMATORS in spec.suites:
            suites[Suite.ESTIMATORS] = estimator_suite(spec.instances, spec.replications, seed).summary()
            report = estimator_loss_report(spec.replications, seed)
            write_csv(out / 'loss_report.csv', LossReport.HEADER, report.csv_rows())

        if Suite.UNIVERSALITY in spec.suites:
            per_space = max(1, spec.instances // len(UNIVERSALITY_SPACES))
            suites[Suite.UNIVERSALITY] = merged(Suite.UNIVERSALITY, [
                universality_suite(per_space, seed + i, StateSpace(s, d))
                for i, (s, d) in enumerate(UNIVERSALITY_SPACES)
            ]).summary()

        for name, result in suites.items():
            self.stdout.write(f"{name}: {'ok' if result['holds'] else 'FAILED'}")

        summary = {
            'suites': suites,
            'checks': {name: bool(result['holds']) for name, result in suites.items()},
        }
        write_json(out / 'verify.json', summary)
        return summary

    def injected(self, space, kernels):
        """Audit a hand-built (student, teacher, r_T); matrices are validated first"""
        jumps = [as_kernel(space, m) for m in kernels['student']]
        steps = [as_kernel(space, m) for m in kernels['teacher']]
        r_T = JointDistribution(space, np.asarray(kernels['r_T'], dtype=float))
        report = theorem2_audit(jumps, steps, r_T, strict=False)
        return report.summary()

    def closed_form(self, steps_list):
        example = ClosedFormExample()
        equivalence = closed_form_equivalence(example)
        deltas = []
        for steps in steps_list:
            trace = closed_form_delta(example, steps)
            engine = engine_delta(example, steps)
            deltas.append({
                'N': steps,
                'delta': trace.final_gap,
                'engine': engine,
                'bound': trace.bound,
                'matches_engine': abs(trace.final_gap - engine) <= EQUIVALENCE_ATOL,
                'holds': trace.holds,
            })
        return {
            'points': equivalence.points,
            'max_error': equivalence.max_error,
            'worst': equivalence.worst,
            'constant': example.constant,
            'deltas': deltas,
            'holds': equivalence.holds and all(d['holds'] and d['matches_engine'] for d in deltas),
        }
