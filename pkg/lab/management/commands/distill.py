"""
Distil a product teacher into a mixture student

USAGE: python manage.py distill --config <path> [--out <dir>] [--seed <int>] [--json]

Writes checkpoint.npz, trace.csv, evals.csv and summary.json, plus
loss_report.csv on grids of two or more steps. A training failure leaves
the partial trace and diagnostics.json behind.
"""

import math

from lab.denoisers import save_model
from lab.di4c_losses import LossReport, loss_report
from lab.dist_core import total_correlation, tv_distance
from lab.exceptions import TrainingError
from lab.reporting import write_csv, write_json
from lab.theory_harness import BOUND_SLACK, best_product_tv, surrogate_gap
from lab.trainer import TrainTrace, iterated_di4c, one_step_tv, teacher_output

from ._base import ExperimentCommand

SURROGATE_SLACK = 1e-12


def write_traces(out, traces):
    """trace.csv and evals.csv with a leading round column"""
    write_csv(
        out / 'trace.csv',
        ('round',) + TrainTrace.LOSS_HEADER,
        [(r + 1,) + row for r, trace in enumerate(traces) for row in trace.loss_rows()],
    )
    write_csv(
        out / 'evals.csv',
        ('round',) + TrainTrace.EVAL_HEADER,
        [(r + 1,) + row for r, trace in enumerate(traces) for row in trace.eval_rows()],
    )


def report_times(grid):
    """(delta, u, t): the first grid time and the two last ones"""
    times = grid.times
    return times[1], times[-2], times[-1]


class Command(ExperimentCommand):
    help = 'Trains a mixture student against the product teacher and records the trace'
    command = 'distill'

    def run(self, experiment, out):
        ctx = experiment.ctx
        teacher = experiment.teacher()
        student = experiment.student(teacher)
        teacher_tv = one_step_tv(teacher, ctx, ctx.q0)
        teacher_steps_tv = tv_distance(ctx.q0, teacher_output(teacher, ctx))
        self.stdout.write(
            f"Teacher: 1-step TV {teacher_tv:.6g}, {experiment.grid.steps}-step TV {teacher_steps_tv:.6g}"
        )

        try:
            trained, traces = iterated_di4c(student, teacher, ctx, experiment.train)
        except TrainingError as exc:
            if exc.trace is not None:
                write_traces(out, [exc.trace])
            write_json(out / 'diagnostics.json', exc.diagnostics)
            raise

        write_traces(out, traces)
        save_model(trained, out / 'checkpoint.npz')

        delta, u, t = report_times(experiment.grid)
        if experiment.grid.steps > 1:
            report = loss_report(trained, teacher, ctx, experiment.train.loss, delta, u, t, seed=experiment.seed)
            write_csv(out / 'loss_report.csv', LossReport.HEADER, report.csv_rows())
        gap = surrogate_gap(trained, teacher, ctx, ctx.marginal(delta), delta)

        final = traces[-1].final
        student_tv = one_step_tv(trained, ctx, ctx.q0)
        summary = {
            'components': trained.components,
            'steps': experiment.grid.steps,
            'iterations': experiment.train.iterations,
            'rounds': experiment.train.rounds,
            'data_total_correlation': total_correlation(ctx.q0),
            'teacher_one_step_tv': teacher_tv,
            'teacher_steps_tv': teacher_steps_tv,
            'student_one_step_tv': student_tv,
            'student_teacher_tv': final.teacher_tv,
            'improved': student_tv < teacher_tv,
            'bound_lhs': final.bound_lhs,
            'bound_rhs': final.bound_rhs,
            'surrogate_gap': gap,
            'final_objective': final.objective,
            'checks': {
                'bound_holds': math.isinf(final.bound_rhs) or final.bound_lhs <= final.bound_rhs + BOUND_SLACK,
                'surrogate_dominates': gap >= -SURROGATE_SLACK,
            },
        }
        if ctx.space.cardinality == 2 and ctx.space.num_dims == 2:
            summary['best_product_one_step_tv'] = best_product_tv(ctx.marginal(experiment.grid.horizon), ctx.q0)
        write_json(out / 'summary.json', summary)
        return summary
