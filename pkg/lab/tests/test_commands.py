"""
Tests for the converge, distill, verify and sample management commands
"""

import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from lab.di4c_losses import LossReport
from lab.forward_process import Homogeneous, Masked, Scheduled, UniformClosedForm
from lab.models import ExperimentRun
from lab.serializers import ExperimentConfigSerializer


@override_settings(DI4C_RECORD_RUNS=True)
class CommandTestCase(TestCase):
    """Temporary config and output directories"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, config, name='config.json'):
        path = self.root / name
        path.write_text(config if isinstance(config, str) else json.dumps(config))
        return str(path)

    def run_command(self, command, config, out='out', **options):
        stdout = StringIO()
        call_command(command, config=self.write_config(config), out=str(self.root / out), stdout=stdout, **options)
        return stdout.getvalue()

    def assert_exit(self, code, command, config, **options):
        with self.assertRaises(CommandError) as caught:
            self.run_command(command, config, **options)
        self.assertEqual(caught.exception.returncode, code)
        return caught.exception


class ConfigErrorTest(CommandTestCase):
    """
    Test configuration handling

    FUNCTIONALITY: Exit code 2 for unreadable or inconsistent configs
    """

    def test_malformed_json(self):
        """
        TEST 1: Malformed JSON exits with 2 and is recorded as a config error
        TESTS: ExperimentCommand.load_config
        """
        error = self.assert_exit(2, 'sample', '{"space": ')
        self.assertIn('malformed JSON', str(error))
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.CONFIG_ERROR)

    def test_inconsistent_sections(self):
        """
        TEST 2: Cross-section checks reject impossible combinations
        TESTS: ExperimentConfigSerializer.validate
        """
        for config in (
            {'sample': {'sampler': 'confidence'}},
            {'forward': {'kind': 'uniform-closed-form'}, 'space': {'cardinality': 3}},
            {'grid': {'kind': 'explicit', 'times': [0.0, 0.5]}},
            {'data': {'preset': 'probs', 'probs': [0.5, 0.5]}},
            ['not', 'an', 'object'],
        ):
            with self.subTest(config=config):
                self.assert_exit(2, 'sample', config)


class ForwardConfigTest(CommandTestCase):
    """
    Test the short forward-process form

    FUNCTIONALITY: kind/rate/schedule/T keys map onto the forward generators
    """

    def build(self, forward, **sections):
        serializer = ExperimentConfigSerializer(data=dict(sections, forward=forward))
        serializer.is_valid(raise_exception=True)
        return serializer.save()

    def test_short_kinds(self):
        """
        TEST 1: uniform2, homogeneous, scheduled and masked build the matching generators
        TESTS: ForwardProcessSerializer.expand_aliases
        """
        experiment = self.build({'kind': 'uniform2', 'T': 2.0})
        self.assertIsInstance(experiment.fwd.generators[0], UniformClosedForm)
        self.assertEqual(experiment.fwd.horizon, 2.0)
        self.assertEqual(experiment.grid.horizon, 2.0)

        experiment = self.build({'kind': 'homogeneous', 'rate': [[-1.0, 2.0], [1.0, -2.0]], 'T': 1.0})
        generator = experiment.fwd.generators[0]
        self.assertIsInstance(generator, Homogeneous)
        np.testing.assert_array_equal(generator.rate_matrix.matrix, [[-1.0, 2.0], [1.0, -2.0]])

        self.assertIsInstance(self.build({'kind': 'homogeneous'}).fwd.generators[0], Homogeneous)

        generator = self.build({'kind': 'scheduled', 'schedule': 'linear'}).fwd.generators[0]
        self.assertIsInstance(generator, Scheduled)
        self.assertEqual(generator.schedule.kind, 'linear')
        self.assertIsInstance(self.build({'kind': 'scheduled'}).fwd.generators[0], Scheduled)

        experiment = self.build({'kind': 'masked', 'schedule': 'arccos', 'T': 1.0},
                                space={'cardinality': 3, 'num_dims': 2})
        generator = experiment.fwd.generators[0]
        self.assertIsInstance(generator, Masked)
        self.assertEqual(generator.schedule.kind, 'arccos')

    def test_short_form_runs(self):
        """
        TEST 2: A command accepts a config written with the short keys
        TESTS: converge with kind/rate/T
        """
        config = {
            'forward': {'kind': 'homogeneous', 'rate': [[-1.0, 1.0], [1.0, -1.0]], 'T': 1.0},
            'converge': {'n_values': [2, 4]},
        }
        self.run_command('converge', config)
        summary = ExperimentRun.objects.get().summary
        self.assertEqual(summary['horizon'], 1.0)
        self.assertEqual(len(summary['local_error_ratios']['ratios']), 3)

    def test_conflicting_keys(self):
        """
        TEST 3: Short and long keys that disagree, or a schedule on a homogeneous process, exit with 2
        TESTS: ForwardProcessSerializer.expand_aliases
        """
        for forward in (
            {'T': 1.0, 'horizon': 2.0},
            {'kind': 'homogeneous', 'schedule': 'linear'},
            {'kind': 'masked', 'schedule': 'arccos', 'mask_schedule': 'linear'},
            {'kind': 'homogeneous', 'rate': [[-1.0, 1.0]]},
        ):
            with self.subTest(forward=forward):
                self.assert_exit(2, 'sample', {'forward': forward})


class ConvergeCommandTest(CommandTestCase):
    """
    Test the converge command

    FUNCTIONALITY: convergence.csv and the exactness check
    """

    def test_one_dimension(self):
        """
        TEST 1: D = 1 data is reproduced exactly and the CSV has one row per N
        TESTS: converge with expect_exact
        """
        config = {
            'space': {'cardinality': 3, 'num_dims': 1},
            'data': {'preset': 'random', 'seed': 4},
            'converge': {'n_values': [1, 2, 4], 'expect_exact': True},
        }
        self.run_command('converge', config)
        with open(self.root / 'out' / 'convergence.csv') as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(rows[0], ['N', 'tv', 'n_times_tv'])
        self.assertEqual([row[0] for row in rows[1:]], ['1', '2', '4'])

    def test_failed_check(self):
        """
        TEST 2: Correlated data is not exact, so expect_exact fails with 1
        TESTS: converge failure path
        """
        self.assert_exit(1, 'converge', {'converge': {'n_values': [2, 4], 'expect_exact': True}})
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.ASSERTION_FAILED)
        self.assertFalse(run.summary['checks']['exact'])


class DistillCommandTest(CommandTestCase):
    """
    Test the distill command

    FUNCTIONALITY: Checkpoint, traces and summary
    """

    def test_zero_iterations(self):
        """
        TEST 1: Zero iterations still write every artefact
        TESTS: distill
        """
        config = {'model': {'components': 2}, 'train': {'iterations': 0}}
        self.run_command('distill', config)
        out = self.root / 'out'
        for name in ('checkpoint.npz', 'trace.csv', 'evals.csv', 'loss_report.csv', 'summary.json', 'metadata.json'):
            self.assertTrue((out / name).exists(), name)
        summary = json.loads((out / 'summary.json').read_text())
        self.assertEqual(summary['components'], 2)
        self.assertTrue(summary['checks']['bound_holds'])
        self.assertTrue(summary['checks']['surrogate_dominates'])
        self.assertAlmostEqual(summary['data_total_correlation'], math.log(2))
        self.assertGreaterEqual(summary['best_product_one_step_tv'], 0.0)

    def test_loss_report_file(self):
        """
        TEST 2: loss_report.csv lists every loss of the trained student
        TESTS: distill, LossReport.csv_rows
        """
        self.run_command('distill', {'model': {'components': 2}, 'train': {'iterations': 2}})
        with open(self.root / 'out' / 'loss_report.csv') as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(tuple(rows[0]), LossReport.HEADER)
        self.assertEqual([row[0] for row in rows[1:]],
                         ['distil', 'distil_surrogate', 'consis', 'consis_mc', 'consis_cv', 'data', 'marginal', 'corr'])
        self.assertTrue(all(len(row) == len(LossReport.HEADER) for row in rows))

    def test_short_training_then_sampling(self):
        """
        TEST 3: A trained checkpoint can be sampled from
        TESTS: distill, sample with a checkpoint
        """
        self.run_command('distill', {'model': {'components': 2},
                                     'train': {'iterations': 3, 'time_sampling': 'sweep'}})
        checkpoint = str(self.root / 'out' / 'checkpoint.npz')
        self.run_command('sample', {'sample': {'sampler': 'model', 'count': 50, 'checkpoint': checkpoint}},
                         out='samples')
        with open(self.root / 'samples' / 'samples.csv') as fh:
            self.assertEqual(len(list(csv.reader(fh))), 51)


class VerifyCommandTest(CommandTestCase):
    """
    Test the verify command

    FUNCTIONALITY: Suites, injected instances and validation errors
    """

    def test_non_stochastic_injection(self):
        """
        TEST 1: A column summing to 1.1 is a validation error
        TESTS: verify with verify.kernels
        """
        config = {
            'space': {'cardinality': 2, 'num_dims': 1},
            'verify': {
                'suites': [],
                'kernels': {'student': [[[0.5, 0.5], [0.6, 0.5]]], 'teacher': [[[1.0, 0.0], [0.0, 1.0]]],
                            'r_T': [0.5, 0.5]},
            },
        }
        self.assert_exit(3, 'verify', config)
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.VALIDATION_ERROR)

    def test_small_suites(self):
        """
        TEST 2: Reduced suites pass and land in verify.json
        TESTS: verify
        """
        config = {'verify': {'suites': ['theorem2', 'fixed-point', 'inequalities', 'closed-form'],
                             'trials': 16, 'closed_form_steps': [20]}}
        self.run_command('verify', config)
        report = json.loads((self.root / 'out' / 'verify.json').read_text())
        self.assertTrue(all(report['checks'].values()))
        self.assertIn('pinsker', report['suites'])
        self.assertIn('tv_composition', report['suites'])
        self.assertEqual(report['suites']['tv_composition']['failures'], 0)
        self.assertFalse((self.root / 'out' / 'loss_report.csv').exists())

    def test_estimator_suite_loss_report(self):
        """
        TEST 3: The estimator suite writes its loss report next to verify.json
        TESTS: verify with the estimators suite
        """
        config = {'verify': {'suites': ['estimators'], 'instances': 2, 'replications': 1000}}
        self.run_command('verify', config)
        with open(self.root / 'out' / 'loss_report.csv') as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(tuple(rows[0]), LossReport.HEADER)
        names = [row[0] for row in rows[1:]]
        self.assertIn('consis_mc', names)
        self.assertIn('consis_cv', names)
        self.assertEqual(len(names), 8)


class SampleCommandTest(CommandTestCase):
    """
    Test the sample command

    FUNCTIONALITY: Sample files, dense output and reproducibility
    """

    def test_zero_count(self):
        """
        TEST 1: count = 0 writes the header only
        TESTS: sample
        """
        self.run_command('sample', {'sample': {'count': 0}})
        self.assertEqual((self.root / 'out' / 'samples.csv').read_text(), 'chain,index,x1,x2\n')

    def test_same_seed_same_bytes(self):
        """
        TEST 2: Reruns with one seed produce identical sample files
        TESTS: sample with --seed
        """
        config = {'sample': {'count': 300}}
        self.run_command('sample', config, out='first', seed=7)
        self.run_command('sample', config, out='second', seed=7)
        self.assertEqual((self.root / 'first' / 'samples.csv').read_bytes(),
                         (self.root / 'second' / 'samples.csv').read_bytes())

    def test_dense_json_summary(self):
        """
        TEST 3: --json prints the machine-readable report
        TESTS: sample with dense output
        """
        output = self.run_command('sample', {'sample': {'dense': True}}, json=True)
        report = json.loads(output)
        self.assertEqual(report['exit_code'], 0)
        self.assertEqual(report['command'], 'sample')
        self.assertTrue((self.root / 'out' / 'distribution.csv').exists())
        self.assertGreaterEqual(report['summary']['tv_to_data'], 0.0)
        self.assertAlmostEqual(report['summary']['data_total_correlation'], math.log(2))
        self.assertGreaterEqual(report['summary']['total_correlation'], -1e-12)

    def test_confidence_sampling(self):
        """
        TEST 4: Masked generation unmasks every coordinate
        TESTS: sample with the confidence sampler
        """
        config = {
            'space': {'cardinality': 3, 'num_dims': 3},
            'forward': {'kind': 'masked'},
            'data': {'preset': 'masked-pairs'},
            'grid': {'steps': 3},
            'sample': {'sampler': 'confidence', 'count': 100, 'w_cfg': 0.5},
        }
        self.run_command('sample', config)
        summary = ExperimentRun.objects.get().summary
        self.assertTrue(summary['checks']['fully_unmasked'])
        self.assertEqual(len(summary['mask_sigma']), 3)
        self.assertEqual(summary['mask_sigma'][0], 0.0)
