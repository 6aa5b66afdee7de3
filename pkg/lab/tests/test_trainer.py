"""
Tests for the distillation trainer
"""

from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from lab.denoisers import TimeGrid, fit_product_to_oracle, mixture_from_product
from lab.di4c_losses import LossConfig
from lab.dist_core import tv_distance
from lab.exceptions import ArgumentError
from lab.trainer import (
    Mode, SampledTimes, TimeSampling, TrainConfig, check_gradient, iterated_di4c, one_step_tv, sample_times,
    teacher_output, total_objective, train,
)

from .test_posterior_oracle import two_bit_context


class TrainConfigTest(SimpleTestCase):
    """
    Test TrainConfig and sample_times

    FUNCTIONALITY: Optimizer settings and the time sampling laws
    """

    def test_invalid_config(self):
        """
        TEST 1: Bad optimizer settings are rejected
        TESTS: TrainConfig validation
        """
        for bad in ({'learning_rate': 0.0}, {'iterations': -1}, {'rounds': 0}, {'delta_band': (0.02, 0.01)},
                    {'momentum': 1.0}, {'time_sampling': 'grid'}, {'mode': 'mixed'}):
            with self.subTest(bad=bad), self.assertRaises(ArgumentError):
                TrainConfig(**bad)

    def test_sweep_times(self):
        """
        TEST 2: The sweep visits every grid step once, starting with u = 0
        TESTS: sample_times with TimeSampling.SWEEP
        """
        grid = TimeGrid.uniform(4)
        points = sample_times(grid, TrainConfig(time_sampling=TimeSampling.SWEEP), np.random.default_rng(0))
        self.assertEqual([(p.u, p.t) for p in points], [(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)])

    def test_random_times_on_grid(self):
        """
        TEST 3: Random draws snap to grid points with 0 <= u < t
        TESTS: sample_times with TimeSampling.RANDOM
        """
        grid = TimeGrid.uniform(8)
        rng = np.random.default_rng(1)
        for cfg in (TrainConfig(), TrainConfig(loss=LossConfig(objective='gated'))):
            for _ in range(50):
                (point,) = sample_times(grid, cfg, rng)
                self.assertIn(point.t, grid.times)
                self.assertIn(point.u, grid.times)
                self.assertIn(point.delta, grid.times)
                self.assertLess(point.u, point.t)
                self.assertGreater(point.delta, 0.0)


class TrainingTest(SimpleTestCase):
    """
    Test train and iterated_di4c

    FUNCTIONALITY: Gradient correctness, descent and reproducibility
    """

    def setUp(self):
        self.ctx = two_bit_context()
        self.teacher = fit_product_to_oracle(self.ctx, TimeGrid.uniform(4))
        self.student = mixture_from_product(self.teacher, 2, 0.5, np.random.default_rng(4), train_weights=True)

    def test_gradient_matches_finite_differences(self):
        """
        TEST 1: Analytic and central-difference gradients agree for both objective forms
        TESTS: check_gradient, total_objective
        """
        points = [SampledTimes(0.25, 0.0, 0.25), SampledTimes(0.25, 0.5, 1.0)]
        for objective in ('standard', 'gated'):
            cfg = TrainConfig(loss=LossConfig(objective=objective, alpha='linear'))
            with self.subTest(objective=objective):
                self.assertLess(check_gradient(self.student, self.teacher, self.ctx, cfg, points), 1e-5)

    def test_gated_distillation_weight(self):
        """
        TEST 2: Under the sweep law the gated u = 0 term carries weight one
        TESTS: total_objective
        """
        point = [SampledTimes(0.25, 0.0, 0.25)]
        sweep = TrainConfig(time_sampling=TimeSampling.SWEEP, loss=LossConfig(objective='gated', alpha='zero'))
        _, _, terms = total_objective(self.student, self.teacher, self.ctx, sweep, point, with_grad=False)
        random = replace(sweep, time_sampling=TimeSampling.RANDOM)
        _, _, scaled = total_objective(self.student, self.teacher, self.ctx, random, point, with_grad=False)
        self.assertGreater(terms['distil'], 0.0)
        self.assertAlmostEqual(scaled['distil'], 4.0 * terms['distil'])
        self.assertEqual(terms['consis'], 0.0)

    def test_training_decreases_objective(self):
        """
        TEST 3: Deterministic sweeps reduce the objective
        TESTS: train
        """
        cfg = TrainConfig(learning_rate=0.1, iterations=40, time_sampling=TimeSampling.SWEEP)
        trained, trace = train(self.student, self.teacher, self.ctx, cfg)
        self.assertEqual(len(trace.losses), 40)
        self.assertLess(trace.losses[-1], trace.losses[0])
        self.assertEqual(trace.final.iteration, 40)
        self.assertFalse(np.array_equal(trained.logits, self.student.logits))

    def test_zero_iterations(self):
        """
        TEST 4: Zero iterations return the initialization and one evaluation
        TESTS: train
        """
        trained, trace = train(self.student, self.teacher, self.ctx, TrainConfig(iterations=0))
        np.testing.assert_array_equal(trained.logits, self.student.logits)
        self.assertEqual(trace.losses, [])
        self.assertEqual(len(trace.evals), 1)

    def test_seed_is_reproducible(self):
        """
        TEST 5: Same seed, same parameters in stochastic mode
        TESTS: train with Mode.STOCHASTIC
        """
        cfg = TrainConfig(iterations=5, mode=Mode.STOCHASTIC, seed=9, loss=LossConfig(samples=8))
        first, _ = train(self.student, self.teacher, self.ctx, cfg)
        second, _ = train(self.student, self.teacher, self.ctx, cfg)
        np.testing.assert_array_equal(first.logits, second.logits)
        np.testing.assert_array_equal(first.weight_logits, second.weight_logits)

    def test_rounds(self):
        """
        TEST 6: Each round yields its own trace
        TESTS: iterated_di4c
        """
        cfg = TrainConfig(iterations=3, rounds=2, time_sampling=TimeSampling.SWEEP)
        _, traces = iterated_di4c(self.student, self.teacher, self.ctx, cfg)
        self.assertEqual(len(traces), 2)
        self.assertTrue(all(len(trace.losses) == 3 for trace in traces))


class DistillationOutcomeTest(SimpleTestCase):
    """
    Test a full distillation run on correlated two-bit data

    FUNCTIONALITY: A trained mixture student beats the teacher's single step
    """

    def test_one_step_student_matches_many_step_teacher(self):
        """
        TEST 1: The student's 1-step TV is below the teacher's 1-step TV and within 0.02 of its 8-step TV
        TESTS: train, one_step_tv, teacher_output
        """
        ctx = two_bit_context()
        teacher = fit_product_to_oracle(ctx, TimeGrid.uniform(8))
        student = mixture_from_product(teacher, 4, 0.5, np.random.default_rng(0), train_weights=True)
        cfg = TrainConfig(learning_rate=0.5, iterations=2000, time_sampling=TimeSampling.SWEEP)
        trained, _ = train(student, teacher, ctx, cfg)

        teacher_one_step = one_step_tv(teacher, ctx, ctx.q0)
        teacher_steps = tv_distance(ctx.q0, teacher_output(teacher, ctx))
        student_one_step = one_step_tv(trained, ctx, ctx.q0)
        self.assertLess(student_one_step, teacher_one_step)
        self.assertLessEqual(student_one_step, teacher_steps + 0.02)
