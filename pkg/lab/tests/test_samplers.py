"""
Tests for ancestral, tau-leaping and confidence-based samplers
"""

import numpy as np
from django.test import SimpleTestCase

from lab.denoisers import TimeGrid, fit_product_to_oracle
from lab.dist_core import JointDistribution, StateSpace, tv_distance
from lab.exceptions import ArgumentError, CapabilityError
from lab.forward_process import FactorizedForward, Masked, MaskSchedule
from lab.posterior_oracle import PosteriorContext, analytical_denoiser_kernel, reverse_rate
from lab.samplers import (
    CfgConfig, ancestral_sample, ancestral_sample_model, cfg_combine, confidence_sample, confidence_sample_step,
    empirical_distribution, tau_leap_distribution, tau_leap_kernel, unmask_schedule,
)
from lab.theory_harness import analytical_output

from .test_posterior_oracle import two_bit_context


def masked_context(num_dims=3):
    space = StateSpace(3, num_dims)
    fwd = FactorizedForward(space, Masked(3, MaskSchedule()), 1.0)
    q0 = np.zeros(space.size)
    q0[space.index((0,) * num_dims)] = 0.5
    q0[space.index((1,) * num_dims)] = 0.5
    return PosteriorContext(fwd, JointDistribution(space, q0))


class AncestralSamplerTest(SimpleTestCase):
    """
    Test ancestral_sample and ancestral_sample_model

    FUNCTIONALITY: Chains follow the step kernels; blocks are seeded independently
    """

    def setUp(self):
        self.ctx = two_bit_context()
        self.grid = TimeGrid.uniform(4)
        times = self.grid.times
        self.kernels = [analytical_denoiser_kernel(self.ctx, times[n - 1], times[n]) for n in range(1, 5)]
        self.prior = self.ctx.marginal(1.0)

    def test_empirical_law_matches_dense(self):
        """
        TEST 1: Sampled outputs approach the exact output law
        TESTS: ancestral_sample
        """
        dense = ancestral_sample(self.kernels, self.prior, 0, 0, dense=True).distribution
        run = ancestral_sample(self.kernels, self.prior, 20_000, 1)
        self.assertEqual(run.trajectory.shape, (5, 20_000))
        self.assertLess(tv_distance(dense, empirical_distribution(self.ctx.space, run.final)), 0.03)

    def test_dense_mode_is_composition(self):
        """
        TEST 2: Dense mode pushes the prior through the composed kernels
        TESTS: ancestral_sample with dense=True
        """
        dense = ancestral_sample(self.kernels, self.prior, 0, 0, self.grid.times, dense=True)
        np.testing.assert_allclose(
            dense.distribution.probs, analytical_output(self.ctx, self.grid.times).probs, atol=1e-10,
        )

    def test_threads_do_not_change_samples(self):
        """
        TEST 3: Per-block seeding makes the output independent of the worker count
        TESTS: ancestral_sample with threads
        """
        single = ancestral_sample(self.kernels, self.prior, 10_000, 5, threads=1)
        pooled = ancestral_sample(self.kernels, self.prior, 10_000, 5, threads=3)
        np.testing.assert_array_equal(single.trajectory, pooled.trajectory)

    def test_zero_chains(self):
        """
        TEST 4: count = 0 yields an empty trajectory
        TESTS: ancestral_sample, empirical_distribution
        """
        run = ancestral_sample(self.kernels, self.prior, 0, 0)
        self.assertEqual(run.count, 0)
        self.assertEqual(run.trajectory.shape, (5, 0))
        with self.assertRaises(ArgumentError):
            empirical_distribution(self.ctx.space, run.final)

    def test_model_sampling_reproducible(self):
        """
        TEST 5: A fixed seed reproduces model chains; argmax_final is deterministic per state
        TESTS: ancestral_sample_model
        """
        teacher = fit_product_to_oracle(self.ctx, self.grid)
        first = ancestral_sample_model(teacher, self.ctx, self.prior, 500, 8)
        second = ancestral_sample_model(teacher, self.ctx, self.prior, 500, 8)
        np.testing.assert_array_equal(first.trajectory, second.trajectory)
        greedy = ancestral_sample_model(teacher, self.ctx, self.prior, 500, 8, argmax_final=True)
        np.testing.assert_array_equal(greedy.trajectory[1:], first.trajectory[1:])


class TauLeapTest(SimpleTestCase):
    """
    Test tau-leaping

    FUNCTIONALITY: One-step jump laws from the reverse rate
    """

    def setUp(self):
        self.ctx = two_bit_context()

    def test_kernel_is_stochastic(self):
        """
        TEST 1: Each column is a distribution and eps = 0 stays put
        TESTS: tau_leap_kernel
        """
        rate = reverse_rate(self.ctx, 0.5)
        kernel = tau_leap_kernel(rate, self.ctx.space, 0.1)
        np.testing.assert_allclose(kernel.matrix.sum(axis=0), 1.0, atol=1e-12)
        self.assertTrue(np.all(kernel.matrix >= 0.0))
        np.testing.assert_array_equal(tau_leap_kernel(rate, self.ctx.space, 0.0).matrix, np.eye(4))

    def test_small_step_is_first_order(self):
        """
        TEST 2: For small eps the one-step law is I + eps R up to O(eps^2)
        TESTS: tau_leap_kernel
        """
        rate = reverse_rate(self.ctx, 0.5)
        eps = 1e-3
        kernel = tau_leap_kernel(rate, self.ctx.space, eps)
        np.testing.assert_allclose(kernel.matrix, np.eye(4) + eps * rate.matrix, atol=1e-4)

    def test_distribution_is_normalized(self):
        """
        TEST 3: The exact tau-leap output law is a distribution on the state space
        TESTS: tau_leap_distribution
        """
        law = tau_leap_distribution(self.ctx, TimeGrid.uniform(50).times)
        self.assertAlmostEqual(law.probs.sum(), 1.0, places=10)

    def test_masked_process_has_no_rate(self):
        """
        TEST 4: Masked processes are rejected
        TESTS: tau_leap_distribution
        """
        with self.assertRaises(CapabilityError):
            tau_leap_distribution(masked_context(2), TimeGrid.uniform(4).times)


class ConfidenceSamplerTest(SimpleTestCase):
    """
    Test masked generation

    FUNCTIONALITY: Unmasking schedules, Gumbel confidence and guidance
    """

    def test_unmask_schedule(self):
        """
        TEST 1: Counts sum to D with at least one token per step
        TESTS: unmask_schedule
        """
        self.assertEqual(unmask_schedule(4, MaskSchedule(), TimeGrid.uniform(2)).counts, (2, 2))
        arccos = unmask_schedule(4, MaskSchedule(MaskSchedule.Kind.ARCCOS), TimeGrid.uniform(4))
        self.assertEqual(arccos.total, 4)
        self.assertTrue(all(n >= 1 for n in arccos.counts))
        with self.assertRaises(ArgumentError):
            unmask_schedule(2, MaskSchedule(), TimeGrid.uniform(3))

    def test_confidence_ties_go_to_lowest_dimension(self):
        """
        TEST 2: Without Gumbel noise equal confidences unmask dimension 0 first
        TESTS: confidence_sample_step
        """
        probs = np.full((1, 3, 3), 0.5)
        x_t = np.full((1, 3), 2)
        out = confidence_sample_step(probs, x_t, 1, 0.0, np.random.default_rng(0), mask_index=2)
        self.assertNotEqual(out[0, 0], 2)
        np.testing.assert_array_equal(out[0, 1:], [2, 2])

    def test_fully_unmasked(self):
        """
        TEST 3: Generation ends with no MASK tokens, with and without guidance
        TESTS: confidence_sample
        """
        ctx = masked_context()
        teacher = fit_product_to_oracle(ctx, TimeGrid.uniform(3))
        for guidance in (None, CfgConfig(1.0, teacher)):
            with self.subTest(guidance=guidance is not None):
                run = confidence_sample(teacher, ctx.fwd, 200, 3, guidance)
                self.assertTrue(np.all(ctx.space.digits[run.final] != 2))
                self.assertTrue(np.all(ctx.space.digits[run.trajectory[-1]] == 2))

    def test_cfg_without_weight(self):
        """
        TEST 4: w = 0 returns the conditional probabilities
        TESTS: cfg_combine
        """
        cond = np.array([[0.2, 0.8], [0.6, 0.4]])
        np.testing.assert_allclose(cfg_combine(cond, np.array([[0.5, 0.5], [0.9, 0.1]]), 0.0), cond)

    def test_requires_masked_forward(self):
        """
        TEST 5: Uniform processes cannot drive masked generation
        TESTS: confidence_sample
        """
        ctx = two_bit_context()
        teacher = fit_product_to_oracle(ctx, TimeGrid.uniform(2))
        with self.assertRaises(CapabilityError):
            confidence_sample(teacher, ctx.fwd, 10, 0)
