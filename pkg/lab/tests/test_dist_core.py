"""
Tests for dense distributions and kernels
"""

import math

import numpy as np
from django.test import SimpleTestCase

from lab.dist_core import (
    DenseKernel, JointDistribution, StateSpace, compose, cross_entropy, entropy, kl_divergence,
    marginal, product_distribution, push, random_distribution, random_kernel, sample_states,
    total_correlation, tv_distance,
)
from lab.exceptions import ArgumentError, DistributionValidationError


class StateSpaceTest(SimpleTestCase):
    """
    Test StateSpace

    FUNCTIONALITY: Big-endian indexing of S^D
    """

    def setUp(self):
        self.space = StateSpace(3, 2)

    def test_index_is_big_endian(self):
        """
        TEST 1: Dimension 1 is the most significant digit
        TESTS: index / state round trip
        """
        self.assertEqual(self.space.index((1, 2)), 5)
        self.assertEqual(self.space.state(5), (1, 2))
        self.assertEqual(self.space.digits.shape, (9, 2))

    def test_rejects_bad_coordinates(self):
        """
        TEST 2: Out-of-range coordinates and dimensions raise ArgumentError
        TESTS: Argument validation
        """
        with self.assertRaises(ArgumentError):
            self.space.index((3, 0))
        with self.assertRaises(ArgumentError):
            self.space.axis(3)

    def test_too_many_states(self):
        """
        TEST 3: |S|^D above the configured maximum is refused
        TESTS: Dense feasibility guard
        """
        with self.assertRaises(ArgumentError):
            StateSpace(4, 8, max_states=1000)


class DistributionTest(SimpleTestCase):
    """
    Test JointDistribution and DenseKernel

    FUNCTIONALITY: Validation and the distances between distributions
    """

    def setUp(self):
        self.space = StateSpace(2, 2)
        self.rng = np.random.default_rng(0)

    def test_unnormalized_distribution_rejected(self):
        """
        TEST 1: Probabilities that do not sum to 1 raise a validation error
        TESTS: JointDistribution validation
        """
        with self.assertRaises(DistributionValidationError):
            JointDistribution(self.space, [0.5, 0.5, 0.5, 0.0])
        with self.assertRaises(DistributionValidationError):
            JointDistribution(self.space, [1.5, -0.5, 0.0, 0.0])

    def test_non_stochastic_kernel_rejected(self):
        """
        TEST 2: A kernel column that does not sum to 1 is rejected
        TESTS: DenseKernel validation
        """
        matrix = np.eye(4)
        matrix[0, 1] = 0.5
        with self.assertRaises(DistributionValidationError):
            DenseKernel(self.space, matrix)

    def test_kl_is_infinite_off_support(self):
        """
        TEST 3: KL(p || q) is +inf when p charges a state q does not
        TESTS: kl_divergence, cross_entropy
        """
        p = JointDistribution.uniform(self.space)
        q = JointDistribution.delta(self.space, 0)
        self.assertTrue(math.isinf(kl_divergence(p, q)))
        self.assertAlmostEqual(kl_divergence(q, p), math.log(4), places=12)
        self.assertAlmostEqual(cross_entropy(p, p), entropy(p), places=12)

    def test_tv_and_marginals(self):
        """
        TEST 4: TV of disjoint deltas is 1 and marginals sum the other axes
        TESTS: tv_distance, marginal
        """
        a = JointDistribution.delta(self.space, (0, 0))
        b = JointDistribution.delta(self.space, (1, 1))
        self.assertEqual(tv_distance(a, b), 1.0)
        mix = JointDistribution(self.space, [0.5, 0.0, 0.0, 0.5])
        np.testing.assert_allclose(marginal(mix, 1), [0.5, 0.5])
        np.testing.assert_allclose(marginal(mix, 2), [0.5, 0.5])

    def test_total_correlation(self):
        """
        TEST 5: Product distributions have no total correlation, correlated pairs log 2
        TESTS: total_correlation, product_distribution
        """
        product = product_distribution(self.space, [[0.3, 0.7], [0.6, 0.4]])
        self.assertAlmostEqual(total_correlation(product), 0.0, places=12)
        mix = JointDistribution(self.space, [0.5, 0.0, 0.0, 0.5])
        self.assertAlmostEqual(total_correlation(mix), math.log(2), places=12)

    def test_compose_and_push(self):
        """
        TEST 6: push(A o B, p) equals push(A, push(B, p))
        TESTS: compose, push
        """
        a, b = random_kernel(self.space, self.rng), random_kernel(self.space, self.rng)
        p = random_distribution(self.space, self.rng)
        np.testing.assert_allclose(push(compose(a, b), p).probs, push(a, push(b, p)).probs, atol=1e-14)

    def test_sample_states_matches_distribution(self):
        """
        TEST 7: Inverse-CDF draws follow p and never hit zero-mass states
        TESTS: sample_states
        """
        p = JointDistribution(self.space, [0.1, 0.0, 0.6, 0.3])
        draws = sample_states(p, self.rng, 20_000)
        counts = np.bincount(draws, minlength=4) / 20_000
        self.assertEqual(counts[1], 0.0)
        np.testing.assert_allclose(counts, p.probs, atol=0.02)
