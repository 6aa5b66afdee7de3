"""
Tests for factorized forward processes
"""

import math

import numpy as np
from django.test import SimpleTestCase

from lab.dist_core import StateSpace
from lab.exceptions import ArgumentError, CapabilityError, DistributionValidationError
from lab.forward_process import (
    FactorizedForward, Homogeneous, Masked, MaskSchedule, RateMatrix, RateSchedule, Scheduled,
    UniformClosedForm, joint_rate, joint_transition_kernel, mask_sigma, ordinal_rate,
    transition_matrix, uniform_rate,
)


class RateMatrixTest(SimpleTestCase):
    """
    Test RateMatrix builders

    FUNCTIONALITY: Generator validation
    """

    def test_uniform_and_ordinal_columns_sum_to_zero(self):
        """
        TEST 1: Built-in generators have zero column sums
        TESTS: uniform_rate, ordinal_rate
        """
        for rate in (uniform_rate(4), ordinal_rate(5, width=1.5)):
            np.testing.assert_allclose(rate.matrix.sum(axis=0), 0.0, atol=1e-12)

    def test_negative_off_diagonal_rejected(self):
        """
        TEST 2: Negative jump rates are invalid
        TESTS: RateMatrix validation
        """
        with self.assertRaises(DistributionValidationError):
            RateMatrix([[1.0, -1.0], [-1.0, 1.0]])


class ForwardProcessTest(SimpleTestCase):
    """
    Test FactorizedForward

    FUNCTIONALITY: Transition kernels of independent per-dimension chains
    """

    def setUp(self):
        self.space = StateSpace(2, 2)
        self.fwd = FactorizedForward(self.space, Homogeneous(uniform_rate(2)), 1.0)

    def test_chapman_kolmogorov(self):
        """
        TEST 1: q_{t|s} q_{s|0} = q_{t|0}
        TESTS: joint_transition_kernel
        """
        direct = joint_transition_kernel(self.fwd, 0.0, 0.7).matrix
        split = joint_transition_kernel(self.fwd, 0.3, 0.7).matrix @ joint_transition_kernel(self.fwd, 0.0, 0.3).matrix
        np.testing.assert_allclose(direct, split, atol=1e-12)

    def test_uniform_matches_closed_form(self):
        """
        TEST 2: Uniform rate 1/2 - delta decays as e^{-(t - s)}
        TESTS: Homogeneous against UniformClosedForm
        """
        closed = FactorizedForward(self.space, UniformClosedForm(), 1.0)
        np.testing.assert_allclose(
            transition_matrix(self.fwd, 1, 0.2, 0.9), transition_matrix(closed, 1, 0.2, 0.9), atol=1e-12,
        )
        self.assertAlmostEqual(transition_matrix(closed, 2, 0.0, 1.0)[0, 0], 0.5 * (1 + math.exp(-1)))

    def test_joint_rate_is_kronecker_sum(self):
        """
        TEST 3: The joint rate only moves one coordinate at a time
        TESTS: joint_rate
        """
        rate = joint_rate(self.fwd, 0.5)
        aa, bb = self.space.index((0, 0)), self.space.index((1, 1))
        self.assertEqual(rate[bb, aa], 0.0)
        np.testing.assert_allclose(rate.sum(axis=0), 0.0, atol=1e-12)

    def test_scheduled_uses_cumulative_rate(self):
        """
        TEST 4: A linear schedule integrates beta(t)
        TESTS: Scheduled, RateSchedule
        """
        schedule = RateSchedule(RateSchedule.Kind.LINEAR, 0.5, 1.5, 1.0)
        fwd = FactorizedForward(self.space, Scheduled(uniform_rate(2), schedule), 1.0)
        self.assertAlmostEqual(schedule.cumulative(1.0), 1.0)
        np.testing.assert_allclose(transition_matrix(fwd, 1, 0.0, 1.0), transition_matrix(self.fwd, 1, 0.0, 1.0))

    def test_times_must_be_ordered(self):
        """
        TEST 5: s > t and t > T are argument errors
        TESTS: check_times
        """
        with self.assertRaises(ArgumentError):
            transition_matrix(self.fwd, 1, 0.6, 0.5)
        with self.assertRaises(ArgumentError):
            transition_matrix(self.fwd, 1, 0.0, 1.5)


class MaskedProcessTest(SimpleTestCase):
    """
    Test absorbing diffusion

    FUNCTIONALITY: Masking schedules and MASK absorption
    """

    def setUp(self):
        self.space = StateSpace(3, 2)
        self.fwd = FactorizedForward(self.space, Masked(3, MaskSchedule()), 1.0)

    def test_mask_absorbs(self):
        """
        TEST 1: MASK stays MASK and a clean token is masked with probability m_t
        TESTS: Masked.transition
        """
        matrix = transition_matrix(self.fwd, 1, 0.0, 0.25)
        self.assertEqual(matrix[2, 2], 1.0)
        self.assertAlmostEqual(matrix[2, 0], 0.25)
        self.assertAlmostEqual(matrix[0, 0], 0.75)

    def test_schedules_hit_endpoints(self):
        """
        TEST 2: Every schedule goes from 0 to 1
        TESTS: MaskSchedule catalogue
        """
        for kind in MaskSchedule.Kind.CHOICES:
            schedule = MaskSchedule(kind)
            self.assertAlmostEqual(schedule(0.0), 0.0)
            self.assertEqual(schedule(1.0), 1.0)

    def test_no_rate_form(self):
        """
        TEST 3: Masked processes have no generator; sigma is -log(1 - m_t)
        TESTS: CapabilityError, mask_sigma
        """
        with self.assertRaises(CapabilityError):
            joint_rate(self.fwd, 0.5)
        self.assertAlmostEqual(mask_sigma(self.fwd, 0.5), math.log(2))
        self.assertTrue(math.isinf(mask_sigma(self.fwd, 1.0)))
