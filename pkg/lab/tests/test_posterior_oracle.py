"""
Tests for the exact reverse-time objects
"""

import numpy as np
from django.test import SimpleTestCase

from lab.dist_core import JointDistribution, StateSpace, column_marginals
from lab.exceptions import CapabilityError, ConditioningError
from lab.forward_process import FactorizedForward, Homogeneous, Masked, MaskSchedule, joint_rate, uniform_rate
from lab.posterior_oracle import (
    PosteriorContext, analytical_denoiser_kernel, local_error_ratios, posterior_marginal,
    reparametrized_factors, reverse_rate, true_posterior_kernel,
)


def two_bit_context(horizon=1.0):
    space = StateSpace(2, 2)
    fwd = FactorizedForward(space, Homogeneous(uniform_rate(2)), horizon)
    return PosteriorContext(fwd, JointDistribution(space, [0.5, 0.0, 0.0, 0.5]))


class PosteriorKernelTest(SimpleTestCase):
    """
    Test true_posterior_kernel

    FUNCTIONALITY: Bayes' rule on the dense state space
    """

    def setUp(self):
        self.ctx = two_bit_context()

    def test_posterior_maps_q_t_to_q_s(self):
        """
        TEST 1: sum_x q_{s|t}(. | x) q_t(x) = q_s
        TESTS: Posterior consistency
        """
        posterior = true_posterior_kernel(self.ctx, 0.3, 0.8)
        np.testing.assert_allclose(
            posterior.matrix @ self.ctx.marginal(0.8).probs, self.ctx.marginal(0.3).probs, atol=1e-14,
        )
        self.assertFalse(posterior.flagged)

    def test_posterior_is_memoized(self):
        """
        TEST 2: Repeated queries return the cached kernel
        TESTS: PosteriorContext.memo
        """
        self.assertIs(true_posterior_kernel(self.ctx, 0.0, 0.5), true_posterior_kernel(self.ctx, 0.0, 0.5))

    def test_one_dimension_product_is_exact(self):
        """
        TEST 3: With D = 1 the analytical denoiser is the true posterior
        TESTS: analytical_denoiser_kernel
        """
        space = StateSpace(3, 1)
        fwd = FactorizedForward(space, Homogeneous(uniform_rate(3)), 1.0)
        ctx = PosteriorContext(fwd, JointDistribution(space, [0.2, 0.5, 0.3]))
        np.testing.assert_allclose(
            analytical_denoiser_kernel(ctx, 0.1, 0.6).matrix, true_posterior_kernel(ctx, 0.1, 0.6).matrix,
            atol=1e-14,
        )

    def test_bridge_recovers_posterior_marginals(self):
        """
        TEST 4: Bridging the x_0 marginals to s gives the x_s marginals
        TESTS: bridge_operators, reparametrized_factors
        """
        x0 = column_marginals(self.ctx.space, true_posterior_kernel(self.ctx, 0.0, 0.7).matrix)
        expected = column_marginals(self.ctx.space, true_posterior_kernel(self.ctx, 0.4, 0.7).matrix)
        np.testing.assert_allclose(reparametrized_factors(x0, self.ctx, 0.4, 0.7), expected, atol=1e-13)

    def test_local_error_is_second_order(self):
        """
        TEST 5: One product step errs by O(eps^2)
        TESTS: local_error_ratios
        """
        ratios = local_error_ratios(self.ctx, 0.5, [1e-2, 5e-3, 2.5e-3], (0, 0))
        self.assertGreater(ratios.min(), 0.0)
        self.assertLess(ratios.max() / ratios.min(), 1.5)


class ZeroMassTest(SimpleTestCase):
    """
    Test conditioning on states of probability zero

    FUNCTIONALITY: Flagged columns and ConditioningError
    """

    def setUp(self):
        space = StateSpace(3, 2)
        fwd = FactorizedForward(space, Masked(3, MaskSchedule()), 1.0)
        q0 = np.zeros(9)
        q0[space.index((0, 0))] = q0[space.index((1, 1))] = 0.5
        self.ctx = PosteriorContext(fwd, JointDistribution(space, q0))
        self.dead = space.index((0, 1))

    def test_dead_columns_are_flagged(self):
        """
        TEST 1: Columns with q_t(x) = 0 hold q_s and are flagged
        TESTS: Posterior convention
        """
        posterior = true_posterior_kernel(self.ctx, 0.2, 0.5)
        self.assertIn(self.dead, posterior.flagged)
        np.testing.assert_allclose(posterior.matrix[:, self.dead], self.ctx.marginal(0.2).probs)

    def test_posterior_marginal_refuses_dead_state(self):
        """
        TEST 2: Conditioning on a zero-probability state raises
        TESTS: ConditioningError
        """
        with self.assertRaises(ConditioningError):
            posterior_marginal(self.ctx, 0.2, 0.5, self.dead, 1)

    def test_masked_has_no_reverse_rate(self):
        """
        TEST 3: The reverse rate needs a rate-form forward process
        TESTS: CapabilityError
        """
        with self.assertRaises(CapabilityError):
            reverse_rate(self.ctx, 0.5)


class ReverseRateTest(SimpleTestCase):
    """
    Test reverse_rate

    FUNCTIONALITY: Time-reversal generator R_t
    """

    def test_detailed_balance_form(self):
        """
        TEST 1: R_t(y, x) q_t(x) = Q_t(x, y) q_t(y) off the diagonal, zero column sums
        TESTS: reverse_rate
        """
        ctx = two_bit_context()
        t = 0.4
        rate = reverse_rate(ctx, t)
        forward = joint_rate(ctx.fwd, t)
        q_t = ctx.marginal(t).probs
        off = ~np.eye(4, dtype=bool)
        np.testing.assert_allclose((rate.matrix * q_t[None, :])[off], (forward.T * q_t[:, None])[off], atol=1e-14)
        np.testing.assert_allclose(rate.matrix.sum(axis=0), 0.0, atol=1e-14)
