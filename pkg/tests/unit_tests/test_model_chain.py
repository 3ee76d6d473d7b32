import numpy as np
import numpy.testing as npt
from unittest import TestCase, mock
from dtd_exact.exceptions import ReducibleChainError, StructuralError
from dtd_exact.model.chain import (stationary_distribution, stationary_by_power_iteration, mixing_rate,
                                   pair_transition, build_jump_chain, check_distribution)
from ..integration_tests.test_cli import load_fixture, three_state_scenario

P3 = np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]])


class TestChain(TestCase):

    def test_stationary_distribution(self):
        pi = stationary_distribution(P3)
        npt.assert_allclose(pi @ P3, pi, atol=1e-12)
        npt.assert_allclose(pi.sum(), 1, atol=1e-15)
        assert np.all(pi > 0)
        npt.assert_allclose(stationary_by_power_iteration(P3), pi, atol=1e-12)

        npt.assert_allclose(stationary_distribution([[0.5, 0.5], [1.0, 0.0]]), [2 / 3, 1 / 3], atol=1e-12)

    def test_stationary_distribution_rejects_bad_chains(self):
        with self.assertRaises(ReducibleChainError):
            stationary_distribution(np.eye(2))
        with self.assertRaises(ReducibleChainError):
            stationary_distribution([[0, 1], [1, 0]])
        # absorbing state: unique stationary law but not positive
        with self.assertRaises(ReducibleChainError):
            stationary_distribution([[1.0, 0.0], [0.5, 0.5]])
        npt.assert_allclose(stationary_distribution([[1.0, 0.0], [0.5, 0.5]], require_positive=False),
                            [1, 0], atol=1e-12)

    def test_stationary_distribution_unmet_residual(self):
        # slow chain: 1000 refinement steps cannot repair a poor eigenvector
        slow = np.array([[1 - 1e-6, 1e-6], [1e-6, 1 - 1e-6]])
        skewed = (np.array([1.0, 1 - 2e-6]), np.array([[0.9, 1.0], [0.1, -1.0]]))
        with mock.patch('scipy.linalg.eig', return_value=skewed):
            with self.assertRaises(ReducibleChainError):
                stationary_distribution(slow)
        npt.assert_allclose(stationary_distribution(slow), [0.5, 0.5], atol=1e-12)

    def test_power_iteration_cap(self):
        with self.assertRaises(ReducibleChainError):
            stationary_by_power_iteration([[0, 1], [1, 0]], start=[1, 0], max_iter=50)

    def test_mixing_rate(self):
        npt.assert_allclose(mixing_rate(P3), (0.3 + np.sqrt(0.13)) / 2, atol=1e-12)
        npt.assert_allclose(mixing_rate([[0.9, 0.1], [0.1, 0.9]]), 0.8, atol=1e-12)
        npt.assert_allclose(mixing_rate([[0.5, 0.5], [0.5, 0.5]]), 0, atol=1e-12)
        assert mixing_rate([[1.0]]) == 0

    def test_pair_transition(self):
        Pz = pair_transition(P3)
        S = 3
        assert Pz.shape == (9, 9)
        npt.assert_allclose(Pz.sum(axis=1), 1, atol=1e-15)
        for s in range(S):
            for s1 in range(S):
                for t in range(S):
                    for t1 in range(S):
                        expected = P3[t, t1] if s1 == t else 0
                        assert Pz[s * S + s1, t * S + t1] == expected

        # nonzero spectrum of the pair chain is the spectrum of P
        vals = np.linalg.eigvals(Pz)
        vals = np.sort_complex(vals[np.abs(vals) > 1e-6])
        npt.assert_allclose(vals, np.sort_complex(np.linalg.eigvals(P3)), atol=1e-6)

    def test_jump_chain_e1(self):
        chain = build_jump_chain(load_fixture('e1').mdp, [1.0, 0.0])
        assert chain.num_modes == 4
        npt.assert_allclose(chain.initial, [0.5, 0.5, 0, 0])
        npt.assert_allclose(chain.stationary, [0.25] * 4, atol=1e-12)
        npt.assert_allclose(chain.mixing_rate, 0, atol=1e-12)
        npt.assert_allclose(chain.marginal(1), [0.25] * 4, atol=1e-15)
        assert chain.mode_index(1, 0) == 2
        assert chain.mode_pair(3) == (1, 1)

    def test_jump_chain_product_form(self):
        mdp = three_state_scenario().mdp
        chain = build_jump_chain(mdp)
        pi = stationary_distribution(P3)

        npt.assert_allclose(chain.stationary, (pi[:, None] * P3).ravel(), atol=1e-12)
        npt.assert_allclose(chain.stationary @ chain.transition, chain.stationary, atol=1e-12)
        npt.assert_allclose(chain.initial, (np.full(3, 1 / 3)[:, None] * P3).ravel())
        npt.assert_allclose(chain.state_stationary, pi, atol=1e-12)

        gaps = [chain.mixing_gap(k) for k in range(30)]
        assert gaps[-1] < 1e-12
        rho = chain.mixing_rate
        assert all(g <= 2 * (rho + 0.05) ** k for k, g in enumerate(gaps))

    def test_unreachable_modes(self):
        mdp = load_fixture('e1').mdp
        mdp = type(mdp)(np.array([[0.5, 0.5], [1.0, 0.0]]), mdp.rewards, mdp.discount, mdp.features)
        chain = build_jump_chain(mdp)
        npt.assert_allclose(chain.stationary, [1 / 3, 1 / 3, 1 / 3, 0], atol=1e-12)
        assert chain.stationary[3] == 0

    def test_check_distribution(self):
        npt.assert_array_equal(check_distribution([0.25, 0.75], 2), [0.25, 0.75])
        with self.assertRaises(StructuralError):
            check_distribution([0.5, 0.6], 2)
        with self.assertRaises(StructuralError):
            check_distribution([1.0], 2)
        with self.assertRaises(StructuralError):
            check_distribution([1.5, -0.5], 2)
        with self.assertRaises(StructuralError):
            build_jump_chain(load_fixture('e1').mdp, [0.3, 0.3])
