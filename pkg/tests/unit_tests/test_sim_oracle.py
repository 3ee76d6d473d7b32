import numpy as np
import numpy.testing as npt
from unittest import TestCase
from dtd_exact.exceptions import PathBudgetError
from dtd_exact.model.mdp import make_mdp, make_network
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.model.dynamics import mean_dynamics
from dtd_exact.analysis.moments import error_trajectory
from dtd_exact.sim.oracle import enumerate_paths, enumerate_error
from ..integration_tests.test_cli import load_fixture, three_state_scenario


class TestPathEnumeration(TestCase):

    def test_enumerate_paths(self):
        paths = enumerate_paths(2, 3)
        assert paths.shape == (8, 3)
        npt.assert_array_equal(paths[0], [0, 0, 0])
        npt.assert_array_equal(paths[1], [0, 0, 1])
        npt.assert_array_equal(paths[-1], [1, 1, 1])
        assert len({tuple(p) for p in enumerate_paths(3, 4)}) == 81

    def test_fixtures_match_recursion(self):
        for name in ('e1', 'e2'):
            scenario = load_fixture(name)
            theta0 = np.ones((1, 2))
            exact = error_trajectory(scenario.mdp, scenario.net, 0.1, theta0, 8, scenario.initial_state_dist)
            oracle = enumerate_error(scenario.mdp, scenario.net, 0.1, theta0, 8, scenario.initial_state_dist)
            npt.assert_allclose(oracle, exact.deltas, rtol=1e-10, atol=1e-12)

    def test_fixture_grid_matches_recursion(self):
        for name in ('e1', 'e2'):
            scenario = load_fixture(name)
            mu0 = scenario.initial_state_dist
            theta_star = mean_dynamics(scenario.mdp, build_jump_chain(scenario.mdp, mu0)).theta_star_block
            for alpha in (0.05, 0.1):
                for theta0 in (theta_star, np.ones((1, 2))):
                    args = (scenario.mdp, scenario.net, alpha, theta0, 6, mu0)
                    exact = error_trajectory(*args).deltas
                    npt.assert_allclose(enumerate_error(*args), exact, rtol=1e-10, atol=1e-12,
                                        err_msg=f'{name} alpha={alpha} theta0={theta0.tolist()}')

    def test_three_state_matches_recursion(self):
        scenario = three_state_scenario()
        args = (scenario.mdp, scenario.net, 0.1, scenario.theta0, 6, scenario.initial_state_dist)
        npt.assert_allclose(enumerate_error(*args), error_trajectory(*args).deltas, rtol=1e-10, atol=1e-12)

    def test_unreachable_transitions(self):
        e1 = load_fixture('e1')
        mdp = make_mdp([[0.5, 0.5], [1.0, 0.0]], e1.mdp.rewards, e1.mdp.discount, e1.mdp.features)
        args = (mdp, e1.net, 0.2, np.array([[1.0, -1.0]]), 7, None)
        npt.assert_allclose(enumerate_error(*args), error_trajectory(*args).deltas, rtol=1e-10, atol=1e-12)

    def test_single_agent_matches_recursion(self):
        e2 = load_fixture('e2').mdp
        mdp = make_mdp(e2.transition, e2.rewards[1:], e2.discount, e2.features)
        net = make_network([[1.0]])
        args = (mdp, net, 0.2, np.array([[0.5]]), 8, [0.3, 0.7])
        npt.assert_allclose(enumerate_error(*args), error_trajectory(*args).deltas, rtol=1e-10, atol=1e-12)

    def test_path_budget(self):
        scenario = three_state_scenario()
        with self.assertRaises(PathBudgetError):
            enumerate_error(scenario.mdp, scenario.net, 0.1, scenario.theta0, 20)
        with self.assertRaises(PathBudgetError):
            enumerate_error(scenario.mdp, scenario.net, 0.1, scenario.theta0, 6, budget=100)
