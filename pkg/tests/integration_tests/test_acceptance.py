import numpy as np
import numpy.testing as npt
from unittest import TestCase
from dtd_exact.exceptions import MomentBlowupError, SizeGuardError
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.model.dynamics import mean_dynamics
from dtd_exact.analysis.mjls import build_modes, assemble_lti
from dtd_exact.analysis.moments import error_trajectory, steady_state
from dtd_exact.analysis.spectral import spectrum_report, alpha_sweep, critical_step_size
from dtd_exact.sim.td import monte_carlo_error
from dtd_exact.sim.oracle import enumerate_error
from dtd_exact.helpers.wrappers import z_scores
from .test_cli import load_fixture


def e1_system(alpha, size_guard=5000):
    e1 = load_fixture('e1')
    chain = build_jump_chain(e1.mdp, e1.initial_state_dist)
    dynamics = mean_dynamics(e1.mdp, chain)
    modes = build_modes(e1.mdp, e1.net, chain, alpha, dynamics)
    return e1, chain, dynamics, modes, assemble_lti(modes, chain, size_guard)


class AcceptanceTests(TestCase):

    def test_e1_fixture_values(self):
        e1, chain, dynamics, modes, _ = e1_system(0.1)
        npt.assert_allclose(chain.initial, [0.5, 0.5, 0, 0])
        npt.assert_allclose(chain.stationary, [0.25] * 4, atol=1e-12)
        npt.assert_allclose(dynamics.a_bar, [[-1]], atol=1e-12)
        npt.assert_allclose(dynamics.theta_star, [0], atol=1e-12)
        npt.assert_allclose(modes.g_modes[:, 0], [0.1, 0.1, -0.1, -0.1], atol=1e-15)

        traj = error_trajectory(e1.mdp, e1.net, 0.1, np.zeros((1, 2)), 1, e1.initial_state_dist)
        npt.assert_allclose(traj.deltas, [0, 0.005], atol=1e-15)

    def test_e1_spectrum_at_small_step(self):
        _, chain, dynamics, _, lti = e1_system(0.05)
        report = spectrum_report(lti, chain, dynamics, 0.05)
        assert abs(report.sr_h22 - 0.9) <= 0.01
        assert abs(report.sr_h11 - 0.95) <= 0.005
        assert report.stable

    def test_monte_carlo_agrees_with_exact(self):
        e1 = load_fixture('e1')
        horizon = 50
        exact = error_trajectory(e1.mdp, e1.net, 0.1, e1.theta0, horizon, e1.initial_state_dist).deltas

        # one reseed is allowed for an unlucky stream
        for seed in (0, 1):
            mc = monte_carlo_error(e1.mdp, e1.net, 0.1, e1.theta0, horizon, 100_000, seed,
                                   e1.initial_state_dist)
            steps = [1, 10, 50]
            diff = np.abs(mc.deltas_hat[steps] - exact[steps])
            if np.all(diff <= 4 * mc.stderrs[steps] + 1e-12):
                break
        else:
            self.fail(f'Monte Carlo estimate outside 4 standard errors at steps {steps}')

        z = z_scores(mc.deltas_hat, mc.stderrs, exact)
        assert np.mean(np.abs(z) <= 4) >= 0.99

    def test_oracle_agrees_with_recursion(self):
        e1 = load_fixture('e1')
        theta0 = np.array([[1.0, -0.5]])
        exact = error_trajectory(e1.mdp, e1.net, 0.1, theta0, 8, e1.initial_state_dist).deltas
        oracle = enumerate_error(e1.mdp, e1.net, 0.1, theta0, 8, e1.initial_state_dist)
        npt.assert_allclose(oracle, exact, rtol=1e-10, atol=1e-12)

    def test_size_guard(self):
        _, chain, dynamics, modes, lti = e1_system(0.1, size_guard=10)
        with self.assertRaises(SizeGuardError):
            spectrum_report(lti, chain, dynamics, 0.1)
        _, _, _, _, explicit = e1_system(0.1)
        npt.assert_allclose(steady_state(modes, chain, lti).delta_inf,
                            steady_state(modes, chain, explicit).delta_inf, atol=1e-10)

    def test_steady_state_limit(self):
        e1, chain, _, modes, lti = e1_system(0.1)
        ss = steady_state(modes, chain, lti)
        traj = error_trajectory(e1.mdp, e1.net, 0.1, np.ones((1, 2)), 2000, e1.initial_state_dist)
        assert abs(traj.deltas[-1] - ss.delta_inf) <= 1e-8

    def test_small_step_perturbation(self):
        e1 = load_fixture('e1')
        sweep = alpha_sweep(e1.mdp, e1.net, [0.02, 0.01, 0.005], e1.initial_state_dist)
        assert 0.9 <= sweep.loglog_slope <= 1.1

        for name, lam in (('e1', -1.0), ('e2', -1.375)):
            scenario = load_fixture(name)
            sweep = alpha_sweep(scenario.mdp, scenario.net, [0.02, 0.01, 0.005], scenario.initial_state_dist)
            npt.assert_allclose(sweep.lambda_maxre, lam, atol=1e-12)
            assert abs(sweep.h22_slope - 2 * lam) <= 0.05 * abs(2 * lam)
            assert abs(sweep.h11_slope - lam) <= 0.05 * abs(lam)

    def test_e2_loglog_slope_needs_smaller_steps(self):
        e2 = load_fixture('e2')
        # the second-order consensus term still bends the curve on the coarse grid
        with self.assertWarnsRegex(UserWarning, 'loglog_slope'):
            coarse = alpha_sweep(e2.mdp, e2.net, [0.02, 0.01, 0.005], e2.initial_state_dist)
        assert coarse.loglog_slope > 1.1
        assert not coarse.contracts['loglog_slope']

        fine = alpha_sweep(e2.mdp, e2.net, [0.0025, 0.00125, 0.000625], e2.initial_state_dist)
        assert 0.9 <= fine.loglog_slope <= 1.1
        assert all(fine.contracts.values())

    def test_stability_boundary(self):
        e1 = load_fixture('e1')
        alpha_crit = critical_step_size(e1.mdp, e1.net).alpha_crit
        npt.assert_allclose(alpha_crit, 2 / np.sqrt(5), atol=1e-6)

        traj = error_trajectory(e1.mdp, e1.net, 0.95 * alpha_crit, np.ones((1, 2)), 3000)
        assert np.all(np.isfinite(traj.deltas))
        with self.assertRaises(MomentBlowupError):
            error_trajectory(e1.mdp, e1.net, 1.05 * alpha_crit, np.ones((1, 2)), 100_000)
