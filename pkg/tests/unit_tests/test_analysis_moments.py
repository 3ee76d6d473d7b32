import numpy as np
import numpy.testing as npt
from unittest import TestCase
from dtd_exact.exceptions import (InsufficientDataError, MomentBlowupError, SizeGuardError, StructuralError,
                                  UnstableSystemError)
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.analysis.moments import (MomentState, init_moments, step_moments, run_moments,
                                        error_trajectory, lifted_trajectory, steady_state, rate_envelope)
from .test_analysis_mjls import lifted
from ..integration_tests.test_cli import load_fixture, three_state_scenario

ALPHA_CRIT_E1 = 2 / np.sqrt(5)


class TestMomentRecursion(TestCase):

    def test_init_moments(self):
        chain, dynamics, _, _ = lifted(load_fixture('e1'), 0.1)
        state = init_moments([[1.0, 1.0]], dynamics, chain)
        npt.assert_allclose(state.q, [[0.5, 0.5], [0.5, 0.5], [0, 0], [0, 0]])
        npt.assert_allclose(state.big_q[0], [[0.5, 0.5], [0.5, 0.5]])
        assert state.delta() == 1
        npt.assert_allclose(state.mean(), [1, 1])

        with self.assertRaises(StructuralError):
            init_moments([[1.0, 1.0, 1.0]], dynamics, chain)

    def test_first_step_from_fixed_point(self):
        chain, dynamics, modes, _ = lifted(load_fixture('e1'), 0.1)
        state = step_moments(init_moments(np.zeros((1, 2)), dynamics, chain), modes, chain)
        assert state.step == 1
        npt.assert_allclose(state.delta(), 0.005, atol=1e-15)
        npt.assert_allclose(state.p_k, [0.25] * 4)

    def test_shape_mismatch(self):
        chain, dynamics, modes, _ = lifted(load_fixture('e1'), 0.1)
        state = init_moments(np.zeros((1, 2)), dynamics, chain)
        bad = MomentState(step=0, q=state.q[:, :1], big_q=state.big_q, p_k=state.p_k, num_agents=2)
        with self.assertRaises(StructuralError):
            step_moments(bad, modes, chain)

    def test_second_moments_stay_psd(self):
        scenario = three_state_scenario()
        chain, dynamics, modes, _ = lifted(scenario, 0.1)
        state = init_moments(scenario.theta0, dynamics, chain)
        for _ in range(100):
            state = step_moments(state, modes, chain)
            npt.assert_array_equal(state.big_q, state.big_q.transpose(0, 2, 1))
            for i in range(modes.num_modes):
                assert np.linalg.eigvalsh(state.big_q[i]).min() >= -1e-10

            # E[xi xi^T] - E[xi] E[xi]^T is a covariance
            mean = state.mean()
            assert np.linalg.eigvalsh(state.second_moment() - np.outer(mean, mean)).min() >= -1e-10

    def test_recursion_matches_lifted_form(self):
        scenario = three_state_scenario()
        chain, dynamics, modes, lti = lifted(scenario, 0.1)
        state = init_moments(scenario.theta0, dynamics, chain)

        deltas, _, _, _ = run_moments(modes, chain, state, 30)
        npt.assert_allclose(lifted_trajectory(modes, chain, lti, state, 30), deltas, rtol=1e-10, atol=1e-12)

    def test_linear_in_initial_distribution(self):
        scenario = three_state_scenario()
        mdp = scenario.mdp
        _, dynamics, modes, _ = lifted(scenario, 0.1)
        chain_a = build_jump_chain(mdp, [1.0, 0.0, 0.0])
        chain_b = build_jump_chain(mdp, [0.0, 0.2, 0.8])

        a = init_moments(scenario.theta0, dynamics, chain_a)
        b = init_moments(scenario.theta0, dynamics, chain_b)
        lam = 0.3
        mixed = MomentState(step=0, q=lam * a.q + (1 - lam) * b.q, big_q=lam * a.big_q + (1 - lam) * b.big_q,
                            p_k=lam * a.p_k + (1 - lam) * b.p_k, num_agents=3)

        deltas_a = run_moments(modes, chain_a, a, 25)[0]
        deltas_b = run_moments(modes, chain_b, b, 25)[0]
        deltas_mixed = run_moments(modes, chain_a, mixed, 25)[0]
        npt.assert_allclose(deltas_mixed, lam * deltas_a + (1 - lam) * deltas_b, rtol=1e-10, atol=1e-12)

    def test_error_trajectory(self):
        traj = error_trajectory(load_fixture('e1').mdp, load_fixture('e1').net, 0.1, [[1.0, 1.0]], 50,
                                initial_state_dist=[1.0, 0.0])
        assert traj.deltas.shape == (51,)
        assert traj.deltas[0] == 1
        npt.assert_allclose(traj.traces, 2 * traj.deltas)
        npt.assert_allclose(traj.mean_norms[0], np.sqrt(2))
        assert traj.final_state.step == 50
        assert traj.horizon == 50 and traj.alpha == 0.1

        again = error_trajectory(load_fixture('e1').mdp, load_fixture('e1').net, 0.1, [[1.0, 1.0]], 50,
                                 initial_state_dist=[1.0, 0.0])
        assert again.fingerprint == traj.fingerprint
        npt.assert_array_equal(again.deltas, traj.deltas)

        empty = error_trajectory(load_fixture('e1').mdp, load_fixture('e1').net, 0.1, [[1.0, 1.0]], 0)
        npt.assert_array_equal(empty.deltas, [1.0])

        with self.assertRaises(ValueError):
            error_trajectory(load_fixture('e1').mdp, load_fixture('e1').net, 0.1, [[1.0, 1.0]], -1)

    def test_trajectory_independent_of_size_guard(self):
        scenario = three_state_scenario()
        args = (scenario.mdp, scenario.net, 0.1, scenario.theta0, 40, scenario.initial_state_dist)
        explicit = error_trajectory(*args)
        operator = error_trajectory(*args, size_guard=0)
        npt.assert_array_equal(operator.deltas, explicit.deltas)

    def test_blowup(self):
        e1 = load_fixture('e1')
        alpha = 1.05 * ALPHA_CRIT_E1
        with self.assertRaises(MomentBlowupError) as ctx:
            error_trajectory(e1.mdp, e1.net, alpha, [[1.0, 1.0]], 100_000)
        assert ctx.exception.step < 100_000
        npt.assert_allclose(ctx.exception.sr_h22, 1.25 * alpha ** 2, rtol=1e-8)
        assert isinstance(ctx.exception, UnstableSystemError)

        traj = error_trajectory(e1.mdp, e1.net, 0.95 * ALPHA_CRIT_E1, [[1.0, 1.0]], 2000)
        assert np.all(np.isfinite(traj.deltas))


class TestSteadyState(TestCase):

    def test_steady_matches_long_trajectory(self):
        e1 = load_fixture('e1')
        chain, _, modes, lti = lifted(e1, 0.1)
        ss = steady_state(modes, chain, lti)
        assert ss.method == 'direct'
        npt.assert_allclose(ss.sr_h22, 0.8125, atol=1e-10)
        assert ss.residual_q < 1e-12 and ss.residual_q2 < 1e-12

        traj = error_trajectory(e1.mdp, e1.net, 0.1, [[1.0, 1.0]], 2000, e1.initial_state_dist)
        npt.assert_allclose(traj.deltas[-1], ss.delta_inf, atol=1e-8)
        assert ss.delta_inf > 0

    def test_fixed_point_matches_direct(self):
        for scenario in (load_fixture('e1'), three_state_scenario()):
            chain, _, modes, lti = lifted(scenario, 0.1)
            direct = steady_state(modes, chain, lti, method='direct')
            fixed = steady_state(modes, chain, lti, method='fixed-point', tol=1e-14)
            assert fixed.method == 'fixed-point' and fixed.iterations > 0
            npt.assert_allclose(fixed.delta_inf, direct.delta_inf, rtol=1e-10, atol=1e-10)

    def test_operator_form_steady_state(self):
        e1 = load_fixture('e1')
        chain, _, modes, explicit = lifted(e1, 0.1)
        _, _, _, operator = lifted(e1, 0.1, size_guard=10)
        assert not operator.assembled_explicitly

        direct = steady_state(modes, chain, explicit)
        fixed = steady_state(modes, chain, operator)
        assert fixed.method == 'fixed-point'
        npt.assert_allclose(fixed.delta_inf, direct.delta_inf, atol=1e-10)
        npt.assert_allclose(fixed.sr_h22, 0.8125, atol=1e-6)

        with self.assertRaises(SizeGuardError):
            steady_state(modes, chain, operator, method='direct')

    def test_unstable_has_no_steady_state(self):
        chain, _, modes, lti = lifted(load_fixture('e1'), 0.0)
        with self.assertRaises(UnstableSystemError):
            steady_state(modes, chain, lti)
        with self.assertRaises(UnstableSystemError):
            steady_state(modes, chain, lti, method='fixed-point')
        with self.assertRaises(ValueError):
            steady_state(modes, chain, lti, method='newton')


class TestRateEnvelope(TestCase):

    def test_synthetic_geometric_decay(self):
        k = np.arange(151)
        env = rate_envelope(3 * 0.9 ** k + 5, 5.0)
        npt.assert_allclose(env.rate, 0.9, atol=1e-6)
        npt.assert_allclose(env.constant, 3, rtol=1e-4)
        assert env.window[1] == 150
        assert env.samples == env.window[1] - env.window[0] + 1

    def test_insufficient_data(self):
        k = np.arange(11)
        with self.assertRaises(InsufficientDataError):
            rate_envelope(3 * 0.9 ** k + 5, 5.0)
        with self.assertRaises(InsufficientDataError):
            rate_envelope(np.full(20, 5.0), 5.0)

    def test_e1_envelope_respects_spectral_rate(self):
        e1 = load_fixture('e1')
        for alpha, horizon in ((0.1, 400), (0.05, 800)):
            chain, _, modes, lti = lifted(e1, alpha)
            ss = steady_state(modes, chain, lti)
            traj = error_trajectory(e1.mdp, e1.net, alpha, [[1.0, 1.0]], horizon, e1.initial_state_dist)
            env = rate_envelope(traj, ss)
            rho = max(1 - alpha, 1 - 2 * alpha + 1.25 * alpha ** 2)
            assert env.rate <= rho + 0.01, f'alpha={alpha}: fitted rate {env.rate} exceeds {rho} + 0.01'
