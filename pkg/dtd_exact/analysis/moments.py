'''
Exact mode-conditioned moment recursion, finite-time error trajectories, steady-state limits
and the fitted convergence envelope.
'''

import warnings
import numpy as np
import scipy.linalg
import statsmodels.api as sm
from dataclasses import dataclass
from tqdm.auto import tqdm
from scipy.sparse.linalg import eigs, ArpackNoConvergence
from dtd_exact.exceptions import (InsufficientDataError, MomentBlowupError, StructuralError,
                                  UnstableSystemError)
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.model.dynamics import mean_dynamics
from dtd_exact.analysis.mjls import (DEFAULT_SIZE_GUARD, assemble_lti, build_modes, drive_terms,
                                     propagate_first, propagate_second, stack_matrices)
from dtd_exact.util import scenario_fingerprint, spectral_radius, vec

BLOWUP_THRESHOLD = 1e12
STABILITY_MARGIN = 1e-12


@dataclass(frozen=True)
class MomentState:
    '''
    Mode-conditioned moments at step k.

    step (int): k.
    q (2d numpy array): n x n_xi, q_i = E[xi 1{z = i}].
    big_q (3d numpy array): n x n_xi x n_xi, Q_i = E[xi xi^T 1{z = i}].
    p_k (1d numpy array): mode marginal.
    num_agents (int): M, the normalization of delta.
    '''

    step: int
    q: np.ndarray
    big_q: np.ndarray
    p_k: np.ndarray
    num_agents: int

    def delta(self):
        return float(np.trace(self.big_q, axis1=1, axis2=2).sum() / self.num_agents)

    def mean(self):
        '''E[xi^k].'''
        return self.q.sum(axis=0)

    def second_moment(self):
        '''E[xi^k xi^k^T].'''
        return self.big_q.sum(axis=0)

    def stacked(self):
        return self.q.ravel(), stack_matrices(self.big_q)


def init_moments(theta0, dynamics, chain):
    '''
    Moments of a deterministic initial weight matrix.

    Parameters
    ----------
    theta0 (2d numpy array): p x M initial weights, column m is agent m.
    dynamics (MeanDynamics): supplies Theta*.
    chain (JumpChain): supplies p^0.

    Returns
    -------
    state (MomentState): step-0 moments.
    '''

    theta_star = dynamics.theta_star_block
    theta0 = np.asarray(theta0, dtype='float64')
    if theta0.shape != theta_star.shape:
        raise StructuralError(f'theta0 has shape {theta0.shape}, expected {theta_star.shape}')

    xi0 = vec(theta0 - theta_star)
    p0 = np.array(chain.initial)
    return MomentState(step=0, q=p0[:, None] * xi0, big_q=p0[:, None, None] * np.outer(xi0, xi0),
                       p_k=p0, num_agents=theta_star.shape[1])


def step_moments(state, modes, chain, threshold=BLOWUP_THRESHOLD):
    '''
    Advances the mode-conditioned moments by one step.

    Parameters
    ----------
    state (MomentState): moments at step k.
    modes (ModeSystem): per-mode matrices.
    chain (JumpChain): supplies P_z.
    threshold (float): largest admissible moment entry.

    Returns
    -------
    state (MomentState): moments at step k + 1.
    '''

    if state.q.shape != modes.g_modes.shape:
        raise StructuralError(f'moment shape {state.q.shape} does not match modes {modes.g_modes.shape}')

    Pz = chain.transition
    q = propagate_first(modes, Pz, state.q, state.p_k)
    big_q = propagate_second(modes, Pz, state.big_q, state.q, state.p_k)
    big_q = 0.5 * (big_q + big_q.transpose(0, 2, 1))

    if not (np.all(np.isfinite(big_q)) and np.max(np.abs(big_q), initial=0) <= threshold
            and np.max(np.abs(q), initial=0) <= threshold):
        raise MomentBlowupError(state.step + 1, threshold=threshold)

    return MomentState(step=state.step + 1, q=q, big_q=big_q, p_k=state.p_k @ Pz,
                       num_agents=state.num_agents)


@dataclass(frozen=True)
class ErrorTrajectory:
    '''
    deltas (1d numpy array): delta^0 ... delta^K.
    mean_norms (1d numpy array): ||E xi^k||.
    traces (1d numpy array): sum_i trace(Q_i^k).
    '''

    deltas: np.ndarray
    mean_norms: np.ndarray
    traces: np.ndarray
    alpha: float
    horizon: int
    fingerprint: str
    final_state: MomentState


def run_moments(modes, chain, state, horizon, progress_bar=False):
    '''
    Iterates step_moments for `horizon` steps from `state`.

    Returns
    -------
    deltas, mean_norms, traces (1d numpy arrays): length horizon + 1.
    state (MomentState): moments at the last step.
    '''

    deltas = np.empty(horizon + 1)
    mean_norms = np.empty(horizon + 1)
    traces = np.empty(horizon + 1)

    def record(k, st):
        traces[k] = np.trace(st.big_q, axis1=1, axis2=2).sum()
        deltas[k] = traces[k] / st.num_agents
        mean_norms[k] = np.linalg.norm(st.mean())

    record(0, state)
    for k in tqdm(range(1, horizon + 1), disable=not progress_bar, desc='Moments'):
        state = step_moments(state, modes, chain)
        record(k, state)

    return deltas, mean_norms, traces, state


def error_trajectory(mdp, net, alpha, theta0, horizon, initial_state_dist=None,
                     size_guard=DEFAULT_SIZE_GUARD, progress_bar=False):
    '''
    Exact finite-time mean-squared error delta^k = (1/M) E||Theta^k - Theta*||_F^2, k = 0..K.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    alpha (float): step size.
    theta0 (2d numpy array): p x M deterministic initial weights.
    horizon (int): K >= 0.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    size_guard (int): explicit-assembly guard used to report sigma(H22) on blowup.
    progress_bar (bool): display progress bar.

    Returns
    -------
    traj (ErrorTrajectory): delta^0..delta^K with mean norms and second-moment traces.
    '''

    if horizon < 0:
        raise ValueError(f'horizon must be nonnegative, got {horizon}')

    chain = build_jump_chain(mdp, initial_state_dist)
    dynamics = mean_dynamics(mdp, chain)
    modes = build_modes(mdp, net, chain, alpha, dynamics)
    state = init_moments(theta0, dynamics, chain)

    try:
        deltas, mean_norms, traces, state = run_moments(modes, chain, state, horizon, progress_bar)
    except MomentBlowupError as e:
        sr = None
        n, d = modes.num_modes, modes.state_dim
        if n * d * d <= size_guard:
            sr = spectral_radius(assemble_lti(modes, chain, size_guard).h22)
        raise MomentBlowupError(e.step, sr_h22=sr, threshold=e.threshold) from e

    fingerprint = scenario_fingerprint(mdp.transition, mdp.rewards, mdp.discount, mdp.features,
                                       net.weights, chain.initial, float(alpha), np.asarray(theta0),
                                       int(horizon))

    return ErrorTrajectory(deltas=deltas, mean_norms=mean_norms, traces=traces, alpha=float(alpha),
                           horizon=int(horizon), fingerprint=fingerprint, final_state=state)


def lifted_trajectory(modes, chain, lti, state, horizon):
    '''
    delta^k from the lifted LTI form with explicit matrices,
    [q; Q] <- [[H11, 0], [H21, H22]] [q; Q] + [u_q^k; u_Q^k], delta^k = C_delta Q^k.

    Parameters
    ----------
    modes (ModeSystem): per-mode matrices.
    chain (JumpChain): jump chain.
    lti (LtiMoments): explicitly assembled lifted system.
    state (MomentState): initial moments.
    horizon (int): number of steps.

    Returns
    -------
    deltas (1d numpy array): length horizon + 1.
    '''

    lti.require_explicit('the lifted trajectory')
    x_q, x_big_q = state.stacked()
    p_k = state.p_k
    deltas = [lti.delta(x_big_q)]
    for _ in range(horizon):
        u_q, u_big_q = drive_terms(modes, chain, p_k)
        x_big_q = lti.h22 @ x_big_q + lti.h21 @ x_q + u_big_q
        x_q = lti.h11 @ x_q + u_q
        p_k = p_k @ chain.transition
        deltas.append(lti.delta(x_big_q))
    return np.array(deltas)


@dataclass(frozen=True)
class SteadyState:
    '''
    q_inf (1d numpy array): stacked limits of q_i^k.
    q2_inf (1d numpy array): stacked limits of vec(Q_i^k).
    delta_inf (float): limit of delta^k.
    method (str): 'direct' or 'fixed-point'.
    sr_h22 (float): spectral radius (or its estimate) used for the stability check.
    residual_q, residual_q2 (float): inf-norm residuals of the defining linear systems.
    '''

    q_inf: np.ndarray
    q2_inf: np.ndarray
    delta_inf: float
    method: str
    sr_h22: float
    residual_q: float
    residual_q2: float
    iterations: int = 0

    @property
    def q_norm(self):
        return float(np.linalg.norm(self.q_inf))

    @property
    def q2_norm(self):
        return float(np.linalg.norm(self.q2_inf))


def _operator_radius(lti):
    try:
        vals = eigs(lti.h22_op, k=1, which='LM', return_eigenvectors=False)
        return float(np.abs(vals[0]))
    except ArpackNoConvergence:
        warnings.warn('eigenvalue estimate of H22 did not converge; '
                      'continuing with fixed-point iteration without a stability pre-check')
        return None


def _check_stable(sr):
    if sr is not None and sr >= 1 - STABILITY_MARGIN:
        raise UnstableSystemError(f'second-moment system is not Schur stable: spectral radius of '
                                  f'H22 is {sr:.10g}; the steady state is undefined', sr_h22=sr)


def _direct(modes, chain, lti):
    lti.require_explicit('the direct steady-state solve')
    sr = spectral_radius(lti.h22)
    _check_stable(sr)
    u_q, u_big_q = drive_terms(modes, chain, chain.stationary)
    q_inf = scipy.linalg.solve(np.eye(lti.h11.shape[0]) - lti.h11, u_q)
    q2_inf = scipy.linalg.solve(np.eye(lti.h22.shape[0]) - lti.h22, lti.h21 @ q_inf + u_big_q)
    return q_inf, q2_inf, sr, 0


def _fixed_point(modes, chain, lti, tol, max_iter):
    if lti.assembled_explicitly:
        sr = spectral_radius(lti.h22)
    else:
        sr = _operator_radius(lti)
    _check_stable(sr)

    n, d = modes.num_modes, modes.state_dim
    Pz, p_inf = chain.transition, chain.stationary
    q = np.zeros((n, d))
    big_q = np.zeros((n, d, d))
    prev = 0.0

    for it in range(1, max_iter + 1):
        q, big_q = (propagate_first(modes, Pz, q, p_inf),
                    propagate_second(modes, Pz, big_q, q, p_inf))
        delta = lti.delta(stack_matrices(big_q))
        if not np.isfinite(delta) or abs(delta) > BLOWUP_THRESHOLD:
            raise UnstableSystemError(f'fixed-point iteration diverged after {it} steps', sr_h22=sr)
        if it > 1 and abs(delta - prev) <= tol * abs(delta):
            break
        prev = delta
    else:
        raise UnstableSystemError(f'fixed-point iteration did not converge in {max_iter} steps',
                                  sr_h22=sr)

    return q.ravel(), stack_matrices(big_q), sr, it


def steady_state(modes, chain, lti, method=None, tol=1e-12, max_iter=1_000_000):
    '''
    Limits q^inf, Q^inf and delta^inf of the moment recursion.

    The direct method solves (I - H11) q = u_q and (I - H22) Q = H21 q + u_Q with the
    stationary drives. The fixed-point method iterates the mode-wise recursion with
    p^k held at p^inf until successive deltas agree to `tol` relative; it is the
    default when only the operator form of the lifted system exists.

    Parameters
    ----------
    modes (ModeSystem): per-mode matrices.
    chain (JumpChain): jump chain.
    lti (LtiMoments): lifted system.
    method (str): 'direct', 'fixed-point' or None for automatic choice.
    tol (float): fixed-point relative tolerance.
    max_iter (int): fixed-point iteration cap.

    Returns
    -------
    ss (SteadyState): steady-state moments.
    '''

    if method is None:
        method = 'direct' if lti.assembled_explicitly else 'fixed-point'

    if method == 'direct':
        q_inf, q2_inf, sr, iters = _direct(modes, chain, lti)
    elif method == 'fixed-point':
        q_inf, q2_inf, sr, iters = _fixed_point(modes, chain, lti, tol, max_iter)
    else:
        raise ValueError(f'unknown steady-state method {method!r}')

    u_q, u_big_q = drive_terms(modes, chain, chain.stationary)
    res_q = np.max(np.abs(q_inf - lti.h11_op.matvec(q_inf) - u_q), initial=0)
    res_q2 = np.max(np.abs(q2_inf - lti.h22_op.matvec(q2_inf) - lti.h21_op.matvec(q_inf) - u_big_q),
                    initial=0)

    return SteadyState(q_inf=q_inf, q2_inf=q2_inf, delta_inf=lti.delta(q2_inf), method=method,
                       sr_h22=sr, residual_q=float(res_q), residual_q2=float(res_q2), iterations=iters)


@dataclass(frozen=True)
class RateEnvelope:
    '''
    rate (float): fitted geometric decay rate of |delta^k - delta^inf|.
    constant (float): fitted envelope constant.
    window (tuple): first and last step of the fit window.
    samples (int): number of steps used in the fit.
    '''

    rate: float
    constant: float
    window: tuple
    samples: int


def rate_envelope(traj, ss, min_samples=5):
    '''
    Least-squares fit of log|delta^k - delta^inf| against k over the tail window.

    The window starts at the first k where the gap is below 10% of its initial value and
    ends at the last k where it is above 1e-12; zero gaps are skipped.

    Parameters
    ----------
    traj (ErrorTrajectory or 1d numpy array): exact trajectory.
    ss (SteadyState or float): steady state, or delta^inf itself.
    min_samples (int): fewest usable samples.

    Returns
    -------
    envelope (RateEnvelope): fitted rate and constant.
    '''

    deltas = np.asarray(getattr(traj, 'deltas', traj), dtype='float64')
    delta_inf = float(getattr(ss, 'delta_inf', ss))
    gap = np.abs(deltas - delta_inf)

    if gap[-1] >= 1e-6 * max(1.0, deltas[0]):
        raise InsufficientDataError(f'trajectory has not converged: final gap {gap[-1]:.3g}; '
                                    'increase the horizon')

    start = np.flatnonzero(gap < 0.1 * gap[0])
    end = np.flatnonzero(gap > 1e-12)
    if start.size == 0 or end.size == 0 or end[-1] < start[0]:
        raise InsufficientDataError('no tail window: the trajectory is already at its limit')

    ks = np.arange(start[0], end[-1] + 1)
    ks = ks[gap[ks] > 0]
    if ks.size < min_samples:
        raise InsufficientDataError(f'{ks.size} usable samples in the tail window, '
                                    f'need at least {min_samples}')

    fit = sm.OLS(np.log(gap[ks]), sm.add_constant(ks.astype('float64'))).fit()
    intercept, slope = fit.params

    return RateEnvelope(rate=float(np.exp(slope)), constant=float(np.exp(intercept)),
                        window=(int(ks[0]), int(ks[-1])), samples=int(ks.size))
