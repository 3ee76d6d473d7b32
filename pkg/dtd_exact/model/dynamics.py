'''
Per-mode TD matrices A(z), B(z) and the mean dynamics (A_bar, b_bar, theta*).
'''

import numpy as np
import scipy.linalg
from dataclasses import dataclass
from dtd_exact.exceptions import AssumptionViolationError

HURWITZ_MARGIN = -1e-12
CROSS_CHECK_TOL = 1e-10


def mode_matrices(mdp, mode):
    '''
    TD matrices of one mode i = (s, s').

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    mode (int): mode index s * |S| + s'.

    Returns
    -------
    A (2d numpy array): p x p, phi(s) (gamma phi(s') - phi(s))^T.
    B (2d numpy array): p x M, column m is R_m(s, s') phi(s).
    '''

    S = mdp.num_states
    if not 0 <= mode < S * S:
        raise IndexError(f'mode {mode} out of range for {S * S} modes')
    s, s_next = divmod(int(mode), S)
    phi = mdp.features
    A = np.outer(phi[s], mdp.discount * phi[s_next] - phi[s])
    B = np.outer(phi[s], mdp.rewards[:, s, s_next])
    return A, B


def all_mode_matrices(mdp):
    '''
    Stacked TD matrices for every mode.

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.

    Returns
    -------
    A (3d numpy array): n x p x p.
    B (3d numpy array): n x p x M.
    '''

    phi = mdp.features
    S, p = phi.shape
    M = mdp.num_agents
    diff = mdp.discount * phi[None, :, :] - phi[:, None, :]
    A = np.einsum('sa,stb->stab', phi, diff).reshape(S * S, p, p)
    B = np.einsum('sa,mst->stam', phi, mdp.rewards).reshape(S * S, p, M)
    return A, B


@dataclass(frozen=True)
class MeanDynamics:
    '''
    a_bar (2d numpy array): p x p stationary mean of A(z).
    b_bar_agents (2d numpy array): p x M, column m is the stationary mean of agent m's reward drive.
    b_bar (1d numpy array): network-averaged drive.
    theta_star (1d numpy array): solution of a_bar theta + b_bar = 0.
    '''

    a_bar: np.ndarray
    b_bar_agents: np.ndarray
    b_bar: np.ndarray
    theta_star: np.ndarray

    @property
    def num_agents(self):
        return self.b_bar_agents.shape[1]

    @property
    def theta_star_block(self):
        '''p x M matrix with theta* in every column.'''
        return np.tile(self.theta_star[:, None], (1, self.num_agents))

    @property
    def max_real_eigenvalue(self):
        return float(np.max(np.real(scipy.linalg.eigvals(self.a_bar))))


def closed_form_mean_dynamics(mdp, pi):
    '''
    State-space form of the mean dynamics.

    A_bar = Phi^T diag(pi) (gamma P - I) Phi and b_bar_m = Phi^T diag(pi) r_m,
    with r_m(s) the expected one-step reward of agent m from state s.

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    pi (1d numpy array): stationary distribution of the state chain.

    Returns
    -------
    a_bar (2d numpy array): p x p.
    b_bar_agents (2d numpy array): p x M.
    '''

    P, phi = mdp.transition, mdp.features
    D = np.diag(pi)
    a_bar = phi.T @ D @ (mdp.discount * P - np.eye(mdp.num_states)) @ phi
    r = np.einsum('st,mst->sm', P, mdp.rewards)
    return a_bar, phi.T @ D @ r


def mean_dynamics(mdp, chain):
    '''
    Averages the mode matrices under the stationary mode distribution and solves for theta*.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    chain (JumpChain): jump chain of mdp.

    Returns
    -------
    dynamics (MeanDynamics): mean drift and its fixed point.
    '''

    A, B = all_mode_matrices(mdp)
    p_inf = chain.stationary
    a_bar = np.einsum('i,iab->ab', p_inf, A)
    b_bar_agents = np.einsum('i,iam->am', p_inf, B)

    cf_a, cf_b = closed_form_mean_dynamics(mdp, chain.state_stationary)
    dev = max(np.max(np.abs(cf_a - a_bar)), np.max(np.abs(cf_b - b_bar_agents)))
    # relative to the magnitude of the drift and the rewards
    scale = max(1.0, np.max(np.abs(cf_a)), np.max(np.abs(cf_b), initial=0))
    if dev > CROSS_CHECK_TOL * scale:
        raise RuntimeError(f'mode-averaged mean dynamics deviate from the closed form by {dev:.3g}')

    eigs = scipy.linalg.eigvals(a_bar)
    max_re = float(np.max(np.real(eigs)))
    if not max_re < HURWITZ_MARGIN:
        raise AssumptionViolationError('mean dynamics matrix is not Hurwitz: largest real part of '
                                       f'its eigenvalues is {max_re:.6g}')

    b_bar = b_bar_agents.mean(axis=1)
    try:
        theta_star = scipy.linalg.solve(a_bar, -b_bar)
    except scipy.linalg.LinAlgError as e:
        raise AssumptionViolationError(f'mean dynamics matrix is singular: {e}')

    return MeanDynamics(a_bar=a_bar, b_bar_agents=b_bar_agents, b_bar=b_bar, theta_star=theta_star)
