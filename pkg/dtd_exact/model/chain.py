'''
Stationary distributions, mixing rates and the pair-state jump chain z^k = (s^k, s^{k+1}).

Modes are numbered with the current state major: mode i encodes the pair
(s, s') with i = s * |S| + s'.
'''

import numpy as np
import scipy.linalg
from dataclasses import dataclass
from dtd_exact.exceptions import ReducibleChainError, StructuralError
from dtd_exact.model.mdp import PROB_TOL, UNIT_MODULUS_TOL

CROSS_CHECK_TOL = 1e-10


def _polish(pi, P, tol, max_iter=1000):
    # power steps until the residual meets tol
    for _ in range(max_iter):
        residual = np.max(np.abs(pi @ P - pi))
        if residual <= tol:
            return pi
        pi = pi @ P
        pi = pi / pi.sum()
    residual = np.max(np.abs(pi @ P - pi))
    if residual <= tol:
        return pi
    raise ReducibleChainError(f'stationary distribution residual {residual:.3g} is above {tol:.3g} '
                              f'after {max_iter} refinement steps; the chain mixes too slowly')


def stationary_distribution(P, tol=PROB_TOL, require_positive=True):
    '''
    Computes the stationary distribution from the eigenvector of P^T for eigenvalue 1.

    Parameters
    ----------
    P (2d numpy array): row-stochastic matrix.
    tol (float): allowed residual ||pi P - pi||_inf.
    require_positive (bool): raise if any entry of pi is not strictly positive.

    Returns
    -------
    pi (1d numpy array): probability vector with pi P = pi.
    '''

    P = np.asarray(P, dtype='float64')
    vals, vecs = scipy.linalg.eig(P.T)

    unit = np.flatnonzero(np.abs(np.abs(vals) - 1) < UNIT_MODULUS_TOL)
    if unit.size != 1:
        raise ReducibleChainError(f'transition matrix has {unit.size} eigenvalues of unit modulus; '
                                  'a unique stationary distribution requires exactly one '
                                  '(irreducible and aperiodic chain)')

    pi = np.real(vecs[:, unit[0]])
    pi = pi / pi.sum()
    pi = _polish(pi, P, tol)

    if require_positive and np.any(pi <= 0):
        raise ReducibleChainError('stationary distribution has non-positive entries at states '
                                  f'{np.flatnonzero(pi <= 0).tolist()}')

    return pi


def stationary_by_power_iteration(P, tol=1e-14, max_iter=1_000_000, start=None):
    '''
    Stationary distribution by repeated multiplication pi <- pi P from a starting vector.

    Parameters
    ----------
    P (2d numpy array): row-stochastic matrix.
    tol (float): stop when successive iterates differ by at most tol (inf-norm).
    max_iter (int): iteration cap.
    start (1d numpy array): starting distribution, uniform if None.

    Returns
    -------
    pi (1d numpy array): probability vector.
    '''

    P = np.asarray(P, dtype='float64')
    pi = np.full(P.shape[0], 1 / P.shape[0]) if start is None else np.asarray(start, dtype='float64')
    for _ in range(max_iter):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    raise ReducibleChainError(f'power iteration did not converge in {max_iter} steps')


def mixing_rate(P):
    '''
    Second-largest eigenvalue modulus of a stochastic matrix (0 for a single state).

    Parameters
    ----------
    P (2d numpy array): row-stochastic matrix.

    Returns
    -------
    rate (float): geometric rate of convergence of the marginals to stationarity.
    '''

    P = np.asarray(P, dtype='float64')
    if P.shape[0] < 2:
        return 0.0
    mods = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    return float(mods[1])


def pair_transition(P):
    '''
    Transition matrix of the pair chain: (s, s') -> (s', t') with probability P[s', t'].

    Parameters
    ----------
    P (2d numpy array): |S| x |S| transition matrix.

    Returns
    -------
    Pz (2d numpy array): |S|^2 x |S|^2 transition matrix.
    '''

    S = P.shape[0]
    # row for (s, s') only depends on s'; it is row s' of this |S| x |S|^2 block
    block = (np.eye(S)[:, :, None] * P[:, None, :]).reshape(S, S * S)
    return np.tile(block, (S, 1))


@dataclass(frozen=True)
class JumpChain:
    '''
    Pair-state Markov chain driving the jump-linear representation.

    num_states (int): |S|; the chain has |S|^2 modes.
    transition (2d numpy array): n x n matrix P_z.
    initial (1d numpy array): p^0, mode distribution of (s^0, s^1).
    stationary (1d numpy array): p^inf.
    mixing_rate (float): second-largest eigenvalue modulus of P_z.
    state_stationary (1d numpy array): stationary distribution pi of the state chain.
    '''

    num_states: int
    transition: np.ndarray
    initial: np.ndarray
    stationary: np.ndarray
    mixing_rate: float
    state_stationary: np.ndarray

    @property
    def num_modes(self):
        return self.num_states ** 2

    def mode_index(self, s, s_next):
        return s * self.num_states + s_next

    def mode_pair(self, i):
        return divmod(int(i), self.num_states)

    def marginal(self, k):
        '''Mode distribution p^k = p^0 P_z^k.'''
        p = self.initial
        for _ in range(k):
            p = p @ self.transition
        return p

    def mixing_gap(self, k):
        '''1-norm distance ||p^k - p^inf||_1.'''
        return float(np.abs(self.marginal(k) - self.stationary).sum())


def check_distribution(mu, size, name='initial_state_dist'):
    '''
    Raises StructuralError unless mu is a probability vector of the given length.

    Returns
    -------
    mu (1d numpy array): mu as a float array.
    '''

    mu = np.asarray(mu, dtype='float64')
    if mu.shape != (size,):
        raise StructuralError(f'{name} must have length {size}, got shape {mu.shape}')
    if not np.all(np.isfinite(mu)) or np.any(mu < 0) or abs(mu.sum() - 1) > PROB_TOL:
        raise StructuralError(f'{name} is not a probability vector')
    return mu


def build_jump_chain(mdp, initial_state_dist=None):
    '''
    Builds the pair-state jump chain of an MDP.

    p^inf is taken from the eigenvector of P_z^T and cross-checked against the
    product form pi(s) P[s, s']. Modes with P[s, s'] = 0 are never visited and
    carry zero mass; strict positivity is required on the remaining modes.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    initial_state_dist (1d numpy array): mu0 over states; uniform if None.

    Returns
    -------
    chain (JumpChain): pair chain with initial, stationary and mixing data.
    '''

    P = mdp.transition
    S = mdp.num_states

    if initial_state_dist is None:
        mu0 = np.full(S, 1 / S)
    else:
        mu0 = check_distribution(initial_state_dist, S)

    pi = stationary_distribution(P)
    Pz = pair_transition(P)

    reachable = P.ravel() > 0
    p_inf = stationary_distribution(Pz, require_positive=False)
    p_inf[~reachable] = 0
    p_inf = p_inf / p_inf.sum()

    if np.any(p_inf[reachable] <= 0):
        raise ReducibleChainError('jump chain stationary distribution vanishes on a reachable mode')

    product = (pi[:, None] * P).ravel()
    if np.max(np.abs(product - p_inf)) > CROSS_CHECK_TOL:
        raise RuntimeError('jump chain stationary distribution disagrees with pi(s) P[s, s\']: '
                           f'max deviation {np.max(np.abs(product - p_inf)):.3g}')

    # nonzero eigenvalues of P_z coincide with those of P
    rate = mixing_rate(P)

    arrays = [Pz, (mu0[:, None] * P).ravel(), p_inf, pi]
    for a in arrays:
        a.setflags(write=False)

    return JumpChain(num_states=S, transition=arrays[0], initial=arrays[1],
                     stationary=arrays[2], mixing_rate=rate, state_stationary=arrays[3])
