'''
Brute-force mean-squared error by enumerating every state path of the horizon.
'''

import numpy as np
from dtd_exact.exceptions import PathBudgetError
from dtd_exact.sim.td import check_theta0, propagate_weights, reference_dynamics

PATH_BUDGET = 1_000_000


def enumerate_paths(num_states, length):
    '''All num_states ** length state paths as rows, in lexicographic order.'''
    idx = np.arange(num_states ** length)
    return np.stack(np.unravel_index(idx, (num_states,) * length), axis=1)


def enumerate_error(mdp, net, alpha, theta0, horizon, initial_state_dist=None, budget=PATH_BUDGET):
    '''
    Exact delta^0..delta^K as the probability-weighted average of the squared error over
    all state paths s^0..s^{K+1}.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    alpha (float): step size.
    theta0 (2d numpy array): p x M initial weights.
    horizon (int): K.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    budget (int): largest number of paths to enumerate.

    Returns
    -------
    deltas (1d numpy array): length K + 1.
    '''

    S = mdp.num_states
    length = horizon + 2
    if S ** length > budget:
        raise PathBudgetError(f'{S}^{length} state paths exceed the enumeration budget of {budget}; '
                              'reduce the horizon or the number of states')

    theta0 = check_theta0(theta0, mdp)
    mu0, dynamics = reference_dynamics(mdp, initial_state_dist)

    paths = enumerate_paths(S, length)
    prob = mu0[paths[:, 0]] * np.prod(mdp.transition[paths[:, :-1], paths[:, 1:]], axis=1)
    live = prob > 0

    sq = propagate_weights(mdp, net, alpha, theta0, paths[live], dynamics.theta_star_block)
    return prob[live] @ sq
