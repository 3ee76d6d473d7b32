'''
Multi-agent MDP and communication network containers, and the scenario validation checks.
'''

import numpy as np
from dataclasses import dataclass, field
from typing import List
from scipy.sparse.csgraph import connected_components
from dtd_exact.exceptions import StructuralError

PROB_TOL = 1e-12
RANK_RTOL = 1e-10
UNIT_MODULUS_TOL = 1e-10


@dataclass(frozen=True)
class MultiAgentMdp:
    '''
    Finite-state Markov chain under fixed local policies with per-agent rewards.

    transition (2d numpy array): |S| x |S| row-stochastic matrix P.
    rewards (3d numpy array): M x |S| x |S| reward tables R_m(s, s').
    discount (float): discount factor gamma in (0, 1).
    features (2d numpy array): |S| x p feature matrix, row s is phi(s).
    '''

    transition: np.ndarray
    rewards: np.ndarray
    discount: float
    features: np.ndarray

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_agents(self):
        return self.rewards.shape[0]

    @property
    def num_features(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class CommNetwork:
    '''Consensus weights W (M x M) of the agent network.'''

    weights: np.ndarray

    @property
    def num_agents(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    message: str = ''


@dataclass(frozen=True)
class ValidationReport:
    '''Ordered pass/fail results; the scenario is accepted iff every check passed.'''

    checks: List[Check] = field(default_factory=list)

    @property
    def accepted(self):
        return all(c.passed for c in self.checks)

    @property
    def failed(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def extend(self, checks):
        '''Returns a new report with additional checks appended.'''
        return ValidationReport(list(self.checks) + list(checks))

    def to_dict(self):
        return {c.name: {'passed': c.passed, 'message': c.message} for c in self.checks}


def make_mdp(transition, rewards, discount, features):
    '''
    Builds a MultiAgentMdp from array-likes, coercing to float arrays.
    A 1d feature vector is treated as a single feature column.

    Parameters
    ----------
    transition (array-like): |S| x |S| transition matrix.
    rewards (array-like): M x |S| x |S| reward tables.
    discount (float): discount factor.
    features (array-like): |S| x p (or length |S|) features.

    Returns
    -------
    mdp (MultiAgentMdp): read-only arrays.
    '''

    features = np.asarray(features, dtype='float64')
    if features.ndim == 1:
        features = features[:, None]
    arrays = [np.array(transition, dtype='float64'), np.array(rewards, dtype='float64'), features.copy()]
    for a in arrays:
        a.setflags(write=False)
    return MultiAgentMdp(arrays[0], arrays[1], float(discount), arrays[2])


def make_network(weights):
    '''Builds a CommNetwork from an array-like weight matrix.'''
    weights = np.array(weights, dtype='float64')
    if weights.ndim == 0:
        weights = weights.reshape(1, 1)
    weights.setflags(write=False)
    return CommNetwork(weights)


def check_structure(mdp, net):
    '''
    Raises StructuralError when array dimensions disagree or entries are not finite.

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    net (CommNetwork): agent network.

    Returns
    -------
    None
    '''

    P, R, phi, W = mdp.transition, mdp.rewards, mdp.features, net.weights

    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise StructuralError(f'transition must be a non-empty square matrix, got shape {P.shape}')
    S = P.shape[0]
    if phi.ndim != 2 or phi.shape[0] != S or phi.shape[1] < 1:
        raise StructuralError(f'features must have shape ({S}, p) with p >= 1, got {phi.shape}')
    if R.ndim != 3 or R.shape[1:] != (S, S) or R.shape[0] < 1:
        raise StructuralError(f'rewards must have shape (M, {S}, {S}), got {R.shape}')
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise StructuralError(f'network weights must be square, got shape {W.shape}')
    if W.shape[0] != R.shape[0]:
        raise StructuralError(f'{R.shape[0]} reward tables given for {W.shape[0]} agents')

    for name, arr in (('transition', P), ('rewards', R), ('features', phi), ('network weights', W)):
        if not np.all(np.isfinite(arr)):
            raise StructuralError(f'{name} contains NaN or Inf entries')
    if not np.isfinite(mdp.discount):
        raise StructuralError('discount is not finite')


def _transition_checks(P):
    checks = []

    neg = np.argwhere(P < 0)
    checks.append(Check('transition nonnegative', neg.size == 0,
                        '' if neg.size == 0 else f'negative entry at {tuple(int(i) for i in neg[0])}'))

    sums = P.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(sums - 1) > PROB_TOL)
    msg = '; '.join(f'row {r} sums to {sums[r]:.12g}' for r in bad_rows)
    checks.append(Check('transition rows sum to 1', bad_rows.size == 0, msg))

    n_comp, _ = connected_components(P > 0, directed=True, connection='strong')
    checks.append(Check('irreducible', n_comp == 1,
                        '' if n_comp == 1 else f'{n_comp} strongly connected classes'))

    n_unit = int(np.sum(np.abs(np.linalg.eigvals(P)) > 1 - UNIT_MODULUS_TOL))
    checks.append(Check('aperiodic', n_unit == 1,
                        '' if n_unit == 1 else f'{n_unit} eigenvalues of unit modulus'))
    return checks


def _feature_checks(mdp):
    phi = mdp.features
    sv = np.linalg.svd(phi, compute_uv=False)
    rank = int(np.linalg.matrix_rank(phi, tol=RANK_RTOL * sv.max()))
    p = phi.shape[1]
    return [Check('features full column rank', rank == p,
                  '' if rank == p else f'rank {rank} < {p} feature columns')]


def _network_checks(W):
    checks = []
    in_range = bool(np.all((W >= 0) & (W <= 1)))
    checks.append(Check('network weights in [0, 1]', in_range,
                        '' if in_range else 'entry outside [0, 1]'))

    rows = np.abs(W.sum(axis=1) - 1) > PROB_TOL
    cols = np.abs(W.sum(axis=0) - 1) > PROB_TOL
    msg = []
    if rows.any():
        msg.append(f'rows {np.flatnonzero(rows).tolist()} do not sum to 1')
    if cols.any():
        msg.append(f'columns {np.flatnonzero(cols).tolist()} do not sum to 1')
    checks.append(Check('network doubly stochastic', not msg, '; '.join(msg)))

    edges = (W > 0) & ~np.eye(W.shape[0], dtype=bool)
    n_comp, _ = connected_components(edges, directed=True, connection='weak')
    checks.append(Check('network connected', n_comp == 1,
                        '' if n_comp == 1 else f'{n_comp} disconnected agent groups'))
    return checks


def validate_scenario(mdp, net):
    '''
    Runs every MDP and network invariant check and collects the results.

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    net (CommNetwork): agent network.

    Returns
    -------
    report (ValidationReport): one Check per invariant, in a fixed order.
    '''

    check_structure(mdp, net)

    checks = _transition_checks(mdp.transition)
    checks.append(Check('discount in (0, 1)', 0 < mdp.discount < 1,
                        '' if 0 < mdp.discount < 1 else f'discount is {mdp.discount}'))
    checks += _feature_checks(mdp)
    checks += _network_checks(net.weights)

    return ValidationReport(checks)
