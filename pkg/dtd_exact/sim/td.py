'''
Stochastic simulation of decentralized TD(0) and the Monte Carlo estimate of its mean-squared error.

Trial t of a run with master seed `seed` draws from PCG64(SeedSequence(seed, spawn_key=(t,))),
so every trial stream depends only on (seed, t).
'''

import numpy as np
from dataclasses import dataclass
from joblib import Parallel, delayed
from tqdm.auto import tqdm
from dtd_exact.exceptions import StructuralError
from dtd_exact.model.chain import build_jump_chain, check_distribution
from dtd_exact.model.dynamics import all_mode_matrices, mean_dynamics

GENERATOR = 'PCG64'


def trial_seed_sequence(seed, trial):
    '''SeedSequence of one trial, derived from the master seed and the trial index.'''
    return np.random.SeedSequence(seed, spawn_key=(int(trial),))


def trial_uniforms(seed, trial, horizon):
    '''The horizon + 2 uniforms that drive one trial: one for s^0, one per transition.'''
    rng = np.random.Generator(np.random.PCG64(trial_seed_sequence(seed, trial)))
    return rng.random(horizon + 2)


def sample_states(mdp, mu0, uniforms):
    '''
    State paths s^0..s^{K+1} by inverse-CDF sampling.

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    mu0 (1d numpy array): initial state distribution.
    uniforms (2d numpy array): trials x (K + 2) uniforms in [0, 1).

    Returns
    -------
    states (2d numpy array): trials x (K + 2) state indices.
    '''

    S = mdp.num_states
    cdf = np.cumsum(mdp.transition, axis=1)
    states = np.empty(uniforms.shape, dtype='int64')
    states[:, 0] = np.minimum(np.searchsorted(np.cumsum(mu0), uniforms[:, 0], side='right'), S - 1)
    for k in range(1, uniforms.shape[1]):
        rows = cdf[states[:, k - 1]]
        states[:, k] = np.minimum((rows <= uniforms[:, k, None]).sum(axis=1), S - 1)
    return states


def propagate_weights(mdp, net, alpha, theta0, states, theta_star=None, keep_weights=False):
    '''
    Synchronous decentralized TD(0) along given state paths.

    Each agent mixes the neighbours' step-k weights and adds its own TD correction:
    theta_m <- sum_m' W[m, m'] theta_m' + alpha phi(s) d_m with
    d_m = (gamma phi(s') - phi(s))^T theta_m + R_m(s, s').

    Parameters
    ----------
    mdp (MultiAgentMdp): scenario MDP.
    net (CommNetwork): agent network.
    alpha (float): step size.
    theta0 (2d numpy array): p x M initial weights.
    states (2d numpy array): paths x (K + 2) state indices.
    theta_star (2d numpy array): p x M reference weights for the squared error.
    keep_weights (bool): also return every iterate.

    Returns
    -------
    sq_errors (2d numpy array): paths x (K + 1), (1/M) ||Theta^k - Theta*||_F^2; None without theta_star.
    weights (4d numpy array): paths x (K + 1) x p x M iterates, only if keep_weights.
    '''

    phi, R, gamma, W = mdp.features, mdp.rewards, mdp.discount, net.weights
    n_paths, steps = states.shape[0], states.shape[1] - 1
    M = W.shape[0]

    theta = np.broadcast_to(np.asarray(theta0, dtype='float64'), (n_paths,) + np.shape(theta0)).copy()
    weights = np.empty((n_paths, steps) + theta.shape[1:]) if keep_weights else None
    sq_errors = np.empty((n_paths, steps)) if theta_star is not None else None

    def record(k, th):
        if keep_weights:
            weights[:, k] = th
        if sq_errors is not None:
            sq_errors[:, k] = ((th - theta_star) ** 2).sum(axis=(1, 2)) / M

    record(0, theta)
    for k in range(steps - 1):
        s, s_next = states[:, k], states[:, k + 1]
        f = phi[s]
        d = np.einsum('ta,tam->tm', gamma * phi[s_next] - f, theta) + R[:, s, s_next].T
        theta = theta @ W.T + alpha * f[:, :, None] * d[:, None, :]
        record(k + 1, theta)

    if keep_weights:
        return sq_errors, weights
    return sq_errors


def reference_dynamics(mdp, initial_state_dist):
    S = mdp.num_states
    mu0 = np.full(S, 1 / S) if initial_state_dist is None else check_distribution(initial_state_dist, S)
    return mu0, mean_dynamics(mdp, build_jump_chain(mdp, mu0))


def check_theta0(theta0, mdp):
    theta0 = np.asarray(theta0, dtype='float64')
    if theta0.shape != (mdp.num_features, mdp.num_agents):
        raise StructuralError(f'theta0 has shape {theta0.shape}, '
                              f'expected {(mdp.num_features, mdp.num_agents)}')
    return theta0


@dataclass(frozen=True)
class TdRunResult:
    '''
    weights (3d numpy array): (K + 1) x p x M iterates Theta^0..Theta^K.
    state_path (1d numpy array): s^0..s^{K+1}.
    '''

    weights: np.ndarray
    state_path: np.ndarray
    seed: int
    trial: int
    alpha: float
    theta_star_block: np.ndarray

    @property
    def squared_errors(self):
        '''(1/M) ||Theta^k - Theta*||_F^2 for every recorded k.'''
        M = self.weights.shape[2]
        return ((self.weights - self.theta_star_block) ** 2).sum(axis=(1, 2)) / M


def run_td0(mdp, net, alpha, theta0, horizon, seed, initial_state_dist=None, trial=0):
    '''
    One run of decentralized TD(0) for `horizon` steps.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    alpha (float): step size.
    theta0 (2d numpy array): p x M initial weights.
    horizon (int): K.
    seed (int): master seed.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    trial (int): trial index selecting the stream under the master seed.

    Returns
    -------
    run (TdRunResult): iterates and visited states.
    '''

    if horizon < 0:
        raise ValueError(f'horizon must be nonnegative, got {horizon}')
    theta0 = check_theta0(theta0, mdp)
    mu0, dynamics = reference_dynamics(mdp, initial_state_dist)
    states = sample_states(mdp, mu0, trial_uniforms(seed, trial, horizon)[None])
    _, weights = propagate_weights(mdp, net, alpha, theta0, states, keep_weights=True)
    return TdRunResult(weights=weights[0], state_path=states[0], seed=seed, trial=trial,
                       alpha=float(alpha), theta_star_block=dynamics.theta_star_block)


@dataclass(frozen=True)
class McEstimate:
    '''
    deltas_hat (1d numpy array): per-step sample means of the squared error.
    stderrs (1d numpy array): per-step standard errors of those means.
    '''

    deltas_hat: np.ndarray
    stderrs: np.ndarray
    trials: int
    seed: int
    generator: str = GENERATOR


def _batch_stats(mdp, net, alpha, theta0, theta_star, mu0, horizon, seed, trial_ids):
    uniforms = np.stack([trial_uniforms(seed, t, horizon) for t in trial_ids])
    sq = propagate_weights(mdp, net, alpha, theta0, sample_states(mdp, mu0, uniforms), theta_star)
    mean = sq.mean(axis=0)
    return len(trial_ids), mean, ((sq - mean) ** 2).sum(axis=0), sq.min(axis=0), sq.max(axis=0)


def _merge(a, b):
    # pairwise combination of (count, mean, sum of squared deviations, min, max)
    n_a, mean_a, m2_a, lo_a, hi_a = a
    n_b, mean_b, m2_b, lo_b, hi_b = b
    n = n_a + n_b
    diff = mean_b - mean_a
    return (n, mean_a + diff * n_b / n, m2_a + m2_b + diff ** 2 * n_a * n_b / n,
            np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b))


def monte_carlo_error(mdp, net, alpha, theta0, horizon, trials, seed, initial_state_dist=None,
                      batch_size=1000, n_jobs=1, progress_bar=False):
    '''
    Sample mean and standard error of (1/M) ||Theta^k - Theta*||_F^2 over independent runs.

    Trials are simulated in batches, possibly in parallel; batches are merged in
    trial order, so the result does not depend on n_jobs.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    alpha (float): step size.
    theta0 (2d numpy array): p x M initial weights.
    horizon (int): K.
    trials (int): T >= 2.
    seed (int): master seed.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    batch_size (int): trials per batch.
    n_jobs (int): joblib workers.
    progress_bar (bool): display progress bar.

    Returns
    -------
    est (McEstimate): per-step means and standard errors.
    '''

    if trials < 2:
        raise ValueError(f'at least 2 trials are needed for a standard error, got {trials}')
    if horizon < 0:
        raise ValueError(f'horizon must be nonnegative, got {horizon}')

    theta0 = check_theta0(theta0, mdp)
    mu0, dynamics = reference_dynamics(mdp, initial_state_dist)
    theta_star = dynamics.theta_star_block

    batches = [range(b, min(b + batch_size, trials)) for b in range(0, trials, batch_size)]
    stats = Parallel(n_jobs=n_jobs)(
        delayed(_batch_stats)(mdp, net, alpha, theta0, theta_star, mu0, horizon, seed, ids)
        for ids in tqdm(batches, disable=not progress_bar, desc='Trials'))

    total = stats[0]
    for s in stats[1:]:
        total = _merge(total, s)
    n, mean, m2, lo, hi = total

    # steps where every trial saw the same error carry no sampling noise
    constant = lo == hi
    mean = np.where(constant, lo, mean)
    m2 = np.where(constant, 0.0, m2)

    stderr = np.sqrt(m2 / (n - 1) / n)
    return McEstimate(deltas_hat=mean, stderrs=stderr, trials=int(n), seed=seed)


def averaged_iterate_defect(run, mdp):
    '''
    Largest deviation from the single-agent recursion of the network-averaged iterate,
    theta_bar^{k+1} = theta_bar^k + alpha (A(z^k) theta_bar^k + b_bar(z^k)).

    Parameters
    ----------
    run (TdRunResult): recorded run.
    mdp (MultiAgentMdp): its MDP.

    Returns
    -------
    defect (float): max over k of the inf-norm residual.
    '''

    A, B = all_mode_matrices(mdp)
    S = mdp.num_states
    avg = run.weights.mean(axis=2)
    modes = run.state_path[:-1] * S + run.state_path[1:]
    modes = modes[:avg.shape[0] - 1]
    pred = avg[:-1] + run.alpha * (np.einsum('kab,kb->ka', A[modes], avg[:-1]) + B[modes].mean(axis=2))
    return float(np.max(np.abs(pred - avg[1:]), initial=0))


def consensus_deviation(run):
    '''max_m ||theta_m^k - theta_bar^k|| for every recorded k.'''
    avg = run.weights.mean(axis=2, keepdims=True)
    return np.linalg.norm(run.weights - avg, axis=1).max(axis=1)
