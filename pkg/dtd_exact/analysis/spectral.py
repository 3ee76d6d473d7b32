'''
Spectral stability of the lifted moment system, small step-size predictions,
step-size sweeps and the stability boundary.
'''

import warnings
import numpy as np
import scipy.linalg
import statsmodels.api as sm
from dataclasses import dataclass, asdict
from typing import List
from joblib import Parallel, delayed
from scipy.optimize import brentq
from tqdm.auto import tqdm
from dtd_exact.exceptions import UnstableSystemError
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.model.dynamics import mean_dynamics
from dtd_exact.analysis.mjls import DEFAULT_SIZE_GUARD, assemble_lti, build_modes
from dtd_exact.analysis.moments import STABILITY_MARGIN, steady_state
from dtd_exact.util import spectral_radius

CONTRACT_RTOL = 0.05
SLOPE_RANGE = (0.9, 1.1)


@dataclass(frozen=True)
class SpectralReport:
    alpha: float
    sr_h11: float
    sr_h22: float
    mixing: float
    rate: float
    stable: bool
    pred_sr_h11: float
    pred_sr_h22: float

    def to_dict(self):
        return asdict(self)


def max_real_part(a_bar):
    '''Real part of the eigenvalue of a_bar with the largest real part.'''
    return float(np.max(np.real(scipy.linalg.eigvals(a_bar))))


def perturb_predict(dynamics, alpha):
    '''
    First-order predictions of sigma(H11) and sigma(H22) for small alpha.

    Parameters
    ----------
    dynamics (MeanDynamics or 2d numpy array): mean dynamics, or A_bar itself.
    alpha (float): step size.

    Returns
    -------
    pred_sr_h11 (float): 1 + alpha Re(lambda_maxre(A_bar)).
    pred_sr_h22 (float): 1 + 2 alpha Re(lambda_maxre(A_bar)).
    '''

    lam = max_real_part(getattr(dynamics, 'a_bar', dynamics))
    return 1 + alpha * lam, 1 + 2 * alpha * lam


def spectrum_report(lti, chain, dynamics, alpha):
    '''
    Exact spectral radii of the lifted blocks, the mixing rate and the first-order predictions.

    Parameters
    ----------
    lti (LtiMoments): explicitly assembled lifted system.
    chain (JumpChain): jump chain.
    dynamics (MeanDynamics): mean dynamics.
    alpha (float): step size the system was built with.

    Returns
    -------
    report (SpectralReport): stability verdict and rates.
    '''

    lti.require_explicit('spectral radii')
    sr_h11 = spectral_radius(lti.h11)
    sr_h22 = spectral_radius(lti.h22)
    pred11, pred22 = perturb_predict(dynamics, alpha)
    return SpectralReport(alpha=float(alpha), sr_h11=sr_h11, sr_h22=sr_h22, mixing=chain.mixing_rate,
                          rate=max(sr_h11, sr_h22, chain.mixing_rate),
                          stable=bool(sr_h22 < 1 - STABILITY_MARGIN),
                          pred_sr_h11=pred11, pred_sr_h22=pred22)


def default_alpha_grid(alpha, points=5, ratio=0.5):
    '''Geometric decreasing grid alpha, alpha * ratio, ..., with `points` entries.'''
    return alpha * ratio ** np.arange(points)


@dataclass(frozen=True)
class SweepRecord:
    alpha: float
    sr_h11: float
    sr_h22: float
    pred_sr_h11: float
    pred_sr_h22: float
    mixing: float
    stable: bool
    delta_inf: float
    q_inf_norm: float
    q2_inf_norm: float


@dataclass(frozen=True)
class PerturbationSweep:
    '''
    Per-alpha exact quantities along a decreasing grid and the small-alpha slope fits.

    loglog_slope (float): slope of log delta^inf against log alpha over the three smallest stable alphas.
    h22_slope, h11_slope (float): (sigma - 1) / alpha at the smallest stable alpha.
    lambda_maxre (float): Re(lambda_maxre(A_bar)).
    monotone_onset (bool): no unstable point follows a stable one along the grid.
    '''

    alphas: np.ndarray
    records: List[SweepRecord]
    loglog_slope: float
    h22_slope: float
    h11_slope: float
    lambda_maxre: float
    monotone_onset: bool

    @property
    def stable_records(self):
        return [r for r in self.records if r.stable]

    @property
    def contracts(self):
        '''Pass/fail of the O(alpha) slope and first-order eigenvalue checks.'''
        lam = self.lambda_maxre
        return {
            'loglog_slope': bool(SLOPE_RANGE[0] <= self.loglog_slope <= SLOPE_RANGE[1]),
            'h22_slope': bool(abs(self.h22_slope - 2 * lam) <= CONTRACT_RTOL * abs(2 * lam)),
            'h11_slope': bool(abs(self.h11_slope - lam) <= CONTRACT_RTOL * abs(lam)),
        }

    def columns(self):
        '''Sweep table columns, in export order.'''
        keys = ['alpha', 'sr_h11', 'sr_h22', 'pred_sr_h11', 'pred_sr_h22', 'delta_inf', 'stable']
        return {k: np.array([float(getattr(r, k)) for r in self.records]) for k in keys}

    def summary(self):
        return {'loglog_slope': self.loglog_slope, 'h22_slope': self.h22_slope,
                'h11_slope': self.h11_slope, 'lambda_maxre': self.lambda_maxre,
                'monotone_onset': self.monotone_onset, 'contracts': self.contracts,
                'stable_points': len(self.stable_records), 'points': len(self.records)}


def _sweep_point(mdp, net, chain, dynamics, alpha, size_guard):
    modes = build_modes(mdp, net, chain, alpha, dynamics)
    lti = assemble_lti(modes, chain, size_guard)
    report = spectrum_report(lti, chain, dynamics, alpha)

    delta_inf = q_norm = q2_norm = np.nan
    if report.stable:
        ss = steady_state(modes, chain, lti)
        delta_inf, q_norm, q2_norm = ss.delta_inf, ss.q_norm, ss.q2_norm

    return SweepRecord(alpha=float(alpha), sr_h11=report.sr_h11, sr_h22=report.sr_h22,
                       pred_sr_h11=report.pred_sr_h11, pred_sr_h22=report.pred_sr_h22,
                       mixing=report.mixing, stable=report.stable, delta_inf=float(delta_inf),
                       q_inf_norm=float(q_norm), q2_inf_norm=float(q2_norm))


def _loglog_slope(stable):
    pts = [r for r in stable if r.delta_inf > 0][-3:]
    if len(pts) < 2:
        return np.nan
    x = np.log([r.alpha for r in pts])
    y = np.log([r.delta_inf for r in pts])
    return float(sm.OLS(y, sm.add_constant(x)).fit().params[1])


def alpha_sweep(mdp, net, alphas, initial_state_dist=None, size_guard=DEFAULT_SIZE_GUARD,
                n_jobs=1, progress_bar=False):
    '''
    Exact spectra and steady states along a decreasing step-size grid.

    Unstable points are kept in the records, flagged, and excluded from the fits.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    alphas (1d array-like): strictly decreasing positive step sizes.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    size_guard (int): explicit-assembly guard.
    n_jobs (int): joblib workers for the per-alpha computations.
    progress_bar (bool): display progress bar.

    Returns
    -------
    sweep (PerturbationSweep): records and fitted slopes.
    '''

    alphas = np.asarray(alphas, dtype='float64')
    if alphas.ndim != 1 or alphas.size == 0 or np.any(alphas <= 0) or np.any(np.diff(alphas) >= 0):
        raise ValueError('step-size grid must be non-empty, positive and strictly decreasing')

    chain = build_jump_chain(mdp, initial_state_dist)
    dynamics = mean_dynamics(mdp, chain)

    records = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_point)(mdp, net, chain, dynamics, a, size_guard)
        for a in tqdm(alphas, disable=not progress_bar, desc='Sweep'))

    unstable = [r.alpha for r in records if not r.stable]
    if unstable:
        warnings.warn(f'excluding unstable step sizes from the fits: {unstable}')

    stable_seen = False
    monotone = True
    for r in records:
        stable_seen = stable_seen or r.stable
        if stable_seen and not r.stable:
            monotone = False
    if not monotone:
        warnings.warn('stability is not monotone along the step-size grid: an unstable step size '
                      'follows a stable one')

    stable = [r for r in records if r.stable]
    if not stable:
        raise UnstableSystemError('no step size in the grid yields a Schur stable second-moment system',
                                  sr_h22=min(r.sr_h22 for r in records))

    smallest = stable[-1]
    sweep = PerturbationSweep(alphas=alphas, records=list(records),
                              loglog_slope=_loglog_slope(stable),
                              h22_slope=(smallest.sr_h22 - 1) / smallest.alpha,
                              h11_slope=(smallest.sr_h11 - 1) / smallest.alpha,
                              lambda_maxre=max_real_part(dynamics.a_bar),
                              monotone_onset=monotone)

    failed = [k for k, ok in sweep.contracts.items() if not ok]
    if failed:
        warnings.warn(f'small step-size contracts not met on this grid: {failed}')

    return sweep


@dataclass(frozen=True)
class StabilityBoundary:
    alpha_crit: float
    sr_h22: float
    bracket: tuple
    iterations: int

    def to_dict(self):
        return {'alpha_crit': self.alpha_crit, 'sr_h22': self.sr_h22,
                'bracket': list(self.bracket), 'iterations': self.iterations}


def critical_step_size(mdp, net, lo=0.01, hi=2.0, xtol=1e-10, initial_state_dist=None,
                       size_guard=DEFAULT_SIZE_GUARD):
    '''
    Step size where sigma(H22) crosses 1, by Brent's method on [lo, hi].

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    lo, hi (float): bracket with sigma(H22)(lo) < 1 < sigma(H22)(hi).
    xtol (float): absolute tolerance in alpha.
    initial_state_dist (1d numpy array): mu0, uniform if None.
    size_guard (int): explicit-assembly guard.

    Returns
    -------
    boundary (StabilityBoundary): critical step size and sigma(H22) there.
    '''

    chain = build_jump_chain(mdp, initial_state_dist)
    dynamics = mean_dynamics(mdp, chain)

    def sr_h22(alpha):
        lti = assemble_lti(build_modes(mdp, net, chain, alpha, dynamics), chain, size_guard)
        lti.require_explicit('the stability boundary search')
        return spectral_radius(lti.h22)

    f_lo, f_hi = sr_h22(lo) - 1, sr_h22(hi) - 1
    if not (f_lo < 0 < f_hi):
        raise ValueError(f'[{lo}, {hi}] does not bracket the stability boundary: '
                         f'sigma(H22) - 1 is {f_lo:.6g} and {f_hi:.6g} at the ends')

    root, info = brentq(lambda a: sr_h22(a) - 1, lo, hi, xtol=xtol, full_output=True)
    return StabilityBoundary(alpha_crit=float(root), sr_h22=sr_h22(root), bracket=(lo, hi),
                             iterations=int(info.iterations))
