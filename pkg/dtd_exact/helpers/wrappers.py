'''
Wrapper functions for every dtd-exact command.
Each wrapper runs one analysis from a loaded Scenario to its artifact files and prints a summary;
execute_command() dispatches to them and maps errors to exit statuses.
'''

import os
import sys
import h5py
import warnings
import numpy as np
from os.path import join
from cytoolz import keyfilter
from dtd_exact.exceptions import (DtdError, ScenarioParseError, ScenarioValidationError,
                                  SizeGuardError, UnstableSystemError, MomentBlowupError)
from dtd_exact.io.scenario import load_scenario
from dtd_exact.io.table import table_metadata, write_table
from dtd_exact.model.chain import build_jump_chain
from dtd_exact.model.dynamics import mean_dynamics
from dtd_exact.analysis.mjls import assemble_lti, build_modes
from dtd_exact.analysis.moments import error_trajectory, steady_state
from dtd_exact.analysis.spectral import (alpha_sweep, critical_step_size, default_alpha_grid,
                                         spectrum_report)
from dtd_exact.sim.td import GENERATOR, monte_carlo_error
from dtd_exact.util import dict_to_h5, scenario_fingerprint, unvec, write_yaml

# first match wins
EXIT_CODES = (
    (ScenarioParseError, 4),
    (OSError, 4),
    (SizeGuardError, 3),
    (UnstableSystemError, 2),
    (DtdError, 1),
    (ValueError, 1),
)

Z_BOUND = 4


def exit_code(error):
    '''Exit status for an error raised by a command, None for errors that indicate a bug.'''
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    return None


def fingerprint(scenario):
    return scenario_fingerprint(scenario.mdp.transition, scenario.mdp.rewards, scenario.mdp.discount,
                                scenario.mdp.features, scenario.net.weights,
                                scenario.initial_state_dist, scenario.theta0, scenario.alpha,
                                scenario.horizon, scenario.trials, scenario.seed)


def _metadata(scenario, command, **extra):
    return table_metadata(command=command, scenario=scenario.name, fingerprint=fingerprint(scenario),
                          alpha=scenario.alpha, seed=scenario.seed, generator=GENERATOR, **extra)


def _lifted(scenario):
    chain = build_jump_chain(scenario.mdp, scenario.initial_state_dist)
    dynamics = mean_dynamics(scenario.mdp, chain)
    modes = build_modes(scenario.mdp, scenario.net, chain, scenario.alpha, dynamics)
    return chain, dynamics, modes, assemble_lti(modes, chain, scenario.size_guard)


def print_report(report, file=None):
    for c in report.checks:
        status = 'PASS' if c.passed else 'FAIL'
        line = f'{status}  {c.name}'
        print(line + (f': {c.message}' if c.message else ''), file=file)


def validate_wrapper(scenario, output_dir, **kwargs):
    '''
    Prints the validation report of a loaded scenario.

    Parameters
    ----------
    scenario (Scenario): loaded scenario.
    output_dir (str): unused; no artifacts are written.

    Returns
    -------
    artifacts (list): empty.
    '''

    print_report(scenario.report)
    print(f'Scenario {scenario.name} accepted: {len(scenario.report.checks)} checks passed.')
    return []


def exact_wrapper(scenario, output_dir, progress_bar=False, **kwargs):
    '''
    Computes the exact error trajectory and writes trajectory.csv and moments.h5.

    Parameters
    ----------
    scenario (Scenario): loaded scenario.
    output_dir (str): directory for the artifacts.
    progress_bar (bool): display progress bar.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    traj = error_trajectory(scenario.mdp, scenario.net, scenario.alpha, scenario.theta0,
                            scenario.horizon, scenario.initial_state_dist,
                            size_guard=scenario.size_guard, progress_bar=progress_bar)

    csv_path = join(output_dir, 'trajectory.csv')
    write_table(csv_path, {'k': np.arange(traj.horizon + 1), 'delta': traj.deltas,
                           'q_norm': traj.mean_norms, 'trace_Q': traj.traces},
                _metadata(scenario, 'exact', horizon=traj.horizon))

    final = traj.final_state
    chain = build_jump_chain(scenario.mdp, scenario.initial_state_dist)
    theta_star = mean_dynamics(scenario.mdp, chain).theta_star_block
    mean_weights = unvec(final.mean(), *theta_star.shape) + theta_star
    results = {
        'trajectory': {'delta': traj.deltas, 'q_norm': traj.mean_norms, 'trace_Q': traj.traces},
        'final': {'step': final.step, 'q': final.q, 'big_q': final.big_q, 'p_k': final.p_k,
                  'mean_weights': mean_weights},
        'scenario': {'transition': scenario.mdp.transition, 'rewards': scenario.mdp.rewards,
                     'discount': scenario.mdp.discount, 'features': scenario.mdp.features,
                     'network_weights': scenario.net.weights, 'theta0': scenario.theta0,
                     'initial_state_dist': scenario.initial_state_dist, 'alpha': traj.alpha},
        'metadata': keyfilter(lambda k: k != 'command', _metadata(scenario, 'exact')),
    }
    annotations = {
        'trajectory': {'delta': 'mean-squared error (1/M) E||Theta^k - Theta*||_F^2, k = 0..K',
                       'q_norm': 'norm of the mean error E[xi^k]',
                       'trace_Q': 'sum over modes of trace(Q_i^k)'},
        'final': {'q': 'mode-conditioned first moments at step K (modes x n_xi)',
                  'big_q': 'mode-conditioned second moments at step K (modes x n_xi x n_xi)',
                  'p_k': 'mode marginal at step K',
                  'mean_weights': 'E[Theta^K], p x M'},
    }

    h5_path = join(output_dir, 'moments.h5')
    with h5py.File(h5_path, 'w') as f:
        dict_to_h5(f, results, annotations=annotations)

    print(f'delta^0 = {traj.deltas[0]:.10g}, delta^{traj.horizon} = {traj.deltas[-1]:.10g}')
    print(f'Wrote {traj.horizon + 1} rows to {csv_path}')
    return [csv_path, h5_path]


def steady_wrapper(scenario, output_dir, **kwargs):
    '''
    Solves for the steady-state moments and writes steady.yaml.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    chain, dynamics, modes, lti = _lifted(scenario)
    ss = steady_state(modes, chain, lti)

    report = {'alpha': scenario.alpha, 'delta_inf': ss.delta_inf, 'q_inf_norm': ss.q_norm,
              'q2_inf_norm': ss.q2_norm, 'method': ss.method, 'sr_h22': ss.sr_h22,
              'residual_q': ss.residual_q, 'residual_q2': ss.residual_q2,
              'fingerprint': fingerprint(scenario)}
    for k, v in report.items():
        print(f'{k}: {v}')

    path = join(output_dir, 'steady.yaml')
    write_yaml(report, path)
    return [path]


def spectrum_wrapper(scenario, output_dir, **kwargs):
    '''
    Computes the SpectralReport, prints it as key-value lines and writes spectrum.yaml.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    chain, dynamics, modes, lti = _lifted(scenario)
    report = spectrum_report(lti, chain, dynamics, scenario.alpha).to_dict()
    report['lambda_maxre'] = dynamics.max_real_eigenvalue
    report['theta_star'] = dynamics.theta_star

    for k, v in report.items():
        print(f'{k}: {v}')

    path = join(output_dir, 'spectrum.yaml')
    write_yaml(report, path)
    return [path]


def perturb_wrapper(scenario, output_dir, alphas=None, n_jobs=1, progress_bar=False, **kwargs):
    '''
    Runs a step-size sweep and writes sweep.csv and sweep_summary.yaml.

    Parameters
    ----------
    scenario (Scenario): loaded scenario.
    output_dir (str): directory for the artifacts.
    alphas (list): decreasing step sizes; a 5-point halving grid from the scenario alpha if None.
    n_jobs (int): parallel workers.
    progress_bar (bool): display progress bar.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    grid = default_alpha_grid(scenario.alpha) if not alphas else np.asarray(alphas, dtype='float64')
    sweep = alpha_sweep(scenario.mdp, scenario.net, grid, scenario.initial_state_dist,
                        size_guard=scenario.size_guard, n_jobs=n_jobs, progress_bar=progress_bar)

    csv_path = join(output_dir, 'sweep.csv')
    write_table(csv_path, sweep.columns(), _metadata(scenario, 'perturb'))

    summary = sweep.summary()
    for k, v in summary.items():
        print(f'{k}: {v}')

    yaml_path = join(output_dir, 'sweep_summary.yaml')
    write_yaml(summary, yaml_path)
    return [csv_path, yaml_path]


def _exact_or_nan(scenario, horizon):
    try:
        return error_trajectory(scenario.mdp, scenario.net, scenario.alpha, scenario.theta0, horizon,
                                scenario.initial_state_dist, size_guard=scenario.size_guard).deltas
    except MomentBlowupError as e:
        warnings.warn(f'exact trajectory unavailable: {e}')
        return np.full(horizon + 1, np.nan)


def _monte_carlo(scenario, n_jobs, progress_bar):
    return monte_carlo_error(scenario.mdp, scenario.net, scenario.alpha, scenario.theta0,
                             scenario.horizon, scenario.trials, scenario.seed,
                             scenario.initial_state_dist, n_jobs=n_jobs, progress_bar=progress_bar)


def simulate_wrapper(scenario, output_dir, n_jobs=1, progress_bar=False, **kwargs):
    '''
    Monte Carlo estimate of the error trajectory; writes mc.csv.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    mc = _monte_carlo(scenario, n_jobs, progress_bar)
    exact = _exact_or_nan(scenario, scenario.horizon)

    path = join(output_dir, 'mc.csv')
    write_table(path, {'k': np.arange(scenario.horizon + 1), 'delta_hat': mc.deltas_hat,
                       'stderr': mc.stderrs, 'delta_exact': exact},
                _metadata(scenario, 'simulate', trials=mc.trials))

    print(f'{mc.trials} trials, delta_hat^{scenario.horizon} = {mc.deltas_hat[-1]:.10g} '
          f'+/- {mc.stderrs[-1]:.3g}')
    return [path]


def z_scores(delta_hat, stderr, delta_exact):
    '''
    (delta_hat - delta) / stderr. Steps where the estimate matches the exact value up to
    rounding score 0, so steps where every trial saw the same error do not divide rounding
    noise by a vanishing stderr.
    '''
    delta_hat, stderr, delta_exact = (np.asarray(a, dtype='float64') for a in (delta_hat, stderr, delta_exact))
    diff = delta_hat - delta_exact
    with np.errstate(divide='ignore', invalid='ignore'):
        z = diff / stderr
    z[np.isclose(delta_hat, delta_exact, rtol=1e-12, atol=1e-15)] = 0
    return z


def compare_wrapper(scenario, output_dir, n_jobs=1, progress_bar=False, **kwargs):
    '''
    Joins the exact trajectory with the Monte Carlo estimate; writes compare.csv.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    traj = error_trajectory(scenario.mdp, scenario.net, scenario.alpha, scenario.theta0,
                            scenario.horizon, scenario.initial_state_dist,
                            size_guard=scenario.size_guard)
    mc = _monte_carlo(scenario, n_jobs, progress_bar)
    z = z_scores(mc.deltas_hat, mc.stderrs, traj.deltas)

    path = join(output_dir, 'compare.csv')
    write_table(path, {'k': np.arange(scenario.horizon + 1), 'delta_exact': traj.deltas,
                       'delta_hat': mc.deltas_hat, 'stderr': mc.stderrs, 'z': z},
                _metadata(scenario, 'compare', trials=mc.trials))

    within = float(np.mean(np.abs(z) <= Z_BOUND))
    print(f'{100 * within:.2f}% of steps have |z| <= {Z_BOUND} ({mc.trials} trials)')
    return [path]


def boundary_wrapper(scenario, output_dir, lo=0.01, hi=2.0, **kwargs):
    '''
    Locates the step size where the second-moment system loses stability; writes boundary.yaml.

    Returns
    -------
    artifacts (list): paths of the written files.
    '''

    boundary = critical_step_size(scenario.mdp, scenario.net, lo, hi,
                                  initial_state_dist=scenario.initial_state_dist,
                                  size_guard=scenario.size_guard)
    report = boundary.to_dict()
    for k, v in report.items():
        print(f'{k}: {v}')

    path = join(output_dir, 'boundary.yaml')
    write_yaml(report, path)
    return [path]


COMMANDS = {
    'validate': validate_wrapper,
    'exact': exact_wrapper,
    'steady': steady_wrapper,
    'spectrum': spectrum_wrapper,
    'perturb': perturb_wrapper,
    'simulate': simulate_wrapper,
    'compare': compare_wrapper,
    'boundary': boundary_wrapper,
}


def execute_command(cmd, scenario, output_dir, **opts):
    '''
    Runs one command on a loaded scenario.

    Parameters
    ----------
    cmd (str): one of COMMANDS.
    scenario (Scenario): loaded scenario.
    output_dir (str): directory for the artifacts, created if missing.
    opts (dict): command options (alphas, n_jobs, progress_bar, lo, hi).

    Returns
    -------
    status (int): 0 success, 1 validation, 2 instability, 3 size guard, 4 I/O.
    artifacts (list): paths of the written files.
    '''

    if cmd not in COMMANDS:
        raise ValueError(f'unknown command {cmd!r}; expected one of {sorted(COMMANDS)}')

    try:
        os.makedirs(output_dir, exist_ok=True)
        return 0, COMMANDS[cmd](scenario, output_dir, **opts)
    except Exception as e:
        code = exit_code(e)
        if code is None:
            raise
        print(f'Error: {e}', file=sys.stderr)
        return code, []


def run_command(cmd, scenario_file, output_dir, overrides=None, **opts):
    '''
    Loads a scenario file, applies command-line overrides and runs one command.

    Parameters
    ----------
    cmd (str): one of COMMANDS.
    scenario_file (str): path to the scenario file.
    output_dir (str): directory for the artifacts.
    overrides (dict): scenario fields to replace (None values are ignored).
    opts (dict): command options passed to the wrapper.

    Returns
    -------
    status (int): exit status.
    artifacts (list): paths of the written files.
    '''

    if scenario_file is None:
        print('Error: no scenario file given (use --scenario)', file=sys.stderr)
        return 4, []

    try:
        scenario = load_scenario(scenario_file).with_overrides(**(overrides or {}))
    except ScenarioValidationError as e:
        print_report(e.report)
        print(f'Error: {e}', file=sys.stderr)
        return 1, []
    except Exception as e:
        code = exit_code(e)
        if code is None:
            raise
        print(f'Error: {e}', file=sys.stderr)
        return code, []

    return execute_command(cmd, scenario, output_dir, **opts)
