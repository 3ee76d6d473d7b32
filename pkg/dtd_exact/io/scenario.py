'''
Scenario files: loading, defaults and validation.

A scenario file is JSON (or YAML) with the keys num_states, transition, gamma, features,
rewards, network_weights and, optionally, initial_state_dist, alpha, theta0, horizon,
trials, seed, size_guard and name.
'''

import numpy as np
from dataclasses import dataclass, replace
from os.path import join, dirname, abspath, basename, splitext
from typing import Optional
from ruamel.yaml.error import YAMLError
from dtd_exact.exceptions import ScenarioParseError, ScenarioValidationError, StructuralError
from dtd_exact.model.chain import check_distribution
from dtd_exact.model.mdp import (PROB_TOL, Check, CommNetwork, MultiAgentMdp, ValidationReport,
                                 make_mdp, make_network, validate_scenario)
from dtd_exact.analysis.mjls import DEFAULT_SIZE_GUARD
from dtd_exact.util import read_yaml

REQUIRED_KEYS = ('num_states', 'transition', 'gamma', 'features', 'rewards', 'network_weights')

DEFAULTS = {
    'alpha': 0.1,
    'horizon': 500,
    'trials': 10_000,
    'seed': 0,
    'size_guard': DEFAULT_SIZE_GUARD,
}


@dataclass(frozen=True)
class Scenario:
    '''
    A validated MDP/network pair with the run parameters of one invocation.

    theta0 (2d numpy array): p x M initial weights, zeros by default.
    initial_state_dist (1d numpy array): mu0, uniform by default.
    report (ValidationReport): results of the load-time checks.
    '''

    name: str
    mdp: MultiAgentMdp
    net: CommNetwork
    alpha: float
    theta0: np.ndarray
    initial_state_dist: np.ndarray
    horizon: int
    trials: int
    seed: int
    size_guard: int
    report: ValidationReport
    path: Optional[str] = None

    def with_overrides(self, **kwargs):
        '''Copy with every non-None keyword replacing the stored value.'''
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if 'theta0' in kwargs:
            kwargs['theta0'] = np.asarray(kwargs['theta0'], dtype='float64')
        return replace(self, **kwargs)


def fixture_path(name):
    '''
    Path of a scenario shipped with the package.

    Parameters
    ----------
    name (str): fixture name, e.g. 'e1' or 'e2'.

    Returns
    -------
    path (str): absolute path of the fixture JSON file.
    '''

    return abspath(join(dirname(__file__), '..', 'data', 'scenarios', f'{name.lower()}.json'))


def _array(data, key, ndim=None):
    try:
        arr = np.array(data[key], dtype='float64')
    except (TypeError, ValueError) as e:
        raise ScenarioParseError(f'"{key}" is not a numeric array: {e}')
    if ndim is not None and arr.ndim not in ndim:
        raise ScenarioParseError(f'"{key}" has {arr.ndim} dimensions, expected {ndim}')
    return arr


def _distribution_check(mu, size):
    try:
        check_distribution(mu, size)
        return Check('initial state distribution', True)
    except StructuralError as e:
        if np.shape(mu) != (size,):
            raise
        return Check('initial state distribution', False,
                     f'{e}: entries {np.asarray(mu).tolist()}, tolerance {PROB_TOL:g}')


def scenario_from_dict(data, path=None):
    '''
    Builds and validates a Scenario from parsed file contents.

    Parameters
    ----------
    data (dict): parsed scenario file.
    path (str): file the data came from, for messages.

    Returns
    -------
    scenario (Scenario): validated scenario with defaults applied.
    '''

    if not isinstance(data, dict):
        raise ScenarioParseError(f'scenario must be a mapping, got {type(data).__name__}')
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise ScenarioParseError(f'scenario is missing required keys: {missing}')

    try:
        gamma = float(data['gamma'])
    except (TypeError, ValueError):
        raise ScenarioParseError(f'"gamma" is not a number: {data["gamma"]!r}')

    mdp = make_mdp(_array(data, 'transition', (2,)), _array(data, 'rewards', (3,)), gamma,
                   _array(data, 'features', (1, 2)))
    net = make_network(_array(data, 'network_weights', (0, 2)))

    if int(data['num_states']) != mdp.num_states:
        raise StructuralError(f'num_states is {data["num_states"]} but transition has '
                              f'{mdp.num_states} rows')

    report = validate_scenario(mdp, net)

    S = mdp.num_states
    if data.get('initial_state_dist') is None:
        mu0 = np.full(S, 1 / S)
    else:
        mu0 = _array(data, 'initial_state_dist', (1,))
        report = report.extend([_distribution_check(mu0, S)])

    shape = (mdp.num_features, mdp.num_agents)
    if data.get('theta0') is None:
        theta0 = np.zeros(shape)
    else:
        theta0 = _array(data, 'theta0', (1, 2))
        if theta0.size != shape[0] * shape[1]:
            raise StructuralError(f"theta0 must have {shape[0]} x {shape[1]} entries, got {theta0.size}")
        theta0 = theta0.reshape(shape)

    if not report.accepted:
        raise ScenarioValidationError(report, path)

    opts = {k: v if data.get(k) is None else data[k] for k, v in DEFAULTS.items()}
    name = data.get('name') or (splitext(basename(path))[0] if path else 'scenario')

    return Scenario(name=str(name), mdp=mdp, net=net, alpha=float(opts['alpha']), theta0=theta0,
                    initial_state_dist=mu0, horizon=int(opts['horizon']), trials=int(opts['trials']),
                    seed=int(opts['seed']), size_guard=int(opts['size_guard']), report=report,
                    path=path)


def load_scenario(path):
    '''
    Reads and validates a scenario file.

    Parameters
    ----------
    path (str): path to a JSON or YAML scenario file.

    Returns
    -------
    scenario (Scenario): validated scenario with defaults applied.
    '''

    try:
        data = read_yaml(path)
    except YAMLError as e:
        raise ScenarioParseError(f'could not parse {path}: {e}')

    return scenario_from_dict(data, path)
