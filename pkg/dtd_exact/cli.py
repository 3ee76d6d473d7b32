'''
CLI front-end operations. Every command reads a scenario file plus optional overrides,
calls the corresponding wrapper function and exits with its status.

Note: These functions simply read all the parameters into a dictionary,
 and then call the corresponding wrapper function with the given input parameters.
'''

import click
from dtd_exact import __version__
from dtd_exact.util import command_with_config, write_yaml
from dtd_exact.helpers.wrappers import run_command

orig_init = click.core.Option.__init__


def new_init(self, *args, **kwargs):
    orig_init(self, *args, **kwargs)
    self.show_default = True


click.core.Option.__init__ = new_init


@click.group()
@click.version_option(__version__)
def cli():
    pass


def common_scenario_options(function):
    '''
    Decorator function for grouping the options shared by every analysis command.

    Parameters
    ----------
    function: Function to add enclosed parameters to as click options.

    Returns
    -------
    function: Updated function including shared parameters.
    '''

    function = click.option('--scenario', '-s', type=click.Path(), default=None,
                            help='Scenario file (JSON or YAML)')(function)
    function = click.option('--alpha', type=float, default=None,
                            help='Step size; overrides the scenario value')(function)
    function = click.option('--size-guard', type=int, default=None,
                            help='Largest second-moment dimension assembled as an explicit matrix')(function)
    function = click.option('--out', '-o', type=click.Path(), default='dtd_results',
                            help='Output directory for artifacts')(function)
    function = click.option('--config-file', type=click.Path())(function)
    function = click.option('--progress-bar', '-p', is_flag=True, help='Show verbose progress bars.')(function)
    return function


def trajectory_options(function):
    function = click.option('--horizon', '-k', type=int, default=None,
                            help='Number of steps K; overrides the scenario value')(function)
    return function


def simulation_options(function):
    function = click.option('--trials', '-t', type=int, default=None,
                            help='Monte Carlo trials; overrides the scenario value')(function)
    function = click.option('--seed', type=int, default=None,
                            help='Master seed; overrides the scenario value')(function)
    function = click.option('--n-jobs', type=int, default=1,
                            help='Parallel workers for trial batches')(function)
    return function


def _parse_alphas(alphas):
    if alphas is None or isinstance(alphas, (list, tuple)):
        return alphas
    try:
        return [float(a) for a in str(alphas).split(',') if a.strip()]
    except ValueError:
        raise click.BadParameter(f'expected a comma-separated list of numbers, got {alphas!r}',
                                 param_hint='--alphas')


def _run(cmd, scenario, out, alpha=None, horizon=None, trials=None, seed=None, size_guard=None,
         config_file=None, **opts):
    overrides = {'alpha': alpha, 'horizon': horizon, 'trials': trials, 'seed': seed,
                 'size_guard': size_guard}
    status, _ = run_command(cmd, scenario, out, overrides, **opts)
    click.get_current_context().exit(status)


@cli.command(name='validate', cls=command_with_config('config_file'),
             help='Checks the MDP, feature and network invariants of a scenario file.')
@common_scenario_options
def validate(scenario, out, **config_data):

    _run('validate', scenario, out, **config_data)


@cli.command(name='exact', cls=command_with_config('config_file'),
             help='Computes the exact mean-squared error trajectory with the moment recursion.')
@common_scenario_options
@trajectory_options
def exact(scenario, out, **config_data):

    _run('exact', scenario, out, **config_data)


@cli.command(name='steady', cls=command_with_config('config_file'),
             help='Computes the steady-state limits of the moments and the error.')
@common_scenario_options
def steady(scenario, out, **config_data):

    _run('steady', scenario, out, **config_data)


@cli.command(name='spectrum', cls=command_with_config('config_file'),
             help='Reports spectral radii, mixing rate, stability and first-order predictions.')
@common_scenario_options
def spectrum(scenario, out, **config_data):

    _run('spectrum', scenario, out, **config_data)


@cli.command(name='perturb', cls=command_with_config('config_file'),
             help='Sweeps decreasing step sizes and fits the small step-size slopes.')
@common_scenario_options
@click.option('--alphas', type=str, default=None,
              help='Comma-separated decreasing step sizes; default halves --alpha 5 times')
@click.option('--n-jobs', type=int, default=1, help='Parallel workers for the sweep points')
def perturb(scenario, out, alphas, **config_data):

    _run('perturb', scenario, out, alphas=_parse_alphas(alphas), **config_data)


@cli.command(name='simulate', cls=command_with_config('config_file'),
             help='Estimates the error trajectory by Monte Carlo simulation of decentralized TD(0).')
@common_scenario_options
@trajectory_options
@simulation_options
def simulate(scenario, out, **config_data):

    _run('simulate', scenario, out, **config_data)


@cli.command(name='compare', cls=command_with_config('config_file'),
             help='Joins the exact trajectory and the Monte Carlo estimate with per-step z-scores.')
@common_scenario_options
@trajectory_options
@simulation_options
def compare(scenario, out, **config_data):

    _run('compare', scenario, out, **config_data)


@cli.command(name='boundary', cls=command_with_config('config_file'),
             help='Finds the step size where the second-moment system stops being Schur stable.')
@common_scenario_options
@click.option('--lo', type=float, default=0.01, help='Lower end of the step-size bracket')
@click.option('--hi', type=float, default=2.0, help='Upper end of the step-size bracket')
def boundary(scenario, out, **config_data):

    _run('boundary', scenario, out, **config_data)


@cli.command(name='generate-config', help='Generates a configuration file that holds editable option defaults.')
@click.option('--output-file', '-o', type=click.Path(), default='config.yaml')
def generate_config(output_file):

    params = {}
    for cmd in (exact, perturb, simulate, boundary):
        params.update({p.name: p.default for p in cmd.params
                       if isinstance(p, click.Option) and not p.required and p.name != 'config_file'})

    write_yaml(params, output_file)

    print(f'Successfully generated config file {output_file}.')


if __name__ == '__main__':
    cli()
