'''
General helper/convenience utilities that are used throughout the dtd_exact package.
'''
import click
import h5py
import joblib
import scipy
import numpy as np
from cytoolz import valmap
from ruamel.yaml import YAML
from dtd_exact import __version__


# from https://stackoverflow.com/questions/46358797/
# python-click-supply-arguments-and-options-from-a-configuration-file
def command_with_config(config_file_param_name):
    '''
    Builds a click.Command class that reads option values from a YAML config file.

    Values given explicitly on the command line win over config file values,
    and config file values win over option defaults.

    Parameters
    ----------
    config_file_param_name (str): name of the click option holding the config file path.

    Returns
    -------
    custom_command_class (click.Command subclass): command class to pass as `cls=`.
    '''

    class custom_command_class(click.Command):

        def invoke(self, ctx):
            config_file = ctx.params[config_file_param_name]
            param_defaults = {p.name: p.default for p in self.params
                              if isinstance(p, click.core.Option)}
            param_defaults = {k: tuple(v) if isinstance(v, list) else v for k, v in param_defaults.items()}
            param_cli = {k: tuple(v) if isinstance(v, list) else v for k, v in ctx.params.items()}

            if config_file is not None:

                config_data = read_yaml(config_file) or {}
                # only use keys that are actually defined as options
                config_data = {k.replace('-', '_'): tuple(v) if isinstance(v, list) else v
                               for k, v in config_data.items()}
                config_data = {k: v for k, v in config_data.items() if k in param_defaults}

                # options the user set explicitly differ from their defaults
                diffs = set(param_defaults.items()) ^ set(param_cli.items())

                combined = {**param_defaults, **config_data}

                for k in {d[0] for d in diffs}:
                    combined[k] = ctx.params[k]

                ctx.params = combined

            return super().invoke(ctx)

    return custom_command_class


def read_yaml(yaml_file):
    '''
    Reads a yaml (or json) file into a dict object.

    Parameters
    ----------
    yaml_file (str): path to yaml file

    Returns
    -------
    return_dict (dict): dict of yaml contents
    '''

    with open(yaml_file, 'r') as f:
        return YAML(typ='safe').load(f)


def write_yaml(data, yaml_file):
    '''
    Writes a dict of plain python/numpy values to a yaml file.

    Parameters
    ----------
    data (dict): values to write; numpy values are converted with clean_dict().
    yaml_file (str): destination path.

    Returns
    -------
    None
    '''

    yaml = YAML(typ='safe')
    yaml.default_flow_style = False
    with open(yaml_file, 'w') as f:
        yaml.dump(clean_dict(data), f)


def clean_dict(dct):
    '''
    Standardizes types of dict values so they can be serialized.

    Parameters
    ----------
    dct (dict): dict object with mixed type value objects.

    Returns
    -------
    dct (dict): dict object with list/scalar python value objects.
    '''

    def clean_entry(e):
        if isinstance(e, dict):
            out = clean_dict(e)
        elif isinstance(e, np.ndarray):
            out = e.tolist()
        elif isinstance(e, np.generic):
            out = e.item()
        elif isinstance(e, tuple):
            out = list(e)
        else:
            out = e
        return out

    return valmap(clean_entry, dct)


def dict_to_h5(h5, dic, root='/', annotations=None):
    '''
    Save a dict to an h5 file, mounting at root.
    Keys are mapped to group names recursively.

    Parameters
    ----------
    h5 (h5py.File instance): h5py.file object to operate on
    dic (dict): dictionary of data to write
    root (string): group on which to add additional groups and datasets
    annotations (dict): descriptions to attach to datasets, keyed like dic.

    Returns
    -------
    None
    '''

    if not root.endswith('/'):
        root = root + '/'

    if annotations is None:
        annotations = {}

    for key, item in dic.items():
        dest = root + key
        if isinstance(item, (np.ndarray, np.generic, str, bytes)):
            h5[dest] = item
        elif isinstance(item, (tuple, list)):
            h5[dest] = np.asarray(item)
        elif isinstance(item, (bool, int, float)):
            h5[dest] = np.asarray([item])[0]
        elif item is None:
            h5.create_dataset(dest, data=h5py.Empty(dtype=h5py.special_dtype(vlen=str)))
        elif isinstance(item, dict):
            dict_to_h5(h5, item, dest, annotations.get(key) if isinstance(annotations.get(key), dict) else None)
            continue
        else:
            raise ValueError(f'Cannot save {type(item)} type to key {dest}')

        if isinstance(annotations.get(key), str):
            h5[dest].attrs['description'] = annotations[key]


def vec(matrix):
    '''
    Column-stacking vectorization, vec([x_1 ... x_M]) = [x_1; ...; x_M].

    Parameters
    ----------
    matrix (2d numpy array): matrix to vectorize.

    Returns
    -------
    (1d numpy array): column-major flattening of matrix.
    '''

    return np.asarray(matrix).ravel(order='F')


def unvec(vector, rows, cols):
    '''
    Inverse of vec().

    Parameters
    ----------
    vector (1d numpy array): column-stacked entries, length rows * cols.
    rows (int): number of rows of the result.
    cols (int): number of columns of the result.

    Returns
    -------
    (2d numpy array): rows x cols matrix.
    '''

    return np.asarray(vector).reshape((rows, cols), order='F')


def spectral_radius(matrix):
    '''
    Largest eigenvalue modulus of a square matrix, via dense eigenvalue computation.

    Parameters
    ----------
    matrix (2d numpy array): square matrix.

    Returns
    -------
    (float): spectral radius.
    '''

    matrix = np.asarray(matrix)
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(matrix))))


def scenario_fingerprint(*parts):
    '''
    Stable hash of the inputs that determine a computation (arrays, scalars, dicts).

    Parameters
    ----------
    parts (objects): anything joblib can hash; numpy arrays are hashed by content.

    Returns
    -------
    (str): md5 hex digest.
    '''

    return joblib.hash(parts)


def package_versions():
    '''
    Versions of this package and of the numerical stack, recorded in output metadata.

    Returns
    -------
    (dict): package name -> version string.
    '''

    return {'dtd_exact': __version__, 'numpy': np.__version__, 'scipy': scipy.__version__}
