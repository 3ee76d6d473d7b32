'''
CSV tables with a commented metadata header line.

Layout: `# key=value; key=value`, then the column header, then one row per record
written with 17 significant digits.
'''

import numpy as np
from dtd_exact.util import package_versions

FLOAT_FORMAT = '%.17g'


def table_metadata(**fields):
    '''Package versions merged with caller fields (seed, generator, fingerprint, command, ...).'''
    meta = {f'{k}_version': v for k, v in package_versions().items()}
    meta.update({k: v for k, v in fields.items() if v is not None})
    return meta


def write_table(path, columns, metadata=None):
    '''
    Writes equally long numeric columns to a CSV file.

    Parameters
    ----------
    path (str): output file.
    columns (dict): column name -> 1d array-like, in output order.
    metadata (dict): header fields; values must not contain ';' or newlines.

    Returns
    -------
    None
    '''

    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype='float64') for n in names])
    meta = '; '.join(f'{k}={v}' for k, v in (metadata or {}).items())

    with open(path, 'w') as f:
        f.write(f'# {meta}\n')
        f.write(','.join(names) + '\n')
        np.savetxt(f, data, fmt=FLOAT_FORMAT, delimiter=',')


def read_table(path):
    '''
    Reads a table written by write_table().

    Parameters
    ----------
    path (str): CSV file.

    Returns
    -------
    metadata (dict): header fields as strings.
    columns (dict): column name -> 1d numpy array.
    '''

    with open(path, 'r') as f:
        meta_line = f.readline().rstrip('\n')
        names = f.readline().rstrip('\n').split(',')
        data = np.loadtxt(f, delimiter=',', ndmin=2)

    metadata = {}
    for item in meta_line.lstrip('#').split(';'):
        if '=' in item:
            k, v = item.split('=', 1)
            metadata[k.strip()] = v.strip()

    if data.size == 0:
        data = np.empty((0, len(names)))
    return metadata, {n: data[:, i] for i, n in enumerate(names)}
