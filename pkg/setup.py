from setuptools import setup, find_packages
import codecs
import os


def read(rel_path):
    here = os.path.abspath(os.path.dirname(__file__))
    with codecs.open(os.path.join(here, rel_path), 'r') as fp:
        return fp.read()

def get_version(rel_path):
    for line in read(rel_path).splitlines():
        if line.startswith('__version__'):
            delim = '"' if '"' in line else "'"
            return line.split(delim)[1]
    else:
        raise RuntimeError("Unable to find version string.")

setup(
    name='dtd-exact',
    description='Exact finite-time mean-squared error of decentralized TD(0) via Markov jump linear system moments',
    version=get_version('dtd_exact/__init__.py'),
    platforms=['mac', 'unix'],
    packages=find_packages(exclude=['tests', 'tests.*']),
    package_data={'dtd_exact': ['data/scenarios/*.json']},
    include_package_data=True,
    install_requires=['h5py>=2.10.0', 'tqdm>=4.40.0', 'scipy>=1.5', 'numpy>=1.18.3', 'click>=7.0',
                      'joblib>=0.15.1', 'cytoolz>=0.10.1', 'statsmodels>=0.10.2',
                      'ruamel.yaml>=0.17'],
    extras_require={'test': ['pytest', 'pytest-cov']},
    python_requires='>=3.8',
    entry_points={'console_scripts': ['dtd-exact = dtd_exact.cli:cli']}
)
