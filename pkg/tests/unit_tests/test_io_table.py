import shutil
import tempfile
import numpy as np
import numpy.testing as npt
from os.path import join
from unittest import TestCase
from dtd_exact import __version__
from dtd_exact.io.table import table_metadata, write_table, read_table


class TestTables(TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_write_read(self):
        path = join(self.tmp, 'trajectory.csv')
        deltas = np.array([1.0, 0.1 + 0.2, 1 / 3, np.nan])
        write_table(path, {'k': np.arange(4), 'delta': deltas}, {'seed': 3, 'command': 'exact'})

        with open(path, 'r') as f:
            lines = f.read().splitlines()
        assert lines[0] == '# seed=3; command=exact'
        assert lines[1] == 'k,delta'
        assert lines[3] == '1,0.30000000000000004'

        meta, cols = read_table(path)
        assert meta == {'seed': '3', 'command': 'exact'}
        npt.assert_array_equal(cols['k'], np.arange(4))
        # 17 significant digits reproduce every double
        npt.assert_array_equal(cols['delta'][:3], deltas[:3])
        assert np.isnan(cols['delta'][3])

    def test_single_row(self):
        path = join(self.tmp, 'one.csv')
        write_table(path, {'alpha': [0.1], 'stable': [True]})
        _, cols = read_table(path)
        npt.assert_array_equal(cols['alpha'], [0.1])
        npt.assert_array_equal(cols['stable'], [1.0])

    def test_metadata(self):
        meta = table_metadata(seed=0, generator='PCG64', fingerprint=None)
        assert meta['dtd_exact_version'] == __version__
        assert meta['numpy_version'] == np.__version__
        assert meta['seed'] == 0 and meta['generator'] == 'PCG64'
        assert 'fingerprint' not in meta
