""" Unit tests for the parameter sweeps and the CSV tables """

# -------------------------------------------------------------------------------------------------------------------- #
# Importing packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import logging
import numpy as np
import pandas as pd
import pytest
import finalitypy as fin


TABLE_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures', 'table1.csv')


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the sweep parameters test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_sweep_spec_defaults():

    """ Test the default logarithmic value grid and the simulated delays """

    spec = fin.SweepSpec()
    assert spec.values.size == 200
    assert np.isclose(spec.values[0], 0.01) and np.isclose(spec.values[-1], 1e4)
    assert spec.delays == tuple(range(1, 11))
    assert spec.source == 'simulated'


@pytest.mark.parametrize('kwargs', [dict(values=[]), dict(values=[1.0, 1.0]), dict(values=[-1.0, 2.0]),
                                    dict(delays=()), dict(delays=(0,)), dict(delays=(3, 2)),
                                    dict(source='oracle')])
def test_sweep_spec_validation(kwargs):

    """ Test that empty, unsorted and negative grids are rejected """

    with pytest.raises(ValueError):
        fin.SweepSpec(**kwargs)


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the figure table test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_switch_histogram_table():

    """ Test the rows of a hand-made histogram """

    config = fin.SimConfig(n_miners=4, delay=6)
    histogram = fin.SwitchHistogram(config, switch_counts=[0, 3, 0, 1], reached=[9, 9, 4], revoked=[3, 3, 1],
                                    trial_switch_counts=[[0, 1, 0, 1], [0, 2, 0, 0]])
    table = fin.tabulate_switch_histograms([histogram])

    assert list(table.columns) == fin.SWITCH_HISTOGRAM_COLUMNS
    assert table['switch_depth'].tolist() == [1, 2, 3]
    assert table['count'].tolist() == [3, 0, 1]
    assert table['trials'].tolist() == [2, 2, 2]
    assert np.allclose(table['count_per_trial'], [1.5, 0.0, 0.5])
    assert (table['delay'] == 6).all()


def test_switch_histogram_table_simulated():

    """ Test one group of rows per simulated delay and the empty table of a single miner """

    configs = [fin.SimConfig(n_miners=5, rounds=150, trials=2, mine_prob=0.2, delay=delay, seed=6)
               for delay in (2, 3)]
    table = fin.compute_switch_histogram_table(configs)
    assert list(table.columns) == fin.SWITCH_HISTOGRAM_COLUMNS
    assert sorted(table['delay'].unique()) == [2, 3]
    assert (table['trials'] == 2).all()
    assert np.allclose(table['count_per_trial'], table['count'] / 2)

    table = fin.compute_switch_histogram_table([fin.SimConfig(n_miners=1, rounds=100, trials=2, delay=4)])
    assert table.empty
    assert list(table.columns) == fin.SWITCH_HISTOGRAM_COLUMNS


def test_switch_histogram_table_per_trial_average():

    """ Test that repeating the same trial leaves the per-trial counts unchanged """

    config = fin.SimConfig(n_miners=5, rounds=200, trials=1, mine_prob=0.2, delay=3, seed=8)
    histogram = fin.simulate_trial(config, 0)
    single = fin.tabulate_switch_histograms([histogram])
    double = fin.tabulate_switch_histograms([fin.SwitchHistogram.merge([histogram, histogram])])

    assert not single.empty
    assert double['count'].tolist() == [2 * count for count in single['count']]
    assert np.array_equal(double['count_per_trial'].to_numpy(), single['count_per_trial'].to_numpy())


def test_revocation_table_common_depths():

    """ Test that geometric curves are extended to the deepest curve of the table """

    curves = [fin.compute_geometric_curve(0.1, 3, delay=1.0), fin.compute_geometric_curve(0.2, 6, delay=2.0)]
    table = fin.compute_revocation_table(curves)

    assert list(table.columns) == fin.REVOCATION_COLUMNS
    assert len(table) == 12
    assert table.groupby('delay')['depth'].max().tolist() == [6, 6]
    assert np.isclose(table.iloc[5]['p_rev'], 1e-6)

    assert fin.compute_revocation_table([]).empty


def test_depth_value_table_pool_source():

    """ Test the depth-value table of the fixture over the default propagation delays """

    table = fin.read_pool_table(TABLE_PATH)
    spec = fin.SweepSpec(values=np.geomspace(0.01, 1e4, 40), delays=fin.DEFAULT_DELAYS, source='pool-model')
    source = fin.PoolCurveSource(table)
    depth_value = fin.compute_depth_value_table(spec, source)

    assert list(depth_value.columns) == fin.DEPTH_VALUE_COLUMNS
    assert len(depth_value) == 40 * 5
    assert depth_value['satisfied'].all()

    # Larger values and longer delays never need fewer blocks
    depths = depth_value.pivot(index='value', columns='delay', values='min_depth').to_numpy()
    assert np.all(np.diff(depths, axis=0) >= 0)
    assert np.all(np.diff(depths, axis=1) >= 0)

    # The pool-model curves are computed once per delay
    assert sorted(source.curves) == sorted(fin.DEFAULT_DELAYS)


def test_depth_value_table_unsatisfied(caplog):

    """ Test the sentinel depth of the values that no observed depth can finalize """

    spec = fin.SweepSpec(values=[1.0, 1000.0], delays=(3,))
    curves = {3: fin.RevocationCurve([0.4, 0.1, 0.05], provenance='simulated', delay=3)}

    with caplog.at_level(logging.WARNING, logger='finalitypy.sweeps'):
        table = fin.compute_depth_value_table(spec, curves)

    assert table['min_depth'].tolist() == [1, 4]
    assert table['satisfied'].tolist() == [True, False]
    assert 'cannot be finalized' in caplog.text


def test_depth_one_and_share_tables():

    """ Test the tables of pool shares and depth-one revocation probabilities """

    table = fin.read_pool_table(TABLE_PATH)
    shares = fin.compute_pool_share_table(table)
    assert shares['blocks'].sum() == 1000
    assert np.isclose(shares['share'].sum(), 1.0)

    depth_one = fin.compute_depth_one_table(table, fin.DEFAULT_DELAYS)
    assert depth_one['delay'].tolist() == list(fin.DEFAULT_DELAYS)
    assert np.all(np.diff(depth_one['p1']) > 0)


def test_simulated_source_cache():

    """ Test that each delay is simulated once """

    source = fin.SimulatedCurveSource(fin.SimConfig(n_miners=5, rounds=100, trials=2, mine_prob=0.2, seed=4))
    histogram = source.get_histogram(2)
    assert histogram.config.delay == 2
    assert source.get_histogram(2) is histogram
    assert source(2) is source.get_curve(2)


@pytest.mark.slow
def test_depth_value_table_simulated_source():

    """ Test that the simulated staircase never needs fewer blocks for larger values or longer delays """

    source = fin.SimulatedCurveSource(fin.SimConfig(trials=4, seed=3), workers=2)
    spec = fin.SweepSpec(values=np.geomspace(0.01, 1e4, 100), delays=(1, 4, 8))
    depth_value = fin.compute_depth_value_table(spec, source)
    deepest = depth_value.groupby('delay')['min_depth'].max().tolist()
    print('Minimum depth of $10,000 for delays 1, 4 and 8  : ', deepest)

    assert depth_value['satisfied'].all()
    depths = depth_value.pivot(index='value', columns='delay', values='min_depth').to_numpy()
    assert np.all(np.diff(depths, axis=0) >= 0)
    assert np.all(np.diff(depths, axis=1) >= 0)


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the CSV test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_emit_csv_exact_floats(tmp_path):

    """ Test that every double survives the CSV text exactly """

    rng = np.random.default_rng(3)
    p_rev = np.concatenate([rng.random(500), 10.0 ** rng.uniform(-300, 0, 500), [0.0, 1.0, 5e-324, 1 / 3]])
    half = p_rev.size // 2
    table = pd.DataFrame({'delay': np.repeat([0.05, 6.5], half), 'depth': np.tile(np.arange(1, half + 1), 2),
                          'p_rev': p_rev})

    path = str(tmp_path / 'revocation.csv')
    size = fin.emit_csv(table, path)
    assert size == os.path.getsize(path)

    table_read = fin.read_csv(path)
    assert list(table_read.columns) == ['delay', 'depth', 'p_rev']
    assert np.array_equal(table_read['p_rev'].to_numpy(), p_rev)
    assert np.array_equal(table_read['delay'].to_numpy(), table['delay'].to_numpy())


def test_emit_csv_sorted_rows(tmp_path):

    """ Test that the rows are sorted by delay and then by depth """

    table = pd.DataFrame({'delay': [2, 1, 2, 1], 'depth': [2, 2, 1, 1], 'p_rev': [0.1, 0.2, 0.3, 0.4]})
    path = str(tmp_path / 'sorted.csv')
    fin.emit_csv(table, path)

    with open(path) as file:
        lines = file.read().splitlines()
    assert lines == ['delay,depth,p_rev', '1,1,0.40000000000000002', '1,2,0.20000000000000001',
                     '2,1,0.29999999999999999', '2,2,0.10000000000000001']


def test_emit_csv_unwritable(tmp_path):

    """ Test the error raised for a missing directory and that no temporary file is left behind """

    table = pd.DataFrame({'delay': [1], 'depth': [1], 'p_rev': [0.5]})
    path = str(tmp_path / 'missing' / 'table.csv')
    with pytest.raises(fin.CsvWriteError) as info:
        fin.emit_csv(table, path)
    assert path in str(info.value)
    assert isinstance(info.value, OSError)

    fin.emit_csv(table, str(tmp_path / 'table.csv'))
    assert os.listdir(tmp_path) == ['table.csv']


def random_table(columns, rng):

    """ Random table of one of the output schemas, with extreme doubles and awkward pool names """

    n = int(rng.integers(0, 30))
    doubles = np.concatenate([rng.random(n), 10.0 ** rng.uniform(-300, 300, n), [0.0, 1.0, 5e-324, 1 / 3]])
    generators = {'delay': lambda: rng.choice([0.05, 1.0, 6.5, 40.0, 60.0], n),
                  'switch_depth': lambda: rng.integers(1, 50, n),
                  'depth': lambda: rng.integers(1, 10000, n),
                  'count': lambda: rng.integers(0, 10 ** 6, n),
                  'trials': lambda: rng.integers(1, 100, n),
                  'min_depth': lambda: rng.integers(1, 10001, n),
                  'satisfied': lambda: rng.random(n) < 0.5,
                  'blocks': lambda: rng.integers(0, 1000, n),
                  'pool': lambda: np.asarray(['pool %d, "%s"' % (k, 'x' * k) for k in range(n)], dtype=object)}

    data = {}
    for column in columns:
        if column in generators:
            data[column] = generators[column]()
        else:
            data[column] = rng.choice(doubles, n)

    return pd.DataFrame(data, columns=columns)


def test_emit_csv_random_tables(tmp_path):

    """ Test that random tables of every output schema re-parse to the same values """

    rng = np.random.default_rng(29)
    schemas = [fin.SWITCH_HISTOGRAM_COLUMNS, fin.REVOCATION_COLUMNS, fin.DEPTH_VALUE_COLUMNS, fin.POOL_SHARE_COLUMNS,
               fin.DEPTH_ONE_COLUMNS]

    for k in range(100):
        table = random_table(schemas[k % len(schemas)], rng)
        path = str(tmp_path / ('table_%d.csv' % k))
        fin.emit_csv(table, path)
        table_read = fin.read_csv(path)
        expected = fin.sort_table(table)

        assert list(table_read.columns) == list(table.columns)
        assert len(table_read) == len(table)
        for column in table.columns:
            if column == 'pool':
                assert table_read[column].tolist() == expected[column].tolist()
            else:
                assert np.array_equal(table_read[column].to_numpy(), expected[column].to_numpy())
        if 'satisfied' in table.columns and len(table) > 0:
            assert table_read['satisfied'].dtype == bool


@pytest.mark.skipif(os.name != 'posix', reason='file modes are POSIX')
def test_emit_csv_file_mode(tmp_path):

    """ Test that the emitted file gets the permissions of the process umask """

    table = pd.DataFrame({'delay': [1], 'depth': [1], 'p_rev': [0.5]})
    umask = os.umask(0o022)
    try:
        fin.emit_csv(table, str(tmp_path / 'table.csv'))
    finally:
        os.umask(umask)
    assert os.stat(tmp_path / 'table.csv').st_mode & 0o777 == 0o644


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the bundle test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_pool_bundle(tmp_path):

    """ Test the files written for the pool-model source """

    spec = fin.SweepSpec(values=np.geomspace(1, 100, 5), delays=(1.0, 60.0), source='pool-model')
    source = fin.PoolCurveSource(fin.read_pool_table(TABLE_PATH), d_max=10)
    paths = fin.write_pool_bundle(spec, source, str(tmp_path))

    assert [os.path.basename(path) for path in paths] == ['pool_shares.csv', 'pool_depth_one.csv',
                                                          'pool_revocation.csv', 'pool_depth_value.csv']
    revocation = fin.read_csv(paths[2])
    assert len(revocation) == 20
    depth_value = fin.read_csv(paths[3])
    assert depth_value['satisfied'].dtype == bool


def test_simulated_bundle(tmp_path):

    """ Test the files written for the simulated source and their reproducibility """

    def write(directory):
        config = fin.SimConfig(n_miners=5, rounds=200, trials=2, mine_prob=0.2, seed=9)
        spec = fin.SweepSpec(values=np.geomspace(0.1, 10, 5), delays=(1, 2))
        return fin.write_simulated_bundle(spec, fin.SimulatedCurveSource(config), directory, histogram_delays=(2,))

    os.mkdir(tmp_path / 'first')
    os.mkdir(tmp_path / 'second')
    first = write(str(tmp_path / 'first'))
    second = write(str(tmp_path / 'second'))

    assert [os.path.basename(path) for path in first] == ['sim_switch_histogram.csv', 'sim_revocation.csv',
                                                          'sim_depth_value.csv']
    for a, b in zip(first, second):
        with open(a, 'rb') as file_a, open(b, 'rb') as file_b:
            assert file_a.read() == file_b.read()


# -------------------------------------------------------------------------------------------------------------------- #
# Check the functions manually
# -------------------------------------------------------------------------------------------------------------------- #
# test_switch_histogram_table()
# test_depth_value_table_pool_source()
# test_emit_csv_exact_floats()
# test_pool_bundle()
