""" Unit tests for the empirical mining pool model """

# -------------------------------------------------------------------------------------------------------------------- #
# Importing packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import itertools
import numpy as np
import pytest
import scipy.stats
import finalitypy as fin


TABLE_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures', 'table1.csv')


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the pool table test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_read_pool_table():

    """ Test the fixture with the most recent 1,000 blocks """

    table = fin.read_pool_table(TABLE_PATH)
    assert len(table) == 22
    assert table.window == 1000
    assert table.entries[0] == ('foundrydigital.com', 299)
    assert table.names[-3:] == ('Unknown1', 'Unknown2', 'Unknown3')

    hhi, top = fin.compute_concentration(table)
    print('The Herfindahl index of the pool table is       : ', hhi)
    assert top == 0.299
    assert np.isclose(hhi, np.sum(table.get_shares() ** 2))


def test_parse_pool_table_format():

    """ Test comments, blank lines and surrounding whitespace """

    text = '# comment\npool,blocks\n\n  alpha , 3\n# another comment\nbeta,1\n'
    table = fin.parse_pool_table(text)
    assert table.entries == [('alpha', 3), ('beta', 1)]
    assert np.allclose(table.get_shares(), [0.75, 0.25])


def test_parse_pool_table_hash_in_name():

    """ Test that only lines starting with `#` are comments """

    table = fin.parse_pool_table('pool,blocks\npool#1,5\n  # indented comment\nother,3\n')
    assert table.entries == [('pool#1', 5), ('other', 3)]

    with pytest.raises(fin.MalformedRow):
        fin.parse_pool_table('pool,blocks\nalpha,3 # trailing note\n')


@pytest.mark.parametrize('text', ['pool,blocks\nalpha,3\nbeta\n',
                                  'pool,blocks\nalpha,3\nbeta,2,7\n',
                                  'pool,blocks\nalpha,3\nbeta,two\n',
                                  'pool,blocks\nalpha,3\nbeta,1.5\n',
                                  'pool,blocks\nalpha,3\nbeta,-1\n',
                                  'pool,blocks\nalpha,3\n,4\n',
                                  'name,count\nalpha,3\n'])
def test_parse_pool_table_malformed(text):

    """ Test that missing fields, extra fields, bad counts and bad headers are rejected """

    with pytest.raises(fin.MalformedRow):
        fin.parse_pool_table(text)


def test_parse_pool_table_row_number():

    """ Test that the error names the offending row """

    with pytest.raises(fin.MalformedRow) as info:
        fin.parse_pool_table('pool,blocks\nalpha,3\nbeta,x\n')
    assert info.value.line_number == 2
    assert 'beta' in str(info.value)


def test_parse_pool_table_duplicates_and_empty():

    """ Test duplicate pool names and tables without blocks """

    with pytest.raises(fin.DuplicatePool):
        fin.parse_pool_table('pool,blocks\nalpha,3\nalpha,1\n')
    with pytest.raises(fin.EmptyTable):
        fin.parse_pool_table('pool,blocks\nalpha,0\nbeta,0\n')
    with pytest.raises(fin.EmptyTable):
        fin.parse_pool_table('pool,blocks\n')
    with pytest.raises(fin.EmptyTable):
        fin.parse_pool_table('')

    # Every table error is also a ValueError
    assert issubclass(fin.MalformedRow, ValueError)


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the depth-one revocation test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_depth_one_revocation_exponential_race():

    """ Test P1 against the probability that the competing pools find a block within the delay """

    rng = np.random.default_rng(5)
    for _ in range(10):
        shares = rng.dirichlet(np.ones(6))
        for delay in [0.05, 6.5, 60.0, 3600.0]:
            model = fin.EmpiricalModel(shares / np.sum(shares), delay)
            P1_exact = np.sum(shares * scipy.stats.expon.cdf(delay, scale=600.0 / (1 - shares)))
            error = abs(fin.compute_depth_one_revocation(model) - P1_exact)
            assert error < 1e-12


def test_depth_one_revocation_table():

    """ Test P1 of the fixture at a one second delay against the first order approximation """

    table = fin.read_pool_table(TABLE_PATH)
    model = fin.EmpiricalModel.from_table(table, delay=1.0)
    P1 = fin.compute_depth_one_revocation(model)
    P1_approximate = fin.compute_first_order_revocation(model)
    print('The depth-one revocation probability is         : ', P1)
    assert abs(P1 - 1.4e-3) < 1e-4
    assert np.isclose(P1, P1_approximate, rtol=1e-3)
    assert P1 < P1_approximate


def test_depth_one_revocation_limits():

    """ Test the zero delay, a single pool, and pools without blocks """

    table = fin.parse_pool_table('pool,blocks\nalpha,3\nbeta,1\n')
    assert fin.compute_depth_one_revocation(fin.EmpiricalModel.from_table(table, 0.0)) == 0.0

    solo = fin.parse_pool_table('pool,blocks\nalpha,10\nidle,0\n')
    model = fin.EmpiricalModel.from_table(solo, 600.0)
    assert np.array_equal(model.shares, [1.0])
    assert fin.compute_depth_one_revocation(model) == 0.0

    with pytest.raises(ValueError):
        fin.EmpiricalModel([0.5, 0.6], 1.0)
    with pytest.raises(ValueError):
        fin.EmpiricalModel([0.5, 0.5], -1.0)


def test_depth_one_revocation_monotonicity():

    """ Test that P1 grows with the delay and peaks at uniform shares """

    table = fin.read_pool_table(TABLE_PATH)
    delays = np.linspace(0, 3600, 200)
    P1 = [fin.compute_depth_one_revocation(fin.EmpiricalModel.from_table(table, delay)) for delay in delays]
    assert np.all(np.diff(P1) > 0)

    # Exhaustive grids of two and three pools
    for n_pools in [2, 3]:
        for delay in [1.0, 60.0, 600.0]:
            uniform = fin.compute_depth_one_revocation(fin.EmpiricalModel(np.full(n_pools, 1 / n_pools), delay))
            for counts in itertools.product(range(1, 11), repeat=n_pools):
                shares = np.asarray(counts) / np.sum(counts)
                P1 = fin.compute_depth_one_revocation(fin.EmpiricalModel(shares, delay))
                assert P1 <= uniform + 1e-15


def test_solve_delay_for_revocation():

    """ Test the delay that reproduces a given fork rate """

    table = fin.read_pool_table(TABLE_PATH)
    shares = table.get_shares()
    for delay in [0.05, 6.5, 60.0, 2000.0]:
        target = fin.compute_depth_one_revocation(fin.EmpiricalModel(shares, delay))
        delay_solved = fin.solve_delay_for_revocation(shares, target)
        assert np.isclose(delay_solved, delay, rtol=1e-8)

    assert fin.solve_delay_for_revocation(shares, 0.0) == 0.0
    with pytest.raises(ValueError):
        fin.solve_delay_for_revocation(shares, 1.0)


# -------------------------------------------------------------------------------------------------------------------- #
# Prepare the pool revocation curve test suite
# -------------------------------------------------------------------------------------------------------------------- #
def test_geometric_curve():

    """ Test the curve P_rev(d) = p1**d """

    curve = fin.compute_geometric_curve(0.5, 3, delay=1.0)
    assert np.allclose(curve.P, [0.5, 0.25, 0.125], rtol=1e-15)
    assert curve.provenance == 'pool-model' and curve.is_extensible

    with pytest.raises(ValueError):
        fin.compute_geometric_curve(1.0, 3)


def test_pool_curves_shape():

    """ Test that the revocation tables decrease with the depth and increase with the delay """

    table = fin.read_pool_table(TABLE_PATH)
    curves = [fin.compute_pool_curve(table, delay, 10) for delay in fin.DEFAULT_DELAYS]
    for curve in curves:
        assert np.all(np.diff(curve.P) < 0)
    for shallow, deep in zip(curves, curves[1:]):
        assert np.all(deep.P > shallow.P)

    for delay in [-1.0, 3601.0]:
        with pytest.raises(ValueError):
            fin.compute_pool_curve(table, delay, 10)


def test_empirical_depth():

    """ Test the minimum depth of a $100 transaction with one second of propagation delay """

    table = fin.read_pool_table(TABLE_PATH)
    model = fin.calibrate_loss_model(fin.RiskParams())
    depth = fin.compute_empirical_depth(table, 1.0, 100.0, model)
    print('The minimum depth of a $100 transaction is      : ', depth)
    assert 5 <= depth <= 7

    # Longer delays never need fewer blocks
    depths = [fin.compute_empirical_depth(table, delay, 100.0, model) for delay in fin.DEFAULT_DELAYS]
    assert np.all(np.diff(depths) >= 0)

    # Without delay there are no forks
    assert fin.compute_empirical_depth(table, 0.0, 1e4, model) == 1


def test_empirical_depth_cap():

    """ Test that the search stops at the depth cap """

    table = fin.parse_pool_table('pool,blocks\nalpha,1\nbeta,1\n')
    model = fin.calibrate_loss_model(fin.RiskParams())
    with pytest.raises(fin.NoDepthSatisfies) as info:
        fin.compute_empirical_depth(table, 3600.0, 1e4, model)
    assert info.value.d_max == fin.DEPTH_CAP


# -------------------------------------------------------------------------------------------------------------------- #
# Check the functions manually
# -------------------------------------------------------------------------------------------------------------------- #
# test_read_pool_table()
# test_depth_one_revocation_table()
# test_depth_one_revocation_monotonicity()
# test_solve_delay_for_revocation()
# test_empirical_depth()
