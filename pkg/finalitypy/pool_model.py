# -------------------------------------------------------------------------------------------------------------------- #
# Import packages
# -------------------------------------------------------------------------------------------------------------------- #
import io
import re
import logging
import numpy as np
import pandas as pd
import scipy.optimize

from dataclasses import dataclass
from .exceptions import MalformedRow, EmptyTable, DuplicatePool, NoDepthSatisfies
from .risk_model import RevocationCurve, compute_minimum_depths


logger = logging.getLogger(__name__)

# Target block interval of Bitcoin (seconds)
BLOCK_INTERVAL = 600.0

# Block propagation references (seconds): half of the network, 95th percentile, and nearly all nodes
MEDIAN_PROPAGATION_DELAY = 6.5
P95_PROPAGATION_DELAY = 40.0
WORST_CASE_PROPAGATION_DELAY = 60.0

# Delay grid of the empirical figures (seconds)
DEFAULT_DELAYS = (0.05, 1.0, MEDIAN_PROPAGATION_DELAY, P95_PROPAGATION_DELAY, WORST_CASE_PROPAGATION_DELAY)

# Sanity bound on the propagation delay (seconds)
MAX_DELAY = 3600.0

# Deepest depth explored by the empirical depth rule
DEPTH_CAP = 10000


# -------------------------------------------------------------------------------------------------------------------- #
# Define the pool table class
# -------------------------------------------------------------------------------------------------------------------- #
class PoolTable:

    """ Blocks mined by each pool over a sampling window

        Parameters
        ----------
        names : sequence of strings
            Unique pool names, in table order

        blocks : ndarray of int with shape (n_pools,)
            Number of blocks mined by each pool within the window

    """

    def __init__(self, names, blocks):

        names = tuple(str(name) for name in names)
        blocks = np.asarray(blocks, dtype=np.int64)
        if blocks.shape != (len(names),): raise ValueError('names and blocks must have the same length')
        if np.any(blocks < 0):            raise ValueError('Block counts cannot be negative')

        seen = set()
        for name in names:
            if name in seen: raise DuplicatePool(name)
            seen.add(name)

        if np.sum(blocks) == 0:
            raise EmptyTable('The pool table does not contain any mined block')

        self.names = names
        self.blocks = blocks

    @property
    def window(self):
        return int(np.sum(self.blocks))

    @property
    def entries(self):
        return list(zip(self.names, self.blocks.tolist()))

    def get_shares(self):
        """ Hash share p_i = blocks_i / window of every pool """
        return self.blocks / self.window

    def __len__(self):
        return len(self.names)

    def __repr__(self):
        return 'PoolTable(pools=%d, window=%d)' % (len(self), self.window)


def parse_pool_table(text):

    """ Parse a `pool,blocks` CSV table

    The header row is required, lines starting with `#` are ignored, and the row order is preserved

    Raises MalformedRow (missing field, extra field or non-integer count), DuplicatePool, or EmptyTable

    """

    # Only whole lines are comments, a `#` inside a pool name is kept
    lines = [line for line in text.splitlines() if not line.lstrip().startswith('#')]

    # The header is read as a data row so that rows with extra fields raise instead of shifting into the index
    try:
        frame = pd.read_csv(io.StringIO('\n'.join(lines)), header=None, dtype=str, keep_default_na=False,
                            skipinitialspace=True, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise EmptyTable('The pool table is empty')
    except pd.errors.ParserError as error:
        match = re.search(r'line (\d+)', str(error))
        raise MalformedRow(int(match.group(1)) if match else 0, '', str(error).strip())

    header = ['' if pd.isna(item) else str(item).strip() for item in frame.iloc[0]]
    if header != ['pool', 'blocks']:
        raise MalformedRow(0, ','.join(header), 'the header must be `pool,blocks`')
    if len(frame) == 1:
        raise EmptyTable('The pool table has no rows')

    names, blocks = [], []
    rows = frame.iloc[1:].itertuples(index=False, name=None)
    for row_number, (name, count) in enumerate(rows, start=1):
        name = '' if pd.isna(name) else str(name).strip()
        count = '' if pd.isna(count) else str(count).strip()
        line = '%s,%s' % (name, count)
        if not name:  raise MalformedRow(row_number, line, 'missing pool name')
        if not count: raise MalformedRow(row_number, line, 'missing block count')
        try:
            count = int(count)
        except ValueError:
            raise MalformedRow(row_number, line, 'the block count is not an integer')
        if count < 0: raise MalformedRow(row_number, line, 'the block count is negative')
        names.append(name)
        blocks.append(count)

    table = PoolTable(names, blocks)
    logger.debug('Parsed %r', table)

    return table


def read_pool_table(path):
    with open(path, encoding='utf-8') as file:
        return parse_pool_table(file.read())


# -------------------------------------------------------------------------------------------------------------------- #
# Define the empirical revocation model
# -------------------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class EmpiricalModel:

    """ Pools mining as independent Poisson processes that share a total rate of one block per `block_interval`

        Parameters
        ----------
        shares : ndarray with shape (n_pools,)
            Hash share of each pool, in (0, 1] and adding up to one

        delay : scalar
            Block propagation delay in seconds

        block_interval : scalar
            Mean time between blocks in seconds

    """

    shares: np.ndarray
    delay: float
    block_interval: float = BLOCK_INTERVAL

    def __post_init__(self):

        shares = np.asarray(self.shares, dtype=np.float64)
        delay, block_interval = self.delay, self.block_interval
        if shares.ndim != 1 or shares.size == 0:      raise ValueError('shares must be an array of shape (n_pools,)')
        if np.any((shares <= 0) | (shares > 1)):      raise ValueError('Every share must lie in (0, 1]')
        if abs(np.sum(shares) - 1) > 1e-12:           raise ValueError('The shares must add up to one')
        if not np.isfinite(delay) or delay < 0:       raise ValueError('delay must be a non-negative number')
        if not np.isfinite(block_interval) or block_interval <= 0:
            raise ValueError('block_interval must be a positive number')

        object.__setattr__(self, 'shares', shares)
        object.__setattr__(self, 'delay', float(delay))
        object.__setattr__(self, 'block_interval', float(block_interval))

    @classmethod
    def from_table(cls, table, delay, block_interval=BLOCK_INTERVAL):
        """ Build the model from a pool table (pools without blocks do not take part in the race) """
        shares = table.get_shares()
        return cls(shares[shares > 0], delay, block_interval)


def compute_depth_one_revocation(model):

    """ Probability that another pool finds a competing block while the next block propagates

    Over the identity i of the pool that mines the next block, the other pools find blocks at rate (1 - p_i)/T
    The depth-one revocation probability is then P1 = sum_i p_i * (1 - exp(-(1 - p_i) * delay / T))

    Returns
    -------
    P1 : scalar
        Depth-one revocation probability in [0, 1)

    """

    p = model.shares
    P1 = np.sum(p * -np.expm1(-(1 - p) * model.delay / model.block_interval))

    return float(P1)


def compute_first_order_revocation(model):

    """ Small-delay approximation of the depth-one revocation probability, (1 - sum p_i**2) * delay / T """

    return float((1 - np.sum(model.shares ** 2)) * model.delay / model.block_interval)


def compute_concentration(table):

    """ Return the Herfindahl index (sum of squared shares) and the largest share of a pool table """

    shares = table.get_shares()
    return float(np.sum(shares ** 2)), float(np.max(shares))


def solve_delay_for_revocation(shares, target, block_interval=BLOCK_INTERVAL):

    """ Find the propagation delay whose depth-one revocation probability equals `target`

    The depth-one revocation probability grows from zero (no delay) towards the combined share of the pools that have
    competitors, so the problem has a unique root whenever `target` lies below that limit

    """

    shares = np.asarray(shares, dtype=np.float64)
    limit = float(np.sum(shares[shares < 1]))
    if not 0 <= target < limit:
        raise ValueError('The target revocation probability must lie in [0, %g)' % limit)
    if target == 0:
        return 0.0

    def residual(delay):
        return compute_depth_one_revocation(EmpiricalModel(shares, delay, block_interval)) - target

    # Bracket the root by doubling the upper bound
    upper = block_interval
    while residual(upper) < 0:
        upper = 2 * upper

    return float(scipy.optimize.brentq(residual, 0.0, upper, xtol=1e-12, rtol=1e-12))


# -------------------------------------------------------------------------------------------------------------------- #
# Revocation curves and minimum depth from pool data
# -------------------------------------------------------------------------------------------------------------------- #
def compute_geometric_curve(p1, d_max, delay=None):

    """ Revocation curve P_rev(d) = p1**d for d = 1, ..., d_max (extensible to deeper depths on demand) """

    if not 0 <= p1 < 1: raise ValueError('The depth-one revocation probability must lie in [0, 1), got %r' % (p1,))
    return RevocationCurve.geometric(p1, d_max, provenance='pool-model', delay=delay)


def compute_pool_curve(table, delay, d_max, block_interval=BLOCK_INTERVAL):

    """ Geometric revocation curve of a pool table under a propagation delay in seconds """

    if not 0 <= delay <= MAX_DELAY:
        raise ValueError('The propagation delay must lie in [0, %g] seconds, got %r' % (MAX_DELAY, delay))
    model = EmpiricalModel.from_table(table, delay, block_interval)
    p1 = compute_depth_one_revocation(model)
    logger.debug('Delay %g s: depth-one revocation probability %.6g', delay, p1)

    return compute_geometric_curve(p1, d_max, delay=delay)


def compute_empirical_depth(table, delay, v, model, block_interval=BLOCK_INTERVAL, d_cap=DEPTH_CAP):

    """ Minimum confirmation depth of a transaction worth `v` dollars under the empirical pool model

    The geometric curve is extended by doubling its depth until the loss threshold is met or `d_cap` is reached

    Parameters
    ----------
    table : PoolTable
        Blocks mined by each pool

    delay : scalar
        Propagation delay in seconds

    v : scalar
        Transaction value in dollars

    model : LossModel
        Calibrated loss model

    Returns
    -------
    depth : int
        Minimum confirmation depth

    """

    curve = compute_pool_curve(table, delay, 1, block_interval)
    d_max = 16
    while True:
        d_max = min(d_max, d_cap)
        depths, satisfied = compute_minimum_depths(v, curve, model, d_max)
        if satisfied[0]:
            return int(depths[0])
        if d_max == d_cap:
            raise NoDepthSatisfies(float(v), int(d_cap))
        d_max = 2 * d_max
