# -------------------------------------------------------------------------------------------------------------------- #
# Import packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import logging
import tempfile
import dataclasses
import numpy as np
import pandas as pd

from dataclasses import dataclass
from .exceptions import CsvWriteError
from .risk_model import RiskParams, calibrate_loss_model, compute_minimum_depths
from .chain_sim import SimConfig, run_simulation, estimate_revocation_curve
from .pool_model import (BLOCK_INTERVAL, DEFAULT_DELAYS, DEPTH_CAP, EmpiricalModel, compute_depth_one_revocation,
                         compute_pool_curve)


logger = logging.getLogger(__name__)

# Sources of revocation curves
SIMULATED = 'simulated'
POOL_MODEL = 'pool-model'
SOURCES = (SIMULATED, POOL_MODEL)

# Default grids
DEFAULT_VALUES = np.geomspace(0.01, 1e4, 200)
SIMULATED_DELAYS = tuple(range(1, 11))
HISTOGRAM_DELAYS = (4, 6, 8)

# Output schemas
SWITCH_HISTOGRAM_COLUMNS = ['delay', 'switch_depth', 'count', 'trials', 'count_per_trial']
REVOCATION_COLUMNS = ['delay', 'depth', 'p_rev']
DEPTH_VALUE_COLUMNS = ['delay', 'value', 'min_depth', 'satisfied']
POOL_SHARE_COLUMNS = ['pool', 'blocks', 'share']
DEPTH_ONE_COLUMNS = ['delay', 'p1']

# Secondary sort keys (the primary key is the delay)
SORT_KEYS = ('switch_depth', 'depth', 'value')


# -------------------------------------------------------------------------------------------------------------------- #
# Define the sweep parameters
# -------------------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class SweepSpec:

    """ Grid of transaction values and network delays explored by a sweep

    Parameters
    ----------
    values : ndarray with shape (N,)
        Transaction values in dollars (strictly increasing, non-negative). Logarithmic by default because the loss
        threshold decays double-exponentially with the value

    delays : sequence
        Network delays (rounds for the simulated source, seconds for the pool-model source)

    source : string
        'simulated' or 'pool-model'

    risk : RiskParams
        Prospect theory parameters used to compute the loss thresholds

    """

    values: np.ndarray = dataclasses.field(default_factory=lambda: DEFAULT_VALUES.copy())
    delays: tuple = SIMULATED_DELAYS
    source: str = SIMULATED
    risk: RiskParams = dataclasses.field(default_factory=RiskParams)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        delays = tuple(self.delays)
        if values.ndim != 1 or values.size == 0:             raise ValueError('The value grid cannot be empty')
        if np.any(~np.isfinite(values)) or np.any(values < 0): raise ValueError('Values must be finite and non-negative')
        if np.any(np.diff(values) <= 0):                     raise ValueError('The value grid must be strictly increasing')
        if not delays:                                       raise ValueError('The delay grid cannot be empty')
        if any(delay <= 0 for delay in delays):              raise ValueError('Delays must be positive')
        if any(b <= a for a, b in zip(delays, delays[1:])):  raise ValueError('The delay grid must be strictly increasing')
        if self.source not in SOURCES:                       raise ValueError('source must be one of %s' % (SOURCES,))
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'delays', delays)


# -------------------------------------------------------------------------------------------------------------------- #
# Curve sources (computed once per delay and cached within a sweep)
# -------------------------------------------------------------------------------------------------------------------- #
class SimulatedCurveSource:

    """ Revocation curves estimated by the fork simulator, one simulation per delay (in rounds)

    `base_config` provides every simulation parameter except the delay

    """

    def __init__(self, base_config=None, workers=1):
        self.base_config = SimConfig() if base_config is None else base_config
        self.workers = workers
        self.histograms = {}
        self.curves = {}

    def get_histogram(self, delay):
        if delay not in self.histograms:
            config = dataclasses.replace(self.base_config, delay=int(delay))
            self.histograms[delay] = run_simulation(config, workers=self.workers)
        else:
            logger.debug('Reusing the simulation of delay %s', delay)
        return self.histograms[delay]

    def get_curve(self, delay):
        if delay not in self.curves:
            self.curves[delay] = estimate_revocation_curve(self.get_histogram(delay))
        return self.curves[delay]

    __call__ = get_curve


class PoolCurveSource:

    """ Geometric revocation curves of a pool table, one per propagation delay (in seconds) """

    def __init__(self, table, block_interval=BLOCK_INTERVAL, d_max=10):
        self.table = table
        self.block_interval = block_interval
        self.d_max = d_max
        self.curves = {}

    def get_curve(self, delay):
        if delay not in self.curves:
            self.curves[delay] = compute_pool_curve(self.table, delay, self.d_max, self.block_interval)
        return self.curves[delay]

    __call__ = get_curve


# -------------------------------------------------------------------------------------------------------------------- #
# Figure tables
# -------------------------------------------------------------------------------------------------------------------- #
def tabulate_switch_histograms(histograms):

    """ Rows (delay, switch_depth, count, trials, count_per_trial) of a list of switch histograms """

    rows = []
    for histogram in histograms:
        counts = histogram.switch_counts
        nonzero = np.flatnonzero(counts)
        if nonzero.size == 0:
            continue
        for depth in range(1, int(nonzero[-1]) + 1):
            rows.append((histogram.config.delay, depth, int(counts[depth]), histogram.trials,
                         counts[depth] / histogram.trials))

    return pd.DataFrame(rows, columns=SWITCH_HISTOGRAM_COLUMNS)


def compute_switch_histogram_table(configs, workers=1):

    """ Simulate every configuration (one per delay) and tabulate the number of switches of each depth """

    return tabulate_switch_histograms([run_simulation(config, workers=workers) for config in configs])


def compute_revocation_table(curves):

    """ Rows (delay, depth, p_rev) of a list of revocation curves

    Geometric curves are extended to the deepest depth among the curves so that they share a depth grid

    """

    if not curves:
        return pd.DataFrame([], columns=REVOCATION_COLUMNS)

    d_max = max(curve.max_depth for curve in curves)
    frames = []
    for curve in curves:
        if curve.is_extensible and curve.max_depth < d_max:
            curve = curve.extend(d_max)
        frames.append(pd.DataFrame({'delay': curve.delay, 'depth': curve.depths, 'p_rev': curve.P},
                                   columns=REVOCATION_COLUMNS))

    return pd.concat(frames, ignore_index=True)


def compute_depth_value_table(spec, curves, d_max=None):

    """ Minimum confirmation depth of every value of the grid for every delay

    Parameters
    ----------
    spec : SweepSpec
        Value and delay grids and risk parameters

    curves : callable or mapping
        Revocation curve of each delay, e.g. SimulatedCurveSource or PoolCurveSource

    d_max : int
        Deepest depth considered. Defaults to the last depth of empirical curves and to DEPTH_CAP for geometric ones

    Returns
    -------
    table : DataFrame
        Rows (delay, value, min_depth, satisfied). When no depth satisfies the threshold, `satisfied` is False and
        `min_depth` holds d_max + 1

    """

    model = calibrate_loss_model(spec.risk)
    get_curve = curves if callable(curves) else curves.__getitem__

    frames = []
    for delay in spec.delays:
        curve = get_curve(delay)
        depth_limit = d_max
        if depth_limit is None:
            depth_limit = DEPTH_CAP if curve.is_extensible else curve.max_depth
        depths, satisfied = compute_minimum_depths(spec.values, curve, model, depth_limit)
        if not np.all(satisfied):
            logger.warning('Delay %s: %d values cannot be finalized within %d blocks',
                           delay, np.count_nonzero(~satisfied), int(np.max(depths)) - 1)
        frames.append(pd.DataFrame({'delay': delay, 'value': spec.values, 'min_depth': depths,
                                    'satisfied': satisfied}, columns=DEPTH_VALUE_COLUMNS))

    return pd.concat(frames, ignore_index=True)


def compute_pool_share_table(table):

    """ Rows (pool, blocks, share) of a pool table, in table order """

    return pd.DataFrame({'pool': list(table.names), 'blocks': table.blocks, 'share': table.get_shares()},
                        columns=POOL_SHARE_COLUMNS)


def compute_depth_one_table(table, delays, block_interval=BLOCK_INTERVAL):

    """ Rows (delay, p1) with the depth-one revocation probability of each propagation delay """

    p1 = [compute_depth_one_revocation(EmpiricalModel.from_table(table, delay, block_interval)) for delay in delays]
    return pd.DataFrame({'delay': list(delays), 'p1': p1}, columns=DEPTH_ONE_COLUMNS)


# -------------------------------------------------------------------------------------------------------------------- #
# Bundles of figure datasets
# -------------------------------------------------------------------------------------------------------------------- #
def write_simulated_bundle(spec, source, out_dir, histogram_delays=HISTOGRAM_DELAYS):

    """ Write the switch histogram, revocation and depth-value tables of the simulated source

    Returns the list of written paths

    """

    histograms = [source.get_histogram(delay) for delay in histogram_delays]
    curves = [source.get_curve(delay) for delay in spec.delays]
    outputs = [
        ('sim_switch_histogram.csv', tabulate_switch_histograms(histograms)),
        ('sim_revocation.csv',       compute_revocation_table(curves)),
        ('sim_depth_value.csv',      compute_depth_value_table(spec, source)),
    ]

    return _write_outputs(outputs, out_dir)


def write_pool_bundle(spec, source, out_dir):

    """ Write the pool share, depth-one, revocation and depth-value tables of the pool-model source """

    curves = [source.get_curve(delay) for delay in spec.delays]
    outputs = [
        ('pool_shares.csv',      compute_pool_share_table(source.table)),
        ('pool_depth_one.csv',   compute_depth_one_table(source.table, spec.delays, source.block_interval)),
        ('pool_revocation.csv',  compute_revocation_table(curves)),
        ('pool_depth_value.csv', compute_depth_value_table(spec, source)),
    ]

    return _write_outputs(outputs, out_dir)


def _write_outputs(outputs, out_dir):
    paths = []
    for name, table in outputs:
        path = os.path.join(out_dir, name)
        size = emit_csv(table, path)
        logger.info('Wrote %s (%d bytes, %d rows)', path, size, len(table))
        paths.append(path)
    return paths


# -------------------------------------------------------------------------------------------------------------------- #
# CSV serialization
# -------------------------------------------------------------------------------------------------------------------- #
def sort_table(table):

    """ Sort the rows by delay and then by depth or value (tables without a delay column keep their order) """

    if 'delay' not in table.columns:
        return table.reset_index(drop=True)
    keys = ['delay'] + [column for column in SORT_KEYS if column in table.columns]
    return table.sort_values(keys, kind='mergesort').reset_index(drop=True)


def _get_umask():
    umask = os.umask(0)
    os.umask(umask)
    return umask


def emit_csv(table, destination):

    """ Write a table as CSV with a header row and return the number of bytes written

    Floating point numbers are written with 17 significant digits, which round-trips every double exactly
    The file is written to a temporary file in the destination directory and then renamed over the destination

    """

    text = sort_table(table).to_csv(index=False, float_format='%.17g', lineterminator='\n')
    data = text.encode('utf-8')

    directory = os.path.dirname(os.path.abspath(destination))
    temporary = None
    try:
        with tempfile.NamedTemporaryFile(dir=directory, prefix='.tmp-', suffix='.csv', delete=False) as file:
            temporary = file.name
            file.write(data)
        os.chmod(temporary, 0o666 & ~_get_umask())
        os.replace(temporary, destination)
    except OSError as error:
        if temporary is not None and os.path.exists(temporary):
            os.remove(temporary)
        raise CsvWriteError(destination, error.strerror or str(error)) from error

    return len(data)


def read_csv(path):

    """ Read a table written by emit_csv() """

    return pd.read_csv(path, float_precision='round_trip')
