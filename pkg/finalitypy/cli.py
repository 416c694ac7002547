# -------------------------------------------------------------------------------------------------------------------- #
# Import packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import sys
import logging
import argparse
import numpy as np

from dataclasses import dataclass
from .exceptions import FinalityError
from .risk_model import (RiskParams, RevocationCurve, calibrate_loss_model, compute_loss, compute_loss_threshold,
                         compute_minimum_depth, compute_value_limit)
from .chain_sim import SimConfig, DELAY_MODES, CALIBRATED_BLOCK_RATE, CALIBRATED_SEED
from .pool_model import (BLOCK_INTERVAL, DEFAULT_DELAYS, DEPTH_CAP, MAX_DELAY, read_pool_table,
                         compute_empirical_depth, compute_geometric_curve)
from .sweeps import (SIMULATED, POOL_MODEL, SIMULATED_DELAYS, HISTOGRAM_DELAYS, SweepSpec, SimulatedCurveSource,
                     PoolCurveSource, write_simulated_bundle, write_pool_bundle, read_csv)


logger = logging.getLogger(__name__)

# Exit status of the command line tool
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Environment variable that caps the number of worker processes
THREADS_VARIABLE = 'FINALITY_LAB_THREADS'

# Pool table shipped with the repository
DEFAULT_TABLE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures', 'table1.csv')

LOG_FORMAT = ' %(asctime)s - %(levelname)s - %(message)s'


@dataclass(frozen=True)
class Command:

    """ Validated invocation: the subcommand name and its parsed flags """

    name: str
    args: argparse.Namespace


# -------------------------------------------------------------------------------------------------------------------- #
# Flag validators
# -------------------------------------------------------------------------------------------------------------------- #
def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not an integer' % (text,))
    if value < 1:
        raise argparse.ArgumentTypeError('%r is not a positive integer' % (text,))
    return value


def seed_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not an integer' % (text,))
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError('%r is not a 64-bit unsigned integer' % (text,))
    return value


def _float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not a number' % (text,))
    if not np.isfinite(value):
        raise argparse.ArgumentTypeError('%r is not a finite number' % (text,))
    return value


def positive_float(text):
    value = _float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError('%r is not positive' % (text,))
    return value


def nonnegative_float(text):
    value = _float(text)
    if value < 0:
        raise argparse.ArgumentTypeError('%r is negative' % (text,))
    return value


def open_unit_float(text):
    value = _float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError('%r is not in the open interval (0, 1)' % (text,))
    return value


def probability(text):
    value = _float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError('%r is not a probability in [0, 1]' % (text,))
    return value


def revocation_probability(text):
    value = _float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError('%r is not a probability in [0, 1)' % (text,))
    return value


def delay_list(text):
    try:
        values = [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not a comma-separated list of numbers' % (text,))
    if not values:
        raise argparse.ArgumentTypeError('the delay list is empty')
    if any(not np.isfinite(value) or value <= 0 for value in values):
        raise argparse.ArgumentTypeError('%r contains a delay that is not positive' % (text,))
    if any(b <= a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError('%r is not strictly increasing' % (text,))
    return tuple(values)


def round_list(text):
    values = delay_list(text)
    if any(value != int(value) for value in values):
        raise argparse.ArgumentTypeError('%r contains a delay that is not a whole number of rounds' % (text,))
    return tuple(int(value) for value in values)


# -------------------------------------------------------------------------------------------------------------------- #
# Argument parser
# -------------------------------------------------------------------------------------------------------------------- #
def build_parser():

    # Flags shared by every subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=seed_int, default=0, help='Seed of the simulations. Default: 0')
    common.add_argument('--out-dir', dest='out_dir', default='.', help='Directory of the output files. Default: .')
    common.add_argument('--lambda', dest='lambda_', type=positive_float, default=2.25,
                        help='Loss aversion coefficient. Default: 2.25')
    common.add_argument('--beta', type=open_unit_float, default=0.88,
                        help='Diminishing sensitivity exponent. Default: 0.88')
    common.add_argument('--anchor-value', dest='anchor_value', type=positive_float, default=1.0,
                        help='Anchor transaction value in dollars. Default: 1')
    common.add_argument('--anchor-prob', dest='anchor_prob', type=open_unit_float, default=0.5,
                        help='Revocation probability tolerated at the anchor value. Default: 0.5')
    common.add_argument('--block-interval', dest='block_interval', type=positive_float, default=BLOCK_INTERVAL,
                        help='Mean time between blocks in seconds. Default: 600')
    common.add_argument('--log-level', dest='log_level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        help='Logs this level and above to the error stream. Default: WARNING')

    # Transaction value grid of the depth-value tables
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument('--value-min', dest='value_min', type=positive_float, default=0.01,
                      help='Smallest value of the logarithmic dollar grid. Default: 0.01')
    grid.add_argument('--value-max', dest='value_max', type=positive_float, default=1e4,
                      help='Largest value of the logarithmic dollar grid. Default: 10000')
    grid.add_argument('--value-points', dest='value_points', type=positive_int, default=200,
                      help='Number of values of the dollar grid. Default: 200')

    # Simulation flags
    simulation = argparse.ArgumentParser(add_help=False)
    simulation.add_argument('--miners', type=positive_int, default=100, help='Number of miners. Default: 100')
    simulation.add_argument('--rounds', type=positive_int, default=1000, help='Rounds per trial. Default: 1000')
    simulation.add_argument('--trials', type=positive_int, default=10, help='Number of trials. Default: 10')
    simulation.add_argument('--delay-mode', dest='delay_mode', choices=DELAY_MODES, default='fixed',
                            help='Fixed delay or uniform delay in [1, D]. Default: fixed')
    simulation.add_argument('--mine-prob', dest='mine_prob', type=probability, default=None,
                            help='Per-miner per-round mining probability. Default: 1/miners')
    simulation.add_argument('--calibrated', action='store_true',
                            help='Mine %g blocks per round on average, the rate of the published depth anchors '
                                 '(reproduced with --seed %d)' % (CALIBRATED_BLOCK_RATE, CALIBRATED_SEED))

    parser = argparse.ArgumentParser(prog='finalitypy',
                                     description='Confirmation finality laboratory for longest-chain blockchains')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    simulate = subparsers.add_parser('simulate', parents=[common, grid, simulation],
                                     help='Simulate forks and write histogram, revocation and depth-value tables')
    simulate.add_argument('--delays', '--delay', dest='delays', type=round_list, default=HISTOGRAM_DELAYS,
                          help='Comma-separated message delays in rounds. Default: 4,6,8')

    pools = subparsers.add_parser('pools', parents=[common, grid],
                                  help='Write revocation and depth-value tables of a mining pool table')
    pools.add_argument('--table', default=DEFAULT_TABLE, help='CSV file with `pool,blocks` rows')
    pools.add_argument('--delays', '--delay', dest='delays', type=delay_list, default=DEFAULT_DELAYS,
                       help='Comma-separated propagation delays in seconds. Default: 0.05,1,6.5,40,60')
    pools.add_argument('--value', type=nonnegative_float, default=None,
                       help='Also print the minimum confirmation depth of this dollar value')
    pools.add_argument('--max-depth', dest='max_depth', type=positive_int, default=10,
                       help='Deepest depth of the revocation table. Default: 10')

    risk = subparsers.add_parser('risk', parents=[common], help='Print the loss threshold and minimum depth of a value')
    risk.add_argument('--value', type=nonnegative_float, required=True, help='Transaction value in dollars')
    curve = risk.add_mutually_exclusive_group(required=True)
    curve.add_argument('--p1', type=revocation_probability, help='Depth-one revocation probability (geometric curve)')
    curve.add_argument('--curve', help='CSV file with `delay,depth,p_rev` rows')
    risk.add_argument('--curve-delay', dest='curve_delay', type=_float, default=None,
                      help='Delay to select when the curve file holds several delays')
    risk.add_argument('--max-depth', dest='max_depth', type=positive_int, default=None,
                      help='Deepest depth searched. Default: 10000 for --p1, the last depth of --curve')

    sweep = subparsers.add_parser('sweep', parents=[common, grid, simulation],
                                  help='Write the complete bundle of figure datasets')
    sweep.add_argument('--source', choices=['all', SIMULATED, POOL_MODEL], default='all',
                       help='Source of the revocation curves. Default: all')
    sweep.add_argument('--delays', type=delay_list, default=None,
                       help='Delays of the selected source. Default: 1..10 rounds, 0.05,1,6.5,40,60 seconds')
    sweep.add_argument('--histogram-delays', dest='histogram_delays', type=round_list, default=HISTOGRAM_DELAYS,
                       help='Delays of the switch histogram in rounds. Default: 4,6,8')
    sweep.add_argument('--table', default=DEFAULT_TABLE, help='CSV file with `pool,blocks` rows')
    sweep.add_argument('--max-depth', dest='max_depth', type=positive_int, default=10,
                       help='Deepest depth of the pool-model revocation table. Default: 10')

    return parser


def parse_args(argv=None):

    """ Parse and validate the command line. Usage errors exit with status 2 """

    parser = build_parser()
    args = parser.parse_args(argv)

    # Cross-flag validation
    if getattr(args, 'value_min', None) is not None and args.value_min >= args.value_max:
        parser.error('argument --value-min: must be smaller than --value-max')
    if args.command == 'pools' and max(args.delays) > MAX_DELAY:
        parser.error('argument --delays: propagation delays cannot exceed %g seconds' % MAX_DELAY)
    if args.command == 'sweep' and args.delays is not None:
        if args.source == 'all':
            parser.error('argument --delays: select a single --source to override its delays')
        if args.source == SIMULATED:
            try:
                args.delays = round_list(','.join(repr(delay) for delay in args.delays))
            except argparse.ArgumentTypeError as error:
                parser.error('argument --delays: %s' % error)
        elif max(args.delays) > MAX_DELAY:
            parser.error('argument --delays: propagation delays cannot exceed %g seconds' % MAX_DELAY)

    if getattr(args, 'calibrated', False):
        if args.mine_prob is not None:
            parser.error('argument --mine-prob: not allowed with argument --calibrated')
        if args.miners < CALIBRATED_BLOCK_RATE:
            parser.error('argument --miners: --calibrated needs at least %g miners' % CALIBRATED_BLOCK_RATE)
        args.mine_prob = CALIBRATED_BLOCK_RATE / args.miners

    # Worker cap
    threads = os.environ.get(THREADS_VARIABLE)
    if threads is None:
        args.workers = os.cpu_count() or 1
    else:
        try:
            args.workers = positive_int(threads)
        except argparse.ArgumentTypeError as error:
            parser.error('environment variable %s: %s' % (THREADS_VARIABLE, error))

    return Command(name=args.command, args=args)


# -------------------------------------------------------------------------------------------------------------------- #
# Command handlers
# -------------------------------------------------------------------------------------------------------------------- #
def _risk_params(args):
    return RiskParams(lambda_=args.lambda_, beta=args.beta, anchor_value=args.anchor_value,
                      anchor_probability=args.anchor_prob)


def _value_grid(args):
    return np.geomspace(args.value_min, args.value_max, args.value_points)


def _base_config(args, delay):
    return SimConfig(n_miners=args.miners, rounds=args.rounds, trials=args.trials, delay=delay,
                     delay_mode=args.delay_mode, mine_prob=args.mine_prob, seed=args.seed)


def _run_simulate(args):
    os.makedirs(args.out_dir, exist_ok=True)
    spec = SweepSpec(values=_value_grid(args), delays=args.delays, source=SIMULATED, risk=_risk_params(args))
    source = SimulatedCurveSource(_base_config(args, args.delays[0]), workers=args.workers)
    for path in write_simulated_bundle(spec, source, args.out_dir, histogram_delays=args.delays):
        print(path)

    return EXIT_OK


def _run_pools(args):
    table = read_pool_table(args.table)
    spec = SweepSpec(values=_value_grid(args), delays=args.delays, source=POOL_MODEL, risk=_risk_params(args))

    # Nothing is written when the value cannot be finalized
    depths = []
    if args.value is not None:
        model = calibrate_loss_model(spec.risk)
        depths = [(delay, compute_empirical_depth(table, delay, args.value, model, block_interval=args.block_interval))
                  for delay in spec.delays]

    os.makedirs(args.out_dir, exist_ok=True)
    source = PoolCurveSource(table, block_interval=args.block_interval, d_max=args.max_depth)
    for path in write_pool_bundle(spec, source, args.out_dir):
        print(path)
    for delay, depth in depths:
        print('delay=%.17g value=%.17g min_depth=%d' % (delay, args.value, depth))

    return EXIT_OK


def _run_risk(args):
    params = _risk_params(args)
    model = calibrate_loss_model(params)

    if args.p1 is not None:
        curve = compute_geometric_curve(args.p1, 1)
        d_max = DEPTH_CAP if args.max_depth is None else args.max_depth
    else:
        curve = _read_curve(args.curve, args.curve_delay)
        d_max = curve.max_depth if args.max_depth is None else args.max_depth

    threshold, underflow = compute_loss_threshold(args.value, model, return_underflow=True)
    depth = compute_minimum_depth(args.value, curve, model, d_max)

    print('value=%.17g' % args.value)
    print('loss=%.17g' % compute_loss(args.value, params))
    print('loss_threshold=%.17g' % threshold)
    if underflow:
        print('loss_threshold_underflow=True')
    print('min_depth=%d' % depth)
    print('value_limit=%.17g' % compute_value_limit(depth, curve, model))

    return EXIT_OK


def _read_curve(path, delay):
    table = read_csv(path)
    if list(table.columns) != ['delay', 'depth', 'p_rev']:
        raise FinalityError('%s is not a `delay,depth,p_rev` table' % path)
    delays = table['delay'].unique()
    if delay is None:
        if delays.size != 1:
            raise FinalityError('%s holds %d delays, select one with --curve-delay' % (path, delays.size))
        delay = delays[0]
    rows = table[np.isclose(table['delay'], delay, rtol=1e-12, atol=0)].sort_values('depth')
    if rows.empty:
        raise FinalityError('%s has no rows for delay %g' % (path, delay))

    return RevocationCurve(rows['p_rev'].to_numpy(), depths=rows['depth'].to_numpy(), provenance='synthetic',
                           delay=float(delay))


def _run_sweep(args):
    os.makedirs(args.out_dir, exist_ok=True)
    risk = _risk_params(args)
    values = _value_grid(args)

    if args.source in ('all', SIMULATED):
        delays = SIMULATED_DELAYS if args.delays is None else args.delays
        spec = SweepSpec(values=values, delays=delays, source=SIMULATED, risk=risk)
        source = SimulatedCurveSource(_base_config(args, delays[0]), workers=args.workers)
        for path in write_simulated_bundle(spec, source, args.out_dir, histogram_delays=args.histogram_delays):
            print(path)

    if args.source in ('all', POOL_MODEL):
        delays = DEFAULT_DELAYS if args.delays is None else args.delays
        spec = SweepSpec(values=values, delays=delays, source=POOL_MODEL, risk=risk)
        source = PoolCurveSource(read_pool_table(args.table), block_interval=args.block_interval,
                                 d_max=args.max_depth)
        for path in write_pool_bundle(spec, source, args.out_dir):
            print(path)

    return EXIT_OK


COMMANDS = {'simulate': _run_simulate, 'pools': _run_pools, 'risk': _run_risk, 'sweep': _run_sweep}


# -------------------------------------------------------------------------------------------------------------------- #
# Entry point
# -------------------------------------------------------------------------------------------------------------------- #
def run(command):

    """ Execute a validated command and return the exit status (0 success, 1 computational failure) """

    logging.basicConfig(level=getattr(logging, command.args.log_level), format=LOG_FORMAT, stream=sys.stderr)

    try:
        return COMMANDS[command.name](command.args)
    except (FinalityError, OSError, ValueError) as error:
        logger.debug('Command %s failed', command.name, exc_info=True)
        print('finalitypy %s: error: %s' % (command.name, error), file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None):
    return run(parse_args(argv))
