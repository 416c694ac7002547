# -------------------------------------------------------------------------------------------------------------------- #
# Import packages
# -------------------------------------------------------------------------------------------------------------------- #
import logging
import concurrent.futures
import numpy as np
import numba as nb
import scipy.stats

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import repeat
from .exceptions import EmptyObservations, StructuralFault
from .risk_model import RevocationCurve


logger = logging.getLogger(__name__)

# Identifier of the genesis block (every miner knows it from the start)
GENESIS = 0

# Parent marker of the genesis block
NO_PARENT = -1

# Message delay models
DELAY_MODES = ('fixed', 'uniform')

# Calibrated network: expected blocks mined per round and the seed at which the $15 depths land near 3 blocks for a
# delay of one round and near 25 blocks for a delay of ten rounds
CALIBRATED_BLOCK_RATE = 8.0
CALIBRATED_SEED = 0


# -------------------------------------------------------------------------------------------------------------------- #
# Define the simulation configuration and the domain records
# -------------------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class SimConfig:

    """ Configuration of a longest-chain miner network simulation

    Parameters
    ----------
    n_miners : int
        Number of miners in the network

    rounds : int
        Number of rounds of each computation

    trials : int
        Number of independent computations merged into the histogram

    delay : int
        Message delay D in rounds

    delay_mode : string
        'fixed' delivers every message exactly `delay` rounds after it was sent
        'uniform' draws the delay of each (block, recipient) pair uniformly from 1, ..., `delay`

    mine_prob : scalar
        Probability that a miner finds a block in a round (defaults to 1/n_miners, one block per round on average)

    seed : int
        Seed of the random number generator (the stream of each trial is derived from it)

    """

    n_miners: int = 100
    rounds: int = 1000
    trials: int = 10
    delay: int = 1
    delay_mode: str = 'fixed'
    mine_prob: float = None
    seed: int = 0

    def __post_init__(self):
        if self.n_miners < 1:                   raise ValueError('n_miners must be a positive integer')
        if self.rounds < 1:                     raise ValueError('rounds must be a positive integer')
        if self.trials < 1:                     raise ValueError('trials must be a positive integer')
        if self.delay < 1:                      raise ValueError('delay must be at least one round')
        if self.delay_mode not in DELAY_MODES:  raise ValueError('delay_mode must be one of %s' % (DELAY_MODES,))
        if not 0 <= self.seed < 2 ** 64:        raise ValueError('seed must be a 64-bit unsigned integer')
        if self.mine_prob is None:
            object.__setattr__(self, 'mine_prob', 1 / self.n_miners)
        if not 0 <= self.mine_prob <= 1:
            raise ValueError('mine_prob must lie in [0, 1], got %r' % (self.mine_prob,))


def get_calibrated_config(delay=1, n_miners=100, rounds=1000, trials=10, delay_mode='fixed', seed=CALIBRATED_SEED):

    """ Configuration of the calibrated network: `CALIBRATED_BLOCK_RATE` blocks per round shared by the miners """

    if CALIBRATED_BLOCK_RATE > n_miners:
        raise ValueError('The calibrated network needs at least %g miners' % CALIBRATED_BLOCK_RATE)

    return SimConfig(n_miners=n_miners, rounds=rounds, trials=trials, delay=delay, delay_mode=delay_mode,
                     mine_prob=CALIBRATED_BLOCK_RATE / n_miners, seed=seed)


@dataclass(frozen=True)
class Block:
    id: int
    parent: int
    height: int
    miner: int
    round_mined: int


@dataclass(frozen=True)
class SwitchRecord:

    """ A miner abandoned `depth` blocks of its main chain for a longer prong """

    round: int
    miner: int
    depth: int


@dataclass
class MinerState:

    """ Local view of a miner

    `known` holds the blocks connected to genesis, `arrival_order` the round each block was received (orphans included),
    `orphans` the received blocks that wait for their parent, `max_depth` the deepest confirmation depth each block
    reached on the main chain, and `revoked_depth` the depth of each block when it was first abandoned

    """

    index: int
    tip: int = GENESIS
    known: set = field(default_factory=lambda: {GENESIS})
    arrival_order: dict = field(default_factory=lambda: {GENESIS: -1})
    orphans: dict = field(default_factory=lambda: defaultdict(list))
    max_depth: dict = field(default_factory=dict)
    revoked_depth: dict = field(default_factory=dict)


# -------------------------------------------------------------------------------------------------------------------- #
# Define the block tree class
# -------------------------------------------------------------------------------------------------------------------- #
class BlockTree:

    """ Append-only tree of all blocks mined during a trial

    The tree is stored as arrays indexed by block id so that the ancestor walks can be compiled with Numba
    Block 0 is the genesis block (height 0, no parent)

    """

    def __init__(self, capacity=1024):
        self.parent = np.full(capacity, NO_PARENT, dtype=np.int64)
        self.height = np.zeros(capacity, dtype=np.int64)
        self.miner = np.full(capacity, -1, dtype=np.int64)
        self.round_mined = np.full(capacity, -1, dtype=np.int64)
        self.size = 1

    def __len__(self):
        return self.size

    def __contains__(self, block_id):
        return 0 <= block_id < self.size

    def add_block(self, parent, miner, round_mined):

        """ Append a block on top of `parent` and return its id """

        if parent not in self:
            raise StructuralFault('Cannot mine on top of unknown block %d' % parent)

        # Double the storage when it is full
        if self.size == self.parent.size:
            for name in ('parent', 'height', 'miner', 'round_mined'):
                old = getattr(self, name)
                new = np.full(2 * old.size, -1 if name != 'height' else 0, dtype=np.int64)
                new[:old.size] = old
                setattr(self, name, new)

        block_id = self.size
        self.parent[block_id] = parent
        self.height[block_id] = self.height[parent] + 1
        self.miner[block_id] = miner
        self.round_mined[block_id] = round_mined
        self.size += 1

        return block_id

    def get_block(self, block_id):
        if block_id not in self: raise KeyError(block_id)
        return Block(id=int(block_id), parent=int(self.parent[block_id]), height=int(self.height[block_id]),
                     miner=int(self.miner[block_id]), round_mined=int(self.round_mined[block_id]))

    def get_chain(self, tip):
        """ Return the ids of the main chain ending at `tip`, from genesis to the tip """
        chain, valid = trace_chain(tip, self.parent, self.size)
        if not valid: raise StructuralFault('The chain of block %d is not rooted at genesis' % tip)
        return np.append(chain[::-1], tip)


# -------------------------------------------------------------------------------------------------------------------- #
# Compiled block tree walks
# -------------------------------------------------------------------------------------------------------------------- #
@nb.jit(nopython=True, cache=True)
def find_abandoned_blocks(old_tip, new_tip, parent, height, size):

    """ Walk back from `old_tip` and `new_tip` to their lowest common ancestor

    Parameters
    ----------
    old_tip, new_tip : int
        Heads of the previous and the new main chain

    parent, height : ndarray with shape (capacity,)
        Parent id and height of every block in the tree

    size : int
        Number of blocks in the tree

    Returns
    -------
    abandoned : ndarray with shape (depth,)
        Blocks on the path from `old_tip` back to (and excluding) the common ancestor, tip first
        The array is empty when `new_tip` descends from `old_tip`

    valid : bool
        False when a parent link leaves the tree before the common ancestor is found

    """

    abandoned = np.empty(height[old_tip] + 1, dtype=np.int64)
    n = 0
    a, b = old_tip, new_tip

    # Bring the new prong down to the height of the old tip
    while height[b] > height[a]:
        b = parent[b]
        if b < 0 or b >= size: return abandoned[:0], False

    # Bring the old prong down to the height of the new prong
    while height[a] > height[b]:
        abandoned[n] = a
        n += 1
        a = parent[a]
        if a < 0 or a >= size: return abandoned[:0], False

    # Walk both prongs down to the fork point
    while a != b:
        abandoned[n] = a
        n += 1
        a = parent[a]
        b = parent[b]
        if a < 0 or a >= size or b < 0 or b >= size: return abandoned[:0], False

    return abandoned[:n], True


@nb.jit(nopython=True, cache=True)
def trace_chain(tip, parent, size):

    """ Return the ancestors of `tip` from its parent down to genesis and a flag that is False for broken links """

    chain = np.empty(size, dtype=np.int64)
    n = 0
    b = tip
    while b != 0:
        b = parent[b]
        if b < 0 or b >= size: return chain[:0], False
        chain[n] = b
        n += 1

    return chain[:n], True


def compute_switch_depth(old_tip, new_tip, tree):

    """ Number of blocks abandoned when a miner moves its tip from `old_tip` to `new_tip`

    Zero means that `new_tip` extends (or equals) `old_tip` and no switch took place

    """

    if old_tip not in tree or new_tip not in tree:
        raise StructuralFault('Both tips must belong to the block tree')
    abandoned, valid = find_abandoned_blocks(old_tip, new_tip, tree.parent, tree.height, tree.size)
    if not valid:
        raise StructuralFault('Missing parent link between blocks %d and %d' % (old_tip, new_tip))

    return int(abandoned.size)


def select_tip(known, arrival_order, tree):

    """ Select the head of the main chain among the connected blocks of a miner

    The tip is the block with maximal height; ties are broken by the earliest local receipt round and then by the
    lowest block id, which makes the choice a total order

    """

    if not known: raise ValueError('The block tree of the miner is empty')
    return max(known, key=lambda b: _tip_key(b, arrival_order, tree))


def _tip_key(block_id, arrival_order, tree):
    return int(tree.height[block_id]), -arrival_order[block_id], -block_id


# -------------------------------------------------------------------------------------------------------------------- #
# Define the simulation state and its round-by-round evolution
# -------------------------------------------------------------------------------------------------------------------- #
class SimState:

    """ Mutable state of one trial. Create instances with init_state()

    The in-flight messages are kept in `inbox`, a mapping from delivery round to a list of (recipient, block) pairs
    When `trace` is True, every delivery is also appended to `deliveries` as (round, recipient, block)

    """

    def __init__(self, config, trial, rng, trace=False):
        self.config = config
        self.trial = trial
        self.rng = rng
        self.round = 0
        self.tree = BlockTree()
        self.miners = [MinerState(index=i) for i in range(config.n_miners)]
        self.inbox = defaultdict(list)
        self.switches = []
        self.trace = trace
        self.deliveries = []


def init_state(config, trial=0, trace=False):

    """ Create the initial state of trial `trial`: every miner sits on genesis and no message is in flight

    The random stream of the trial is derived deterministically from (config.seed, trial)

    """

    if config.n_miners < 1: raise ValueError('The network needs at least one miner')
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(trial,)))

    return SimState(config, trial, rng, trace=trace)


def step_round(state, mined=None):

    """ Advance the simulation by one round

    The round proceeds in order: (1) the messages due this round are delivered, (2) every miner that received a block
    re-selects its tip and a switch is recorded when the new tip does not extend the old one, (3) every miner mines a
    block on its tip with probability `mine_prob`, adopts it and broadcasts it to the other miners

    Blocks abandoned by a switch are accounted for (revocation and deepest confirmation depth) at the switch. Blocks
    that stay on the main chain are accounted for by close_trial()

    Parameters
    ----------
    state : SimState
        State of the trial. It is updated in place

    mined : ndarray of bool with shape (n_miners,)
        Optional scripted mining outcome of the round. When None it is drawn from the trial random stream

    Returns
    -------
    records : list of SwitchRecord
        Switches that happened during the round

    """

    config = state.config
    tree = state.tree
    r = state.round
    if r >= config.rounds:
        raise ValueError('The trial already ran its %d rounds' % config.rounds)

    # (1) Deliver the messages due this round
    connected = defaultdict(list)
    for recipient, block in state.inbox.pop(r, []):
        connected[recipient].extend(_receive_block(state.miners[recipient], block, r, tree))
        if state.trace:
            state.deliveries.append((r, recipient, block))

    # (2) Re-select the tip of the miners that connected new blocks
    records = []
    for index in sorted(connected):
        miner = state.miners[index]
        best = miner.tip
        for block in connected[index]:
            if _tip_key(block, miner.arrival_order, tree) > _tip_key(best, miner.arrival_order, tree):
                best = block
        if best == miner.tip:
            continue
        abandoned, valid = find_abandoned_blocks(miner.tip, best, tree.parent, tree.height, tree.size)
        if not valid:
            raise StructuralFault('Missing parent link between blocks %d and %d' % (miner.tip, best))
        if abandoned.size > 0:
            records.append(SwitchRecord(round=r, miner=index, depth=int(abandoned.size)))
            _account_abandoned_blocks(miner, abandoned, tree)
        miner.tip = best

    # (3) Mine on top of the current tips and broadcast
    if mined is None:
        mined = state.rng.random(config.n_miners) < config.mine_prob
    for index in np.flatnonzero(mined):
        miner = state.miners[index]
        block = tree.add_block(parent=miner.tip, miner=index, round_mined=r)
        miner.known.add(block)
        miner.arrival_order[block] = r
        miner.tip = block
        if config.delay_mode == 'fixed':
            delays = np.full(config.n_miners, config.delay, dtype=np.int64)
        else:
            delays = state.rng.integers(1, config.delay + 1, size=config.n_miners)
        for recipient in range(config.n_miners):
            if recipient != index:
                state.inbox[r + int(delays[recipient])].append((recipient, block))

    state.switches.extend(records)
    state.round += 1

    return records


def _receive_block(miner, block, r, tree):

    """ Record the receipt of `block` and return the blocks that became connected to genesis """

    if block in miner.arrival_order:
        return []
    miner.arrival_order[block] = r

    parent = int(tree.parent[block])
    if parent not in miner.known:
        miner.orphans[parent].append(block)
        return []

    # Connect the block and every orphan waiting for it
    newly_connected = []
    pending = [block]
    while pending:
        current = pending.pop()
        miner.known.add(current)
        newly_connected.append(current)
        pending.extend(miner.orphans.pop(current, []))

    return newly_connected


def _account_abandoned_blocks(miner, abandoned, tree):

    # The tip sits at confirmation depth 1, so the abandoned suffix covers depths 1..len(abandoned)
    tip_height = int(tree.height[abandoned[0]])
    for block in abandoned.tolist():
        depth = tip_height - int(tree.height[block]) + 1
        if depth > miner.max_depth.get(block, 0):
            miner.max_depth[block] = depth
        miner.revoked_depth.setdefault(block, depth)


def close_trial(state):

    """ Settle the confirmation depth of the blocks left on each main chain and return the histogram of the trial """

    tree = state.tree
    switch_depths = np.asarray([record.depth for record in state.switches], dtype=np.int64)
    max_depths, revoked_depths = [], []

    for miner in state.miners:
        chain, valid = trace_chain(miner.tip, tree.parent, tree.size)
        if not valid:
            raise StructuralFault('The main chain of miner %d is not rooted at genesis' % miner.index)
        tip_height = int(tree.height[miner.tip])
        for block in [miner.tip] + chain.tolist():
            if block == GENESIS:
                continue
            depth = tip_height - int(tree.height[block]) + 1
            if depth > miner.max_depth.get(block, 0):
                miner.max_depth[block] = depth
        max_depths.extend(miner.max_depth.values())
        revoked_depths.extend(miner.revoked_depth.values())

    reached = _count_at_least(np.asarray(max_depths, dtype=np.int64))
    revoked = _count_at_least(np.asarray(revoked_depths, dtype=np.int64))
    switch_counts = np.bincount(switch_depths, minlength=1) if switch_depths.size else np.zeros(1, dtype=np.int64)
    switch_counts[0] = 0

    logger.debug('Trial %d closed: %d blocks, %d switches, %d depth-1 observations',
                 state.trial, len(tree) - 1, switch_depths.size, reached[1] if reached.size > 1 else 0)

    return SwitchHistogram(state.config, switch_counts, reached, revoked, switch_counts[np.newaxis, :])


def _count_at_least(depths):

    """ counts[d] = number of entries >= d, for d = 0, 1, ..., max(depths) """

    if depths.size == 0:
        return np.zeros(1, dtype=np.int64)
    exact = np.bincount(depths)
    return np.cumsum(exact[::-1])[::-1]


# -------------------------------------------------------------------------------------------------------------------- #
# Define the switch histogram class
# -------------------------------------------------------------------------------------------------------------------- #
class SwitchHistogram:

    """ Aggregated switch events and revocation observations of one or more trials

        Parameters
        ----------
        config : SimConfig
            Configuration the trials were run with

        switch_counts : ndarray with shape (s_max+1,)
            Number of switch events of each depth (index 0 is unused)

        reached : ndarray with shape (d_max+1,)
            Number of (miner, block) pairs whose block reached confirmation depth >= d on the main chain of the miner

        revoked : ndarray with shape (d_max+1,)
            Number of those pairs whose block was later abandoned by a switch (first abandonment only)

        trial_switch_counts : ndarray with shape (trials, s_max+1)
            Per-trial switch counts, used to report means over trials

    """

    def __init__(self, config, switch_counts, reached, revoked, trial_switch_counts):
        self.config = config
        self.switch_counts = np.asarray(switch_counts, dtype=np.int64)
        self.reached = np.asarray(reached, dtype=np.int64)
        self.revoked = np.asarray(revoked, dtype=np.int64)
        self.trial_switch_counts = np.atleast_2d(np.asarray(trial_switch_counts, dtype=np.int64))

    @property
    def trials(self):
        return int(self.trial_switch_counts.shape[0])

    @property
    def total_switches(self):
        return int(np.sum(self.switch_counts))

    @property
    def counts(self):
        """ Mapping switch depth -> number of events (depths without events are omitted) """
        return {int(s): int(n) for s, n in enumerate(self.switch_counts) if s > 0 and n > 0}

    @property
    def observations(self):
        """ Mapping confirmation depth -> (reached, revoked) """
        revoked = _pad(self.revoked, self.reached.size)
        return {int(d): (int(self.reached[d]), int(revoked[d])) for d in range(1, self.reached.size)
                if self.reached[d] > 0}

    @staticmethod
    def merge(histograms):

        """ Merge histograms by summation. The per-trial rows are stacked in the given order """

        histograms = list(histograms)
        if not histograms: raise ValueError('Nothing to merge')
        n_switch = max(h.switch_counts.size for h in histograms)
        n_depth = max(max(h.reached.size, h.revoked.size) for h in histograms)
        switch_counts = sum(_pad(h.switch_counts, n_switch) for h in histograms)
        reached = sum(_pad(h.reached, n_depth) for h in histograms)
        revoked = sum(_pad(h.revoked, n_depth) for h in histograms)
        trial_counts = np.concatenate([_pad(h.trial_switch_counts, n_switch) for h in histograms], axis=0)

        return SwitchHistogram(histograms[0].config, switch_counts, reached, revoked, trial_counts)

    def summarize(self):

        """ Mean and standard error (over trials) of the total number of switch events """

        totals = np.sum(self.trial_switch_counts, axis=1)
        sem = float(scipy.stats.sem(totals)) if totals.size > 1 else float('nan')
        return {'trials': self.trials, 'mean': float(np.mean(totals)), 'sem': sem}

    def __repr__(self):
        return 'SwitchHistogram(delay=%d, trials=%d, switches=%d)' % \
               (self.config.delay, self.trials, self.total_switches)


def _pad(array, size):
    array = np.asarray(array)
    missing = size - array.shape[-1]
    if missing <= 0:
        return array
    width = [(0, 0)] * (array.ndim - 1) + [(0, missing)]
    return np.pad(array, width)


# -------------------------------------------------------------------------------------------------------------------- #
# Run complete simulations
# -------------------------------------------------------------------------------------------------------------------- #
def simulate_trial(config, trial):

    """ Run all the rounds of trial `trial` and return its histogram """

    state = init_state(config, trial)
    while state.round < config.rounds:
        step_round(state)

    return close_trial(state)


def run_simulation(config, workers=1):

    """ Run `config.trials` independent computations and merge their histograms by summation

    Parameters
    ----------
    config : SimConfig
        Simulation configuration

    workers : int
        Number of worker processes. Trials own their state and random stream, so the result does not depend on it

    Returns
    -------
    histogram : SwitchHistogram
        Merged histogram with the per-trial subtotals

    """

    if workers < 1: raise ValueError('workers must be a positive integer')
    workers = min(workers, config.trials)
    logger.info('Simulating %d trials of %d rounds (miners=%d, delay=%d %s, mine_prob=%.4g, seed=%d)',
                config.trials, config.rounds, config.n_miners, config.delay, config.delay_mode,
                config.mine_prob, config.seed)

    if workers == 1:
        histograms = [simulate_trial(config, trial) for trial in range(config.trials)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            histograms = list(pool.map(simulate_trial, repeat(config), range(config.trials)))

    histogram = SwitchHistogram.merge(histograms)
    summary = histogram.summarize()
    logger.info('Delay %d: %.1f switches per trial (sem %.2g)', config.delay, summary['mean'], summary['sem'])

    return histogram


def estimate_revocation_curve(histogram):

    """ Estimate P_rev(d) = revoked(d)/reached(d) from the observations of a histogram

    The estimate covers every depth reached at least once and is made non-increasing by a running minimum

    """

    reached = histogram.reached
    if reached.size < 2 or reached[1] == 0:
        raise EmptyObservations('No block reached confirmation depth 1 in the simulation')

    d_max = int(np.max(np.flatnonzero(reached)))
    revoked = _pad(histogram.revoked, reached.size)
    P = revoked[1:d_max + 1] / reached[1:d_max + 1]

    return RevocationCurve(P, provenance='simulated', delay=histogram.config.delay)
