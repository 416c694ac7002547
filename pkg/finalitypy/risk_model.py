# -------------------------------------------------------------------------------------------------------------------- #
# Import packages
# -------------------------------------------------------------------------------------------------------------------- #
import logging
import numpy as np
import numba as nb

from dataclasses import dataclass
from .exceptions import NoDepthSatisfies


logger = logging.getLogger(__name__)

# Slack applied to the log-space comparison log(P_rev) <= log(LT)
THRESHOLD_LOG_TOLERANCE = 1e-12

# Thresholds below this value are reported as zero with the underflow flag raised
THRESHOLD_UNDERFLOW = 1e-300

# Provenance tags of the revocation curves
CURVE_PROVENANCES = ('simulated', 'pool-model', 'synthetic')


# -------------------------------------------------------------------------------------------------------------------- #
# Define the risk parameters and the calibrated loss model
# -------------------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class RiskParams:

    """ Prospect theory parameters of a user plus the behavioral anchor used to calibrate the loss threshold

    Parameters
    ----------
    lambda_ : scalar
        Loss aversion coefficient (losses weigh `lambda_` times more than gains)

    beta : scalar
        Diminishing sensitivity exponent in (0, 1)

    anchor_value : scalar
        Transaction value (dollars) whose loss threshold is pinned to `anchor_probability`

    anchor_probability : scalar
        Revocation probability tolerated for a transaction worth `anchor_value`

    """

    lambda_: float = 2.25
    beta: float = 0.88
    anchor_value: float = 1.0
    anchor_probability: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.lambda_) or self.lambda_ <= 0:
            raise ValueError('lambda_ must be a positive number, got %r' % (self.lambda_,))
        if not 0 < self.beta < 1:
            raise ValueError('beta must lie in (0, 1), got %r' % (self.beta,))
        if not np.isfinite(self.anchor_value) or self.anchor_value <= 0:
            raise ValueError('anchor_value must be a positive number, got %r' % (self.anchor_value,))
        if not 0 < self.anchor_probability < 1:
            raise ValueError('anchor_probability must lie in (0, 1), got %r' % (self.anchor_probability,))


@dataclass(frozen=True)
class LossModel:

    """ Loss function with the scale `c` calibrated so that LT(anchor_value) = anchor_probability

    Use calibrate_loss_model() to create instances

    """

    params: RiskParams
    c: float

    def __post_init__(self):
        if not np.isfinite(self.c) or self.c <= 0:
            raise ValueError('The calibrated scale c must be a positive number, got %r' % (self.c,))

    def get_loss(self, v):
        return compute_loss(v, self.params)

    def get_log_threshold(self, v):
        """ Natural logarithm of the loss threshold, L(v)/c, which never underflows """
        return compute_loss(v, self.params) / self.c

    def get_threshold(self, v, return_underflow=False):
        return compute_loss_threshold(v, self, return_underflow=return_underflow)


# -------------------------------------------------------------------------------------------------------------------- #
# Loss function and loss threshold probability
# -------------------------------------------------------------------------------------------------------------------- #
def compute_loss(v, params):

    """ Evaluate the prospect theory loss of a transaction worth `v` dollars

    The value is interpreted as the magnitude of the loss, L(v) = -lambda * v**beta

    Parameters
    ----------
    v : scalar or ndarray with shape (N,)
        Transaction value in dollars (finite and non-negative)

    params : RiskParams
        Loss aversion and diminishing sensitivity parameters

    Returns
    -------
    L : scalar or ndarray with shape (N,)
        Loss associated with the revocation of the transaction (non-positive)

    """

    v_array = _check_values(v)
    L = -params.lambda_ * v_array ** params.beta
    return float(L) if np.ndim(v) == 0 else L


def calibrate_loss_model(params):

    """ Compute the scale `c` such that exp(L(anchor_value)/c) = anchor_probability

    With the default anchor (1 dollar, 50%) the scale is c = lambda/ln(2) and the loss threshold reduces to
    LT(v) = 2**(-v**beta), independently of lambda

    """

    if not 0 < params.anchor_probability < 1:
        raise ValueError('anchor_probability must lie in (0, 1), got %r' % (params.anchor_probability,))

    c = compute_loss(params.anchor_value, params) / np.log(params.anchor_probability)
    logger.debug('Calibrated loss scale c=%.12g for %s', c, params)

    return LossModel(params=params, c=float(c))


def compute_loss_threshold(v, model, return_underflow=False):

    """ Evaluate the loss threshold probability LT(v) = exp(L(v)/c)

    Parameters
    ----------
    v : scalar or ndarray with shape (N,)
        Transaction value in dollars (finite and non-negative)

    model : LossModel
        Calibrated loss model

    return_underflow : bool
        Also return a flag (or array of flags) marking thresholds that were saturated to zero

    Returns
    -------
    LT : scalar or ndarray with shape (N,)
        Highest revocation probability the user tolerates for a transaction worth `v`

    """

    log_LT = np.asarray(model.get_log_threshold(v))
    underflow = log_LT < np.log(THRESHOLD_UNDERFLOW)
    LT = np.where(underflow, 0.0, np.exp(log_LT))

    if np.ndim(v) == 0:
        LT, underflow = float(LT), bool(underflow)

    return (LT, underflow) if return_underflow else LT


def _check_values(v):
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)): raise ValueError('The transaction value must be finite')
    if np.any(v < 0):              raise ValueError('The transaction value cannot be negative')
    return v


# -------------------------------------------------------------------------------------------------------------------- #
# Define the revocation curve class
# -------------------------------------------------------------------------------------------------------------------- #
class RevocationCurve:

    """ Revocation probability P_rev(d) as a function of the confirmation depth d = 1, 2, ..., d_max

        Parameters
        ----------
        probabilities : ndarray with shape (d_max,)
            Revocation probability at depths 1, 2, ..., d_max

        depths : ndarray with shape (d_max,)
            Optional depth labels. They must be 1, 2, ..., d_max (no gaps)

        provenance : string
            One of 'simulated', 'pool-model' or 'synthetic'

        delay : scalar
            Network delay the curve was computed under (rounds for simulated curves, seconds for pool-model curves)

        ratio : scalar
            Depth-one revocation probability of a geometric curve, P_rev(d) = ratio**d
            Geometric curves can be extended analytically to any depth. Leave as None for empirical curves

        Notes
        -----
        The probabilities are made non-increasing at construction by a running minimum from shallow to deep depths,
        so that the minimum confirmation depth is well-defined in the presence of sampling noise

        The logarithm of the probabilities is stored alongside the probabilities. For geometric curves it is computed
        exactly as d*log(ratio), which keeps very deep depths meaningful even when ratio**d underflows

    """

    def __init__(self, probabilities, depths=None, provenance='synthetic', delay=None, ratio=None):

        # Check the shape and range of the probabilities
        P = np.asarray(probabilities, dtype=np.float64)
        if P.ndim != 1:              raise ValueError('The probabilities must be an array of shape (d_max,)')
        if P.size == 0:              raise ValueError('A revocation curve needs at least one depth')
        if np.any(~np.isfinite(P)):  raise ValueError('The probabilities must be finite')
        if np.any((P < 0) | (P > 1)): raise ValueError('The probabilities must lie in [0, 1]')

        # Check the depth labels
        if depths is not None:
            d = np.asarray(depths)
            if d.shape != P.shape or np.any(d != np.arange(1, P.size + 1)):
                raise ValueError('The depths must be 1, 2, ..., d_max without gaps')

        if provenance not in CURVE_PROVENANCES:
            raise ValueError('Unknown curve provenance %r' % (provenance,))

        if ratio is not None and not 0 <= ratio < 1:
            raise ValueError('The geometric ratio must lie in [0, 1), got %r' % (ratio,))

        # Declare input variables as instance variables
        self.provenance = provenance
        self.delay = delay
        self.ratio = ratio

        # Monotone cleanup (running minimum)
        self.P = np.minimum.accumulate(P)
        self.depths = np.arange(1, P.size + 1)

        # Log-probabilities used for the threshold comparisons
        if ratio is None:
            with np.errstate(divide='ignore'):
                self.log_P = np.log(self.P)
        else:
            self.log_P = self._geometric_log_probabilities(ratio, self.depths)


    @classmethod
    def geometric(cls, ratio, d_max, provenance='pool-model', delay=None):

        """ Create the curve P_rev(d) = ratio**d for d = 1, ..., d_max """

        if not 0 <= ratio < 1: raise ValueError('The depth-one revocation probability must lie in [0, 1)')
        if d_max < 1:          raise ValueError('d_max must be a positive integer')
        depths = np.arange(1, int(d_max) + 1)
        P = np.exp(cls._geometric_log_probabilities(ratio, depths))
        return cls(P, provenance=provenance, delay=delay, ratio=float(ratio))


    @staticmethod
    def _geometric_log_probabilities(ratio, depths):
        if ratio == 0:
            return np.full(depths.shape, -np.inf)
        return depths * np.log(ratio)


    @property
    def max_depth(self):
        return int(self.P.size)

    @property
    def is_extensible(self):
        return self.ratio is not None

    @property
    def entries(self):
        """ List of (depth, probability) pairs """
        return list(zip(self.depths.tolist(), self.P.tolist()))


    def extend(self, d_max):

        """ Return a copy of a geometric curve evaluated up to depth `d_max` """

        if not self.is_extensible:
            raise ValueError('Only geometric curves can be extended beyond their last observed depth')
        return RevocationCurve.geometric(self.ratio, d_max, provenance=self.provenance, delay=self.delay)


    def get_probability(self, d):

        """ Evaluate P_rev at depth `d` (geometric curves are evaluated beyond their last depth analytically) """

        d = int(d)
        if d < 1: raise ValueError('The confirmation depth must be a positive integer')
        if d <= self.max_depth: return float(self.P[d - 1])
        if self.is_extensible:  return float(self.ratio ** d)
        raise ValueError('Depth %d lies beyond the last observed depth (%d) of the curve' % (d, self.max_depth))


    def get_log_probability(self, d):

        d = int(d)
        if d < 1: raise ValueError('The confirmation depth must be a positive integer')
        if d <= self.max_depth: return float(self.log_P[d - 1])
        if self.is_extensible:  return float(self._geometric_log_probabilities(self.ratio, np.asarray([d]))[0])
        raise ValueError('Depth %d lies beyond the last observed depth (%d) of the curve' % (d, self.max_depth))


    def __repr__(self):
        return 'RevocationCurve(provenance=%r, delay=%r, max_depth=%d, P(1)=%.6g)' % \
               (self.provenance, self.delay, self.max_depth, self.P[0])


# -------------------------------------------------------------------------------------------------------------------- #
# Minimum confirmation depth
# -------------------------------------------------------------------------------------------------------------------- #
@nb.jit(nopython=True, cache=True)
def search_minimum_depths(log_P, log_LT, tolerance):

    """ Find the shallowest depth with log_P[d-1] <= log_LT[k] for every threshold `k`

    Parameters
    ----------
    log_P : ndarray with shape (d_max,)
        Non-increasing log-probabilities of revocation at depths 1, ..., d_max

    log_LT : ndarray with shape (N,)
        Logarithm of the loss threshold of each transaction value

    tolerance : scalar
        Slack added to the thresholds

    Returns
    -------
    depths : ndarray with shape (N,)
        Minimum confirmation depth of each value (zero when no depth up to d_max satisfies the threshold)

    """

    N = log_LT.size
    d_max = log_P.size
    depths = np.zeros(N, dtype=np.int64)
    for k in range(N):
        for i in range(d_max):
            if log_P[i] <= log_LT[k] + tolerance:
                depths[k] = i + 1
                break

    return depths


def compute_minimum_depths(values, curve, model, d_max=None):

    """ Evaluate the minimum confirmation depth for an array of transaction values

    Parameters
    ----------
    values : ndarray with shape (N,)
        Transaction values in dollars

    curve : RevocationCurve
        Revocation probability by confirmation depth

    model : LossModel
        Calibrated loss model

    d_max : int
        Deepest depth considered. Geometric curves are extended analytically up to `d_max`
        Empirical curves are searched up to min(d_max, curve.max_depth)

    Returns
    -------
    depths : ndarray with shape (N,)
        Minimum confirmation depth of each value (one past the deepest depth searched where no depth satisfies the
        threshold)

    satisfied : ndarray with shape (N,)
        True where a depth satisfying the threshold was found

    """

    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if values.ndim > 1: raise ValueError('values must be a scalar or an array of shape (N,)')

    # Bring the curve to the requested depth range
    if d_max is None:
        d_max = curve.max_depth
    if d_max < 1:
        raise ValueError('d_max must be a positive integer')
    if d_max > curve.max_depth and curve.is_extensible:
        curve = curve.extend(d_max)
    d_max = min(d_max, curve.max_depth)
    log_P = curve.log_P[:d_max]

    # Search the staircase
    log_LT = np.asarray(model.get_log_threshold(values), dtype=np.float64)
    depths = search_minimum_depths(log_P, log_LT, THRESHOLD_LOG_TOLERANCE)
    satisfied = depths > 0
    depths[~satisfied] = d_max + 1

    return depths, satisfied


def compute_minimum_depth(v, curve, model, d_max=None):

    """ Return the smallest depth d >= 1 with P_rev(d) <= LT(v)

    Raises NoDepthSatisfies, carrying the deepest depth searched, if no depth up to `d_max` meets the threshold

    """

    if np.ndim(v) != 0: raise ValueError('v must be a scalar, use compute_minimum_depths() for arrays')
    if d_max is None: d_max = curve.max_depth
    depths, satisfied = compute_minimum_depths(v, curve, model, d_max)
    if not satisfied[0]:
        raise NoDepthSatisfies(float(v), int(depths[0]) - 1)

    return int(depths[0])


def compute_value_limit(d, curve, model):

    """ Compute the largest transaction value that is final at confirmation depth `d`

    Solves P_rev(d) = LT(v) for v, that is, v = (-c*log(P_rev(d))/lambda)**(1/beta)

    Returns infinity when P_rev(d) = 0 and zero when P_rev(d) = 1

    """

    log_P = curve.get_log_probability(d)
    if log_P == -np.inf: return np.inf
    if log_P >= 0:       return 0.0

    params = model.params
    return float((-model.c * log_P / params.lambda_) ** (1 / params.beta))
