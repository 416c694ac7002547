""" Example showing the loss threshold and the minimum confirmation depth of several transaction values """


# -------------------------------------------------------------------------------------------------------------------- #
# Importing packages
# -------------------------------------------------------------------------------------------------------------------- #
import numpy as np
import finalitypy as fin


# -------------------------------------------------------------------------------------------------------------------- #
# Loss threshold with the default anchor ($1 tolerates a 50% revocation probability)
# -------------------------------------------------------------------------------------------------------------------- #
params = fin.RiskParams()
model = fin.calibrate_loss_model(params)

values = np.asarray([0.01, 1, 15, 100, 1000, 10000, 1e6])
LT, underflow = fin.compute_loss_threshold(values, model, return_underflow=True)

print(' Value ($)        Loss            Loss threshold')
for v, L, threshold, flag in zip(values, fin.compute_loss(values, params), LT, underflow):
    print(' %-16.6g %-15.6g %-15.6g %s' % (v, L, threshold, '(underflow)' if flag else ''))


# -------------------------------------------------------------------------------------------------------------------- #
# Minimum depth when each block is revoked with probability 0.1% independently
# -------------------------------------------------------------------------------------------------------------------- #
curve = fin.RevocationCurve.geometric(0.001, 10)
depths, satisfied = fin.compute_minimum_depths(values, curve, model, d_max=fin.DEPTH_CAP)

print('\n Value ($)        Minimum depth')
for v, depth in zip(values, depths):
    print(' %-16.6g %d' % (v, depth))

# Largest value that is final at each of the first depths
print('\n Depth   Value limit ($)')
for d in range(1, 7):
    print(' %-7d %.6g' % (d, fin.compute_value_limit(d, curve, model)))
