""" Example showing the revocation probability and the minimum depth of the most recent 1,000 Bitcoin blocks """


# -------------------------------------------------------------------------------------------------------------------- #
# Importing packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import finalitypy as fin


# -------------------------------------------------------------------------------------------------------------------- #
# Read the pool table
# -------------------------------------------------------------------------------------------------------------------- #
table_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', '..', 'fixtures', 'table1.csv')
table = fin.read_pool_table(table_path)
hhi, top = fin.compute_concentration(table)
print('%r   Herfindahl index: %.4f   largest share: %.3f' % (table, hhi, top))


# -------------------------------------------------------------------------------------------------------------------- #
# Depth-one revocation probability and minimum depth of a $100 transaction
# -------------------------------------------------------------------------------------------------------------------- #
model = fin.calibrate_loss_model(fin.RiskParams())

print('\n Delay (s)   P1              First order     Depth ($100)')
for delay in fin.DEFAULT_DELAYS:
    pool_model = fin.EmpiricalModel.from_table(table, delay)
    P1 = fin.compute_depth_one_revocation(pool_model)
    P1_approximate = fin.compute_first_order_revocation(pool_model)
    depth = fin.compute_empirical_depth(table, delay, 100.0, model)
    print(' %-11g %-15.6e %-15.6e %d' % (delay, P1, P1_approximate, depth))

# Propagation delay that would make 1% of the blocks fork
delay = fin.solve_delay_for_revocation(table.get_shares(), 0.01)
print('\n A 1%% fork rate corresponds to a propagation delay of %.2f seconds' % delay)
