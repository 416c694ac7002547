""" Example showing the switch histogram and the simulated minimum depth of a $15 transaction """


# -------------------------------------------------------------------------------------------------------------------- #
# Importing packages
# -------------------------------------------------------------------------------------------------------------------- #
import os
import logging
import finalitypy as fin


def show_switch_histograms(workers):

    # Switch histogram of 100 miners for message delays of 4, 6 and 8 rounds
    for delay in (4, 6, 8):
        histogram = fin.run_simulation(fin.SimConfig(delay=delay, seed=1), workers=workers)
        summary = histogram.summarize()
        print('Delay %d: %.1f +/- %.1f switches per trial, by depth %s' %
              (delay, summary['mean'], summary['sem'], histogram.counts))


def show_minimum_depths(workers):

    # Minimum depth of a $15 transaction for delays of 1 and 10 rounds on the calibrated network
    model = fin.calibrate_loss_model(fin.RiskParams())
    for delay in (1, 10):
        config = fin.get_calibrated_config(delay=delay)
        curve = fin.estimate_revocation_curve(fin.run_simulation(config, workers=workers))
        depths, satisfied = fin.compute_minimum_depths([15.0], curve, model)
        print('Delay %d: %r, a $15 transaction needs %d blocks%s' %
              (delay, curve, depths[0], '' if satisfied[0] else ' (beyond the observed depths)'))


# Worker processes re-import this script on platforms that spawn them
if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO, format=' %(asctime)s - %(levelname)s - %(message)s')
    workers = int(os.environ.get('FINALITY_LAB_THREADS', os.cpu_count() or 1))
    show_switch_histograms(workers)
    show_minimum_depths(workers)
