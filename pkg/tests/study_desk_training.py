import os
import numpy as np

from KIPAC.quantRelax import Defaults
from KIPAC.quantRelax import Harness
from KIPAC.quantRelax import file_utils
from KIPAC.quantRelax.RunConfig import load_config

# Desk-scale analogue of the CIFAR comparison: MLP on blobs, ternary weights,
# 10 seeds of BinaryRelax, BinaryConnect and the float baseline.
config_name = 'desk_blobs'
optimizers = ['binaryrelax', 'binaryconnect', 'float']
num_seeds = 10
out_dir = os.path.join(Defaults.QUANTRELAX_OUT, 'study_desk_training')

config, _ = load_config(config_name)
seeds = Harness.compare_seeds(config.seed, None, num_seeds)

code = Harness.cmd_compare(config_name, optimizers, num_seeds=num_seeds, out=out_dir, jobs=4)
if code != Defaults.EXIT_OK:
    print("some runs failed, see %s" % out_dir)


def final_metrics(optimizer):
    accs = []
    dists = []
    for seed in seeds:
        path = os.path.join(out_dir, Defaults.COMPARE_RUN_FORMAT.format(optimizer=optimizer, seed=seed),
                            Defaults.SUMMARY_FILENAME)
        final = file_utils.read_json(path).get('final', {})
        accs.append(final.get('val_acc', np.nan))
        dists.append(final.get('dist_to_q', np.nan))
    return np.array(accs, dtype=float), np.array(dists, dtype=float)


results = {name: final_metrics(name) for name in optimizers}
for name in optimizers:
    accs, dists = results[name]
    print("%-14s val acc %.4f +- %.4f  (min %.4f)  max dist_to_Q %.3g" %
          (name, np.nanmean(accs), np.nanstd(accs), np.nanmin(accs), np.nanmax(dists)))

relax_acc, relax_dist = results['binaryrelax']
float_mean = np.nanmean(results['float'][0])
connect_mean = np.nanmean(results['binaryconnect'][0])

check_a = np.all(relax_dist == 0.) and np.all(np.abs(relax_acc - float_mean) <= 0.05)
check_b = np.nanmean(relax_acc) >= connect_mean - 0.005

print("(a) BinaryRelax on Q and within 5 points of float %.4f: %s" % (float_mean, 'PASS' if check_a else 'FAIL'))
print("(b) BinaryRelax mean >= BinaryConnect mean - 0.5 points: %s" % ('PASS' if check_b else 'FAIL'))
