import os
import time
import numpy as np

from scipy import stats

from KIPAC.quantRelax import Defaults
from KIPAC.quantRelax import file_utils
from KIPAC.quantRelax.Quantizer import binarize, ternarize_exact, ternarize_threshold

# Wall time of the closed-form quantizers against the vector length
n_values = np.logspace(3, 6, 7).astype(int)
n_trial = 5
rng = np.random.default_rng(20180101)

solvers = [binarize, ternarize_exact, ternarize_threshold]
timings = {func.__name__: [] for func in solvers}

for n in n_values:
    y = rng.standard_normal(n)
    for func in solvers:
        best = np.inf
        for _ in range(n_trial):
            t_start = time.perf_counter()
            func(y)
            best = min(best, time.perf_counter() - t_start)
        timings[func.__name__].append(best)
    print("n = %8i  " % n + "  ".join("%s %.3gs" % (name, vals[-1]) for name, vals in timings.items()))

for name, vals in timings.items():
    fit = stats.linregress(np.log(n_values), np.log(vals))
    print("%-20s log-log slope %.3f (n log n is slightly above 1)" % (name, fit.slope))

columns = dict(n=n_values)
columns.update({name: np.array(vals) for name, vals in timings.items()})
outfile = os.path.join(Defaults.QUANTRELAX_OUT, 'study_complexity', 'timing.csv')
file_utils.write_table(columns, outfile)
print("Wrote %s" % outfile)
