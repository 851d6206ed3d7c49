"""Compare l1, lp(0.1) and h1(0.5) on three Gaussian clusters across a lambda sweep.

Prints, per penalty and lambda, the number of groups found, the
misclassification rate and the center error.
"""

import numpy as np

from fuseclust import Penalty, SolverConfig, SyntheticSpec, evaluate_partition, generate_clusters
from fuseclust.model import dataset_stats
from fuseclust.solver import run_irls

spec = SyntheticSpec(K=3, M=50, P=50, noise="gaussian", variance=0.1, center_sep=8, seed=0)
data, truth = generate_clusters(spec)
delta = dataset_stats(data, truth).delta
print(f"points={data.points} features={data.features} delta={delta:.3f}")

for name, pen in (("l1", Penalty.l1()), ("lp(0.1)", Penalty.lp(0.1)), ("h1(0.5)", Penalty.h1(0.5))):
    print(f"\n{name}")
    print(f"{'lambda':>10} {'groups':>7} {'misclass':>9} {'center_err':>11}")
    for lam in np.logspace(-2, 6, 9):
        res = run_irls(data, SolverConfig(pen, lam=float(lam)))
        rep = evaluate_partition(res.partition, truth)
        print(f"{lam:10.3g} {len(res.partition.groups):7d} "
              f"{rep.misclassification_rate:9.3f} {rep.center_error:11.3f}")
