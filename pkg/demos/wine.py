"""Cluster the UCI wine data under random sub-sampling.

Set FUSECLUST_WINE_DATA to the path of ``wine.data``.
"""

import os
import sys

import numpy as np

from fuseclust import Penalty, SolverConfig, apply_sampling, core_subset, evaluate_partition
from fuseclust import standardize
from fuseclust.model import load_wine
from fuseclust.solver import run_irls

path = os.environ.get("FUSECLUST_WINE_DATA")
if not path:
    sys.exit("set FUSECLUST_WINE_DATA to the UCI wine.data file")

data, labels = load_wine(path)
data = standardize(data)
idx = core_subset(data, labels, 40)
data, labels = data.take(idx), labels[idx]
cfg = SolverConfig(Penalty.h1(0.5), lam=1000.0)
for p0 in (1.0, 0.9, 0.7, 0.5):
    rates = [evaluate_partition(run_irls(apply_sampling(data, p0, s), cfg).partition,
                                labels).misclassification_rate for s in range(3)]
    print(f"p0={p0:.1f}  misclassification {np.mean(rates):.3f}")
