"""Monte Carlo recovery probability against the observed fraction p0 and cluster size M."""

import os

from fuseclust import Penalty, SolverConfig, SyntheticSpec, calibrated_centers, success_curve

P, eps = 50, 0.17
C = calibrated_centers(P, eps, kappa=0.39, mu0=2.3, M=25, seed=0)
spec = SyntheticSpec(K=2, M=6, P=P, noise="uniform", epsilon=eps, centers=C)
cfg = SolverConfig(Penalty.h1(0.5), mode="constrained", epsilon=eps, init="partial")
curve = success_curve(spec, cfg, [0.4, 0.6, 0.8, 1.0], [6, 25, 100], trials=20, seed=0,
                      threads=os.cpu_count() or 1)
print(curve.to_csv(), end="")
