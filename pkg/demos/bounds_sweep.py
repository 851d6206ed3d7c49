"""Lower bound on the recovery probability over a grid of p0 and kappa."""

import numpy as np

from fuseclust.theory import success_lower_bound

P, mu0, M = 50, 2.3, 25
kappas = [0.1, 0.2, 0.3, 0.39]
print("p0    " + "".join(f"kappa={k:<8}" for k in kappas))
for p0 in np.linspace(0.2, 1.0, 9):
    row = [success_lower_bound(p0, P, k, mu0, M) for k in kappas]
    print(f"{p0:.2f}  " + "".join(f"{v:<14.4g}" for v in row))
