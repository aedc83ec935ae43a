"""
Bound-constrained refinement with finite differences
====================================================

The network is treated as a black box. Gradients come from finite
differences that never step outside the box, and L-BFGS-B keeps every iterate
feasible.
"""

import numpy as np

from boxverify import Box, Objective, OptConfig, minimize


def rosenbrock(p):
    return (1 - p[0]) ** 2 + 100 * (p[1] - p[0] ** 2) ** 2


box = Box((-2.0, -2.0), (2.0, 2.0))
f = Objective(rosenbrock, box)  # asserts every evaluation lies in the box
res = minimize(f, np.array([-1.2, 1.0]), box)
print(res.status.value, res.iterations, "iterations,", f.evaluations, "evaluations")
print("x* =", res.x_best, " f* =", res.f_best)

###############################################################################
# With the minimiser outside the box the answer sits on a face.
box = Box((-2.0, 1.5), (2.0, 2.0))
res = minimize(Objective(rosenbrock, box), np.array([0.0, 1.8]), box)
print("constrained x* =", res.x_best.round(6))

###############################################################################
# The objective value never increases along the history.
res = minimize(Objective(rosenbrock, box), np.array([-1.9, 1.9]), box, OptConfig(memory=3))
print(np.all(np.diff(res.history) <= 0))
