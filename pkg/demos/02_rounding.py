"""From continuous designs to integer sample counts.

Compares ceiling rounding, support reduction, exchange rounding and the
projected rounding that works in the effective dimension of a kernel design.
"""

import numpy as np

from rkhs_design import (
    ArmSet,
    DesignProblem,
    KernelSpec,
    caratheodory_reduce,
    ptr_round,
    round_ceiling,
    round_swap,
    solve_design,
)
from rkhs_design.rounding import allocation_inflation, cutoff_dimension

rng = np.random.default_rng(1)
d, n = 6, 60
X = rng.standard_normal((n, d))
arms = ArmSet(X)
prob = DesignProblem(arms, np.eye(n), 0.0)
lam = solve_design(prob).design
print(f"optimal design has {np.count_nonzero(lam > 1e-9)} arms in its support")

# %% Carathéodory keeps the moment matrix but needs at most d(d+1)/2 + 1 arms
reduced = caratheodory_reduce(lam, arms)
print(f"reduced support: {np.count_nonzero(reduced)} arms (bound {d * (d + 1) // 2 + 1})")

# %% Ceiling rounding overshoots the budget, exchange rounding hits it exactly
for T in (2 * d, 5 * d, 20 * d):
    ceil = round_ceiling(reduced, T)
    swap = round_swap(prob, lam, T, 0.5)
    print(f"T={T:4d}: ceiling uses {ceil.total:4d} pulls, swap uses {swap.total:4d} "
          f"with inflation {allocation_inflation(prob, lam, swap.counts):.3f}")

# %% Kernel arms: an n-dimensional feature space, but only a few directions carry weight
x = (np.arange(101) / 100) ** 2
karms = ArmSet(x, KernelSpec.rbf(0.025))
gamma = 0.005
klam = solve_design(DesignProblem(karms, np.eye(karms.n), gamma)).design
k = cutoff_dimension(karms, klam, gamma)
for mult in (1, 2, 4):
    rep = ptr_round(karms, np.eye(karms.n), klam, gamma, mult * k, 1.0)
    print(f"effective dim {k}, T={mult * k}: inflation {rep.inflation_factor:.3f}")
