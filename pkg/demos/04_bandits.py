"""Elimination bandits built on the robust estimator and on projected rounding."""

import numpy as np

from rkhs_design import ArmSet, Environment, run_ptr_pe, run_ptr_regret, run_rips_pe, run_rips_regret
from rkhs_design.experiments import misspecified_linear_instance, transductive_instance

# %% Regret on a misspecified linear instance: both algorithms settle on good arms
X, theta, mu = misspecified_linear_instance(5, 20, 0.05, seed=0)
arms = ArmSet(X)
B = float(np.abs(mu).max())
horizon = 30_000
rips = run_rips_regret(arms, Environment(mu, "gaussian", 1.0, B=B, rng_seed=0), 0.1, 1e-3, 1.0, B,
                       "catoni", horizon, seed=0)
ptr = run_ptr_regret(arms, Environment(mu, "gaussian", 1.0, B=B, rng_seed=0), 0.1, 1e-3, 1.0, horizon)
for name, res in (("RIPS", rips), ("PTR", ptr)):
    print(f"{name}: regret {res.regret_trace[-1]:.1f} after {horizon} rounds, "
          f"{len(res.phases)} phases, survivors {res.survivors}")
for p in rips.phases:
    print(f"  phase {p.ell}: eps={p.eps:.4f} tau={p.tau_used} active {len(p.active_before)} -> {len(p.active_after)}")

# %% Pure exploration on the three-arm transductive instance: the third arm is
# nearly parallel to the best one, so the informative arm to sample is e2
X, theta, mu = transductive_instance(0.47)
arms = ArmSet(X)
for name, run in (("RIPS", lambda env: run_rips_pe(arms, None, env, 0.1, 0.0, 1.0, 1.0, "catoni", 0.01, seed=1)),
                  ("PTR", lambda env: run_ptr_pe(arms, None, env, 0.1, 1e-3, 1.0, 0.01))):
    res = run(Environment(mu, "gaussian", 1.0, B=1.0, rng_seed=1))
    print(f"{name}: returned arm {res.returned_arm} (gap {res.returned_gap:.3f}) after {res.total_pulls} pulls")
