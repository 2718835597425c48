"""Phased elimination bandits driven by experimental design.

Four algorithms share one skeleton: in phase ``l`` with accuracy
``eps_l = 2^-l`` a design over the surviving arms is computed, a phase length
is derived from its worst-case variance, samples are collected, and arms that
look clearly suboptimal are discarded.

* RIPS variants sample i.i.d. from the design and estimate with the robust
  inverse-propensity estimator; they tolerate heavy-tailed noise.
* PTR variants round the design into a deterministic allocation in a
  projected space and estimate with regularized least squares.

Each comes in a regret-minimization and a (transductive) pure-exploration form.
"""

from dataclasses import dataclass, field

import numpy as np

from .design import DesignProblem, SolverConfig, effective_dim_cutoff, joint_arms, solve_design
from .errors import ConfigurationError
from .estimation import RobustMeanConfig, SampleBatch, draw_arms, min_samples, rips_estimate, rls_fit
from .features import RegularizedOperator
from .rounding import allocation_sequence, ptr_round

__all__ = [
    "Environment",
    "PhaseRecord",
    "RunResult",
    "env_pull",
    "run_rips_regret",
    "run_rips_pe",
    "run_ptr_regret",
    "run_ptr_pe",
]

DEFAULT_C0 = float(np.sqrt(2.0))
MAX_TARGETS = 200


@dataclass
class Environment:
    """Stochastic reward environment.

    Parameters
    ----------
    mu : array_like
        Mean reward of each measurement arm.
    noise : {"gaussian", "student_t", "none"}
    sigma : float
        Noise standard deviation. Student-t noise is rescaled to this
        standard deviation, which needs ``dof > 2``.
    dof : float
    B : float, optional
        Bound on ``|mu|``. Defaults to ``max |mu|`` and is checked.
    h_report : float, optional
        Misspecification level, informational only.
    rng_seed : int
    mu_z : array_like, optional
        Mean rewards of target arms in transductive problems (evaluation only).
    """

    mu: np.ndarray
    noise: str = "gaussian"
    sigma: float = 1.0
    dof: float = 3.0
    B: float | None = None
    h_report: float | None = None
    rng_seed: int = 0
    mu_z: np.ndarray | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.noise not in ("gaussian", "student_t", "none"):
            raise ConfigurationError(f"unknown noise kind {self.noise!r}")
        if self.noise == "student_t" and not self.dof > 2:
            raise ConfigurationError("Student-t noise needs dof > 2 for a finite variance")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")
        bound = float(np.max(np.abs(self.mu)))
        if self.B is None:
            self.B = bound
        elif bound > self.B + 1e-12:
            raise ConfigurationError(f"max |mu| = {bound} exceeds the stated bound B = {self.B}")
        if self.mu_z is not None:
            self.mu_z = np.asarray(self.mu_z, dtype=float)
        self.rng = np.random.default_rng(self.rng_seed)

    def _noise(self, size):
        if self.noise == "none" or self.sigma == 0:
            return np.zeros(size)
        if self.noise == "gaussian":
            return self.sigma * self.rng.standard_normal(size)
        scale = self.sigma * np.sqrt((self.dof - 2.0) / self.dof)
        return scale * self.rng.standard_t(self.dof, size)

    def pull(self, arm):
        return float(self.mu[int(arm)] + self._noise(1)[0])

    def pull_many(self, arms):
        arms = np.asarray(arms, dtype=int)
        return self.mu[arms] + self._noise(arms.size)

    @property
    def target_means(self):
        return self.mu if self.mu_z is None else self.mu_z


def env_pull(env, arm):
    return env.pull(arm)


@dataclass
class PhaseRecord:
    ell: int
    eps: float
    tau: int
    tau_used: int
    f_value: float
    q1: float
    q2: float
    active_before: list
    active_after: list
    pulls_so_far: int
    d_tilde: int | None = None
    truncated: bool = False


@dataclass
class RunResult:
    mode: str
    regret_trace: np.ndarray | None
    returned_arm: int | None
    returned_gap: float | None
    total_pulls: int
    phases: list
    survivors: list


class _RegretLedger:
    def __init__(self, env, horizon):
        self.env = env
        self.best = float(env.mu.max())
        self.horizon = int(horizon)
        self.gaps = []
        self.pulls = 0

    @property
    def remaining(self):
        return self.horizon - self.pulls

    def pull(self, arms):
        arms = np.asarray(arms, dtype=int)[: self.remaining]
        y = self.env.pull_many(arms)
        self.gaps.append(self.best - self.env.mu[arms])
        self.pulls += arms.size
        return y

    def trace(self):
        g = np.concatenate(self.gaps) if self.gaps else np.zeros(0)
        return np.cumsum(g)


def _check_common(delta, gamma, sigma, B):
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    if gamma < 0:
        raise ConfigurationError("gamma must be nonnegative")
    if sigma < 0 or B < 0:
        raise ConfigurationError("sigma and B must be nonnegative")


def _seed_stream(seed):
    ss = np.random.SeedSequence(seed)
    while True:
        yield int(ss.spawn(1)[0].generate_state(1)[0])


def run_rips_regret(arms, env, delta, gamma, sigma, B, robust_kind="catoni", horizon=10_000, *,
                    c0=DEFAULT_C0, solver=None, seed=0, use_w_values=False, variance="theory"):
    """Regret minimization with robust inverse-propensity estimates.

    Phase ``l`` optimizes the design over the surviving arms ``X_l`` with
    directions ``phi(X_l)``, samples

        tau_l = ceil(max{c1 log(|X| / delta),
                         c0^2 (B^2 + sigma^2) eps_l^-2 f(X_l) log(4 l^2 |X| / delta)})

    arms and keeps ``x`` when ``max_x' <theta_hat, phi(x') - phi(x)> < 4 eps_l``.
    With ``use_w_values`` the directional estimates replace ``theta_hat``
    and the threshold is halved.

    Returns
    -------
    RunResult
        ``regret_trace[t]`` is the cumulative regret after ``t + 1`` pulls.
    """
    _check_common(delta, gamma, sigma, B)
    n = arms.n
    cfg = solver or SolverConfig()
    ledger = _RegretLedger(env, horizon)
    seeds = _seed_stream(seed)
    active = np.arange(n)
    phases = []
    ell = 0
    c1 = RobustMeanConfig(robust_kind).c1
    while active.size > 1 and ledger.remaining > 0:
        ell += 1
        eps = 2.0**-ell
        C = np.eye(n)[active]
        sol = solve_design(DesignProblem(arms, C, gamma, support=active), cfg)
        f = sol.objective_value
        q1 = c1 * np.log(n / delta)
        q2 = c0**2 * (B**2 + sigma**2) * eps**-2 * f * np.log(4.0 * ell**2 * n / delta)
        tau = int(np.ceil(max(q1, q2)))
        robust = RobustMeanConfig(robust_kind, min(delta * active.size / (2.0 * ell**2 * n), 0.5),
                                  B**2 + sigma**2, variance)
        tau_used = max(tau, min_samples(robust, active.size))
        phase_seed = next(seeds)
        before = active.tolist()
        if tau_used > ledger.remaining:
            ledger.pull(draw_arms(sol.design, ledger.remaining, phase_seed))
            phases.append(PhaseRecord(ell, eps, tau, tau_used, f, q1, q2, before, before,
                                      ledger.pulls, truncated=True))
            break
        est = rips_estimate(arms, C, sol.design, gamma, tau_used, robust, ledger.pull, phase_seed)
        if use_w_values:
            vals = est.w_values
            keep = vals.max() - vals < 2.0 * eps
        else:
            vals = arms.gram[active] @ est.theta_hat
            keep = vals.max() - vals < 4.0 * eps
        active = active[keep]
        phases.append(PhaseRecord(ell, eps, tau, tau_used, f, q1, q2, before, active.tolist(), ledger.pulls))
    if ledger.remaining > 0:
        ledger.pull(np.full(ledger.remaining, active[0]))
    trace = ledger.trace()
    ret = int(active[0])
    return RunResult("regret", trace, ret, float(env.mu.max() - env.mu[ret]), ledger.pulls,
                     phases, active.tolist())


def _pair_directions(n_joint, z_idx, active):
    pairs = [(a, b) for a in active for b in active if a != b]
    C = np.zeros((len(pairs), n_joint))
    for r, (a, b) in enumerate(pairs):
        C[r, z_idx[a]] += 1.0
        C[r, z_idx[b]] -= 1.0
    return pairs, C


def _pe_result(env, active, scores, pulls, phases):
    # return the least dominated survivor
    if scores is None:
        ret = int(active[0])
    else:
        ret = int(active[int(np.argmin(scores))])
    means = env.target_means
    gap = float(means.max() - means[ret]) if means is not None else None
    return RunResult("pure_exploration", None, ret, gap, pulls, phases, [int(a) for a in active])


def run_rips_pe(arms_x, arms_z, env, delta, gamma, sigma, B, robust_kind="catoni", eps_target=0.0, *,
                c0=DEFAULT_C0, solver=None, seed=0, use_theta_hat=False, variance="theory",
                max_pulls=None, max_phases=40):
    """Transductive pure exploration with robust inverse-propensity estimates.

    The design lives on the measurement arms ``arms_x`` while directions are
    pairwise differences of surviving target arms. Phase ``l`` samples

        tau_l = ceil(max{c1 log(|Z| / delta),
                         c0^2 eps_l^-2 f(Z_l) (B^2 + sigma^2) log(2 l^2 |Z|^2 / delta)})

    times and removes ``z`` once some ``z'`` beats it by more than ``2 eps_l``.
    The pairwise directional estimates are compared directly unless
    ``use_theta_hat`` is set. Stops when one target arm survives or when
    ``eps_l < eps_target / 8``.
    """
    _check_common(delta, gamma, sigma, B)
    if eps_target < 0:
        raise ConfigurationError("eps_target must be nonnegative")
    joint, x_idx, z_idx = joint_arms(arms_x, arms_z)
    nz = z_idx.size
    if nz > MAX_TARGETS:
        raise ConfigurationError(f"at most {MAX_TARGETS} target arms are supported, got {nz}")
    x_pos = np.full(joint.n, -1)
    x_pos[x_idx] = np.arange(x_idx.size)
    cfg = solver or SolverConfig()
    seeds = _seed_stream(seed)
    active = np.arange(nz)
    phases = []
    pulls = 0
    ell = 0
    scores = None
    c1 = RobustMeanConfig(robust_kind).c1

    def oracle(idx):
        return env.pull_many(x_pos[idx])

    while active.size > 1 and ell < max_phases:
        ell += 1
        eps = 2.0**-ell
        if eps < eps_target / 8.0:
            break
        pairs, C = _pair_directions(joint.n, z_idx, active)
        sol = solve_design(DesignProblem(joint, C, gamma, support=x_idx), cfg)
        f = sol.objective_value
        q1 = c1 * np.log(nz / delta)
        q2 = c0**2 * eps**-2 * f * (B**2 + sigma**2) * np.log(2.0 * ell**2 * nz**2 / delta)
        tau = int(np.ceil(max(q1, q2)))
        robust = RobustMeanConfig(robust_kind, min(delta * len(pairs) / (ell**2 * nz**2), 0.5),
                                  B**2 + sigma**2, variance)
        tau_used = max(tau, min_samples(robust, len(pairs)))
        if max_pulls is not None and pulls + tau_used > max_pulls:
            break
        before = active.tolist()
        est = rips_estimate(joint, C, sol.design, gamma, tau_used, robust, oracle, next(seeds))
        pulls += tau_used
        pos = {a: i for i, a in enumerate(active)}
        if use_theta_hat:
            vals = joint.gram[z_idx[active]] @ est.theta_hat
            dominance = vals.max() - vals
        else:
            dominance = np.full(active.size, -np.inf)
            for (a, b), w in zip(pairs, est.w_values):
                # w estimates <theta, phi(z_a) - phi(z_b)>
                dominance[pos[b]] = max(dominance[pos[b]], w)
        keep = dominance <= 2.0 * eps
        if not keep.any():
            keep[int(np.argmin(dominance))] = True
        active = active[keep]
        scores = dominance[keep]
        phases.append(PhaseRecord(ell, eps, tau, tau_used, f, q1, q2, before, active.tolist(), pulls))
    return _pe_result(env, active, scores, pulls, phases)


def _ptr_phase(arms, C, lam, gamma, tau, candidates):
    rep = ptr_round(arms, C, lam, gamma, tau, 1.0, candidates=candidates)
    return allocation_sequence(rep.allocation.counts), rep


def run_ptr_regret(arms, env, delta, gamma, sigma, horizon=10_000, *, solver=None, eps_round=1.0):
    """Regret minimization with projected rounding and regularized least squares.

    Phase ``l`` uses ``tau_l = ceil(max{2 sigma^2 eps_l^-2 f(X_l) log(4 l^2 |X| / delta), d_l})``
    where ``d_l`` counts eigenvalues of the design matrix at or above ``gamma``,
    fits ``theta_hat = (Phi^T Phi + tau_l gamma I)^{-1} Phi^T Y`` and keeps arms
    whose estimated gap is below ``8 eps_l``.
    """
    _check_common(delta, gamma, sigma, 0.0)
    if gamma <= 0:
        raise ConfigurationError("projected rounding needs gamma > 0")
    n = arms.n
    cfg = solver or SolverConfig()
    ledger = _RegretLedger(env, horizon)
    active = np.arange(n)
    phases = []
    ell = 0
    while active.size > 1 and ledger.remaining > 0:
        ell += 1
        eps = 2.0**-ell
        C = np.eye(n)[active]
        sol = solve_design(DesignProblem(arms, C, gamma, support=active), cfg)
        f = sol.objective_value
        d_tilde = effective_dim_cutoff(RegularizedOperator(arms, sol.design, gamma))
        q2 = 2.0 * sigma**2 * eps**-2 * f * np.log(4.0 * ell**2 * n / delta)
        tau = int(np.ceil(max(q2, d_tilde)))
        seq, _ = _ptr_phase(arms, C, sol.design, gamma, tau, active)
        before = active.tolist()
        if tau > ledger.remaining:
            ledger.pull(seq)
            phases.append(PhaseRecord(ell, eps, tau, tau, f, float(d_tilde), q2, before, before,
                                      ledger.pulls, d_tilde, truncated=True))
            break
        y = ledger.pull(seq)
        coef = rls_fit(arms, SampleBatch(seq, y, sol.design, tau * gamma), tau * gamma)
        vals = arms.gram[active] @ coef
        active = active[vals.max() - vals < 8.0 * eps]
        phases.append(PhaseRecord(ell, eps, tau, tau, f, float(d_tilde), q2, before, active.tolist(),
                                  ledger.pulls, d_tilde))
    if ledger.remaining > 0:
        ledger.pull(np.full(ledger.remaining, active[0]))
    ret = int(active[0])
    return RunResult("regret", ledger.trace(), ret, float(env.mu.max() - env.mu[ret]), ledger.pulls,
                     phases, active.tolist())


def run_ptr_pe(arms_x, arms_z, env, delta, gamma, sigma, eps_target=0.0, *, solver=None, max_pulls=None,
               max_phases=40):
    """Transductive pure exploration with projected rounding.

    Phase ``l`` uses ``tau_l = ceil(max{2 sigma^2 eps_l^-2 f(Z_l) log(4 l^2 |Z| / delta), d_l})``
    and removes target arms whose estimated gap exceeds ``eps_l``.
    """
    _check_common(delta, gamma, sigma, 0.0)
    if gamma <= 0:
        raise ConfigurationError("projected rounding needs gamma > 0")
    joint, x_idx, z_idx = joint_arms(arms_x, arms_z)
    nz = z_idx.size
    if nz > MAX_TARGETS:
        raise ConfigurationError(f"at most {MAX_TARGETS} target arms are supported, got {nz}")
    x_pos = np.full(joint.n, -1)
    x_pos[x_idx] = np.arange(x_idx.size)
    cfg = solver or SolverConfig()
    active = np.arange(nz)
    phases = []
    pulls = 0
    ell = 0
    scores = None
    while active.size > 1 and ell < max_phases:
        ell += 1
        eps = 2.0**-ell
        if eps < eps_target / 8.0:
            break
        _, C = _pair_directions(joint.n, z_idx, active)
        sol = solve_design(DesignProblem(joint, C, gamma, support=x_idx), cfg)
        f = sol.objective_value
        d_tilde = effective_dim_cutoff(RegularizedOperator(joint, sol.design, gamma))
        q2 = 2.0 * sigma**2 * eps**-2 * f * np.log(4.0 * ell**2 * nz / delta)
        tau = int(np.ceil(max(q2, d_tilde)))
        if max_pulls is not None and pulls + tau > max_pulls:
            break
        seq, _ = _ptr_phase(joint, C, sol.design, gamma, tau, x_idx)
        y = env.pull_many(x_pos[seq])
        pulls += tau
        coef = rls_fit(joint, SampleBatch(seq, y, sol.design, tau * gamma), tau * gamma)
        vals = joint.gram[z_idx[active]] @ coef
        before = active.tolist()
        gaps = vals.max() - vals
        keep = gaps <= eps
        active = active[keep]
        scores = gaps[keep]
        phases.append(PhaseRecord(ell, eps, tau, tau, f, float(d_tilde), q2, before, active.tolist(),
                                  pulls, d_tilde))
    return _pe_result(env, active, scores, pulls, phases)
