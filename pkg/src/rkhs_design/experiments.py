"""Replicated simulation studies.

Each experiment builds a fixed instance from the configuration seed, then runs
independent replications whose random streams derive from ``seed ^ rep``. Rows
are written in a canonical order so that reruns with the same seed produce
byte-identical CSV files regardless of the degree of parallelism.

Experiments
-----------
g_optimal
    Linear arms with an anisotropic distribution; worst-case directional error
    of RIPS, IPS and three least-squares baselines as the budget grows.
kernel_rbf
    RBF arms on a squared grid; RIPS, IPS and projected-rounding estimators
    of a smooth two-bump function.
ips_vs_rips
    Standard-basis arms with directions sharing a common block; the
    plain importance-weighted estimator against its robust counterpart.
bandit_regret
    Cumulative regret of the robust and projected-rounding elimination
    algorithms on a misspecified linear instance.
bandit_pe
    Sample counts and success of the pure-exploration algorithms on a
    three-arm transductive instance.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bandits import Environment, run_ptr_pe, run_ptr_regret, run_rips_pe, run_rips_regret
from .design import DesignProblem, SolverConfig, solve_design
from .errors import ConfigurationError, SingularDesignError
from .estimation import RobustMeanConfig, draw_arms, ips_estimate, ols_fit, rips_estimate, rls_fit, SampleBatch
from .features import ArmSet, KernelSpec
from .rounding import (
    allocation_sequence,
    caratheodory_reduce,
    ptr_round,
    round_ceiling,
    round_swap,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "EXPERIMENTS",
    "preset",
    "run_experiment",
    "rows_to_csv",
    "summarize",
    "write_outputs",
    "median_by",
    "gen_g_optimal_scenario",
    "gen_kernel_scenario",
    "gen_ips_vs_rips_scenario",
    "emit_results",
]

EXPERIMENTS = ("g_optimal", "kernel_rbf", "ips_vs_rips", "bandit_regret", "bandit_pe")
CSV_HEADER = ("experiment", "estimator", "T", "rep", "metric", "value", "seed")
NO_ESTIMATE = "no_estimate"
FAILED = "failed"


@dataclass
class ExperimentConfig:
    """Configuration of a replicated experiment.

    Fields left as ``None`` take the value of the chosen scale preset.
    """

    experiment: str
    scale: str = "desk"
    d: int | None = None
    n: int | None = None
    m: int | None = None
    m_values: list | None = None
    t_grid: list | None = None
    bandwidth: float | None = None
    gamma: float | None = None
    noise_sd: float | None = None
    noise_variance: float | None = None
    noise: str = "gaussian"
    dof: float = 3.0
    delta: float = 0.1
    h: float | None = None
    omega: float | None = None
    eps_target: float | None = None
    estimator: str = "catoni"
    c0: float = math.sqrt(2.0)
    replications: int | None = None
    seed: int = 0
    output_path: str | None = None
    parallelism: int = 1
    solver_max_iters: int = 5000
    solver_tol: float = 1e-7

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.scale not in ("paper", "desk"):
            raise ConfigurationError("scale must be 'paper' or 'desk'")
        for key, value in preset(self.experiment, self.scale).items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.replications is not None and self.replications < 1:
            raise ConfigurationError("replications must be positive")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be positive")
        if self.noise not in ("gaussian", "student_t"):
            raise ConfigurationError("noise must be 'gaussian' or 'student_t'")
        if self.t_grid is not None:
            self.t_grid = [int(t) for t in self.t_grid]
            if any(t < 1 for t in self.t_grid):
                raise ConfigurationError("budgets in t_grid must be positive")
            if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
                raise ConfigurationError("t_grid must be strictly increasing")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown configuration fields: {unknown}")
        if "experiment" not in data:
            raise ConfigurationError("the configuration must name an experiment")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def solver(self):
        return SolverConfig(max_iters=self.solver_max_iters, tol=self.solver_tol)

    def noise_scale(self):
        if self.noise_sd is not None:
            return float(self.noise_sd)
        return float(np.sqrt(self.noise_variance))


_PRESETS = {
    ("g_optimal", "desk"): dict(d=20, t_grid=[50, 100, 200, 400, 800], replications=16, noise_sd=1.0),
    ("g_optimal", "paper"): dict(d=50, t_grid=[250, 500, 1000, 2000, 4000], replications=16, noise_sd=1.0),
    ("kernel_rbf", "desk"): dict(m=100, bandwidth=0.025, gamma=0.005, t_grid=[10, 20, 40, 80],
                                 replications=20, noise_variance=0.05),
    ("kernel_rbf", "paper"): dict(m=500, bandwidth=0.025, gamma=0.005, t_grid=[25, 50, 100, 200, 400],
                                  replications=40, noise_variance=0.05),
    ("ips_vs_rips", "desk"): dict(m_values=[8, 12, 16], replications=16, noise_sd=1.0),
    ("ips_vs_rips", "paper"): dict(m_values=[12, 14, 16], replications=16, noise_sd=1.0),
    ("bandit_regret", "desk"): dict(d=5, n=20, gamma=1e-3, h=0.05, t_grid=[5000, 10000, 20000],
                                    replications=4, noise_sd=1.0),
    ("bandit_regret", "paper"): dict(d=5, n=50, gamma=1e-3, h=0.05, t_grid=[50000, 100000, 200000],
                                     replications=20, noise_sd=1.0),
    ("bandit_pe", "desk"): dict(omega=0.47, eps_target=0.01, gamma=1e-3, replications=20, noise_sd=1.0),
    ("bandit_pe", "paper"): dict(omega=0.47, eps_target=0.01, gamma=1e-3, replications=200, noise_sd=1.0),
}


def preset(experiment, scale):
    """Default sizes of an experiment at ``"paper"`` or ``"desk"`` scale."""
    return dict(_PRESETS[(experiment, scale)])


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    estimator: str
    T: int
    rep: int
    metric: str
    value: float
    seed: int

    def key(self):
        return (self.estimator, self.T, self.rep, self.metric)


def _rep_seed(seed, rep):
    return int(seed) ^ int(rep)


def _max_dir_error(pred, truth):
    return float(np.max(np.abs(np.asarray(pred) - np.asarray(truth))))


# --- g_optimal -----------------------------------------------------------------


def gen_g_optimal_scenario(d, n=None, seed=0):
    """Unit-norm Gaussian arms, variance 1 on the first ``d - 10`` coordinates and 0.1 on the rest.

    Returns the arm set (``n = d(d+1)/2`` by default) and ``theta* = 1 / sqrt(d)``.
    """
    if d <= 10:
        raise ConfigurationError("the anisotropic scenario needs d > 10")
    n = d * (d + 1) // 2 if n is None else int(n)
    rng = np.random.default_rng(seed)
    scale = np.where(np.arange(d) < d - 10, 1.0, 0.1)
    X = rng.standard_normal((n, d)) * np.sqrt(scale)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return ArmSet(X), np.full(d, 1.0 / np.sqrt(d))


def _g_optimal_setup(cfg):
    d = cfg.d
    arms, theta = gen_g_optimal_scenario(d, cfg.n, cfg.seed)
    X = arms.points
    n = arms.n
    sol = solve_design(DesignProblem(arms, np.eye(n), 0.0), cfg.solver())
    lam = sol.design
    reduced = caratheodory_reduce(lam, arms)
    support_bound = d * (d + 1) // 2
    car, swap = {}, {}
    problem = DesignProblem(arms, np.eye(n), 0.0)
    for T in cfg.t_grid:
        car[T] = None if T <= support_bound else allocation_sequence(round_ceiling(reduced, T).counts)
        swap[T] = allocation_sequence(round_swap(problem, lam, T, 1.0).counts) if T >= d else None
    return dict(X=X, theta=theta, lam=lam, car=car, swap=swap, B=float(np.max(np.abs(X @ theta))))


def _g_optimal_rep(cfg, setup, rep):
    X, theta, lam = setup["X"], setup["theta"], setup["lam"]
    n = X.shape[0]
    arms = ArmSet(X)
    mu = X @ theta
    sigma = cfg.noise_scale()
    rng = np.random.default_rng(_rep_seed(cfg.seed, rep))
    robust = RobustMeanConfig(cfg.estimator, cfg.delta, setup["B"] ** 2 + sigma**2)
    rows = []
    eye = np.eye(n)
    for T in cfg.t_grid:
        env = Environment(mu, cfg.noise, sigma, cfg.dof, rng_seed=int(rng.integers(2**31)))
        est = rips_estimate(arms, eye, lam, 0.0, T, robust, env.pull_many, int(rng.integers(2**31)))
        rows.append(("RIPS", T, "max_dir_error", _max_dir_error(X @ (X.T @ est.theta_hat), mu)))
        rows.append(("IPS", T, "max_dir_error", _max_dir_error(ips_estimate(arms, eye, est.batch), mu)))
        for name, seq in (("LS-Caratheodory", setup["car"][T]), ("LS-Regsel", setup["swap"][T])):
            if seq is None:
                rows.append((name, T, NO_ESTIMATE, 1.0))
                continue
            th = ols_fit(X, seq, env.pull_many(seq))
            if th is None:
                rows.append((name, T, NO_ESTIMATE, 1.0))
            else:
                rows.append((name, T, "max_dir_error", _max_dir_error(X @ th, mu)))
        seq = draw_arms(lam, T, int(rng.integers(2**31)))
        th = ols_fit(X, seq, env.pull_many(seq))
        if th is None:
            rows.append(("LS-Sampling", T, NO_ESTIMATE, 1.0))
        else:
            rows.append(("LS-Sampling", T, "max_dir_error", _max_dir_error(X @ th, mu)))
    return rows


# --- kernel_rbf ------------------------------------------------------------------


def kernel_target(x, seed, n_bumps=2):
    """Coefficients of a two-bump target: kernel atoms at seeded arms with seeded signed weights."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float).ravel()
    centers = rng.uniform(0.15, 0.85, n_bumps)
    amps = np.where(np.arange(n_bumps) % 2 == 0, 1.0, -1.0) * rng.uniform(0.5, 1.0, n_bumps)
    alpha = np.zeros(x.size)
    for c, a in zip(centers, amps):
        alpha[int(np.argmin(np.abs(x - c)))] += a
    return alpha


def gen_kernel_scenario(m, bandwidth=0.025, seed=0):
    """RBF arms on the squared grid ``(i / m)^2`` and unit-norm target coefficients."""
    if m < 2:
        raise ConfigurationError("the kernel scenario needs m >= 2")
    x = (np.arange(m + 1) / m) ** 2
    arms = ArmSet(x, KernelSpec.rbf(bandwidth))
    alpha = kernel_target(x, seed)
    alpha /= np.sqrt(alpha @ arms.gram @ alpha)
    return arms, alpha


def _kernel_setup(cfg):
    arms, alpha = gen_kernel_scenario(cfg.m, cfg.bandwidth, cfg.seed)
    x = arms.points.ravel()
    n = arms.n
    sol = solve_design(DesignProblem(arms, np.eye(n), cfg.gamma), cfg.solver())
    ptr = {}
    for T in cfg.t_grid:
        try:
            rep = ptr_round(arms, np.eye(n), sol.design, cfg.gamma, T, 1.0)
            ptr[T] = allocation_sequence(rep.allocation.counts)
        except ConfigurationError:
            ptr[T] = None
    return dict(x=x, alpha=alpha, lam=sol.design, ptr=ptr)


def _kernel_rep(cfg, setup, rep):
    arms = ArmSet(setup["x"], KernelSpec.rbf(cfg.bandwidth))
    K = arms.gram
    n = arms.n
    eye = np.eye(n)
    alpha, lam = setup["alpha"], setup["lam"]
    mu = K @ alpha
    sigma = cfg.noise_scale()
    B = float(np.max(np.abs(mu)))
    robust = RobustMeanConfig(cfg.estimator, cfg.delta, B**2 + sigma**2)
    rng = np.random.default_rng(_rep_seed(cfg.seed, rep))
    baseline = _max_dir_error(np.zeros(n), mu)
    rows = [(name, 0, "max_dir_error", baseline) for name in ("RIPS", "IPS", "PTR")]
    for T in cfg.t_grid:
        env = Environment(mu, cfg.noise, sigma, cfg.dof, rng_seed=int(rng.integers(2**31)))
        draw_seed = int(rng.integers(2**31))
        try:
            est = rips_estimate(arms, eye, lam, cfg.gamma, T, robust, env.pull_many, draw_seed)
        except ValueError:
            rows.append(("RIPS", T, NO_ESTIMATE, 1.0))
            rows.append(("IPS", T, NO_ESTIMATE, 1.0))
        else:
            rows.append(("RIPS", T, "max_dir_error", _max_dir_error(K @ est.theta_hat, mu)))
            rows.append(("IPS", T, "max_dir_error", _max_dir_error(ips_estimate(arms, eye, est.batch), mu)))
        seq = setup["ptr"][T]
        if seq is None:
            rows.append(("PTR", T, NO_ESTIMATE, 1.0))
        else:
            y = env.pull_many(seq)
            coef = rls_fit(arms, SampleBatch(seq, y, lam, T * cfg.gamma), T * cfg.gamma)
            rows.append(("PTR", T, "max_dir_error", _max_dir_error(K @ coef, mu)))
    return rows


# --- ips_vs_rips -----------------------------------------------------------------


def shared_block_instance(m):
    """Standard-basis arms in ``m^2 + m`` dimensions and directions ``1_[m] + e_{m+i}``."""
    if m < 2:
        raise ConfigurationError("the shared-block scenario needs m >= 2")
    d = m * m + m
    C = np.zeros((m * m, d))
    C[:, :m] = 1.0
    C[np.arange(m * m), m + np.arange(m * m)] = 1.0
    return ArmSet(np.eye(d)), C


def gen_ips_vs_rips_scenario(m, seed=0):
    """Arms, directions and the all ``-1`` reward vector of the shared-block scenario.

    The instance is deterministic; ``seed`` is accepted for interface symmetry.
    """
    arms, C = shared_block_instance(m)
    return arms, C, -np.ones(arms.n)


def _ips_setup(cfg):
    designs = {}
    for m in cfg.m_values:
        arms, C = shared_block_instance(m)
        designs[m] = solve_design(DesignProblem(arms, C, 0.0), cfg.solver()).design
    return dict(designs=designs)


def _ips_rep(cfg, setup, rep):
    rng = np.random.default_rng(_rep_seed(cfg.seed, rep))
    sigma = cfg.noise_scale()
    rows = []
    for m in cfg.m_values:
        arms, C, theta = gen_ips_vs_rips_scenario(m)
        truth = C @ theta
        T = 4 * m
        robust = RobustMeanConfig(cfg.estimator, cfg.delta, 1.0 + sigma**2)
        env = Environment(theta, cfg.noise, sigma, cfg.dof, rng_seed=int(rng.integers(2**31)))
        est = rips_estimate(arms, C, setup["designs"][m], 0.0, T, robust, env.pull_many,
                            int(rng.integers(2**31)))
        e_rips = _max_dir_error(C @ est.theta_hat, truth)
        e_ips = _max_dir_error(ips_estimate(arms, C, est.batch), truth)
        rows.append(("RIPS", T, "max_dir_error", e_rips))
        rows.append(("IPS", T, "max_dir_error", e_ips))
        rows.append(("IPS/RIPS", T, "error_ratio", e_ips / e_rips if e_rips > 0 else math.inf))
    return rows


# --- bandits -----------------------------------------------------------------------


def misspecified_linear_instance(d, n, h, seed):
    """Unit-norm arms, a unit reward vector and a deviation of size ``h`` with random signs."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    theta = rng.standard_normal(d)
    theta /= np.linalg.norm(theta)
    dev = h * rng.choice([-1.0, 1.0], n)
    mu = np.clip(X @ theta + dev, -1.0 - h, 1.0 + h)
    return X, theta, mu


def transductive_instance(omega):
    """Arms ``e1``, ``e2`` and ``(cos omega, sin omega)`` with reward vector ``e1``."""
    X = np.array([[1.0, 0.0], [0.0, 1.0], [np.cos(omega), np.sin(omega)]])
    theta = np.array([1.0, 0.0])
    return X, theta, X @ theta


def _bandit_regret_setup(cfg):
    X, theta, mu = misspecified_linear_instance(cfg.d, cfg.n, cfg.h, cfg.seed)
    return dict(X=X, mu=mu)


def _bandit_regret_rep(cfg, setup, rep):
    X, mu = setup["X"], setup["mu"]
    arms = ArmSet(X)
    sigma = cfg.noise_scale()
    B = float(np.max(np.abs(mu)))
    horizon = max(cfg.t_grid)
    s = _rep_seed(cfg.seed, rep)
    rows = []
    runs = {
        "RIPS": lambda: run_rips_regret(arms, Environment(mu, cfg.noise, sigma, cfg.dof, rng_seed=s),
                                        cfg.delta, cfg.gamma, sigma, B, cfg.estimator, horizon,
                                        c0=cfg.c0, solver=cfg.solver(), seed=s),
        "PTR": lambda: run_ptr_regret(arms, Environment(mu, cfg.noise, sigma, cfg.dof, rng_seed=s),
                                      cfg.delta, cfg.gamma, sigma, horizon, solver=cfg.solver()),
    }
    for name, run in runs.items():
        try:
            res = run()
        except (ValueError, SingularDesignError):
            rows.extend((name, T, FAILED, 1.0) for T in cfg.t_grid)
            continue
        for T in cfg.t_grid:
            rows.append((name, T, "cumulative_regret", float(res.regret_trace[T - 1])))
    return rows


def _bandit_pe_setup(cfg):
    return {}


def _bandit_pe_rep(cfg, setup, rep):
    X, theta, mu = transductive_instance(cfg.omega)
    arms = ArmSet(X)
    sigma = cfg.noise_scale()
    s = _rep_seed(cfg.seed, rep)
    rows = []
    runs = {
        "RIPS": lambda: run_rips_pe(arms, None, Environment(mu, cfg.noise, sigma, cfg.dof, B=1.0, rng_seed=s),
                                    cfg.delta, 0.0, sigma, 1.0, cfg.estimator, cfg.eps_target,
                                    c0=cfg.c0, solver=cfg.solver(), seed=s),
        "PTR": lambda: run_ptr_pe(arms, None, Environment(mu, cfg.noise, sigma, cfg.dof, B=1.0, rng_seed=s),
                                  cfg.delta, cfg.gamma, sigma, cfg.eps_target, solver=cfg.solver()),
    }
    for name, run in runs.items():
        try:
            res = run()
        except (ValueError, SingularDesignError):
            rows.append((name, 0, FAILED, 1.0))
            continue
        rows.append((name, 0, "pulls", float(res.total_pulls)))
        rows.append((name, 0, "eps_good", float(res.returned_gap <= cfg.eps_target)))
    return rows


_RUNNERS = {
    "g_optimal": (_g_optimal_setup, _g_optimal_rep),
    "kernel_rbf": (_kernel_setup, _kernel_rep),
    "ips_vs_rips": (_ips_setup, _ips_rep),
    "bandit_regret": (_bandit_regret_setup, _bandit_regret_rep),
    "bandit_pe": (_bandit_pe_setup, _bandit_pe_rep),
}


def _run_rep(args):
    cfg, setup, rep = args
    _, rep_fn = _RUNNERS[cfg.experiment]
    try:
        raw = rep_fn(cfg, setup, rep)
    except Exception:  # noqa: BLE001 - a failed replication is recorded, not fatal
        raw = [("all", 0, FAILED, 1.0)]
    seed = _rep_seed(cfg.seed, rep)
    return [ResultRow(cfg.experiment, e, int(T), rep, metric, float(v), seed) for e, T, metric, v in raw]


def run_experiment(cfg):
    """Run all replications and return ``(rows, summary)``."""
    setup_fn, _ = _RUNNERS[cfg.experiment]
    setup = setup_fn(cfg)
    jobs = [(cfg, setup, rep) for rep in range(cfg.replications)]
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            chunks = list(pool.map(_run_rep, jobs))
    else:
        chunks = [_run_rep(job) for job in jobs]
    rows = sorted((r for chunk in chunks for r in chunk), key=ResultRow.key)
    return rows, summarize(rows)


def summarize(rows):
    """Mean, standard error (sample std over sqrt(n)) and count per estimator, budget and metric."""
    groups = {}
    for r in rows:
        groups.setdefault((r.estimator, r.T, r.metric), []).append(r.value)
    out = {}
    for (est, T, metric), vals in sorted(groups.items()):
        v = np.asarray(vals, dtype=float)
        finite = v[np.isfinite(v)]
        k = finite.size
        mean = float(finite.mean()) if k else None
        se = float(finite.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0 if k == 1 else None
        out.setdefault(est, {}).setdefault(str(T), {})[metric] = {"mean": mean, "stderr": se, "n": int(v.size)}
    return out


def _fmt(value):
    return repr(float(value))


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.experiment, r.estimator, r.T, r.rep, r.metric, _fmt(r.value), r.seed])
    return buf.getvalue()


def write_outputs(rows, summary, path):
    """Write the CSV to ``path`` and the summary next to it with a ``.summary.json`` suffix."""
    base = path[:-4] if path.endswith(".csv") else path
    summary_path = base + ".summary.json"
    try:
        with open(path, "w", newline="") as fh:
            fh.write(rows_to_csv(rows))
        with open(summary_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {exc.filename or path}: {exc.strerror}") from exc
    return summary_path


emit_results = write_outputs


def config_dict(cfg):
    return asdict(cfg)


def median_by(rows, estimator, metric="max_dir_error"):
    """Median value per budget over replications for one estimator."""
    groups = {}
    for r in rows:
        if r.estimator == estimator and r.metric == metric:
            groups.setdefault(r.T, []).append(r.value)
    return {T: float(np.median(v)) for T, v in sorted(groups.items())}

