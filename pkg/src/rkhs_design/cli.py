"""Command line entry point.

Usage::

    python -m rkhs_design design --config design.json --out design_out.json
    python -m rkhs_design experiment kernel_rbf --scale desk --seed 3 --out kernel.csv

Exit codes: 0 on success, 2 for invalid configuration, 3 for runtime failures.
"""

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .bandits import Environment, run_ptr_pe, run_ptr_regret, run_rips_pe, run_rips_regret
from .design import DesignProblem, SolverConfig, solve_design
from .errors import ConfigurationError
from .estimation import RobustMeanConfig, ips_estimate, rips_estimate
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment, write_outputs
from .features import ArmSet, KernelSpec
from .rounding import caratheodory_reduce, ptr_round, round_ceiling, round_swap

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--reps", type=int, help="number of replications")
    common.add_argument("--parallelism", type=int, help="worker processes")
    common.add_argument("--scale", choices=("paper", "desk"), help="preset sizes")

    parser = argparse.ArgumentParser(prog="rkhs_design", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="solve a worst-case variance design")
    sub.add_parser("round", parents=[common], help="round a design to sample counts")
    sub.add_parser("estimate", parents=[common], help="simulate and run the robust estimator")
    sub.add_parser("bandit-regret", parents=[common], help="run a regret-minimization bandit")
    sub.add_parser("bandit-pe", parents=[common], help="run a pure-exploration bandit")
    exp = sub.add_parser("experiment", parents=[common], help="run a replicated experiment")
    exp.add_argument("name", choices=EXPERIMENTS)
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("the configuration must be a JSON object")
    return data


def _require(cfg, key):
    if key not in cfg:
        raise ConfigurationError(f"missing configuration field {key!r}")
    return cfg[key]


def _arms(cfg, key="points"):
    kind = cfg.get("kernel", "linear")
    if kind == "rbf":
        kernel = KernelSpec.rbf(_require(cfg, "bandwidth"))
    elif kind == "linear":
        kernel = KernelSpec.linear()
    elif kind == "precomputed":
        return ArmSet(None, KernelSpec.precomputed(np.asarray(_require(cfg, "gram"), dtype=float)))
    else:
        raise ConfigurationError(f"unknown kernel {kind!r}")
    return ArmSet(np.asarray(_require(cfg, key), dtype=float), kernel)


def _directions(cfg, arms):
    if "directions" in cfg:
        return np.asarray(cfg["directions"], dtype=float)
    return np.eye(arms.n)


def _solver(cfg):
    return SolverConfig(
        max_iters=int(cfg.get("max_iters", 5000)),
        step_rule=cfg.get("step_rule", "mirror_descent"),
        tol=float(cfg.get("tol", 1e-7)),
    )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(result, out):
    text = json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_design(cfg, args):
    arms = _arms(cfg)
    prob = DesignProblem(arms, _directions(cfg, arms), float(cfg.get("gamma", 0.0)),
                         support=cfg.get("support"))
    sol = solve_design(prob, _solver(cfg))
    return asdict(sol)


def cmd_round(cfg, args):
    arms = _arms(cfg)
    lam = np.asarray(_require(cfg, "design"), dtype=float)
    T = int(_require(cfg, "T"))
    method = cfg.get("method", "ceiling")
    gamma = float(cfg.get("gamma", 0.0))
    if method == "ceiling":
        return {"counts": round_ceiling(lam, T).counts}
    if method == "caratheodory":
        reduced = caratheodory_reduce(lam, arms)
        return {"design": reduced, "counts": round_ceiling(reduced, T).counts}
    if method == "swap":
        prob = DesignProblem(arms, _directions(cfg, arms), gamma)
        return {"counts": round_swap(prob, lam, T, float(cfg.get("eps", 1.0))).counts}
    if method == "ptr":
        rep = ptr_round(arms, _directions(cfg, arms), lam, gamma, T, float(cfg.get("eps", 1.0)))
        return {"counts": rep.allocation.counts, "effective_dim": rep.effective_dim,
                "inflation_factor": rep.inflation_factor}
    raise ConfigurationError(f"unknown rounding method {method!r}")


def _env(cfg, seed, mu):
    return Environment(mu, cfg.get("noise", "gaussian"), float(cfg.get("sigma", 1.0)),
                       float(cfg.get("dof", 3.0)), B=cfg.get("B"), rng_seed=seed,
                       mu_z=cfg.get("mu_z"))


def cmd_estimate(cfg, args, seed):
    arms = _arms(cfg)
    C = _directions(cfg, arms)
    gamma = float(cfg.get("gamma", 0.0))
    if "design" in cfg:
        lam = np.asarray(cfg["design"], dtype=float)
    else:
        lam = solve_design(DesignProblem(arms, C, gamma), _solver(cfg)).design
    mu = np.asarray(_require(cfg, "mu"), dtype=float)
    env = _env(cfg, seed, mu)
    sigma = float(cfg.get("sigma", 1.0))
    robust = RobustMeanConfig(cfg.get("estimator", "catoni"), float(cfg.get("delta", 0.05)),
                              float(cfg.get("variance_bound", env.B**2 + sigma**2)))
    est = rips_estimate(arms, C, lam, gamma, int(_require(cfg, "tau")), robust, env.pull_many, seed)
    return {"w_values": est.w_values, "theta_hat": est.theta_hat, "minmax_value": est.minmax_value,
            "ips_values": ips_estimate(arms, C, est.batch), "design": lam}


def _run_summary(res):
    out = {"returned_arm": res.returned_arm, "returned_gap": res.returned_gap,
           "total_pulls": res.total_pulls, "survivors": res.survivors,
           "phases": [asdict(p) for p in res.phases]}
    if res.regret_trace is not None and res.regret_trace.size:
        out["cumulative_regret"] = float(res.regret_trace[-1])
    return out


def cmd_bandit_regret(cfg, args, seed):
    arms = _arms(cfg)
    mu = np.asarray(_require(cfg, "mu"), dtype=float)
    env = _env(cfg, seed, mu)
    sigma = float(cfg.get("sigma", 1.0))
    delta = float(cfg.get("delta", 0.1))
    gamma = float(cfg.get("gamma", 0.0))
    horizon = int(_require(cfg, "horizon"))
    algo = cfg.get("algorithm", "rips")
    if algo == "rips":
        res = run_rips_regret(arms, env, delta, gamma, sigma, env.B, cfg.get("estimator", "catoni"),
                              horizon, solver=_solver(cfg), seed=seed)
    elif algo == "ptr":
        res = run_ptr_regret(arms, env, delta, gamma, sigma, horizon, solver=_solver(cfg))
    else:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    return _run_summary(res)


def cmd_bandit_pe(cfg, args, seed):
    arms_x = _arms(cfg)
    arms_z = _arms(cfg, "target_points") if "target_points" in cfg else None
    mu = np.asarray(_require(cfg, "mu"), dtype=float)
    env = _env(cfg, seed, mu)
    sigma = float(cfg.get("sigma", 1.0))
    delta = float(cfg.get("delta", 0.1))
    gamma = float(cfg.get("gamma", 0.0))
    eps = float(cfg.get("eps_target", 0.0))
    algo = cfg.get("algorithm", "rips")
    if algo == "rips":
        res = run_rips_pe(arms_x, arms_z, env, delta, gamma, sigma, env.B, cfg.get("estimator", "catoni"),
                          eps, solver=_solver(cfg), seed=seed)
    elif algo == "ptr":
        res = run_ptr_pe(arms_x, arms_z, env, delta, gamma, sigma, eps, solver=_solver(cfg))
    else:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    return _run_summary(res)


def cmd_experiment(cfg, args):
    cfg = dict(cfg)
    if cfg.get("experiment", args.name) != args.name:
        raise ConfigurationError("the configuration names a different experiment")
    cfg["experiment"] = args.name
    overrides = {"seed": args.seed, "replications": args.reps, "parallelism": args.parallelism,
                 "scale": args.scale, "output_path": args.out}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    exp = ExperimentConfig.from_dict(cfg)
    out = exp.output_path or f"{exp.experiment}.csv"
    rows, summary = run_experiment(exp)
    summary_path = write_outputs(rows, summary, out)
    return out, summary_path


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.command == "experiment":
            out, summary_path = cmd_experiment(cfg, args)
            print(f"wrote {out} and {summary_path}")
            return EXIT_OK
        if args.command == "design":
            result = cmd_design(cfg, args)
        elif args.command == "round":
            result = cmd_round(cfg, args)
        elif args.command == "estimate":
            result = cmd_estimate(cfg, args, seed)
        elif args.command == "bandit-regret":
            result = cmd_bandit_regret(cfg, args, seed)
        else:
            result = cmd_bandit_pe(cfg, args, seed)
        _emit(result, args.out)
        return EXIT_OK
    except (ConfigurationError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported through the exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
