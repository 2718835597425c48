"""Replicated desk-scale experiments and their CSV output.

Runs reduced versions of the three estimation studies and prints the median
worst-direction error per budget. The CSV and summary files land in the
directory given on the command line (default: the current directory).
"""

import sys
from pathlib import Path

from rkhs_design import ExperimentConfig, emit_results, run_experiment
from rkhs_design.experiments import median_by

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(".")
configs = [
    ExperimentConfig(experiment="g_optimal", replications=6),
    ExperimentConfig(experiment="kernel_rbf", replications=6),
    ExperimentConfig(experiment="ips_vs_rips", replications=6),
]
for cfg in configs:
    rows, summary = run_experiment(cfg)
    path = out_dir / f"{cfg.experiment}.csv"
    emit_results(rows, summary, str(path))
    print(f"\n{cfg.experiment} -> {path}")
    for est in sorted({r.estimator for r in rows}):
        med = median_by(rows, est, "error_ratio" if "/" in est else "max_dir_error")
        if med:
            print(f"  {est:16s} " + "  ".join(f"T={T}: {v:.3f}" for T, v in med.items()))
