"""Scripted 3x3 grid search for the DiffusionPDE guidance constants.

Usage:  python scripts/tune_diffusionpde.py --config <experiment.yaml>
        [--alphas a1,a2,a3] [--betas b1,b2,b3] [--ensemble E]

Requires the config's generate-data and train stages to have run.  For each
(alpha, beta) pair it samples a small ensemble on the configured task and
prints RE / observation misfit / ensemble PDE error; pick the constants and
record them under samplers.diffusionpde in the experiment file.
"""

import argparse

import numpy as np

from flowpde.experiment import (cfg_task, load_config, run_experiment, sub_seed, _load_suite)
from flowpde.grids import Field, make_rng
from flowpde.metrics import SampleEnsemble, ensemble_pde_error, reconstruction_error
from flowpde.samplers import DiffusionPdeConfig, build_observation, diffusionpde_sample, run_ensemble


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", required=True)
    ap.add_argument("--alphas", default="0.01,0.05,0.2")
    ap.add_argument("--betas", default="0.0,3e-7,3e-6")
    ap.add_argument("--ensemble", type=int, default=8)
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args()

    cfg = load_config(args.config)
    run_experiment(cfg, stages=[])  # echo resolved config; stages must already exist
    outdir = cfg["output_dir"]
    (model, extra, truth, mean, std, _params, problem, residual, mu0,
     _ckpt, _truth_path) = _load_suite(cfg, outdir, "tune-diffusionpde")
    task = cfg_task(cfg)
    truth_norm = Field(truth.grid, (truth.values - mean) / std)
    obs = build_observation(task, truth_norm, make_rng(sub_seed(cfg["master_seed"], "task")))
    base_seed = sub_seed(cfg["master_seed"], "tune-diffusionpde")

    alphas = [float(v) for v in args.alphas.split(",")]
    betas = [float(v) for v in args.betas.split(",")]
    print(f"{'alpha':>10} {'beta':>10} {'RE':>12} {'obs_misfit':>12} {'PDE_err':>12}")
    for alpha in alphas:
        for beta in betas:
            scfg = DiffusionPdeConfig(steps=args.steps, alpha=alpha, beta=beta, seed=base_seed)
            samples = run_ensemble(
                lambda s: diffusionpde_sample(model, obs, residual, scfg, mu0, seed=s),
                range(base_seed, base_seed + args.ensemble))
            re = reconstruction_error(SampleEnsemble(samples, truth=truth_norm.values))
            misfit = float(np.mean((samples[:, obs.mask] - obs.y[None]) ** 2))
            raw = samples * std[None] + mean[None]
            pde = ensemble_pde_error(SampleEnsemble(raw, problem=problem))
            print(f"{alpha:>10.3g} {beta:>10.3g} {re:>12.5f} {misfit:>12.5f} {pde:>12.4e}")


if __name__ == "__main__":
    main()
