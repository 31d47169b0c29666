#!/usr/bin/env python3
"""Saturation comparison on the boundary-lure task: normalized policy vs
the same agent with normalization removed.

The lure pays a bonus for near-bound actions early in each episode.  The
normalized policy cannot push its squashed output past M*tanh(1), so its
near-bound saturation stays at zero; without normalization the raw outputs
drift outward and pin the squashed actions against the bounds."""

import argparse

import numpy as np

from soprl.agent import AgentConfig, train
from soprl.envs import make_env


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=6000)
    parser.add_argument("--seeds", type=str, default="0,1,2,3,4")
    args = parser.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    for variant in ("sop", "no_norm"):
        cfg = AgentConfig(buffer_capacity=20_000, hidden_dim=64, variant=variant)
        tails = []
        for seed in seeds:
            record, _ = train(make_env("boundarylure"), cfg, args.steps,
                              seed=seed, eval_interval=500)
            tail = [r.saturation_fraction for r in record.rows
                    if r.step > 0.9 * args.steps]
            tails.append(float(np.mean(tail)))
            print(f"{variant} seed {seed}: tail saturation {tails[-1]:.3f}, "
                  f"final mean |mu| {record.rows[-1].mean_abs_mu_pre_norm:.2f}")
        print(f"{variant}: mean tail saturation {np.mean(tails):.4f}\n")


if __name__ == "__main__":
    main()
