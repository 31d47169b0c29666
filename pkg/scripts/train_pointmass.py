#!/usr/bin/env python3
"""Train the default agent on the 1-D point mass and compare with the
dynamic-programming oracle on the same evaluation start states."""

import argparse

import numpy as np

from soprl.agent import AgentConfig, evaluate_policy, train
from soprl.envs import dp_oracle, make_env
from soprl.seeds import derive_seed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=12_000)
    parser.add_argument("--seeds", type=str, default="1,2,3")
    parser.add_argument("--sampler", default="uniform",
                        choices=("uniform", "ere", "per", "exp"))
    parser.add_argument("--variant", default="sop")
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--buffer", type=int, default=20_000)
    args = parser.parse_args()

    oracle = dp_oracle("pointmass1d", 1025, 257)
    cfg = AgentConfig(buffer_capacity=args.buffer, hidden_dim=args.hidden,
                      sampler=args.sampler, variant=args.variant)
    for seed in (int(s) for s in args.seeds.split(",")):
        record, agent = train(make_env("pointmass1d"), cfg, args.steps,
                              seed=seed, eval_interval=1000)
        final = record.rows[-1]
        mean, _, diag = evaluate_policy(agent, make_env("pointmass1d"), 5,
                                        derive_seed(seed, "eval", final.step))
        opt = np.mean([oracle.value_at(s) for s in diag["start_states"]])
        print(f"seed {seed}: final return {mean:.4f}, oracle on same starts "
              f"{opt:.4f}, saturation {final.saturation_fraction:.3f}, "
              f"entropy {final.entropy_estimate:.3f}")


if __name__ == "__main__":
    main()
