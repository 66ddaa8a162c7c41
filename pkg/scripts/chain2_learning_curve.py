#!/usr/bin/env python3
"""Run the chain-2 preference-learning loop for a few seeds and print the
gradient-norm trend plus held-out labeling accuracy of the learned reward."""

import numpy as np

from penbo.brl import chain2_brl_instance
from penbo.penalty import PenaltyConfig, run_penalty_method
from penbo.preference import Labeler, pair_batch_accuracy, sample_pair_batch
from penbo.rng import RngStream


def main(seeds=(0, 1, 2), t_outer=200):
    cfg = PenaltyConfig(sigma=0.5, eta=0.4, tau=0.05, tau_prime=0.05, K=10,
                        T=t_outer, n=64, B=1024, H=40, gamma=0.9, warm_start=False)
    for seed in seeds:
        inst = chain2_brl_instance(gamma=0.9)
        record = run_penalty_method(inst, cfg, RngStream(seed), regime="brl")
        d2 = np.asarray(record.d_norm) ** 2
        quarter = len(d2) // 4
        held_out = sample_pair_batch(inst.env, inst.policy_ref, inst.policy_ref,
                                     Labeler(reward=inst.labeler.reward, mode="argmax"),
                                     500, inst.pair_horizon, RngStream(10_000 + seed))
        learned = inst.reward.with_params(record.final_phi)
        acc = pair_batch_accuracy(learned, held_out)
        print(f"seed {seed}: mean |d|^2 first quarter {d2[:quarter].mean():.3e} -> "
              f"last quarter {d2[-quarter:].mean():.3e}; held-out accuracy {acc:.3f}; "
              f"phi = {np.round(record.final_phi, 3)}")


if __name__ == "__main__":
    main()
