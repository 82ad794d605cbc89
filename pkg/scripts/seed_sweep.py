"""Seed sweep of the learning dynamics: convergence periods and final regrets per seed.

    python3 scripts/seed_sweep.py --seeds 100 --iterations 2000 --csv runs/sweep.csv
"""
import argparse
import csv

import numpy as np

from cemech.cli import run_summary
from cemech.game import induce_game, target_mask
from cemech.learn import LearningConfig, simulate
from cemech.mech_scf import build_mechanism, truthful_profile
from cemech.presets import load_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--state", default="L,H")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--fallback", choices=["uniform", "prior"], default="uniform")
    ap.add_argument("--inertia", type=float)
    ap.add_argument("--csv")
    args = ap.parse_args()

    p = load_preset("bilateral")
    mech = build_mechanism(p.env, p.scf, p.scheme, p.lotteries)
    s = tuple(args.state.split(","))
    game = induce_game(mech, p.env, s)
    target = target_mask(mech, p.scf(s))
    ref = truthful_profile(mech, s)
    rows = []
    for seed in range(args.seeds):
        cfg = LearningConfig(iterations=args.iterations, seed=seed, record_every=args.iterations,
                             fallback_policy=args.fallback, inertia=args.inertia)
        summ = run_summary(simulate(game, cfg, target_profile=ref), game, target)
        rows.append([seed, summ["converged_at"], summ["on_target_converged_at"], summ["modal_frequency"],
                     summ["final_on_target_frequency"], max(summ["final_avg_max_regret"])])
    arr = np.array([[np.nan if v is None else v for v in r] for r in rows], float)
    print(f"truthful modal play converged: {np.isfinite(arr[:, 1]).mean():.0%}")
    print(f"on-target play converged: {np.isfinite(arr[:, 2]).mean():.0%}, "
          f"median period {np.nanmedian(arr[:, 2]):.0f}")
    print(f"final modal frequency: mean {arr[:, 3].mean():.3f}")
    print(f"final avg max regret: median {np.median(arr[:, 5]):.4f}, max {arr[:, 5].max():.4f}, "
          f"share <= 0.05 {np.mean(arr[:, 5] <= 0.05):.0%}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "converged_at", "on_target_converged_at", "modal_frequency",
                        "final_on_target_frequency", "final_max_regret"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
