"""One regret-matching run on the bilateral preset: trace CSV, SVG chart and a printed summary.

    python3 scripts/convergence_run.py --state L,H --seed 0 --iterations 2000 --out-dir runs/convergence
"""
import argparse
from pathlib import Path

from cemech.cli import run_summary, write_run_outputs
from cemech.game import induce_game, target_mask
from cemech.learn import LearningConfig, simulate
from cemech.mech_scf import build_mechanism, truthful_profile
from cemech.presets import load_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--state", default="L,H")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--out-dir", default="runs/convergence")
    args = ap.parse_args()

    p = load_preset("bilateral")
    mech = build_mechanism(p.env, p.scf, p.scheme, p.lotteries)
    s = tuple(args.state.split(","))
    game = induce_game(mech, p.env, s)
    res = simulate(game, LearningConfig(iterations=args.iterations, seed=args.seed),
                   target_profile=truthful_profile(mech, s))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"trace_{args.state.replace(',', '')}_seed{args.seed}"
    write_run_outputs(res, game, p.env.agents, stem.with_suffix(".csv"), stem.with_suffix(".svg"),
                      f"state ({args.state}), seed {args.seed}")
    for k, v in run_summary(res, game, target_mask(mech, p.scf(s))).items():
        print(f"{k}: {v}")
    print(f"modal messages: {[str(m) for m in mech.decode(res.modal_profile)]}")


if __name__ == "__main__":
    main()
