"""Command-line front end: validate | build-mechanism | solve-ce | simulate | pipeline.

Exit codes: 0 success, 2 config or validation failure, 3 verification
failure, 4 I/O error. ``MECHSIM_SEED`` overrides the config seed; an explicit
``--seed`` overrides both.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import output
from .config import ConfigError, Problem, load
from .env import DomainError
from .game import ce_constraints, induce_game, target_mask, verify_implementation
from .learn import LearningConfig, simulate
from .mech_scc import build_scc_mechanism, unanimous_profile
from .mech_scf import CalibrationError, build_mechanism, truthful_profile
from .presets import BUILDERS, load_preset
from .report import Report
from .schemes import (
    best_challenge_transform_scc,
    check_maskin_monotonicity,
    check_scc_monotonicity,
    scc_scheme_structure_report,
    scheme_best_c_violations,
    scheme_structure_report,
    synthesize_scc_scheme,
    validate_challenge_scheme,
    validate_dictator_lotteries,
)

log = logging.getLogger("cemech")

EXIT_OK, EXIT_INVALID, EXIT_UNVERIFIED, EXIT_IO = 0, 2, 3, 4


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.code = code


# -- shared helpers -------------------------------------------------------------------

def load_problem(args) -> Problem:
    if args.config:
        try:
            return load(args.config)
        except OSError as e:
            raise StageError("load", str(e), EXIT_IO) from None
        except (ConfigError, DomainError) as e:
            raise StageError("load", str(e), EXIT_INVALID) from None
    return load_preset(args.preset or "bilateral")


def resolve_seed(args, prob: Problem) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env_seed = os.environ.get("MECHSIM_SEED")
    if env_seed:
        try:
            return int(env_seed)
        except ValueError:
            raise StageError("load", f"MECHSIM_SEED={env_seed!r} is not an integer", EXIT_INVALID) from None
    return prob.seed


def is_scc(args, prob: Problem) -> bool:
    if getattr(args, "scc", False):
        if prob.scc is None:
            raise StageError("load", "--scc given but the config has no 'scc' key", EXIT_INVALID)
        return True
    if prob.scf is None:
        if prob.scc is None:
            raise StageError("load", "config defines neither 'scf' nor 'scc'", EXIT_INVALID)
        return True
    return False


def parse_states(prob: Problem, raw) -> list:
    if not raw:
        return list(prob.env.states)
    out = []
    for item in raw:
        s = tuple(x.strip() for x in item.split(","))
        if not prob.env.is_state(s):
            raise StageError("args", f"{item!r} is not a state; states are "
                             f"{[','.join(t) for t in prob.env.states]}", EXIT_INVALID)
        out.append(s)
    return out


def state_str(s) -> str:
    return ",".join(s)


def build(prob: Problem, scc: bool, tau1_nonstate: bool = True):
    if prob.lotteries is None:
        raise StageError("build-mechanism", "config has no dictator_lotteries", EXIT_INVALID)
    try:
        if scc:
            return build_scc_mechanism(prob.env, prob.scc, prob.lotteries)
        return build_mechanism(prob.env, prob.scf, prob.scheme, prob.lotteries,
                               tau1_includes_nonstate=tau1_nonstate)
    except CalibrationError as e:
        msg = str(e) + ("\n" + e.report.render() if e.report else "")
        raise StageError("calibrate", msg, EXIT_INVALID) from None
    except DomainError as e:
        raise StageError("build-mechanism", str(e), EXIT_INVALID) from None


def desired(prob: Problem, scc: bool, s):
    return prob.scc(s) if scc else prob.scf(s)


def reference_profile(mech, prob: Problem, scc: bool, s):
    if scc:
        return unanimous_profile(mech, s, prob.scc(s)[0])
    return truthful_profile(mech, s)


# -- validate ---------------------------------------------------------------------------

def run_validation(prob: Problem, scc: bool, states: list) -> tuple:
    """Returns (ok, rendered text, json-able dict)."""
    env = prob.env
    blocks, data, ok = [], {}, True
    if prob.lotteries is not None:
        rep = validate_dictator_lotteries(env, prob.lotteries, tol=0)
        blocks.append(rep.render())
        data["dictator_lotteries"] = rep.to_json()
        ok &= rep.ok
    if scc:
        try:
            x = best_challenge_transform_scc(env, prob.scc, synthesize_scc_scheme(env, prob.scc))
        except DomainError as e:
            return False, str(e), {"error": str(e)}
        rep = scc_scheme_structure_report(env, prob.scc, x)
        blocks.append(rep.render())
        data["scheme"] = rep.to_json()
        ok &= rep.ok
        mono = check_scc_monotonicity(env, prob.scc)
    else:
        rep = scheme_structure_report(env, prob.scf, prob.scheme, tol=0)
        blocks.append(rep.render())
        data["scheme"] = rep.to_json()
        ok &= rep.ok
        best = scheme_best_c_violations(env, prob.scheme)
        note = Report("truthful type reports pick the best test allocation")
        note.note(f"{len(best)} violations" + ("" if not best else f": {best[:3]}"), passed=not best)
        blocks.append(note.render())
        data["best_c_violations"] = len(best)
        ok &= not best
        data["challenge"] = {}
        for s in states:
            rep = validate_challenge_scheme(env, prob.scf, prob.scheme, s, tol=0)
            blocks.append(rep.render())
            data["challenge"][state_str(s)] = rep.to_json()
            ok &= rep.ok
        mono = check_maskin_monotonicity(env, prob.scf, scheme=prob.scheme)
    relevant = [k for k in mono.failures if k[1] in states]
    blocks.append(mono.render(env))
    if relevant:
        blocks.append("  failing pairs for the selected true states: " +
                      "; ".join(f"lie {_lie(k[0])} / true ({state_str(k[1])})" for k in relevant))
    data["monotonicity"] = {
        "holds": mono.holds,
        "failures": [[_lie(k[0]), state_str(k[1])] for k in mono.failures],
        "selected_failures": [[_lie(k[0]), state_str(k[1])] for k in relevant],
    }
    ok &= not relevant
    return bool(ok), "\n".join(blocks), data


def _lie(k) -> str:
    if isinstance(k, tuple) and len(k) == 2 and not isinstance(k[0], str):
        return f"({state_str(k[0])}) z={k[1]}"
    return f"({state_str(k)})"


def cmd_validate(args) -> int:
    prob = load_problem(args)
    scc = is_scc(args, prob)
    ok, text, data = run_validation(prob, scc, parse_states(prob, args.state))
    print(text)
    print("validation:", "PASS" if ok else "FAIL")
    if args.json:
        output.dump_json(args.json, data)
    return EXIT_OK if ok else EXIT_INVALID


# -- build-mechanism ----------------------------------------------------------------------

def mechanism_summary(mech) -> dict:
    p = mech.params
    return {
        "kind": mech.kind,
        "message_counts": list(mech.counts),
        "profiles": mech.n_profiles,
        "epsilon": str(p.epsilon),
        "eta": str(p.eta),
        "small_fee": str(p.small_fee),
        "certificate_ok": mech.meta["certificate"].ok if "certificate" in mech.meta else None,
    }


def cmd_build(args) -> int:
    prob = load_problem(args)
    scc = is_scc(args, prob)
    mech = build(prob, scc, not args.no_tau1_nonstate)
    summ = mechanism_summary(mech)
    for k, v in summ.items():
        print(f"{k}: {v}")
    cert = mech.meta.get("certificate")
    if cert is not None:
        print(cert.render() if args.verbose else "\n".join(cert.render().splitlines()[-4:]))
    if args.csv:
        s = parse_states(prob, [args.state] if args.state else None)[0]
        game = induce_game(mech, prob.env, s)
        output.write_payoff_csv(args.csv, mech, game, prob.env.agents)
        print(f"payoff table at state ({state_str(s)}) written to {args.csv}")
    if args.json:
        output.dump_json(args.json, {"summary": summ, "certificate": cert.to_json() if cert else None})
    return EXIT_OK if cert is None or cert.ok else EXIT_INVALID


# -- solve-ce ---------------------------------------------------------------------------------

def verify_state(mech, prob: Problem, scc: bool, s, tol: float):
    game = induce_game(mech, prob.env, s)
    target = target_mask(mech, desired(prob, scc, s))
    ref = reference_profile(mech, prob, scc, s)
    rep = verify_implementation(game, target, truthful=ref, tol=tol)
    return game, target, rep


def _describe(rep, s, mech) -> str:
    lines = [f"state ({state_str(s)}): implemented={rep.implemented} "
             f"truthful_nash={rep.truthful_profile_is_nash} (best deviation gain {rep.nash_gain:.6g}) "
             f"max_offtarget_mass={rep.max_offpath_mass:.3e} "
             f"[{rep.lp['backend']}, {rep.lp['variables']} vars, {rep.lp['constraints']} rows, "
             f"certified={rep.lp['certificate'].get('certified')}, {rep.seconds:.2f}s]"]
    if rep.offpath_witness is not None:
        sup = rep.offpath_witness.support(1e-9)
        sup.sort(key=lambda p: -rep.offpath_witness.probs[p])
        for p in sup[:5]:
            msgs = " ".join(str(m) for m in mech.decode(p))
            lines.append(f"    witness {msgs}  mass {rep.offpath_witness.probs[p]:.4f}")
    return "\n".join(lines)


def cmd_solve(args) -> int:
    prob = load_problem(args)
    scc = is_scc(args, prob)
    mech = build(prob, scc)
    states = parse_states(prob, args.state)
    results = {}
    all_ok = True
    for s in states:
        game, target, rep = verify_state(mech, prob, scc, s, args.tol)
        print(_describe(rep, s, mech))
        results[state_str(s)] = rep.summary()
        all_ok &= rep.implemented
        suffix = f".{state_str(s).replace(',', '')}" if len(states) > 1 else ""
        if args.dump_lp:
            A, keys = ce_constraints(game)
            output.write_lp_text(_suffixed(args.dump_lp, suffix), game, target, A, keys)
        if args.witness_csv and rep.offpath_witness is not None:
            output.write_witness_csv(_suffixed(args.witness_csv, suffix), game, rep.offpath_witness, target)
    if args.json:
        output.dump_json(args.json, results)
    print("verification:", "PASS" if all_ok else "FAIL")
    return EXIT_OK if all_ok else EXIT_UNVERIFIED


def _suffixed(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix + p.suffix) if suffix else p


# -- simulate ---------------------------------------------------------------------------------

def _one_run(payload):
    game, cfg, ref = payload
    return simulate(game, cfg, target_profile=ref)


def run_sweep(game, cfgs, ref, workers: int = 1) -> list:
    if workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_one_run, [(game, c, ref) for c in cfgs]))
    return [simulate(game, c, target_profile=ref) for c in cfgs]


def run_summary(res, game, target) -> dict:
    prof = res.profiles
    on = target[tuple(prof.T)]
    win = res.config.window
    outcome_conv = next((t for t in range(win, len(on) + 1) if on[t - win:t].mean() > res.config.threshold), None)
    return {
        "seed": res.config.seed,
        "converged_at": res.converged_at,
        "modal_profile": list(res.modal_profile),
        "modal_frequency": res.modal_frequency,
        "on_target_converged_at": outcome_conv,
        "final_on_target_frequency": float(on[-win:].mean()),
        "final_avg_max_regret": [float(v) for v in res.final_regret],
    }


def write_run_outputs(res, game, names, csv_path=None, svg_path=None, title="") -> list:
    written = []
    if csv_path:
        output.write_trace_csv(csv_path, res, names)
        written.append(Path(csv_path))
    if svg_path:
        periods, freq = output.figure_series(res, res.config.window)
        idx = tuple(res.profiles.T)
        gains = game.values[idx].sum(axis=1) if game.values is not None else np.zeros(len(periods))
        transfers = np.cumsum(game.transfers[idx].sum(axis=1)) if game.transfers is not None else np.zeros(len(periods))
        ma = np.convolve(gains, np.ones(20) / 20, mode="same")
        output.trace_svg(svg_path, [
            ("modal-profile frequency (trailing window)", [("frequency", periods, freq)]),
            ("gains from trade", [("per period", periods, gains), ("20-period mean", periods, ma)]),
            ("cumulative mechanism transfers", [("sum over agents", periods, transfers)]),
        ], title)
        written.append(Path(svg_path))
    return written


def cmd_simulate(args) -> int:
    prob = load_problem(args)
    scc = is_scc(args, prob)
    mech = build(prob, scc)
    s = parse_states(prob, [args.state] if args.state else None)[0]
    game = induce_game(mech, prob.env, s)
    target = target_mask(mech, desired(prob, scc, s))
    ref = reference_profile(mech, prob, scc, s)
    seed0 = resolve_seed(args, prob)
    seeds = [seed0 + k for k in range(args.seeds)] if args.seeds else [seed0]
    cfgs = [LearningConfig(iterations=args.iterations, seed=sd, record_every=min(args.record_every, args.iterations),
                           fallback_policy=args.fallback, inertia=args.inertia) for sd in seeds]
    results = run_sweep(game, cfgs, ref, args.workers)
    summaries = []
    for res in results:
        summ = run_summary(res, game, target)
        summaries.append(summ)
        print(f"seed {summ['seed']}: converged_at={summ['converged_at']} "
              f"modal={[str(m) for m in mech.decode(res.modal_profile)]} freq={summ['modal_frequency']:.2f} "
              f"on_target_from={summ['on_target_converged_at']} "
              f"regret={max(summ['final_avg_max_regret']):.4f}")
        suffix = f".seed{res.config.seed}" if len(results) > 1 else ""
        write_run_outputs(res, game, prob.env.agents,
                          _suffixed(args.out, suffix) if args.out else None,
                          _suffixed(args.svg, suffix) if args.svg else None,
                          f"state ({state_str(s)}), seed {res.config.seed}")
    if args.json:
        output.dump_json(args.json, summaries)
    return EXIT_OK


# -- pipeline ---------------------------------------------------------------------------------

def cmd_pipeline(args) -> int:
    prob = load_problem(args)
    scc = is_scc(args, prob)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StageError("pipeline", str(e), EXIT_IO) from None
    states = parse_states(prob, args.state)
    files = []
    t0 = time.perf_counter()

    ok, text, data = run_validation(prob, scc, states)
    (out / "validate.txt").write_text(text + "\n")
    output.dump_json(out / "validate.json", data)
    files += [out / "validate.txt", out / "validate.json"]
    if not ok and not args.keep_going:
        output.write_manifest(out, files, {"halted_at": "validate"})
        fails = data.get("monotonicity", {}).get("selected_failures", [])
        detail = "; ".join(f"lie {a} / true ({b})" for a, b in fails) or "see validate.txt"
        raise StageError("validate", f"validation failed: {detail}", EXIT_INVALID)

    mech = build(prob, scc)
    cert = mech.meta.get("certificate")
    (out / "mechanism.txt").write_text(
        "\n".join(f"{k}: {v}" for k, v in mechanism_summary(mech).items()) + "\n" + (cert.render() if cert else "") + "\n")
    files.append(out / "mechanism.txt")

    verdicts = {}
    timings = {}
    games = {}
    for s in states:
        game, target, rep = verify_state(mech, prob, scc, s, args.tol)
        games[s] = (game, target)
        verdicts[state_str(s)] = rep.summary()
        # wall-clock times stay out of the hashed files so reruns hash identically
        timings[state_str(s)] = verdicts[state_str(s)].pop("seconds")
        tag = state_str(s).replace(",", "")
        if rep.offpath_witness is not None:
            w = out / f"witness_{tag}.csv"
            output.write_witness_csv(w, game, rep.offpath_witness, target)
            files.append(w)
        log.info("state %s implemented=%s", state_str(s), rep.implemented)
    output.dump_json(out / "solve_ce.json", verdicts)
    files.append(out / "solve_ce.json")

    seed0 = resolve_seed(args, prob)
    sim_state = parse_states(prob, [args.sim_state] if args.sim_state else None)[0] if args.sim_state else states[-1]
    game, target = games.get(sim_state) or (induce_game(mech, prob.env, sim_state),
                                            target_mask(mech, desired(prob, scc, sim_state)))
    ref = reference_profile(mech, prob, scc, sim_state)
    cfgs = [LearningConfig(iterations=args.iterations, seed=seed0 + k, record_every=args.record_every)
            for k in range(args.seeds)]
    runs = run_sweep(game, cfgs, ref, args.workers)
    summaries = []
    for res in runs:
        summaries.append(run_summary(res, game, target))
        base = out / f"trace_{state_str(sim_state).replace(',', '')}_seed{res.config.seed}"
        files += write_run_outputs(res, game, prob.env.agents, base.with_suffix(".csv"),
                                   base.with_suffix(".svg") if res is runs[0] else None,
                                   f"state ({state_str(sim_state)}), seed {res.config.seed}")
    output.dump_json(out / "simulate.json", summaries)
    files.append(out / "simulate.json")
    timings["total"] = round(time.perf_counter() - t0, 3)
    output.dump_json(out / "timings.json", timings)

    all_ok = all(v["implemented"] for v in verdicts.values())
    output.write_manifest(out, files, {
        "source": args.config or f"preset:{args.preset or 'bilateral'}",
        "mode": "scc" if scc else "scf",
        "seed": seed0,
        "validation_ok": ok,
        "implemented": {k: v["implemented"] for k, v in verdicts.items()},
    })
    print(f"pipeline finished in {time.perf_counter() - t0:.1f}s; outputs in {out}")
    for k, v in verdicts.items():
        print(f"  ({k}) implemented={v['implemented']} max_offtarget_mass={v['max_offpath_mass']:.3e}")
    return EXIT_OK if all_ok and ok else EXIT_UNVERIFIED


# -- argument parsing --------------------------------------------------------------------------

def _source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=sorted(BUILDERS), help="bundled problem (default: bilateral)")
    g.add_argument("--config", help="path to a JSON config")
    p.add_argument("--scc", action="store_true", help="use the correspondence mechanism")
    p.add_argument("--json", help="also write results as JSON")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cemech", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check lotteries, scheme and monotonicity")
    _source(p)
    p.add_argument("--state", action="append", help="true state(s) to check, e.g. L,H (default: all)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build-mechanism", help="calibrate and summarise the mechanism")
    _source(p)
    p.add_argument("--csv", help="dump the payoff table (one row per profile and agent)")
    p.add_argument("--state", help="true state for the payoff dump (default: first state)")
    p.add_argument("--no-tau1-nonstate", action="store_true",
                   help="do not charge the 2*eta penalty for naming a non-state")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve-ce", help="LP verification over the correlated-equilibrium polytope")
    _source(p)
    p.add_argument("--state", action="append")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--dump-lp", help="write the LP as plain inequalities")
    p.add_argument("--witness-csv", help="write the off-target witness distribution")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="regret-matching dynamics on the induced game")
    _source(p)
    p.add_argument("--state")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=0, help="sweep this many consecutive seeds")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--fallback", choices=["uniform", "prior"], default="uniform")
    p.add_argument("--inertia", type=float, help="switching constant for the inertia variant")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="trace CSV path")
    p.add_argument("--svg", help="chart of modal frequency, gains from trade and transfers")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="validate, calibrate, verify and simulate; write a manifest")
    _source(p)
    p.add_argument("--out-dir", default="run")
    p.add_argument("--state", action="append", help="restrict validation and verification to these states")
    p.add_argument("--sim-state", help="state for the learning runs (default: last selected state)")
    p.add_argument("--keep-going", action="store_true", help="continue past a validation failure")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--record-every", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"error: I/O: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
