"""Command-line entry point.

Subcommands cover the whole pipeline: corpus build/stats, single-system
simulation, plot rendering, submission scoring, residual realignment,
reward computation, and group advantages. Every subcommand accepts
--json for machine-readable output; defaults come from an optional TOML
config file whose sections mirror the config dataclasses ([sampler],
[sim], [gp], [rewards], [paths]), with command-line flags winning over
the file.

Exit codes: 0 on success, 1 on any toolkit error (bad formula,
divergence, integrity failure, ...), 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:      # 3.10: stdlib tomllib lands in 3.11
    import tomli as tomllib

from .dataset import BuildConfig, build_corpus, corpus_stats
from .errors import PhysSymbolError
from .expr import parse, render
from .library import GeneratedSystem, SamplerConfig
from .rewards import RewardWeights, composite_reward, group_advantages
from .scoring import ScoreOptions, load_submissions, score_submission
from .simulate import SimConfig, export_csv, import_csv, simulate, subsample
from .sr2 import GPConfig, run_sr2
from .viz import render_phase_portrait, render_time_series

__all__ = ["main", "build_parser"]


# --- config file ---------------------------------------------------------------

def _load_toml(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _sampler_from(cfg: dict) -> SamplerConfig:
    sec = dict(cfg.get("sampler", {}))
    if "term_count_weights" in sec:
        sec["term_count_weights"] = {
            int(k): float(v) for k, v in sec["term_count_weights"].items()}
    if "enabled_categories" in sec and sec["enabled_categories"] is not None:
        sec["enabled_categories"] = tuple(sec["enabled_categories"])
    return SamplerConfig(**sec)


def _sim_from(cfg: dict) -> SimConfig:
    return SimConfig(**cfg.get("sim", {}))


def _gp_from(cfg: dict, args) -> GPConfig:
    sec = dict(cfg.get("gp", {}))
    if "operators" in sec:
        sec["operators"] = tuple(sec["operators"])
    gp = GPConfig(**sec)
    overrides = {}
    if getattr(args, "pop", None) is not None:
        overrides["population_size"] = args.pop
    if getattr(args, "gens", None) is not None:
        overrides["generations"] = args.gens
    if getattr(args, "gp_seed", None) is not None:
        overrides["seed"] = args.gp_seed
    return dataclasses.replace(gp, **overrides) if overrides else gp


def _weights_from(cfg: dict) -> RewardWeights:
    return RewardWeights(**cfg.get("rewards", {}))


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _system_from_text(formula: str, x0: float, v0: float,
                      seed: int) -> GeneratedSystem:
    e = parse(formula)
    return GeneratedSystem(formula=e, symbolic_formula=e, params={},
                           term_categories=(), seed=seed, x0=x0, v0=v0)


# --- subcommands -----------------------------------------------------------------

def _cmd_corpus_build(args) -> int:
    cfg = _load_toml(args.config)
    out_dir = args.out or cfg.get("paths", {}).get("out_dir", "corpus")
    build = BuildConfig(
        out_dir=out_dir,
        n_instances=args.n,
        corpus_seed=args.seed,
        sampler=_sampler_from(cfg),
        sim=_sim_from(cfg),
        csv_points=args.csv_points,
        n_workers=args.workers,
    )
    instances = build_corpus(build)
    retries = sum(i.retries for i in instances)
    _emit(args,
          {"out": out_dir, "count": len(instances), "retries": retries},
          f"built {len(instances)} instances in {out_dir} "
          f"({retries} retries)")
    return 0


def _cmd_corpus_stats(args) -> int:
    stats = corpus_stats(args.root)
    lines = [f"count = {stats['count']}",
             f"mean_term_count = {stats['mean_term_count']:.4f}",
             f"retry_total = {stats['retry_total']}",
             f"integrity_failures = {stats['integrity_failures']}"]
    for k, v in stats["term_count_histogram"].items():
        lines.append(f"terms[{k}] = {v}")
    for cat, frac in stats["category_coverage"].items():
        lines.append(f"coverage[{cat}] = {frac:.4f}")
    lines.extend(f"! {d}" for d in stats["integrity_detail"])
    _emit(args, stats, "\n".join(lines))
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_toml(args.config)
    system = _system_from_text(args.formula, args.x0, args.v0, args.seed)
    traj = simulate(system, _sim_from(cfg))
    if args.points is not None:
        traj = subsample(traj, args.points)
    if args.out:
        export_csv(traj, args.out)
    summary = {"n": len(traj), "t_end": float(traj.t[-1]),
               "x_end": float(traj.x[-1]), "v_end": float(traj.v[-1]),
               "out": args.out}
    _emit(args, summary,
          f"simulated {len(traj)} samples to t={traj.t[-1]:g}; "
          f"x(end)={traj.x[-1]:.6g} v(end)={traj.v[-1]:.6g}"
          + (f"; wrote {args.out}" if args.out else ""))
    return 0


def _cmd_render(args) -> int:
    traj = import_csv(args.traj)
    written = []
    if args.out_phase:
        with open(args.out_phase, "wb") as fh:
            fh.write(render_phase_portrait(traj))
        written.append(args.out_phase)
    if args.out_traj:
        with open(args.out_traj, "wb") as fh:
            fh.write(render_time_series(traj))
        written.append(args.out_traj)
    if not written:
        print("error: nothing to render (pass --out-phase and/or --out-traj)",
              file=sys.stderr)
        return 1
    _emit(args, {"written": written}, "wrote " + ", ".join(written))
    return 0


def _cmd_score(args) -> int:
    cfg = _load_toml(args.config)
    subs = load_submissions(args.submission)
    options = ScoreOptions(refine=args.sr2, gp=_gp_from(cfg, args))
    report = score_submission(subs, args.corpus, options)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(args, report.to_json(), report.to_text())
    return 0


def _cmd_realign(args) -> int:
    cfg = _load_toml(args.config)
    traj = import_csv(args.traj)
    ansatz = parse(args.ansatz)
    result = run_sr2(traj, ansatz, _gp_from(cfg, args))
    payload = {
        "ansatz": render(result.ansatz),
        "residual": render(result.residual_expr),
        "final": render(result.final),
        "pre_mse": result.pre_mse,
        "post_mse": result.final_mse,
    }
    _emit(args, payload,
          f"ansatz:   {payload['ansatz']}\n"
          f"residual: {payload['residual']}\n"
          f"final:    {payload['final']}\n"
          f"pre_mse:  {result.pre_mse:.6g}\n"
          f"post_mse: {result.final_mse:.6g}")
    return 0


def _cmd_reward(args) -> int:
    cfg = _load_toml(args.config)
    if args.response == "-":
        response = sys.stdin.read()
    else:
        with open(args.response, encoding="utf-8") as fh:
            response = fh.read()
    gt = parse(args.gt)
    breakdown = composite_reward(response, gt, _weights_from(cfg))
    payload = {
        "format": breakdown.format,
        "structural": breakdown.structural,
        "accuracy": breakdown.accuracy,
        "composite": breakdown.composite,
    }
    _emit(args, payload,
          f"format:     {breakdown.format}\n"
          f"structural: {breakdown.structural:.6f}\n"
          f"accuracy:   {breakdown.accuracy}\n"
          f"composite:  {breakdown.composite:.6f}")
    return 0


def _cmd_advantages(args) -> int:
    if args.rewards_file:
        with open(args.rewards_file, encoding="utf-8") as fh:
            rewards = [float(tok) for tok in fh.read().split()]
    else:
        rewards = [float(tok) for tok in args.rewards.split(",") if tok.strip()]
    adv = group_advantages(rewards).tolist()
    _emit(args, {"advantages": adv},
          "\n".join(f"{a:.12g}" for a in adv))
    return 0


# --- parser ----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true",
                   help="emit machine-readable JSON on stdout")
    p.add_argument("--config", default=None,
                   help="TOML config file with [sampler]/[sim]/[gp]/"
                        "[rewards]/[paths] sections")


def _add_gp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pop", type=int, default=None,
                   help="population size override")
    p.add_argument("--gens", type=int, default=None,
                   help="generation count override")
    p.add_argument("--gp-seed", type=int, default=None,
                   help="search seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physsymbol",
        description="Corpus building, simulation, scoring, and residual "
                    "realignment for 1-d dynamical-system formula tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="corpus building and statistics")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)

    p = corpus_sub.add_parser("build", help="build a corpus directory")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--n", type=int, required=True, help="instance count")
    p.add_argument("--seed", type=int, default=0, help="corpus seed")
    p.add_argument("--csv-points", type=int, default=100,
                   help="samples kept in each stored trajectory")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel instance-build processes")
    _add_common(p)
    p.set_defaults(func=_cmd_corpus_build)

    p = corpus_sub.add_parser("stats", help="summarize a built corpus")
    p.add_argument("--root", required=True, help="corpus directory")
    _add_common(p)
    p.set_defaults(func=_cmd_corpus_stats)

    p = sub.add_parser("simulate", help="integrate one system to CSV")
    p.add_argument("--formula", required=True, help="acceleration formula")
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--points", type=int, default=None,
                   help="subsample the stored trajectory to this many rows")
    p.add_argument("--out", default=None, help="CSV destination")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("render", help="plot a trajectory CSV to PNG")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    p.add_argument("--out-phase", default=None, help="phase portrait PNG")
    p.add_argument("--out-traj", default=None, help="time series PNG")
    _add_common(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("score", help="score a JSONL submission file")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--submission", required=True, help="JSONL file")
    p.add_argument("--sr2", action="store_true",
                   help="refine each candidate against the trajectory "
                        "and report post-MSE")
    p.add_argument("--out", default=None, help="write JSON report here too")
    _add_gp_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("realign", help="fit the residual of an ansatz and "
                                       "fold it back in")
    p.add_argument("--ansatz", required=True, help="starting formula")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    _add_gp_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_realign)

    p = sub.add_parser("reward", help="score one tagged response")
    p.add_argument("--gt", required=True, help="ground-truth formula")
    p.add_argument("--response", required=True,
                   help="file with the model response, or - for stdin")
    _add_common(p)
    p.set_defaults(func=_cmd_reward)

    p = sub.add_parser("advantages", help="standardize a reward group")
    p.add_argument("--rewards", default=None,
                   help="comma-separated rewards, e.g. 1,0,0,1")
    p.add_argument("--rewards-file", default=None,
                   help="whitespace-separated rewards file")
    _add_common(p)
    p.set_defaults(func=_cmd_advantages)

    return parser


# formulas routinely start with "-", which argparse would read as a new
# flag; fuse these options with their value before parsing
_DASH_VALUE_FLAGS = ("--formula", "--ansatz", "--gt", "--rewards",
                     "--response")


def _fuse_dash_values(argv: list) -> list:
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _DASH_VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(
        _fuse_dash_values(list(sys.argv[1:] if argv is None else argv)))
    if args.command == "advantages" and not (args.rewards or args.rewards_file):
        parser.error("advantages needs --rewards or --rewards-file")
    try:
        return args.func(args)
    except PhysSymbolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
