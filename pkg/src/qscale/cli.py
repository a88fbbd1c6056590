"""Command-line front end.

Every number this tool prints is the untouched return value of an
analysis or simulator call; the CLI only selects arguments, formats
rows, and sets the exit code. Exit codes: 0 all checks and invariants
hold, 1 a safety violation or tolerance failure was observed, 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from qscale import analysis, simnet
from qscale.params import (
    PRESET_NAMES,
    PSYNC,
    SYNC,
    ProtocolParams,
    from_config,
    parse_config_text,
    preset,
    validate,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

FORMATS = ("csv", "json", "pretty-table")

ADVERSARIES = (
    "honest-all",
    "silent-leader",
    "equivocating-leader",
    "vote-suppressing-leader",
    "always-voting-byzantine",
    "broadcast-proposal-byzantine",
)


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("QSCALE_SEED")
    return int(raw) if raw else 0


def add_common(
    ap: argparse.ArgumentParser,
    presets: bool = True,
    out_help: str = "write output here instead of stdout",
) -> None:
    if presets:
        ap.add_argument(
            "--preset",
            default="psync-eval-49",
            choices=PRESET_NAMES,
            help="named parameter set to start from",
        )
        ap.add_argument(
            "--config",
            metavar="FILE",
            help="key=value lines overriding individual parameter fields",
        )
        ap.add_argument(
            "--epsilon", type=float, help="corruption fraction; sets f = floor(eps*n)"
        )
    ap.add_argument(
        "--format", default="csv", choices=FORMATS, help="output format"
    )
    ap.add_argument("--out", metavar="PATH", help=out_help)


def build_params(args) -> ProtocolParams:
    p = preset(args.preset)
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read --config file: {exc}") from exc
        p = from_config(parse_config_text(text), base=p)
    if getattr(args, "model", None):
        p = p.replace(model=args.model)
    if getattr(args, "kappa", None) is not None:
        p = p.replace(kappa=args.kappa)
    if getattr(args, "epsilon", None) is not None:
        p = p.with_epsilon(args.epsilon)
    report = validate(p)
    if not report.ok:
        raise UsageError("invalid parameters: " + "; ".join(report.errors))
    return p


# output formatting


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def format_rows(rows: list[dict], columns: list[str], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(columns)]
        lines.extend(",".join(_cell(r[c]) for c in columns) for r in rows)
        return "\n".join(lines) + "\n"
    if fmt == "json":
        return json.dumps([{c: r[c] for c in columns} for r in rows], indent=2) + "\n"
    cells = [list(columns)]
    cells.extend([_cell(r[c]) for c in columns] for r in rows)
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(s.rjust(w) for s, w in zip(cells[0], widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(
        "  ".join(s.rjust(w) for s, w in zip(row, widths)) for row in cells[1:]
    )
    return "\n".join(lines) + "\n"


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# subcommands


def cmd_analyze_safety(args) -> int:
    params = build_params(args)
    fn = (
        analysis.sync_safety_violation
        if params.model == SYNC
        else analysis.psync_safety_violation
    )
    rows = []
    for kappa in range(2, args.kappa_max + 1):
        r = fn(params, kappa, args.mode)
        rows.append(
            {
                "kappa": kappa,
                "probability": r.value,
                "raw": r.raw,
                "vacuous": r.vacuous,
            }
        )
    emit(format_rows(rows, ["kappa", "probability", "raw", "vacuous"], args.format), args.out)
    return EXIT_OK


def cmd_analyze_liveness(args) -> int:
    params = build_params(args)
    rows = []
    for kappa in range(1, args.kappa_max + 1):
        r = analysis.liveness_commit_probability(params, kappa, args.mode)
        rows.append(
            {
                "kappa": kappa,
                "probability": r.value,
                "raw": r.raw,
                "vacuous": r.vacuous,
            }
        )
    emit(format_rows(rows, ["kappa", "probability", "raw", "vacuous"], args.format), args.out)
    return EXIT_OK


def cmd_propagation(args) -> int:
    params = build_params(args)
    n = args.n if args.n is not None else params.n
    p_prop = args.p_prop if args.p_prop is not None else params.p_prop
    rows = []
    for k in range(1, args.k_max + 1):
        exact = analysis.propagation_exact(n, args.chi, p_prop, k)
        bound = analysis.propagation_lower_bound(n, args.chi, p_prop, k)
        rows.append(
            {
                "k": k,
                "exact": exact,
                "lower_bound": bound.value,
                "vacuous": bound.vacuous,
            }
        )
    emit(format_rows(rows, ["k", "exact", "lower_bound", "vacuous"], args.format), args.out)
    return EXIT_OK


def cmd_committee(args) -> int:
    res = analysis.committee_optimize(
        args.n, args.f, args.c, 2.0 ** args.log2_liveness_target
    )
    row = {"n": args.n, "f": args.f, "c": args.c}
    row.update(res.as_dict())
    cols = [
        "n",
        "f",
        "c",
        "feasible",
        "threshold",
        "o_star",
        "safety",
        "log2_safety",
        "liveness_failure",
    ]
    emit(format_rows([row], cols, args.format), args.out)
    return EXIT_OK if res.feasible else EXIT_FAIL


def cmd_complexity(args) -> int:
    params = build_params(args)
    cost = analysis.expected_messages_per_epoch(params)
    amortized = analysis.amortized_complexity(params, params.kappa)
    row = {
        "n": params.n,
        "q": params.q,
        "messages": cost.count,
        "extra_next_leader": cost.extra_next_leader,
        "bytes": cost.bytes,
        "leader_bytes": cost.leader_bytes,
        "amortized_per_process": amortized,
    }
    for kind, sub in cost.breakdown.items():
        row[f"{kind}_count"] = sub["count"]
        row[f"{kind}_bytes"] = sub["bytes"]
    cols = [
        "n",
        "q",
        "messages",
        "extra_next_leader",
        "bytes",
        "leader_bytes",
        "amortized_per_process",
        "propose_count",
        "propose_bytes",
        "disseminate_count",
        "disseminate_bytes",
        "vote_count",
        "vote_bytes",
        "propagate_count",
        "propagate_bytes",
    ]
    emit(format_rows([row], cols, args.format), args.out)
    return EXIT_OK


def cmd_kappa_table(args) -> int:
    params_list = [preset(name) for name in args.presets]
    targets = [2.0 ** x for x in args.log2_targets]
    rows = analysis.kappa_table(params_list, args.epsilons, targets, args.mode)
    cols = ["n", "q", "epsilon", "target", "kappa", "mode"]
    emit(format_rows(rows, cols, args.format), args.out)
    return EXIT_OK


def _build_schedule(args, params: ProtocolParams) -> simnet.Schedule:
    model = args.schedule if args.schedule else params.model
    return simnet.Schedule(
        model=model, gst_round=args.gst_round, pre_gst_policy=args.pre_gst_policy
    )


SUMMARY_COLS = [
    "seed",
    "violated",
    "invariant_violations",
    "certification_rate",
    "commits",
    "mean_commit_delta",
    "messages_per_epoch",
    "bytes_per_epoch",
    "mean_process_sends_per_epoch",
]


def cmd_simulate(args) -> int:
    params = build_params(args)
    if args.rounds < 1:
        raise UsageError("--rounds must be positive")
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    schedule = _build_schedule(args, params)
    adversary = simnet.parse_adversary(args.adversary)
    corrupted = frozenset(range(1, params.f + 1))
    configs = [
        simnet.SimConfig(
            params=params,
            seed=args.seed + i,
            rounds=args.rounds,
            schedule=schedule,
            adversary=adversary,
            corrupted=corrupted,
        )
        for i in range(args.runs)
    ]
    results = simnet.run_many(configs, args.parallelism)
    rows = []
    bad = False
    for i, (config, result) in enumerate(zip(configs, results)):
        summary = simnet.summarize(config, result)
        rows.append({c: getattr(summary, c) for c in SUMMARY_COLS})
        if result.safety.violated or result.safety.invariant_violations:
            bad = True
            witness = simnet.result_to_json(config, result)["safety"]
            sys.stderr.write(
                f"safety failure in run {i} (seed {config.seed}):\n"
                + json.dumps(witness, indent=2)
                + "\n"
            )
        if args.out:
            stem = args.out if args.runs == 1 else f"{args.out}.run{i}"
            simnet.write_trace_csv(result.trace, f"{stem}.trace.csv")
            simnet.write_result_json(config, result, f"{stem}.json")
    if args.out:
        Path(f"{args.out}.summary.csv").write_text(
            format_rows(rows, SUMMARY_COLS, "csv"), encoding="utf-8"
        )
    sys.stdout.write(format_rows(rows, SUMMARY_COLS, args.format))
    return EXIT_FAIL if bad else EXIT_OK


CHECK_COLS = ["check", "measured", "predicted", "tolerance", "pass"]


def run_crosscheck(
    params: ProtocolParams,
    runs: int,
    epochs: int,
    seed: int,
    mc_trials: int,
    parallelism: int = 1,
) -> list[dict]:
    """The oracle suite behind the crosscheck subcommand.

    Three independent comparisons: sampled propagation vs the Markov-chain
    recursion, simulated certification frequency vs the exact quorum
    formula, and simulated traffic vs the expected-cost model.
    """
    checks = []

    # sampled propagation vs exact, at the first k where the value is
    # informative (away from 0 and 1 a binomial tolerance means something)
    n, p_prop = params.n, params.p_prop
    k_probe = None
    exact = 0.0
    for k in range(1, 49):
        exact = analysis.propagation_exact(n, 1, p_prop, k)
        if 0.1 <= exact <= 0.9:
            k_probe = k
            break
    if k_probe is None:
        k_probe, exact = 48, analysis.propagation_exact(n, 1, p_prop, 48)
    measured = analysis.propagation_monte_carlo(n, 1, p_prop, k_probe, mc_trials, seed)
    sigma = math.sqrt(max(exact * (1.0 - exact), 1e-12) / mc_trials)
    checks.append(
        {
            "check": f"propagation_exact(n={n},chi=1,k={k_probe})",
            "measured": measured,
            "predicted": exact,
            "tolerance": 3.0 * sigma,
            "pass": abs(measured - exact) <= 3.0 * sigma,
        }
    )

    # simulated certification frequency vs the exact quorum formula
    corrupted = frozenset(range(1, params.f + 1))
    schedule = simnet.Schedule(model=params.model)
    configs = [
        simnet.SimConfig(
            params=params,
            seed=seed + i,
            rounds=3 * epochs + 1,
            schedule=schedule,
            corrupted=corrupted,
        )
        for i in range(runs)
    ]
    results = simnet.run_many(configs, parallelism)
    eligible = sum(r.liveness.epochs_eligible for r in results)
    certified = sum(r.liveness.certified_eligible for r in results)
    rate = certified / eligible if eligible else 0.0
    predicted = analysis.liveness_qc_probability(params, "exact").value
    sigma = math.sqrt(max(predicted * (1.0 - predicted), 1e-12) / max(eligible, 1))
    checks.append(
        {
            "check": f"certification_rate({eligible} epochs)",
            "measured": rate,
            "predicted": predicted,
            "tolerance": 3.0 * sigma,
            "pass": abs(rate - predicted) <= 3.0 * sigma,
        }
    )

    # simulated traffic vs the cost model (which assumes nothing is corrupted)
    if params.f == 0:
        honest_results = results
        honest_params = params
    else:
        honest_params = params.replace(f=0)
        honest_results = simnet.run_many(
            [
                simnet.SimConfig(
                    params=honest_params,
                    seed=seed + runs,
                    rounds=3 * epochs + 1,
                    schedule=simnet.Schedule(model=params.model),
                )
            ]
        )
    cost = analysis.expected_messages_per_epoch(honest_params)
    epochs_per_run = (3 * epochs + 1) / 3.0
    msgs = [r.trace.total_messages() / epochs_per_run for r in honest_results]
    measured = sum(msgs) / len(msgs)
    checks.append(
        {
            "check": "messages_per_epoch",
            "measured": measured,
            "predicted": cost.count,
            "tolerance": 0.05 * cost.count,
            "pass": abs(measured - cost.count) <= 0.05 * cost.count,
        }
    )

    amortized = analysis.amortized_complexity(honest_params, honest_params.kappa)
    per_process = [
        float(r.trace.proc_sends[1:].mean()) / epochs_per_run for r in honest_results
    ]
    measured = sum(per_process) / len(per_process)
    predicted = amortized / honest_params.kappa
    checks.append(
        {
            "check": "per_process_sends_per_epoch",
            "measured": measured,
            "predicted": predicted,
            "tolerance": 0.05 * predicted,
            "pass": abs(measured - predicted) <= 0.05 * predicted,
        }
    )
    return checks


def cmd_crosscheck(args) -> int:
    params = build_params(args)
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    checks = run_crosscheck(
        params, args.runs, args.epochs, args.seed, args.mc_trials, args.parallelism
    )
    emit(format_rows(checks, CHECK_COLS, args.format), args.out)
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_FAIL


# parser


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qscale",
        description="Analyze and simulate the sampled chained-consensus protocol.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("analyze-safety", help="safety violation probability vs kappa")
    add_common(p)
    p.add_argument("--kappa-max", type=int, default=12)
    p.add_argument("--mode", default="exact", choices=analysis.MODES)
    p.add_argument(
        "--model",
        choices=(SYNC, PSYNC),
        help="override the network model the formula assumes",
    )
    p.set_defaults(fn=cmd_analyze_safety)

    p = sub.add_parser("analyze-liveness", help="commit probability vs kappa")
    add_common(p)
    p.add_argument("--kappa-max", type=int, default=12)
    p.add_argument("--mode", default="exact", choices=analysis.MODES)
    p.set_defaults(fn=cmd_analyze_liveness)

    p = sub.add_parser("propagation", help="gossip coverage probability vs rounds")
    add_common(p)
    p.add_argument("--chi", type=int, required=True, help="initially informed processes")
    p.add_argument("--k-max", type=int, default=8, help="largest round count")
    p.add_argument("--n", type=int, help="process count (defaults to preset)")
    p.add_argument("--p-prop", type=float, help="gossip probability (defaults to preset)")
    p.set_defaults(fn=cmd_propagation)

    p = sub.add_parser("committee", help="static committee threshold optimization")
    add_common(p, presets=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--c", type=int, required=True, help="committee size")
    p.add_argument("--log2-liveness-target", type=float, default=-30.0)
    p.set_defaults(fn=cmd_committee)

    p = sub.add_parser("complexity", help="expected per-epoch message and byte costs")
    add_common(p)
    p.add_argument("--kappa", type=int, help="commit depth for the amortized figure")
    p.set_defaults(fn=cmd_complexity)

    p = sub.add_parser("kappa-table", help="smallest safe commit depth per cell")
    add_common(p, presets=False)
    p.add_argument(
        "--presets",
        nargs="+",
        default=["psync-eval-49", "psync-eval-74", "psync-eval-98"],
        choices=PRESET_NAMES,
    )
    p.add_argument(
        "--epsilons", nargs="+", type=float, default=[0.10, 0.15]
    )
    p.add_argument(
        "--log2-targets", nargs="+", type=float, default=[-10.0, -20.0, -30.0]
    )
    p.add_argument("--mode", default="exact", choices=analysis.MODES)
    p.set_defaults(fn=cmd_kappa_table)

    p = sub.add_parser("simulate", help="run the deterministic network simulator")
    add_common(p, out_help="file prefix for per-run trace CSV and report JSON")
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--rounds", type=int, default=300)
    p.add_argument("--kappa", type=int, help="commit depth")
    p.add_argument("--adversary", default="honest-all", choices=ADVERSARIES)
    p.add_argument(
        "--schedule",
        choices=(SYNC, PSYNC),
        help="delivery model (defaults to the parameter set's)",
    )
    p.add_argument("--gst-round", type=int, default=0)
    p.add_argument(
        "--pre-gst-policy",
        default="drop-to-correct",
        choices=simnet.PRE_GST_POLICIES,
    )
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("crosscheck", help="simulator vs analysis oracle suite")
    add_common(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--epochs", type=int, default=200, help="epochs per run")
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--mc-trials", type=int, default=20000)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(fn=cmd_crosscheck)

    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
