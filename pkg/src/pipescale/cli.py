"""
Command-line interface for pipescale.

Usage:
    python -m pipescale run <scenario.yaml> [--out DIR] [--seed SEED] [--rounds N] [--oracle]
    python -m pipescale sweep <scenario.yaml> [...] --seeds 0,1,2 [--workers N] [--out DIR]
    python -m pipescale eval-bottleneck [--scenarios N] [--probes-per-stage M] [--out DIR]
    python -m pipescale replay <episode.jsonl> <scenario.yaml> [--w-latency W] [--w-cost W]
    python -m pipescale ablate <scenario.yaml> --seeds 0,1,2 [--ablations a,b] [--out DIR]
"""

import argparse
import logging
import sys
from dataclasses import replace
from typing import Any


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ValueError("seeds must be non-empty")
    return seeds


def _print_summary(summary: dict[str, Any]) -> None:
    reward = summary["reward"]
    print(f"controller:        {summary['controller']}")
    print(f"rounds:            {summary['rounds']}")
    print(f"p99_ms:            {summary['p99_ms']:.1f}")
    print(f"mean_latency_ms:   {summary['mean_latency_ms']:.1f}")
    print(f"throughput_rps:    {summary['throughput_rps']:.2f}")
    print(f"effective_per_1k:  {summary['effective_cost_per_1k']:.4f}")
    print(f"billable_per_1k:   {summary['billable_cost_per_1k']:.4f}")
    print(f"reward_total:      {reward['total']:.3f}")
    print(f"scaling_events:    {summary['scaling_events']}")


def cmd_run(args: argparse.Namespace) -> int:
    """Execute run command."""
    from .export import ensure_writable, export_run
    from .harness import run_experiment
    from .scenario import load_scenario

    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = scenario.with_seed(int(args.seed))
        if args.rounds is not None:
            rounds = int(args.rounds)
            if rounds < 0:
                print(f"Error: rounds must be >= 0, got {rounds}", file=sys.stderr)
                return 1
            scenario = replace(scenario, rounds=rounds)
        if args.oracle:
            scenario = replace(scenario, oracle=True)
        if args.out:
            ensure_writable(args.out)

        result = run_experiment(scenario)
        _print_summary(result.summary)

        if args.out:
            written = export_run(result, args.out, plots=not args.no_plots)
            print(f"Artifacts written to {args.out} ({len(written)} files)", file=sys.stderr)
        return 0

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def cmd_sweep(args: argparse.Namespace) -> int:
    """Execute sweep command."""
    from .export import ensure_writable, plot_latency_cost
    from .scenario import load_scenario
    from .sweep import run_sweep

    try:
        seeds = _seeds(args.seeds)
        scenarios = [load_scenario(p) for p in args.scenarios]
        out = ensure_writable(args.out) if args.out else None
        workers = int(args.workers) if args.workers is not None else None

        frame, tuned = run_sweep(scenarios, seeds, tune=not args.no_tune, workers=workers)
        print(tuned.drop(columns=["params_key"], errors="ignore").to_string(index=False))

        if out is not None:
            frame.to_csv(out / "sweep.csv", index=False)
            tuned.to_csv(out / "tuned.csv", index=False)
            for name, group in tuned.groupby("scenario"):
                rows = {
                    row["controller"]: {
                        "p99_ms": row["p99_ms"],
                        "billable_cost_per_1k": row["billable_cost_per_1k"],
                        "effective_cost_per_1k": row["effective_cost_per_1k"],
                    }
                    for _, row in group.iterrows()
                }
                plot_latency_cost(rows, out / f"{name}_latency_cost.png")
        return 0

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def cmd_eval_bottleneck(args: argparse.Namespace) -> int:
    """Execute eval-bottleneck command."""
    from .bottleneck import evaluate_bottleneck_detection, generate_suite, random_detector
    from .export import ensure_writable, write_json

    try:
        n = int(args.scenarios)
        m = int(args.probes_per_stage)
        if m < 1:
            print(f"Error: probes-per-stage must be >= 1, got {m}", file=sys.stderr)
            return 1
        out = ensure_writable(args.out) if args.out else None

        suite = generate_suite(n, seed=int(args.seed))
        detector = random_detector(int(args.seed)) if args.random else None
        report = evaluate_bottleneck_detection(suite, detector=detector, probes_per_stage=m)
        print(report.format_table())

        if out is not None:
            write_json(report.to_dict(), out / "bottleneck_report.json")
        return 0

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def cmd_replay(args: argparse.Namespace) -> int:
    """Execute replay command."""
    from .export import ensure_writable, plot_reward_sensitivity, read_log, write_json
    from .harness import EpisodeLog, replay
    from .reward import RewardBreakdown
    from .scenario import load_scenario

    try:
        records = read_log(args.log)
        config = load_scenario(args.scenario).reward_config()
        changes: dict[str, Any] = {}
        if args.w_latency is not None:
            changes["w_latency"] = float(args.w_latency)
        if args.w_cost is not None:
            changes["w_cost"] = float(args.w_cost)
        if args.sla_penalty is not None:
            changes["sla_penalty"] = args.sla_penalty
        if args.no_bonus:
            changes["proactive_bonus"] = False
        config = replace(config, **changes)
        out = ensure_writable(args.out) if args.out else None

        logged = EpisodeLog(list(records)).reward_totals()
        rescored = {name: 0.0 for name in (*RewardBreakdown.COMPONENTS, "total")}
        for breakdown in replay(records, config):
            for name in RewardBreakdown.COMPONENTS:
                rescored[name] += getattr(breakdown, name)
            rescored["total"] += breakdown.total

        print(f"{'component':<12} {'logged':>10} {'rescored':>10}")
        for name in (*RewardBreakdown.COMPONENTS, "total"):
            print(f"{name:<12} {logged[name]:>10.3f} {rescored[name]:>10.3f}")

        if out is not None:
            write_json(
                {
                    "schema": "pipescale.replay.v1",
                    "params": config.to_dict(),
                    "logged": logged,
                    "rescored": rescored,
                    "meta": {"rounds": len(records)},
                },
                out / "replay.json",
            )
            plot_reward_sensitivity(
                {"logged": logged, "rescored": rescored}, out / "reward_sensitivity.png"
            )
        return 0

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def cmd_ablate(args: argparse.Namespace) -> int:
    """Execute ablate command."""
    from .export import ensure_writable
    from .scenario import load_scenario
    from .sweep import run_ablation

    try:
        seeds = _seeds(args.seeds)
        scenario = load_scenario(args.scenario)
        names = [a for a in args.ablations.split(",") if a] if args.ablations else None
        out = ensure_writable(args.out) if args.out else None
        workers = int(args.workers) if args.workers is not None else None

        table = run_ablation(scenario, seeds, ablations=names, workers=workers)
        print(table.to_string(index=False))

        if out is not None:
            table.to_csv(out / "ablation.csv", index=False)
        return 0

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        prog="pipescale",
        description="pipescale - simulator-backed autoscaling for multi-stage inference pipelines",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: WARNING)",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # run command
    parser_run = subparsers.add_parser("run", help="Run one scenario")
    parser_run.add_argument("scenario", type=str, help="Scenario YAML or JSON file")
    parser_run.add_argument("--out", type=str, default=None, help="Artifact directory")
    parser_run.add_argument("--seed", type=str, default=None, help="Override the scenario seed")
    parser_run.add_argument("--rounds", type=str, default=None, help="Override round count")
    parser_run.add_argument(
        "--oracle", action="store_true", help="Score every round against rollouts"
    )
    parser_run.add_argument("--no-plots", action="store_true", help="Skip plot files")

    # sweep command
    parser_sweep = subparsers.add_parser(
        "sweep", help="Run scenarios x seeds against tuned baselines"
    )
    parser_sweep.add_argument("scenarios", nargs="+", help="Scenario files")
    parser_sweep.add_argument("--seeds", type=str, default="0", help="Comma-separated seeds")
    parser_sweep.add_argument("--workers", type=str, default=None, help="Process count")
    parser_sweep.add_argument(
        "--no-tune", action="store_true", help="Use default baseline parameters only"
    )
    parser_sweep.add_argument("--out", type=str, default=None, help="Artifact directory")

    # eval-bottleneck command
    parser_bottleneck = subparsers.add_parser(
        "eval-bottleneck", help="Evaluate bottleneck detection on a synthetic suite"
    )
    parser_bottleneck.add_argument("--scenarios", type=str, default="200", help="Suite size")
    parser_bottleneck.add_argument(
        "--probes-per-stage", type=str, default="16", help="Expected forced probes per stage"
    )
    parser_bottleneck.add_argument("--seed", type=str, default="0", help="Suite seed")
    parser_bottleneck.add_argument(
        "--random", action="store_true", help="Use the chance-level random detector"
    )
    parser_bottleneck.add_argument("--out", type=str, default=None, help="Artifact directory")

    # replay command
    parser_replay = subparsers.add_parser(
        "replay", help="Re-score a logged run under another reward configuration"
    )
    parser_replay.add_argument("log", type=str, help="episode.jsonl from a previous run")
    parser_replay.add_argument("scenario", type=str, help="Scenario file for the reward config")
    parser_replay.add_argument("--w-latency", type=str, default=None, help="Latency weight")
    parser_replay.add_argument("--w-cost", type=str, default=None, help="Cost weight")
    parser_replay.add_argument(
        "--sla-penalty", choices=["quadratic", "linear"], default=None, help="SLA penalty shape"
    )
    parser_replay.add_argument(
        "--no-bonus", action="store_true", help="Disable the proactive bonus"
    )
    parser_replay.add_argument("--out", type=str, default=None, help="Artifact directory")

    # ablate command
    parser_ablate = subparsers.add_parser("ablate", help="Run the ablation configurations")
    parser_ablate.add_argument("scenario", type=str, help="Scenario file")
    parser_ablate.add_argument("--seeds", type=str, default="0", help="Comma-separated seeds")
    parser_ablate.add_argument(
        "--ablations", type=str, default=None, help="Comma-separated subset (default: all)"
    )
    parser_ablate.add_argument("--workers", type=str, default=None, help="Process count")
    parser_ablate.add_argument("--out", type=str, default=None, help="Artifact directory")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )

    # Dispatch
    if args.command == "run":
        return cmd_run(args)
    elif args.command == "sweep":
        return cmd_sweep(args)
    elif args.command == "eval-bottleneck":
        return cmd_eval_bottleneck(args)
    elif args.command == "replay":
        return cmd_replay(args)
    elif args.command == "ablate":
        return cmd_ablate(args)
    else:
        parser.print_help()
        return 1


if __name__ == "__main__":
    sys.exit(main())
