"""Operator entry point: runs, ablations, verification utilities, plotting."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import yaml

from icrl import baselines, game24, metrics
from icrl.config import ABLATIONS, ConfigError, RunConfig, ablation_variant, parse_config
from icrl.loop import EpisodeLog, run_problem
from icrl.minilab.world import MiniLabEnv, load_world, shipped_world_names
from icrl.policy import BackendError, ScriptError
from icrl.prompting import assemble_prompt
from icrl.tasks import load_problems, make_judge_backend, make_policy_backend, make_task
from icrl.writing import WritingProblem, export_pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment")
    run_p.add_argument("--config", required=True, help="YAML config file")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")
    run_p.add_argument("--out", default="runs/latest", help="output directory")
    run_p.add_argument("--dry-run", action="store_true",
                       help="print the episode-1 prompt and exit without any network call")
    run_p.add_argument("--parallel", type=int, default=1,
                       help="concurrent problem workers (default 1)")
    run_p.set_defaults(func=cmd_run)

    ablate_p = sub.add_parser("ablate", help="run the five standard ablations")
    ablate_p.add_argument("--config", required=True)
    ablate_p.add_argument("--set", dest="overrides", action="append", default=[])
    ablate_p.add_argument("--out", default="runs/ablations")
    ablate_p.add_argument("--parallel", type=int, default=1)
    ablate_p.set_defaults(func=cmd_ablate)

    verify_p = sub.add_parser("verify24", help="verify a solution read from stdin")
    verify_p.add_argument("numbers", nargs=4, type=int, help="the four input numbers")
    verify_p.set_defaults(func=cmd_verify24)

    solve_p = sub.add_parser("solve24", help="search for a witness expression")
    solve_p.add_argument("numbers", nargs=4, type=int)
    solve_p.set_defaults(func=cmd_solve24)

    sim_p = sub.add_parser("sim", help="step a MiniLab world on stdio")
    sim_p.add_argument("--world", required=True,
                       help=f"world name ({', '.join(shipped_world_names())}) or spec path")
    sim_p.add_argument("--json", action="store_true",
                       help="speak the newline-delimited JSON wire protocol")
    sim_p.set_defaults(func=cmd_sim)

    plot_p = sub.add_parser("plot", help="render curves from a JSONL log file")
    plot_p.add_argument("logs", help="logs.jsonl produced by a run")
    plot_p.add_argument("-o", "--out", default="curves.svg")
    plot_p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BackendError, ScriptError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# run / ablate
# ---------------------------------------------------------------------------


def _run_one_problem(problem, config: RunConfig, policy, judge) -> list[EpisodeLog]:
    if config.method == "icrl":
        return run_problem(problem, config, policy, judge_backend=judge)
    if config.method in ("cot", "long_cot"):
        return [baselines.run_cot(problem, config, policy,
                                  long_variant=config.method == "long_cot",
                                  judge_backend=judge)]
    if config.method == "best_of_n":
        return baselines.run_best_of_n(problem, config, policy, config.best_of_n,
                                       judge_backend=judge).logs
    if config.method == "self_refine":
        return baselines.run_self_refine(problem, config, policy, config.episodes,
                                         judge_backend=judge)
    if config.method == "reflexion":
        return baselines.run_reflexion(problem, config, policy, config.episodes,
                                       judge_backend=judge)
    raise ConfigError(f"unknown method {config.method!r}")


def _execute_run(config: RunConfig, out_dir: str, parallel: int) -> list[EpisodeLog]:
    problems = load_problems(config)
    policy = make_policy_backend(config)
    judge = make_judge_backend(config)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(
                lambda p: _run_one_problem(p, config, policy, judge), problems
            ))
    else:
        results = [_run_one_problem(p, config, policy, judge) for p in problems]

    logs = [log for problem_logs in results for log in problem_logs]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.yaml"), "w", encoding="utf-8") as handle:
        yaml.safe_dump(config.to_dict(), handle, sort_keys=True)
    metrics.export_results(logs, out_dir, config.task)
    if config.task == "writing":
        _export_writing_pairs(problems, logs, out_dir)
    return logs


def _export_writing_pairs(problems, logs: list[EpisodeLog], out_dir: str) -> None:
    """Final-episode and best-by-reward response pairs for external evaluation."""
    by_problem: dict[str, list[EpisodeLog]] = {}
    for log in logs:
        by_problem.setdefault(log.problem_id, []).append(log)
    final_records = []
    best_records = []
    for problem in problems:
        assert isinstance(problem, WritingProblem)
        entries = sorted(by_problem.get(problem.problem_id, []), key=lambda l: l.episode)
        if not entries:
            continue
        final_records.append((problem, entries[-1].response))
        best = max(entries, key=lambda l: (l.total_reward, -l.episode))
        best_records.append((problem, best.response))
    export_pairs(final_records, os.path.join(out_dir, "pairs_final.json"), "final-episode")
    export_pairs(best_records, os.path.join(out_dir, "pairs_best.json"), "best-by-reward")


def cmd_run(args) -> int:
    config = parse_config(args.config, args.overrides)
    if args.dry_run:
        problems = load_problems(config)
        task = make_task(config, reward_fn=lambda *a, **k: None)
        from icrl.instructions import select_instruction

        instruction = select_instruction(config.schedule, 1, 0)
        bundle = assemble_prompt(
            entries=[],
            task_text=task.task_text(problems[0]),
            instruction=instruction,
            task_kind=config.task,
            layout=config.prompt_layout,
            zero_rewards=config.zero_rewards,
        )
        print(bundle.user_text)
        return 0
    logs = _execute_run(config, args.out, args.parallel)
    print(f"wrote {len(logs)} episode logs to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    base = parse_config(args.config, args.overrides)
    for name in ABLATIONS:
        variant = ablation_variant(base, name)
        out_dir = os.path.join(args.out, name)
        logs = _execute_run(variant, out_dir, args.parallel)
        print(f"{name}: wrote {len(logs)} episode logs to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# verify24 / solve24
# ---------------------------------------------------------------------------


def cmd_verify24(args) -> int:
    text = sys.stdin.read()
    try:
        solution = game24.parse_solution(text)
    except game24.SolutionParseError as exc:
        print(f"invalid (parse error: {exc})")
        return 0
    print(game24.verify_solution(solution, args.numbers))
    return 0


def cmd_solve24(args) -> int:
    solvable, witness = game24.solvable_oracle(args.numbers)
    if solvable:
        print(f"{witness} = 24")
    else:
        print("UNSOLVABLE")
    return 0


# ---------------------------------------------------------------------------
# sim / plot
# ---------------------------------------------------------------------------


def cmd_sim(args) -> int:
    env = MiniLabEnv(load_world(args.world))
    if args.json:
        from icrl.minilab.adapter import serve_stdio

        serve_stdio(env, sys.stdin, sys.stdout)
        return 0
    print(env.task_text())
    print()
    for line in sys.stdin:
        action = line.strip()
        if not action:
            continue
        observation, reward, done, total = env.step(action)
        print(f"Observation: {observation} (reward={reward}) [total={total}]")
        if done:
            print(env.terminal_line())
            return 0
    return 0


def cmd_plot(args) -> int:
    logs: list[EpisodeLog] = []
    task = "run"
    with open(args.logs, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            logs.append(EpisodeLog(
                problem_id=record["problem_id"],
                episode=record["episode"],
                method=record.get("method", "run"),
                instruction_kind=record.get("instruction_kind", "none"),
                prompt="",
                response=record.get("response", ""),
                rewards=[tuple(r) for r in record.get("rewards", [])],
                total_reward=record.get("total_reward", 0.0),
                ground_truth=record.get("ground_truth"),
                tokens_in=record.get("tokens_in", 0),
                tokens_out=record.get("tokens_out", 0),
                wall_ms=record.get("wall_ms", 0),
                calls=record.get("calls", 1),
                flags=record.get("flags", []),
            ))
    rows = metrics.summarize(logs, task)
    series = []
    for method in sorted({row.method for row in rows}):
        method_rows = sorted((r for r in rows if r.method == method), key=lambda r: r.episode)
        series.append(metrics.MetricSeries(f"{method} mean", [r.mean for r in method_rows]))
        series.append(metrics.MetricSeries(f"{method} running max",
                                           [r.running_max_mean for r in method_rows]))
    metrics.emit_plot(series, args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
