"""Operator commands: run, sweep, eat-replay, inspect.

Exit codes are stable: 0 success, 1 trace invariant violation (inspect),
2 usage error, 3 config error, 4 data or io error, 5 replay unsupported.
With the toy backend, identical invocations produce byte-identical stdout
and output files; `--workers 1 --seed S` is the reproducibility contract the
test suite leans on, though outputs are scheduling-independent anyway.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import (
    ablation_csv,
    ablation_sweep,
    budget_sweep,
    emit_report,
    load_dataset,
    report_text,
    run_benchmark,
    sweep_csv,
    trace_jsonl,
    write_trace,
)
from .config import load_config, make_backend
from .engine import TraceRecorder
from .errors import (
    ConfigError,
    DuplicateId,
    HNDecodeError,
    IoError,
    NoBoundaries,
    ParseError,
    ReplayUnsupported,
)
from .verifier import eat_decision, eat_statistics

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_REPLAY = 5


def _apply_overrides(cfg, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.branch = replace(cfg.branch, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None:
        cfg.out_dir = Path(args.out)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    problems = load_dataset(args.dataset)
    backend = make_backend(cfg)
    trace = TraceRecorder()
    report = run_benchmark(
        problems,
        cfg.branch,
        backend,
        cfg.params,
        mode=args.mode,
        verifier_mode=args.verifier,
        workers=cfg.workers,
        template=cfg.template,
        trace=trace,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(report, "csv", cfg.out_dir / "report.csv", cfg.prices)
    write_trace(trace, cfg.out_dir / "trace.jsonl")
    sys.stdout.write(report_text(report, cfg.prices))
    return EXIT_OK


def _parse_int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated integers, got {raw!r}") from None


def cmd_sweep(args) -> int:
    if (args.budgets is None) == (args.param is None):
        print("sweep: exactly one of --budgets or --param is required", file=sys.stderr)
        return EXIT_USAGE
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    problems = load_dataset(args.dataset)
    backend = make_backend(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if args.budgets is not None:
        budgets = _parse_int_list(args.budgets, "--budgets")
        report = budget_sweep(
            problems, cfg.branch, backend, cfg.params, budgets,
            verifier_mode=args.verifier, workers=cfg.workers, template=cfg.template,
        )
        payload = sweep_csv(report)
        out = cfg.out_dir / "sweep.csv"
    else:
        name, _, values_raw = args.param.partition("=")
        if not values_raw:
            print("sweep: --param expects name=v1,v2,...", file=sys.stderr)
            return EXIT_USAGE
        try:
            values = [float(v) for v in values_raw.split(",") if v.strip() != ""]
        except ValueError:
            print(f"sweep: bad value list in --param {args.param!r}", file=sys.stderr)
            return EXIT_USAGE
        rows = ablation_sweep(
            problems, cfg.branch, backend, cfg.params, name.strip(), values,
            verifier_mode=args.verifier, workers=cfg.workers, template=cfg.template,
        )
        payload = ablation_csv(rows)
        out = cfg.out_dir / "ablation.csv"
    try:
        out.write_text(payload, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc
    sys.stdout.write(payload)
    return EXIT_OK


def cmd_eat_replay(args) -> int:
    cfg = load_config(args.config)
    backend = make_backend(cfg)
    tau1 = cfg.branch.tau1 if args.tau1 is None else args.tau1
    tau2 = cfg.branch.tau2 if args.tau2 is None else args.tau2
    path = Path(args.transcript)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read transcript {path}: {exc}") from exc
    tokens, dists = backend.replay_text(text)
    print(f"tokens: {len(tokens)}")
    try:
        stats = eat_statistics(tokens, dists)
    except NoBoundaries:
        print("boundaries: none")
        print(f"decision: reroll (no completed think block; tau1={tau1:g}, tau2={tau2:g})")
        return EXIT_OK
    print("boundaries: " + ", ".join(str(p) for p in stats.boundary_positions))
    print("entropies: " + ", ".join(f"{h:.6f}" for h in stats.entropies))
    print(f"mean: {stats.mean:.6f}")
    print(f"variance: {stats.variance:.6f}")
    verdict = eat_decision(stats, tau1, tau2)
    print(f"decision: {verdict} (tau1={tau1:g}, tau2={tau2:g})")
    return EXIT_OK


# - trace inspection -------------------------------------------------------

def _load_trace(path: Path) -> list[dict]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read trace {path}: {exc}") from exc
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if not isinstance(event, dict) or "event" not in event:
            raise IoError(f"{path}:{lineno}: not a trace event")
        events.append(event)
    if not events:
        raise IoError(f"{path}: empty trace")
    return events


class _ProblemTrace:
    def __init__(self) -> None:
        self.rollouts: dict[str, dict] = {}
        self.jobs: dict[str, dict] = {}
        self.drawn: list[str] = []
        self.end: dict | None = None


def _check_trace(events: list[dict]) -> tuple[list[str], list[str]]:
    """Returns (report lines, violation messages); raises IoError if malformed."""
    meta = next((e for e in events if e["event"] == "run_meta"), None)
    if meta is None:
        raise IoError("trace has no run_meta event")
    try:
        cap = int(meta["max_num_create_jobs"])
        depth_cap = int(meta["max_mcts_depth"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"run_meta lacks limits: {exc!r}") from exc

    problems: dict[str, _ProblemTrace] = {}

    def tracked(pid: str) -> _ProblemTrace:
        return problems.setdefault(pid, _ProblemTrace())

    try:
        for e in events:
            kind = e["event"]
            if kind == "rollout":
                tracked(e["problem"]).rollouts[e["id"]] = e
            elif kind == "job_created":
                tracked(e["problem"]).jobs[e["id"]] = e
            elif kind == "job_drawn":
                tracked(e["problem"]).drawn.append(e["id"])
            elif kind == "problem_end":
                tracked(e["problem"]).end = e
    except KeyError as exc:
        raise IoError(f"trace event missing field {exc}") from exc

    violations: list[str] = []
    lines: list[str] = []
    for pid, pt in problems.items():
        jobs_created = len(pt.jobs) + 1  # the root is job 1
        if jobs_created > cap:
            violations.append(f"problem {pid}: {jobs_created} jobs created exceeds cap {cap}")
        for job in pt.jobs.values():
            if int(job["created_count"]) > cap:
                violations.append(
                    f"problem {pid}: job {job['id']} created_count "
                    f"{job['created_count']} exceeds cap {cap}"
                )
        for r in pt.rollouts.values():
            if int(r["depth"]) > depth_cap:
                violations.append(
                    f"problem {pid}: rollout {r['id']} at depth {r['depth']} "
                    f"exceeds max_mcts_depth {depth_cap}"
                )
        # lineage: a rollout expanded from job jN must extend its parent's
        # prefix and replace the original token at the branch position
        for r in pt.rollouts.values():
            job_id = r.get("job")
            if job_id is None:
                continue
            job = pt.jobs.get(job_id)
            if job is None:
                violations.append(f"problem {pid}: rollout {r['id']} cites unknown job {job_id}")
                continue
            parent = pt.rollouts.get(job["parent"])
            if parent is None:
                violations.append(
                    f"problem {pid}: job {job_id} cites unknown rollout {job['parent']}"
                )
                continue
            pos = int(job["position"])
            child_tokens = r["tokens"]
            parent_tokens = parent["tokens"]
            if child_tokens[:pos] != parent_tokens[:pos]:
                violations.append(
                    f"problem {pid}: rollout {r['id']} prefix diverges from "
                    f"parent {parent['id']} before position {pos}"
                )
            if len(child_tokens) > pos and child_tokens[pos] == job["original"]:
                violations.append(
                    f"problem {pid}: rollout {r['id']} repeats the original "
                    f"token at position {pos}"
                )
        lines.extend(_tree_lines(pid, pt))
    return lines, violations


def _tree_lines(pid: str, pt: _ProblemTrace) -> list[str]:
    end = pt.end or {}
    lines = [
        f"problem {pid}: solved={str(end.get('solved', '?')).lower()} "
        f"jobs={end.get('jobs', '?')} output_tokens={end.get('output_tokens', '?')}"
    ]
    children: dict[str, list[dict]] = {}
    for job in pt.jobs.values():
        children.setdefault(job["parent"], []).append(job)

    def walk(rollout_id: str, indent: int) -> None:
        r = pt.rollouts.get(rollout_id)
        if r is None:
            return
        pad = "  " * indent
        lines.append(
            f"{pad}{rollout_id} depth={r['depth']} status={r['status']} "
            f"tokens={len(r['tokens'])}"
        )
        for job in sorted(children.get(rollout_id, []), key=lambda j: int(j["id"][1:])):
            jpad = "  " * (indent + 1)
            expanded = f"r{job['id'][1:]}"
            if expanded in pt.rollouts:
                lines.append(
                    f"{jpad}{job['id']} @{job['position']} H={job['entropy']:.6f} ->"
                )
                walk(expanded, indent + 2)
            else:
                state = "drawn, never finished" if job["id"] in pt.drawn else "not drawn"
                lines.append(
                    f"{jpad}{job['id']} @{job['position']} H={job['entropy']:.6f} ({state})"
                )

    walk("r1", 1)
    return lines


def cmd_inspect(args) -> int:
    events = _load_trace(Path(args.trace))
    lines, violations = _check_trace(events)
    for line in lines:
        print(line)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_VIOLATION
    print("trace ok")
    return EXIT_OK


# - argument plumbing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hndecode",
        description="Entropy-guided branching search over language-model rollouts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark; writes report.csv and trace.jsonl")
    run_p.add_argument("--config", required=True, help="engine config (INI)")
    run_p.add_argument("--dataset", required=True, help="tab-separated problems file")
    run_p.add_argument("--mode", choices=("hn", "base", "random"), default="hn")
    run_p.add_argument("--verifier", choices=("oracle", "eat"), default=None,
                       help="default: oracle if every problem has a gold answer, else eat")
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None, help="override branch.seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="budget sweep or single-parameter ablation")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--dataset", required=True)
    sweep_p.add_argument("--budgets", default=None,
                         help="comma-separated budgets in units of 128 tokens")
    sweep_p.add_argument("--param", default=None, help="name=v1,v2,... ablation grid")
    sweep_p.add_argument("--verifier", choices=("oracle", "eat"), default=None)
    sweep_p.add_argument("--workers", type=int, default=None)
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default=None)
    sweep_p.set_defaults(func=cmd_sweep)

    replay_p = sub.add_parser("eat-replay", help="entropy statistics of a transcript")
    replay_p.add_argument("transcript", help="plain-text completion transcript")
    replay_p.add_argument("--config", required=True)
    replay_p.add_argument("--tau1", type=float, default=None)
    replay_p.add_argument("--tau2", type=float, default=None)
    replay_p.set_defaults(func=cmd_eat_replay)

    inspect_p = sub.add_parser("inspect", help="print a trace's job trees and check invariants")
    inspect_p.add_argument("trace", help="trace.jsonl from a previous run")
    inspect_p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, ParseError, DuplicateId) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReplayUnsupported as exc:
        print(f"replay unsupported: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except HNDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
