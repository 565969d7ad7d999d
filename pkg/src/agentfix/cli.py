"""Command-line entry point: ``agentfix {rules-generate,repair,bench,stats}``.

Exit codes: 0 success, 1 domain failure (rejected fix, failed rule), 2 usage
or environment error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .agents.roles import Ablation, RepairConfig, RepairDeps
from .analytics import EmptyCorpus as EmptyFixCorpus
from .analytics import EmptyInput, LengthMismatch, cohens_kappa, pattern_distribution
from .bench import BenchConfig, RunnerConfig, evaluate_corpus, render_table
from .bench.harness import CorpusInvalid, EmptyCorpus
from .config import ConfigError, GlobalConfig
from .diffcore import line_diff, render_unified
from .errors import AgentFixError, IoError
from .llm import GLOBAL_RATE_LIMITER, ScriptedProvider, make_provider
from .model import ManifestError, RepairTask, load_annotated_corpus
from .orchestrator import RepairFailed, persist_run, repair, repair_zero_shot, replay_scripts
from .rulegen import RuleStore, run_rule_pipeline

logger = logging.getLogger("agentfix")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(AgentFixError):
    pass


def _emit(payload: dict, human: str | None, as_json: bool) -> None:
    if as_json or human is None:
        print(json.dumps(payload, indent=2))
    else:
        print(human)


def _load_config(args: argparse.Namespace, **overrides) -> GlobalConfig:
    cfg = GlobalConfig.load(args.config)
    cfg = cfg.override(**overrides)
    GLOBAL_RATE_LIMITER.per_minute = cfg.rate_limit_per_minute
    return cfg


def _read_script(path: str | None) -> list | None:
    if path is None:
        return None
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read script {path}: {exc}") from exc
    if not isinstance(data, list):
        raise UsageError(f"script {path} must be a JSON list of turns")
    return data


def _rules(cfg: GlobalConfig, fallback: Path | None = None) -> RuleStore:
    directory = cfg.rules_dir or (str(fallback) if fallback and fallback.is_dir() else None)
    if directory is None:
        return RuleStore()
    if not Path(directory).is_dir():
        raise UsageError(f"rules directory {directory} does not exist")
    return RuleStore.load(directory)


# -- rules-generate ------------------------------------------------------------

def cmd_rules_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus = load_annotated_corpus(args.corpus)
    script = _read_script(args.script)
    if script is not None:
        summarizer = synthesizer = ScriptedProvider(script)
    else:
        summarizer = make_provider(cfg.provider("summarizer"))
        synthesizer = make_provider(cfg.provider("synthesizer"))
    result = run_rule_pipeline(corpus, summarizer, synthesizer, concurrency=cfg.parallelism,
                               generated_at=args.generated_at)
    paths = result.store.save(args.out)
    payload = {
        "written": [p.name for p in paths],
        "absent": [p.name for p in result.absent],
        "failures": result.failures,
    }
    human = [f"wrote {len(paths)} rule file(s) to {args.out}"]
    human += [f"warning: no posts for {p.name}; rule absent" for p in result.absent]
    human += [f"FAILED {name}: {why}" for name, why in sorted(result.failures.items())]
    _emit(payload, "\n".join(human), args.json)
    return EXIT_OK if result.ok else EXIT_FAIL


# -- repair --------------------------------------------------------------------

def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file {path} not found")
    return p.read_text(encoding="utf-8")


def cmd_repair(args: argparse.Namespace) -> int:
    buggy = _read_text(args.buggy, "buggy")
    test = _read_text(args.test, "test")
    cfg = _load_config(args, ablation=args.ablation, rules_dir=args.rules, run_dir=args.run_dir,
                       search_fixture=args.search_fixture)
    task = RepairTask(buggy, args.intent, test, args.source_site)
    config = RepairConfig(max_iterations=cfg.max_iterations, ablation=cfg.ablation)

    scripts = replay_scripts(args.script) if args.script else {}
    fix_script = _read_script(args.fix_script) or scripts.get("fix") or scripts.get("zero-shot")
    critic_script = _read_script(args.critic_script) or scripts.get("critic")
    fix_provider = ScriptedProvider(fix_script) if fix_script else make_provider(cfg.provider("fix"))

    try:
        if args.zero_shot:
            outcome = repair_zero_shot(task, fix_provider, config)
        else:
            critic = None
            if config.ablation is not Ablation.NO_CRITIC:
                critic = ScriptedProvider(critic_script) if critic_script else make_provider(cfg.provider("critic"))
            deps = RepairDeps(fix_provider, critic, _rules(cfg), cfg.search_client())
            outcome = repair(task, deps, config)
    except RepairFailed as exc:
        run_dir = Path(cfg.run_dir) / args.run_id
        persist_run(exc.partial, run_dir, extra={"effective_config": cfg.to_dict()})
        print(f"repair failed: {exc}", file=sys.stderr)
        return EXIT_FAIL

    run_dir = Path(cfg.run_dir) / args.run_id
    manifest = persist_run(outcome, run_dir, extra={"effective_config": cfg.to_dict()})
    diff = render_unified(line_diff(buggy, outcome.final_candidate.source),
                          Path(args.buggy).name, "fixed.py")
    verdict = outcome.verdicts[-1]
    payload = {"accepted": outcome.accepted, "attempts": outcome.attempts,
               "verdict": verdict.to_dict(), "diff": diff, "manifest": str(manifest)}
    human = (f"{diff or '(no changes)'}\n"
             f"verdict: {verdict.decision.value} after {outcome.attempts} attempt(s)\n"
             f"reasoning: {verdict.reasoning}\n"
             f"run: {run_dir}")
    _emit(payload, human, args.json)
    return EXIT_OK if outcome.accepted else EXIT_FAIL


# -- bench ---------------------------------------------------------------------

def _mock_factory(mock_dir: Path, cfg: GlobalConfig, ablation: Ablation):
    rules = _rules(cfg, mock_dir / "rules")
    fixture = mock_dir / "search.json"
    if cfg.search_backend == "fixture" and not cfg.search_fixture and fixture.is_file():
        cfg = cfg.override(search_fixture=str(fixture))

    def factory(instance):
        source = mock_dir / instance.instance_id
        if not source.is_dir():
            raise UsageError(f"no recorded transcripts for {instance.instance_id} in {mock_dir}")
        scripts = replay_scripts(source)
        return RepairDeps(
            fix_provider=ScriptedProvider(scripts["fix"] or scripts["zero-shot"]),
            critic_provider=None if ablation is Ablation.NO_CRITIC else ScriptedProvider(scripts["critic"]),
            rules=rules,
            search=cfg.search_client(),
        )
    return factory


def _live_factory(cfg: GlobalConfig, ablation: Ablation):
    rules = _rules(cfg)
    fix_cfg = cfg.provider("fix")
    critic_cfg = None if ablation is Ablation.NO_CRITIC else cfg.provider("critic")

    def factory(instance):
        return RepairDeps(make_provider(fix_cfg),
                          make_provider(critic_cfg) if critic_cfg else None,
                          rules, cfg.search_client())
    return factory


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_config(args, ablation=args.ablation, parallelism=args.parallelism,
                       timeout=args.timeout, run_dir=args.run_dir, rules_dir=args.rules,
                       search_fixture=args.search_fixture)
    if args.mock_transcripts:
        mock = Path(args.mock_transcripts)
        if not mock.is_dir():
            raise UsageError(f"mock transcript directory {mock} not found")
        factory = _mock_factory(mock, cfg, cfg.ablation)
    else:
        factory = _live_factory(cfg, cfg.ablation)
    bench_cfg = BenchConfig(
        repair=RepairConfig(max_iterations=cfg.max_iterations, ablation=cfg.ablation),
        runner=RunnerConfig(timeout=cfg.timeout),
        mode="zero-shot" if args.zero_shot else "dual-agent",
        parallelism=cfg.parallelism,
        gold_sanity=args.gold_sanity,
        run_dir=cfg.run_dir,
        run_id=args.run_id,
        label=args.label or cfg.ablation.value,
        manifest_extra={"effective_config": cfg.to_dict()},
    )
    report = evaluate_corpus(args.corpus, factory, bench_cfg)
    if args.report:
        report.save(args.report)
    _emit(report.to_dict(), render_table(report), args.json)
    return EXIT_OK


# -- stats ---------------------------------------------------------------------

def _labels(path: str) -> list[str]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read labels {path}: {exc}") from exc
    if not isinstance(data, list):
        raise UsageError(f"{path} must hold a JSON list of labels")
    return [str(x) for x in data]


def cmd_stats(args: argparse.Namespace) -> int:
    _load_config(args)
    if args.kappa is None and args.corpus is None:
        raise UsageError("give a corpus path, --kappa A B, or both")
    payload: dict = {}
    human: list[str] = []
    if args.corpus is not None:
        table = pattern_distribution(load_annotated_corpus(args.corpus), args.group_by)
        payload["distribution"] = {"group_by": args.group_by, "total": table.total,
                                   "rows": [[r.key, r.count, r.share] for r in table.rows]}
        human.append(table.to_csv().rstrip("\n"))
        if args.csv:
            try:
                Path(args.csv).write_text(table.to_csv(), encoding="utf-8")
            except OSError as exc:
                raise IoError(f"cannot write {args.csv}: {exc}") from exc
    if args.kappa is not None:
        kappa = cohens_kappa(_labels(args.kappa[0]), _labels(args.kappa[1]))
        payload["kappa"] = kappa
        human.append(f"kappa {kappa:.4f}")
    _emit(payload, "\n".join(human), args.json)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentfix", description="Repair bugs in LLM agent code.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--json", action="store_true", help="print JSON only")
    sub = parser.add_subparsers(dest="command", required=True)
    ablations = [a.value for a in Ablation]

    p = sub.add_parser("rules-generate", parents=[common], help="build fix-pattern rules from a corpus")
    p.add_argument("corpus", help="annotated corpus (JSON lines)")
    p.add_argument("out", help="output directory for <ID>.json rule files")
    p.add_argument("--script", help="scripted provider turns (JSON list) instead of a live model")
    p.add_argument("--generated-at", help="fixed timestamp for reproducible rule files")
    p.set_defaults(func=cmd_rules_generate)

    p = sub.add_parser("repair", parents=[common], help="repair one buggy program")
    p.add_argument("buggy", help="buggy Python file")
    p.add_argument("--intent", required=True, help="one-line statement of the intended behaviour")
    p.add_argument("--test", required=True, help="test file the fix must satisfy")
    p.add_argument("--source-site", default="stackoverflow.com",
                   help="domain excluded from web search (default: %(default)s)")
    p.add_argument("--ablation", choices=ablations)
    p.add_argument("--zero-shot", action="store_true", help="single chat call, no tools, no critic")
    p.add_argument("--rules", help="directory of rule files")
    p.add_argument("--search-fixture", help="JSON search fixture instead of live search")
    p.add_argument("--script", help="recorded run directory or script file with fix/critic turns")
    p.add_argument("--fix-script", help="JSON list of scripted fix-agent turns")
    p.add_argument("--critic-script", help="JSON list of scripted critic turns")
    p.add_argument("--run-dir")
    p.add_argument("--run-id", default="repair")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("bench", parents=[common], help="evaluate over an instance corpus")
    p.add_argument("corpus", help="directory of benchmark instances")
    p.add_argument("--ablation", choices=ablations)
    p.add_argument("--mock-transcripts", help="directory of recorded sessions, one sub-directory per instance")
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--rules", help="directory of rule files")
    p.add_argument("--search-fixture")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--timeout", type=float, help="per-test timeout in seconds")
    p.add_argument("--gold-sanity", action="store_true", help="fail if a gold fix does not pass its test")
    p.add_argument("--run-dir")
    p.add_argument("--run-id")
    p.add_argument("--label")
    p.add_argument("--report", help="also write the report JSON here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics and annotator agreement")
    p.add_argument("corpus", nargs="?", help="annotated corpus (JSON lines)")
    p.add_argument("--group-by", default="pattern", choices=("source", "framework", "pattern", "component"))
    p.add_argument("--kappa", nargs=2, metavar=("A", "B"), help="two JSON label lists")
    p.add_argument("--csv", help="write key,count,share CSV here")
    p.set_defaults(func=cmd_stats)
    return parser


USAGE_ERRORS = (UsageError, ConfigError, ManifestError, CorpusInvalid, EmptyCorpus, EmptyFixCorpus,
                LengthMismatch, EmptyInput, IoError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AgentFixError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
