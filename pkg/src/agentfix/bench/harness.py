"""Corpus evaluation: repair every instance, run its test, score, aggregate."""

from __future__ import annotations

import json
import logging
import math
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from ..agents.roles import RepairConfig, RepairDeps
from ..errors import AgentFixError, IoError
from ..model import BenchmarkInstance, RepairTask, validate_corpus
from ..orchestrator import RepairFailed, RepairOutcome, persist_run, repair, repair_zero_shot
from .runner import RunnerConfig, SandboxSetupError, TestStatus, run_tests
from .scoring import score_localization

logger = logging.getLogger(__name__)

METRICS = ("repair_rate", "line_acc", "fn_acc", "comp_acc", "mean_attempts", "mean_cost", "mean_time")
_COLUMN_OF = {
    "repair_rate": "resolved", "line_acc": "line_hit", "fn_acc": "function_hit",
    "comp_acc": "component_hit", "mean_attempts": "attempts", "mean_cost": "cost", "mean_time": "time",
}


class EmptyCorpus(AgentFixError):
    pass


class CorpusInvalid(AgentFixError):
    pass


class CorpusMismatch(AgentFixError):
    pass


@dataclass(frozen=True)
class BenchRow:
    instance_id: str
    resolved: bool
    line_hit: bool
    function_hit: bool
    component_hit: bool
    attempts: int
    cost: float
    time: float
    status: str
    component_fallback: bool = False
    provenance: str = "automated"
    error: str | None = None

    def __post_init__(self):
        if self.resolved and self.status != TestStatus.RESOLVED.value:
            raise ValueError("a row is resolved only when its test run resolved")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchRow":
        return cls(**data)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(float(v) for v in values) / len(values)


@dataclass
class BenchReport:
    rows: list[BenchRow]
    label: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise EmptyCorpus("a report needs at least one row")

    @property
    def aggregates(self) -> dict[str, float]:
        return {metric: _mean(getattr(r, _COLUMN_OF[metric]) for r in self.rows) for metric in METRICS}

    @property
    def instance_ids(self) -> list[str]:
        return [r.instance_id for r in self.rows]

    def to_dict(self) -> dict:
        return {"label": self.label, "config": self.config,
                "rows": [asdict(r) for r in self.rows], "aggregates": self.aggregates}

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls([BenchRow.from_dict(r) for r in data["rows"]], data.get("label", ""), data.get("config", {}))

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write report to {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path: Path | str) -> "BenchReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def render_table(*reports: BenchReport) -> str:
    header = f"{'Config':<16} {'RP':>6} {'LI':>6} {'FN':>6} {'CP':>6} {'Attmp':>6} {'Cost':>8} {'Time':>8}"
    lines = [header, "-" * len(header)]
    for rep in reports:
        a = rep.aggregates
        lines.append(
            f"{(rep.label or '-'):<16} {a['repair_rate']:>6.4f} {a['line_acc']:>6.4f} {a['fn_acc']:>6.4f} "
            f"{a['comp_acc']:>6.4f} {a['mean_attempts']:>6.2f} {a['mean_cost']:>8.4f} {a['mean_time']:>8.2f}")
    resolved = sum(r.resolved for r in reports[0].rows) if len(reports) == 1 else None
    if resolved is not None:
        lines.append(f"resolved {resolved}/{len(reports[0].rows)}")
    return "\n".join(lines)


@dataclass(frozen=True)
class DeltaReport:
    """Absolute drops, ``base - ablated``, in percentage points."""

    drops: dict[str, float]

    def __getitem__(self, metric: str) -> float:
        return self.drops[metric]


def compare_configs(base: BenchReport, ablated: BenchReport) -> DeltaReport:
    if sorted(base.instance_ids) != sorted(ablated.instance_ids):
        raise CorpusMismatch("reports cover different instance sets")
    a, b = base.aggregates, ablated.aggregates
    rates = ("repair_rate", "line_acc", "fn_acc", "comp_acc")
    return DeltaReport({m: (a[m] - b[m]) * 100.0 for m in rates})


@dataclass
class BenchConfig:
    repair: RepairConfig = field(default_factory=RepairConfig)
    runner: RunnerConfig = field(default_factory=RunnerConfig)
    mode: str = "dual-agent"  # or "zero-shot"
    parallelism: int = 4
    gold_sanity: bool = False
    run_dir: Path | str | None = None
    run_id: str | None = None
    label: str = ""
    manifest_extra: dict = field(default_factory=dict)  # echoed into every run manifest

    def __post_init__(self):
        if self.mode not in ("dual-agent", "zero-shot"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


DepsFactory = Callable[[BenchmarkInstance], RepairDeps]


def _outcome_time(outcome: RepairOutcome) -> float:
    """Model latency plus tool time; scripted providers report their recorded latency."""
    tools = math.fsum(inv.wall_time for t in outcome.transcripts for inv in t.tool_invocations)
    return outcome.usage.total.wall_time + tools


def evaluate_instance(instance: BenchmarkInstance, deps: RepairDeps, config: BenchConfig,
                      run_root: Path | None = None) -> BenchRow:
    task = RepairTask.from_instance(instance)
    try:
        if config.mode == "zero-shot":
            outcome = repair_zero_shot(task, deps.fix_provider, config.repair)
        else:
            outcome = repair(task, deps, config.repair)
    except RepairFailed as exc:
        logger.warning("%s: repair failed: %s", instance.instance_id, exc)
        if run_root is not None:
            persist_run(exc.partial, run_root / instance.instance_id, extra=config.manifest_extra)
        return BenchRow(instance.instance_id, False, False, False, False, exc.partial.attempts,
                        exc.partial.usage.total.cost, _outcome_time(exc.partial),
                        TestStatus.EXECUTION_ERROR.value, error=str(exc))
    except (AgentFixError, ValueError) as exc:
        logger.warning("%s: %s", instance.instance_id, exc)
        return BenchRow(instance.instance_id, False, False, False, False, 0, 0.0, 0.0,
                        TestStatus.EXECUTION_ERROR.value, error=f"{type(exc).__name__}: {exc}")

    candidate = outcome.final_candidate.source
    try:
        result = run_tests(candidate, instance, config.runner)
    except SandboxSetupError as exc:
        status, resolved, error = TestStatus.EXECUTION_ERROR, False, str(exc)
    else:
        status, resolved, error = result.status, result.resolved, None
    loc = score_localization(instance.buggy_source, candidate, instance.gold_source, instance)
    if run_root is not None:
        persist_run(outcome, run_root / instance.instance_id,
                    extra={**config.manifest_extra, "test_status": status.value})
    return BenchRow(
        instance_id=instance.instance_id, resolved=resolved,
        line_hit=loc.line_hit, function_hit=loc.function_hit, component_hit=loc.component_hit,
        attempts=outcome.attempts, cost=outcome.usage.total.cost, time=_outcome_time(outcome),
        status=status.value, component_fallback=loc.component_fallback, error=error,
    )


def load_corpus(corpus_dir: Path | str) -> list[BenchmarkInstance]:
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise CorpusInvalid(f"{corpus_dir} is not a directory")
    report = validate_corpus(corpus_dir)
    if report.errors:
        raise CorpusInvalid("; ".join(f"{name}: {msg}" for name, msg in report.errors))
    if not report.instances:
        raise EmptyCorpus(f"no instances under {corpus_dir}")
    return report.instances


def gold_sanity(instances, runner: RunnerConfig) -> list[str]:
    """Ids of instances whose gold fix does not pass its own test."""
    return [inst.instance_id for inst in instances
            if not run_tests(inst.gold_source, inst, runner).resolved]


def evaluate_corpus(corpus_dir: Path | str, deps_factory: DepsFactory,
                    config: BenchConfig | None = None) -> BenchReport:
    config = config or BenchConfig()
    instances = load_corpus(corpus_dir)
    if config.gold_sanity:
        broken = gold_sanity(instances, config.runner)
        if broken:
            raise CorpusInvalid(f"gold fixes fail their tests: {', '.join(broken)}")
    run_root = None
    if config.run_dir is not None:
        run_id = config.run_id or time.strftime("%Y%m%d-%H%M%S-") + uuid.uuid4().hex[:6]
        run_root = Path(config.run_dir) / run_id

    def one(instance: BenchmarkInstance) -> BenchRow:
        try:
            deps = deps_factory(instance)
        except (AgentFixError, OSError, ValueError) as exc:
            return BenchRow(instance.instance_id, False, False, False, False, 0, 0.0, 0.0,
                            TestStatus.EXECUTION_ERROR.value, error=f"deps: {exc}")
        return evaluate_instance(instance, deps, config, run_root)

    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        rows = list(pool.map(one, instances))
    report = BenchReport(rows, label=config.label,
                         config={"mode": config.mode, "repair": config.repair.to_dict()})
    if run_root is not None:
        report.save(run_root / "report.json")
    return report
