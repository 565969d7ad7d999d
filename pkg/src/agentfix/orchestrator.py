"""The bounded fix/critic loop and per-run persistence.

Run directory layout (one per repaired instance)::

    candidate.py        final candidate
    candidates/N.py     every submission, by iteration
    manifest.json       config + hashes, attempts, acceptance, usage, error
    transcripts.jsonl   one chat turn per line, tagged with its session
    verdicts.json
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agents.react import AgentTranscript, Termination, ToolInvocation
from .agents.roles import (
    Ablation,
    CandidateFix,
    Decision,
    NoFixProduced,
    RepairConfig,
    RepairDeps,
    Verdict,
    feedback_block,
    run_critic,
    run_fix_agent,
)
from .errors import AgentFixError, IoError
from .llm import ChatProvider, ChatTurn, ScriptedProvider, SessionUsage, UsageRecord, aggregate_usage, chat
from .model import RepairTask
from .templates import load_template

logger = logging.getLogger(__name__)

NO_CRITIC_REASON = "critic disabled (no-critic ablation); accepted without review"
ZERO_SHOT_REASON = "zero-shot mode; accepted without review"


@dataclass
class RepairOutcome:
    final_candidate: CandidateFix | None
    attempts: int
    verdicts: list[Verdict]
    accepted: bool
    transcripts: list[AgentTranscript]
    usage: SessionUsage
    wall_time: float
    candidates: list[CandidateFix] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    mode: str = "dual-agent"
    error: str | None = None

    def check(self) -> list[str]:
        """Invariant violations (empty for a well-formed, complete outcome)."""
        problems = []
        if self.error is None:
            if self.final_candidate is None:
                problems.append("no final candidate")
            max_it = self.config.get("max_iterations", 3)
            if not 1 <= self.attempts <= max_it:
                problems.append(f"attempts {self.attempts} outside 1..{max_it}")
            if len(self.verdicts) != self.attempts:
                problems.append("one verdict per attempt expected")
            if self.verdicts and self.accepted != self.verdicts[-1].accepted:
                problems.append("accepted must equal the last verdict")
            if self.candidates and self.final_candidate != self.candidates[-1]:
                problems.append("final candidate must be the last submission")
        for t in self.transcripts:
            problems.extend(f"{t.label}: {p}" for p in t.check())
        return problems


class RepairFailed(AgentFixError):
    """Wraps an error raised mid-loop; ``partial`` holds whatever was produced."""

    def __init__(self, cause: Exception, partial: RepairOutcome):
        super().__init__(f"{type(cause).__name__}: {cause}")
        self.cause = cause
        self.partial = partial


def repair(task: RepairTask, deps: RepairDeps, config: RepairConfig | None = None) -> RepairOutcome:
    """Fix, review, and retry on rejection, up to ``config.max_iterations`` times.

    The critic's reasoning on a rejection is handed to the next fix attempt.
    After the last allowed rejection the latest candidate is returned anyway
    with ``accepted=False``. Any error is re-raised as RepairFailed carrying
    the partial outcome.
    """
    config = config or RepairConfig()
    deps.check(config.ablation)
    started = time.perf_counter()
    transcripts: list[AgentTranscript] = []
    verdicts: list[Verdict] = []
    candidates: list[CandidateFix] = []
    feedback: str | None = None

    def outcome(error: str | None = None) -> RepairOutcome:
        usage = aggregate_usage(u for t in transcripts for u in t.usage)
        return RepairOutcome(
            final_candidate=candidates[-1] if candidates else None,
            attempts=len(candidates),
            verdicts=list(verdicts),
            accepted=bool(verdicts) and verdicts[-1].accepted,
            transcripts=list(transcripts),
            usage=usage,
            wall_time=time.perf_counter() - started,
            candidates=list(candidates),
            config=config.to_dict(),
            error=error,
        )

    try:
        for iteration in range(1, config.max_iterations + 1):
            try:
                candidate, fix_t = run_fix_agent(task, deps, config, iteration=iteration,
                                                 critic_feedback=feedback)
            except NoFixProduced as exc:
                if exc.transcript is not None:
                    transcripts.append(exc.transcript)
                raise
            transcripts.append(fix_t)
            candidates.append(candidate)

            if config.ablation is Ablation.NO_CRITIC:
                verdicts.append(Verdict(Decision.ACCEPT, NO_CRITIC_REASON, synthesized=True))
                break
            verdict, critic_t = run_critic(task.buggy_source, candidate, task.test_source,
                                           task, deps, config)
            transcripts.append(critic_t)
            verdicts.append(verdict)
            if verdict.accepted:
                break
            feedback = feedback_block(candidate, verdict)
    except AgentFixError as exc:
        partial_t = getattr(exc, "transcript", None)
        if partial_t is not None and (not transcripts or transcripts[-1] is not partial_t):
            transcripts.append(partial_t)
        raise RepairFailed(exc, outcome(f"{type(exc).__name__}: {exc}")) from exc
    return outcome()


_CODE_BLOCK_RE = re.compile(r"```(?:python|py)?[ \t]*\n(.*?)```", re.DOTALL)


def extract_code_block(text: str) -> str | None:
    blocks = _CODE_BLOCK_RE.findall(text)
    return max(blocks, key=len).rstrip("\n") + "\n" if blocks else None


def repair_zero_shot(task: RepairTask, provider: ChatProvider,
                     config: RepairConfig | None = None) -> RepairOutcome:
    """Baseline: one chat call, no tools; its code block is the candidate."""
    config = config or RepairConfig()
    started = time.perf_counter()
    system, user = load_template("zero_shot", config.prompt_dir).render(
        intent=task.intent, buggy_code=task.buggy_source)
    history = [ChatTurn("system", system), ChatTurn("user", user)]
    reply, usage = chat(provider, history)
    transcript = AgentTranscript(label="zero-shot-1", turns=history + [reply], usage=[usage],
                                 terminated_by=Termination.TOOL_TERMINAL)
    code = extract_code_block(reply.content)
    if code is None:
        transcript.terminated_by = Termination.ERROR
        err = NoFixProduced("zero-shot reply contained no code block", transcript)
        partial = RepairOutcome(None, 0, [], False, [transcript], aggregate_usage([usage]),
                                time.perf_counter() - started, config=config.to_dict(),
                                mode="zero-shot", error=str(err))
        raise RepairFailed(err, partial)
    candidate = CandidateFix(code, 1)
    return RepairOutcome(
        final_candidate=candidate, attempts=1,
        verdicts=[Verdict(Decision.ACCEPT, ZERO_SHOT_REASON, synthesized=True)],
        accepted=True, transcripts=[transcript], usage=aggregate_usage([usage]),
        wall_time=time.perf_counter() - started, candidates=[candidate],
        config=config.to_dict(), mode="zero-shot",
    )


# -- persistence ---------------------------------------------------------------

def _transcript_lines(t: AgentTranscript) -> list[dict]:
    agent, _, iteration = t.label.rpartition("-")
    lines = []
    usage = iter(t.usage)
    tool_times = {inv.request.call_id: inv.wall_time for inv in t.tool_invocations}
    tool_results = {inv.request.call_id: inv.result for inv in t.tool_invocations}
    for idx, turn in enumerate(t.turns):
        row: dict[str, Any] = {"session": t.label, "agent": agent,
                               "iteration": int(iteration) if iteration.isdigit() else None,
                               "index": idx, **turn.to_dict()}
        if turn.role == "assistant":
            row["usage"] = next(usage).to_dict()
        elif turn.role == "tool":
            row["wall_time"] = tool_times.get(turn.tool_call_id, 0.0)
            if tool_results.get(turn.tool_call_id) != turn.content:
                row["invocation_result"] = tool_results.get(turn.tool_call_id)
        lines.append(row)
    lines.append({"session": t.label, "kind": "end",
                  "terminated_by": t.terminated_by.value if t.terminated_by else None})
    return lines


def _read_transcripts(path: Path) -> list[AgentTranscript]:
    sessions: dict[str, AgentTranscript] = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        row = json.loads(raw)
        t = sessions.setdefault(row["session"], AgentTranscript(label=row["session"]))
        if row.get("kind") == "end":
            t.terminated_by = Termination(row["terminated_by"]) if row["terminated_by"] else None
            continue
        turn = ChatTurn.from_dict(row)
        t.turns.append(turn)
        if turn.role == "assistant":
            t.usage.append(UsageRecord.from_dict(row["usage"]))
        elif turn.role == "tool":
            request = next(c for prev in reversed(t.turns) if prev.role == "assistant"
                           for c in prev.tool_calls if c.call_id == turn.tool_call_id)
            result = row.get("invocation_result", turn.content)
            t.tool_invocations.append(ToolInvocation(request, result, float(row.get("wall_time", 0.0))))
    return list(sessions.values())


def persist_run(outcome: RepairOutcome, run_dir: Path | str, extra: dict | None = None) -> Path:
    run_dir = Path(run_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        if outcome.final_candidate is not None:
            (run_dir / "candidate.py").write_text(outcome.final_candidate.source, encoding="utf-8")
        if outcome.candidates:
            (run_dir / "candidates").mkdir(exist_ok=True)
            for c in outcome.candidates:
                (run_dir / "candidates" / f"{c.produced_at_iteration}.py").write_text(c.source, encoding="utf-8")
        with open(run_dir / "transcripts.jsonl", "w", encoding="utf-8") as fh:
            for t in outcome.transcripts:
                for row in _transcript_lines(t):
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        (run_dir / "verdicts.json").write_text(
            json.dumps([v.to_dict() for v in outcome.verdicts], indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8")
        cfg = RepairConfig.from_dict(outcome.config) if outcome.config else RepairConfig()
        manifest = {
            "format": 1,
            "mode": outcome.mode,
            "config": outcome.config,
            "config_hash": cfg.config_hash(),
            "ablation": cfg.ablation.value,
            "prompt_hashes": cfg.prompt_hashes(),
            "attempts": outcome.attempts,
            "accepted": outcome.accepted,
            "final_iteration": outcome.final_candidate.produced_at_iteration if outcome.final_candidate else None,
            "candidate_iterations": [c.produced_at_iteration for c in outcome.candidates],
            "usage": outcome.usage.to_dict(),
            "wall_time": outcome.wall_time,
            "error": outcome.error,
            **(extra or {}),
        }
        path = run_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot persist run to {run_dir}: {exc}") from exc
    return path


def load_run(run_dir: Path | str) -> RepairOutcome:
    run_dir = Path(run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        verdicts = [Verdict.from_dict(v) for v in
                    json.loads((run_dir / "verdicts.json").read_text(encoding="utf-8"))]
        transcripts = _read_transcripts(run_dir / "transcripts.jsonl")
        candidates = [
            CandidateFix((run_dir / "candidates" / f"{i}.py").read_text(encoding="utf-8"), i)
            for i in manifest["candidate_iterations"]
        ]
    except (OSError, KeyError, ValueError) as exc:
        raise IoError(f"cannot load run from {run_dir}: {exc}") from exc
    return RepairOutcome(
        final_candidate=candidates[-1] if candidates else None,
        attempts=manifest["attempts"],
        verdicts=verdicts,
        accepted=manifest["accepted"],
        transcripts=transcripts,
        usage=SessionUsage.from_dict(manifest["usage"]),
        wall_time=manifest["wall_time"],
        candidates=candidates,
        config=manifest["config"],
        mode=manifest.get("mode", "dual-agent"),
        error=manifest.get("error"),
    )


def _script_from(turns: list[tuple[ChatTurn, UsageRecord]]) -> list[dict]:
    return [
        {"content": turn.content,
         "tool_calls": [{"id": c.call_id, "name": c.tool_name, "arguments": c.arguments}
                        for c in turn.tool_calls],
         "usage": {"input_tokens": u.input_tokens, "output_tokens": u.output_tokens,
                   "wall_time": u.wall_time}}
        for turn, u in turns
    ]


def replay_scripts(source: Path | str) -> dict[str, list[dict]]:
    """Scripts for the fix and critic providers, from a recorded run or a script file.

    ``source`` is either a run directory containing ``transcripts.jsonl`` or a
    JSON file ``{"fix": [...], "critic": [...]}`` of scripted turns.
    """
    source = Path(source)
    if source.is_dir():
        script_file = source / "script.json"
        if script_file.is_file():
            return replay_scripts(script_file)
        sessions = _read_transcripts(source / "transcripts.jsonl")
        scripts: dict[str, list[dict]] = {"fix": [], "critic": [], "zero-shot": []}
        for t in sessions:
            agent = t.label.rpartition("-")[0]
            assistant = [turn for turn in t.turns if turn.role == "assistant"]
            scripts.setdefault(agent, []).extend(_script_from(list(zip(assistant, t.usage))))
        return scripts
    data = json.loads(source.read_text(encoding="utf-8"))
    return {"fix": list(data.get("fix", [])), "critic": list(data.get("critic", [])),
            "zero-shot": list(data.get("zero-shot", []))}


def replay_deps(source: Path | str, *, fix_config=None, critic_config=None, rules=None,
                search=None) -> RepairDeps:
    scripts = replay_scripts(source)
    return RepairDeps(
        fix_provider=ScriptedProvider(scripts["fix"] or scripts["zero-shot"], fix_config),
        critic_provider=ScriptedProvider(scripts["critic"], critic_config),
        rules=rules,
        search=search,
    )
