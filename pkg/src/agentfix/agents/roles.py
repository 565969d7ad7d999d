"""Fix agent and critic agent sessions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from enum import Enum

from ..errors import AgentFixError
from ..llm import ChatProvider, ToolSchema
from ..model import RepairTask
from ..rulegen import RuleStore
from ..templates import load_template
from ..websearch import SearchClient
from . import tools
from .react import AgentTranscript, Termination, ToolError, react_run


class NoFixProduced(AgentFixError):
    def __init__(self, message: str, transcript: AgentTranscript | None = None):
        super().__init__(message)
        self.transcript = transcript


class Ablation(str, Enum):
    NONE = "none"
    NO_FIX_RULES = "nfr"
    NO_WEB_SEARCH = "nws"
    NO_CRITIC = "nca"


FIX_TOOLS = ("list_fix_patterns", "fix_pattern_rule", "web_search", "submit_fix_code")
CRITIC_TOOLS = ("code_compare", "validate_api", "validate_format", "render_verdict")


def fix_tool_names(ablation: Ablation = Ablation.NONE) -> tuple[str, ...]:
    drop: set[str] = set()
    if ablation is Ablation.NO_FIX_RULES:
        drop = {"list_fix_patterns", "fix_pattern_rule"}
    elif ablation is Ablation.NO_WEB_SEARCH:
        drop = {"web_search"}
    return tuple(n for n in FIX_TOOLS if n not in drop)


def critic_tool_names(ablation: Ablation = Ablation.NONE) -> tuple[str, ...]:
    if ablation is Ablation.NO_CRITIC:
        return ()
    if ablation is Ablation.NO_WEB_SEARCH:
        # validate_api is backed by web search
        return tuple(n for n in CRITIC_TOOLS if n != "validate_api")
    return CRITIC_TOOLS


def fix_toolset(ablation: Ablation = Ablation.NONE) -> list[ToolSchema]:
    return [tools.SCHEMAS[n] for n in fix_tool_names(ablation)]


def critic_toolset(ablation: Ablation = Ablation.NONE) -> list[ToolSchema]:
    return [tools.SCHEMAS[n] for n in critic_tool_names(ablation)]


@dataclass
class RepairConfig:
    max_iterations: int = 3
    fix_step_budget: int = 12
    critic_step_budget: int = 8
    ablation: Ablation = Ablation.NONE
    critic_sees_intent: bool = True
    candidate_modules: tuple[str, ...] = tools.DEFAULT_CANDIDATE_MODULES
    prompt_dir: str | None = None

    def __post_init__(self):
        self.ablation = Ablation(self.ablation)
        if not 1 <= self.max_iterations:
            raise ValueError("max_iterations must be >= 1")
        self.candidate_modules = tuple(self.candidate_modules)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ablation"] = self.ablation.value
        data["candidate_modules"] = list(self.candidate_modules)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RepairConfig":
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def prompt_hashes(self) -> dict[str, str]:
        return {name: load_template(name, self.prompt_dir).sha256 for name in ("fix_agent", "critic")}


@dataclass
class RepairDeps:
    fix_provider: ChatProvider
    critic_provider: ChatProvider | None = None
    rules: RuleStore | None = None
    search: SearchClient | None = None

    def check(self, ablation: Ablation) -> None:
        if ablation is not Ablation.NO_FIX_RULES and self.rules is None:
            raise ValueError("fix rules are enabled but no rule store was provided")
        if ablation is not Ablation.NO_WEB_SEARCH and self.search is None:
            raise ValueError("web search is enabled but no search client was provided")
        if ablation is not Ablation.NO_CRITIC and self.critic_provider is None:
            raise ValueError("the critic is enabled but no critic provider was provided")


@dataclass(frozen=True)
class CandidateFix:
    source: str
    produced_at_iteration: int

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("candidate source must be non-empty")
        if self.produced_at_iteration < 1:
            raise ValueError("iterations are numbered from 1")


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    reasoning: str
    findings: tuple[tuple[str, str], ...] = ()
    synthesized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "decision", Decision(self.decision))
        if self.decision is Decision.REJECT and not self.reasoning.strip():
            raise ValueError("a rejection needs reasoning")

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT

    def to_dict(self) -> dict:
        return {
            "decision": self.decision.value,
            "reasoning": self.reasoning,
            "findings": [list(f) for f in self.findings],
            "synthesized": self.synthesized,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(Decision(data["decision"]), data["reasoning"],
                   tuple((a, b) for a, b in data.get("findings", [])), bool(data.get("synthesized")))


def feedback_block(previous: CandidateFix | None, verdict: Verdict | None) -> str:
    if verdict is None:
        return "None, this is the first attempt."
    parts = []
    if previous is not None:
        parts.append(f"Your previous fix (attempt {previous.produced_at_iteration}):\n"
                     f"```python\n{previous.source}\n```")
    parts.append(f"The reviewer rejected it with this reasoning:\n{verdict.reasoning}")
    for tool_name, finding in verdict.findings:
        if tool_name == "validate_format":
            parts.append(f"Format check:\n{finding}")
    parts.append("Analyse the reasoning and submit a corrected version.")
    return "\n\n".join(parts)


def run_fix_agent(task: RepairTask, deps: RepairDeps, config: RepairConfig, *,
                  iteration: int = 1, critic_feedback: str | None = None) -> tuple[CandidateFix, AgentTranscript]:
    names = fix_tool_names(config.ablation)
    submitted: list[str] = []

    def submit(args: dict) -> str:
        code = args.get("code", "")
        if not isinstance(code, str) or not code.strip():
            raise tools.EmptyCode("submit_fix_code needs the full, non-empty program")
        if submitted:
            raise ToolError("a fix was already submitted in this session")
        submitted.append(code)
        return "Fix recorded. It will be reviewed."

    handlers = {
        "list_fix_patterns": lambda args: "\n".join(tools.tool_list_fix_patterns(deps.rules)),
        "fix_pattern_rule": lambda args: tools.tool_fix_pattern_rule(deps.rules, str(args["pattern_name"])),
        "web_search": lambda args: tools.tool_web_search(deps.search, str(args["query"]), task),
        "submit_fix_code": submit,
    }
    template = load_template("fix_agent", config.prompt_dir)
    system, user = template.render(
        intent=task.intent, buggy_code=task.buggy_source,
        critic_feedback=critic_feedback or feedback_block(None, None),
        test_code=task.test_source,
    )
    transcript = react_run(
        deps.fix_provider, system, user,
        tools=fix_toolset(config.ablation),
        dispatch={n: handlers[n] for n in names},
        step_budget=config.fix_step_budget,
        terminal={"submit_fix_code"},
        label=f"fix-{iteration}",
    )
    if transcript.terminated_by is not Termination.TOOL_TERMINAL or not submitted:
        raise NoFixProduced(f"fix agent used {config.fix_step_budget} steps without submitting", transcript)
    return CandidateFix(submitted[0], iteration), transcript


CRITIC_BUDGET_REASON = "critic budget exhausted"


def run_critic(buggy: str, candidate: CandidateFix, test_source: str, task: RepairTask,
               deps: RepairDeps, config: RepairConfig) -> tuple[Verdict, AgentTranscript]:
    if not candidate.source.strip():
        raise ValueError("candidate must be non-empty")
    names = critic_tool_names(config.ablation)
    if not names:
        raise ValueError("the critic is disabled under this ablation")
    findings: list[tuple[str, str]] = []
    violations: list[str] = []
    decided: list[tuple[str, str]] = []

    def validate_api(args: dict) -> str:
        out = tools.tool_validate_api(deps.search, str(args["symbol"]), task)
        findings.append(("validate_api", out))
        return out

    def validate_format(args: dict) -> str:
        out = tools.tool_validate_format(candidate.source, test_source, config.candidate_modules)
        findings.append(("validate_format", out))
        violations.extend(tools.format_violations(out))
        return out

    def render_verdict(args: dict) -> str:
        decision = str(args.get("decision", "")).strip().lower()
        reasoning = str(args.get("reasoning", "")).strip()
        if decision not in ("accept", "reject"):
            raise ToolError("decision must be 'accept' or 'reject'")
        if decision == "reject" and not reasoning:
            raise ToolError("a rejection must explain what is wrong")
        decided.append((decision, reasoning))
        return "Verdict recorded."

    handlers = {
        "code_compare": lambda args: tools.tool_code_compare(buggy, candidate.source),
        "validate_api": validate_api,
        "validate_format": validate_format,
        "render_verdict": render_verdict,
    }
    template = load_template("critic", config.prompt_dir)
    system, user = template.render(
        intent=task.intent if config.critic_sees_intent else "(not provided)",
        buggy_code=buggy, candidate_code=candidate.source, test_code=test_source,
    )
    transcript = react_run(
        deps.critic_provider, system, user,
        tools=critic_toolset(config.ablation),
        dispatch={n: handlers[n] for n in names},
        step_budget=config.critic_step_budget,
        terminal={"render_verdict"},
        label=f"critic-{candidate.produced_at_iteration}",
    )
    if not decided:
        return Verdict(Decision.REJECT, CRITIC_BUDGET_REASON, tuple(findings)), transcript

    decision, reasoning = decided[-1]
    if violations and decision == "accept":
        # format violations mean the test cannot run unchanged: never accept
        reasoning = ("Accept overridden: the fixed code breaks the test file's contract ("
                     + "; ".join(violations) + ")." + (f" Critic reasoning was: {reasoning}" if reasoning else ""))
        decision = "reject"
    return Verdict(Decision(decision), reasoning, tuple(findings)), transcript
