"""Tool-calling ReAct loop.

Each step is one chat call. Every tool call the model makes is answered with a
``tool`` turn carrying the same call id before the next chat call, so
transcripts are always well formed even when a session stops early.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

from ..errors import AgentFixError
from ..llm import ChatProvider, ChatTurn, ToolCallRequest, ToolSchema, UsageRecord, chat, validate_session

logger = logging.getLogger(__name__)

MAX_UNKNOWN_TOOL_RETRIES = 2


class ToolError(AgentFixError):
    """Raised by a tool handler; the message is shown to the model, the session continues."""


class UnknownTool(AgentFixError):
    pass


class Termination(str, Enum):
    TOOL_TERMINAL = "ToolTerminal"
    STEP_BUDGET = "StepBudget"
    ERROR = "Error"


@dataclass(frozen=True)
class ToolInvocation:
    request: ToolCallRequest
    result: str
    wall_time: float

    def to_dict(self) -> dict:
        return {"request": self.request.to_dict(), "result": self.result, "wall_time": self.wall_time}


@dataclass
class AgentTranscript:
    label: str = ""
    turns: list[ChatTurn] = field(default_factory=list)
    tool_invocations: list[ToolInvocation] = field(default_factory=list)
    usage: list[UsageRecord] = field(default_factory=list)
    terminated_by: Termination | None = None

    def tool_names(self) -> list[str]:
        return [inv.request.tool_name for inv in self.tool_invocations]

    def text(self) -> str:
        """All turn contents, for substring assertions and debugging."""
        return "\n".join(t.content for t in self.turns)

    def check(self) -> list[str]:
        problems = validate_session(self.turns)
        calls = [c.call_id for t in self.turns if t.role == "assistant" for c in t.tool_calls]
        if [inv.request.call_id for inv in self.tool_invocations] != calls:
            problems.append("tool_invocations do not follow turn order")
        return problems


ToolHandler = Callable[[dict], str]


def _missing_arguments(schema: ToolSchema, args: dict) -> list[str]:
    return [name for name in schema.required if name not in args]


def react_run(
    provider: ChatProvider,
    system_prompt: str,
    user_payload: str,
    tools: Sequence[ToolSchema],
    dispatch: Mapping[str, ToolHandler],
    step_budget: int,
    terminal: frozenset[str] | set[str] = frozenset(),
    label: str = "",
) -> AgentTranscript:
    """Alternate chat calls and tool executions until a terminal tool succeeds.

    Handlers raising ToolError (or any AgentFixError) produce an ``ERROR:``
    observation. Calls to names outside the schema are reported back to the
    model up to twice; the third such call raises UnknownTool. If the
    provider fails, the partial transcript is attached to the exception as
    ``exc.transcript``.
    """
    names = {t.name for t in tools}
    if names != set(dispatch):
        raise ValueError(f"tools and dispatch disagree: {sorted(names ^ set(dispatch))}")
    if step_budget < 1:
        raise ValueError("step_budget must be >= 1")
    schemas = {t.name: t for t in tools}

    transcript = AgentTranscript(label=label)
    if system_prompt:
        transcript.turns.append(ChatTurn("system", system_prompt))
    transcript.turns.append(ChatTurn("user", user_payload))
    unknown_calls = 0

    for _step in range(step_budget):
        try:
            reply, usage = chat(provider, transcript.turns, tools)
        except AgentFixError as exc:
            transcript.terminated_by = Termination.ERROR
            exc.transcript = transcript
            raise
        transcript.turns.append(reply)
        transcript.usage.append(usage)

        if not reply.tool_calls:
            hint = ", ".join(sorted(terminal)) or "a tool"
            transcript.turns.append(ChatTurn(
                "user", f"No tool was called. Continue, and finish by calling {hint}."))
            continue

        finished = False
        for call in reply.tool_calls:
            started = time.perf_counter()
            if finished:
                result = "SKIPPED: the session already ended with a terminal tool call."
            elif call.tool_name not in schemas:
                unknown_calls += 1
                if unknown_calls > MAX_UNKNOWN_TOOL_RETRIES:
                    transcript.turns.append(ChatTurn("tool", f"ERROR: unknown tool {call.tool_name!r}",
                                                     tool_call_id=call.call_id))
                    transcript.tool_invocations.append(ToolInvocation(call, "ERROR: unknown tool", 0.0))
                    _close_pending(transcript, reply, call)
                    transcript.terminated_by = Termination.ERROR
                    exc = UnknownTool(f"model called unknown tool {call.tool_name!r} "
                                      f"{unknown_calls} times")
                    exc.transcript = transcript
                    raise exc
                result = (f"ERROR: unknown tool {call.tool_name!r}. "
                          f"Available tools: {', '.join(sorted(schemas))}.")
            elif missing := _missing_arguments(schemas[call.tool_name], call.arguments):
                result = f"ERROR: missing required argument(s): {', '.join(missing)}"
            else:
                try:
                    result = dispatch[call.tool_name](call.arguments)
                    if call.tool_name in terminal:
                        finished = True
                except AgentFixError as exc:
                    result = f"ERROR: {exc}"
            elapsed = time.perf_counter() - started
            if not isinstance(result, str):
                result = json.dumps(result)
            transcript.turns.append(ChatTurn("tool", result, tool_call_id=call.call_id))
            transcript.tool_invocations.append(ToolInvocation(call, result, elapsed))
        if finished:
            transcript.terminated_by = Termination.TOOL_TERMINAL
            return transcript

    transcript.terminated_by = Termination.STEP_BUDGET
    return transcript


def _close_pending(transcript: AgentTranscript, reply: ChatTurn, failed: ToolCallRequest) -> None:
    """Answer calls after ``failed`` in the same turn so pairing holds on hard errors."""
    later = False
    for call in reply.tool_calls:
        if later:
            msg = "SKIPPED: session aborted."
            transcript.turns.append(ChatTurn("tool", msg, tool_call_id=call.call_id))
            transcript.tool_invocations.append(ToolInvocation(call, msg, 0.0))
        if call is failed:
            later = True
