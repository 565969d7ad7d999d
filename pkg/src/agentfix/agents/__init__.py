"""ReAct engine plus the fix and critic agents."""

from .react import AgentTranscript, Termination, ToolError, ToolInvocation, UnknownTool, react_run
from .roles import (
    Ablation,
    CandidateFix,
    Decision,
    NoFixProduced,
    RepairConfig,
    RepairDeps,
    Verdict,
    critic_tool_names,
    critic_toolset,
    fix_tool_names,
    fix_toolset,
    run_critic,
    run_fix_agent,
)

__all__ = [
    "Ablation", "AgentTranscript", "CandidateFix", "Decision", "NoFixProduced", "RepairConfig",
    "RepairDeps", "Termination", "ToolError", "ToolInvocation", "UnknownTool", "Verdict",
    "critic_tool_names", "critic_toolset", "fix_tool_names", "fix_toolset", "react_run",
    "run_critic", "run_fix_agent",
]
