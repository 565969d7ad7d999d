"""Tool implementations for the fix and critic agents.

None of these execute subject code; evidence comes from the rule store, web
search, and static inspection of the sources.
"""

from __future__ import annotations

import ast
import keyword
import re

from ..diffcore import function_map, line_diff, render_unified
from ..errors import AgentFixError
from ..llm import ToolSchema
from ..model import RepairTask
from ..rulegen import RuleStore, StoreEmpty
from ..websearch import SearchClient, SearchError
from .react import ToolError

NO_CHANGES = "NO CHANGES"
NO_RESULTS = "NO RESULTS"
NO_EVIDENCE = "NO EVIDENCE FOUND"
FORMAT_PASS = "PASS"

DEFAULT_CANDIDATE_MODULES = ("buggy",)


class EmptyCode(ToolError):
    pass


def _params(**props: str) -> dict:
    return {
        "type": "object",
        "properties": {name: {"type": "string", "description": desc} for name, desc in props.items()},
        "required": list(props),
    }


SCHEMAS: dict[str, ToolSchema] = {
    s.name: s
    for s in (
        ToolSchema("list_fix_patterns",
                   "List the names of all fix patterns that have a repair rule. Returns names only.",
                   {"type": "object", "properties": {}, "required": []}),
        ToolSchema("fix_pattern_rule",
                   "Get the full repair rule for one fix pattern (by name or abbreviation).",
                   _params(pattern_name="Fix pattern name as returned by list_fix_patterns")),
        ToolSchema("web_search",
                   "Search the web for library documentation, migration notes or usage examples.",
                   _params(query="Search query")),
        ToolSchema("submit_fix_code",
                   "Submit the complete corrected program. Ends your turn.",
                   _params(code="Full source of the fixed program")),
        ToolSchema("code_compare",
                   "Show a unified diff between the buggy program and the proposed fix.",
                   {"type": "object", "properties": {}, "required": []}),
        ToolSchema("validate_api",
                   "Search documentation for a function, method or class to check it exists and how it is called.",
                   _params(symbol="API symbol or call expression, e.g. 'RetrievalQA.from_chain_type'")),
        ToolSchema("validate_format",
                   "Check that the proposed fix still defines every name the test file uses from it.",
                   {"type": "object", "properties": {}, "required": []}),
        ToolSchema("render_verdict",
                   "Give the final verdict on the proposed fix. Ends the review.",
                   {"type": "object",
                    "properties": {
                        "decision": {"type": "string", "enum": ["accept", "reject"]},
                        "reasoning": {"type": "string",
                                      "description": "Why; when rejecting, what must change"}},
                    "required": ["decision", "reasoning"]}),
    )
}


def tool_list_fix_patterns(store: RuleStore) -> list[str]:
    if not len(store):
        raise StoreEmpty("the rule store is empty")
    return store.display_names()


def tool_fix_pattern_rule(store: RuleStore, pattern_name: str) -> str:
    return store.get(pattern_name).rule_text


def render_results(results) -> str:
    if not results:
        return NO_RESULTS
    return "\n".join(f"{r.rank}. {r.title} - {r.url}: {r.snippet}" for r in results)


def tool_web_search(search: SearchClient, query: str, task: RepairTask) -> str:
    try:
        results = search.search(query, exclude_domains={task.source_site})
    except SearchError as exc:
        return f"ERROR: search failed: {exc}"
    except AgentFixError as exc:
        return f"ERROR: search unavailable: {exc}"
    return render_results(results)


def tool_code_compare(buggy: str, candidate: str) -> str:
    script = line_diff(buggy, candidate)
    if script.is_identity:
        return NO_CHANGES
    return render_unified(script, "buggy.py", "fixed.py", context=3)


def tool_validate_api(search: SearchClient, symbol: str, task: RepairTask) -> str:
    if not symbol or not symbol.strip():
        raise ToolError("validate_api needs a non-empty symbol")
    query = f"{symbol.strip()} documentation parameters"
    try:
        results = search.search(query, exclude_domains={task.source_site})
    except AgentFixError as exc:
        return f"ERROR: documentation search failed: {exc}"
    if not results:
        return NO_EVIDENCE
    return (f"Documentation evidence for `{symbol.strip()}` "
            f"(judge the usage yourself; this is not a verdict):\n" + render_results(results))


def referenced_names(test_source: str, modules=DEFAULT_CANDIDATE_MODULES) -> list[str] | None:
    """Names the test imports from, or reads as attributes of, the candidate module.

    Returns None when the test cannot be parsed.
    """
    try:
        tree = ast.parse(test_source)
    except SyntaxError:
        return None
    wanted = set(modules)
    names: list[str] = []
    aliases: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.module in wanted and node.level == 0:
            names.extend(a.name for a in node.names if a.name != "*")
        elif isinstance(node, ast.Import):
            for a in node.names:
                if a.name in wanted:
                    aliases.add(a.asname or a.name)
    if aliases:
        # ast.walk is breadth-first; sort attribute uses back into source order
        uses = sorted((node.lineno, node.col_offset, node.attr) for node in ast.walk(tree)
                      if isinstance(node, ast.Attribute) and isinstance(node.value, ast.Name)
                      and node.value.id in aliases)
        names.extend(attr for _, _, attr in uses)
    return list(dict.fromkeys(names))


_ASSIGN_RE = re.compile(r"^([A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*)\s*(?::|=(?!=))")
_CLASS_RE = re.compile(r"^class\s+([A-Za-z_]\w*)")
_IMPORT_RE = re.compile(r"^(?:from\s+\S+\s+)?import\s+(.+)$")


def defined_names(source: str) -> set[str]:
    """Names a module defines, by line grammar (no parsing of the candidate)."""
    names = {name for name, _, _ in function_map(source).spans}
    for line in source.splitlines():
        if not line or line[0].isspace():
            continue
        if m := _ASSIGN_RE.match(line):
            names.update(p.strip() for p in m.group(1).split(",") if not keyword.iskeyword(p.strip()))
        elif m := _CLASS_RE.match(line):
            names.add(m.group(1))
        elif m := _IMPORT_RE.match(line):
            for item in m.group(1).strip("() ").split(","):
                bits = item.split()
                if bits:
                    names.add(bits[-1].split(".")[0])
    return names


def tool_validate_format(candidate: str, test_source: str,
                         modules=DEFAULT_CANDIDATE_MODULES) -> str:
    if not candidate.strip() or not test_source.strip():
        raise ToolError("validate_format needs both the fixed code and the test code")
    needed = referenced_names(test_source, modules)
    if needed is None:
        return "FAIL\nviolation: the test file could not be parsed, so its contract is unknown"
    if not needed:
        return f"{FORMAT_PASS} (no contract detected: the test uses nothing from {', '.join(modules)})"
    have = defined_names(candidate)
    missing = [n for n in needed if n not in have]
    if not missing:
        return f"{FORMAT_PASS} (defines {', '.join(needed)})"
    return "FAIL\n" + "\n".join(f"missing: {name}" for name in missing)


def format_violations(finding: str) -> list[str]:
    if finding.startswith(FORMAT_PASS):
        return []
    return [line for line in finding.splitlines()[1:] if line.strip()]
