"""Fix-pattern rule synthesis.

Stage one turns every annotated post into a one-line summary; stage two
folds all summaries of a pattern into a single rule. Summaries that do not
fit one synthesis prompt are split into chunks, each chunk yields a partial
rule, and the partial rules are merged (recursively if needed).
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AgentFixError, IoError
from .llm import ChatProvider, ChatTurn, UsageRecord, chat
from .model import AnnotatedFix, FixPatternId, FixPatternRule
from .templates import load_template

logger = logging.getLogger(__name__)


class EmptyOutput(AgentFixError):
    pass


class PatternMismatch(AgentFixError):
    pass


@dataclass(frozen=True)
class PostSummary:
    post_id: str
    pattern: FixPatternId
    summary: str

    def __post_init__(self):
        if not self.summary.strip() or "\n" in self.summary or "\r" in self.summary:
            raise ValueError("summary must be a single non-empty line")


@dataclass(frozen=True)
class GeneratedIntent:
    text: str
    unverified: bool = True


def first_line(text: str, what: str) -> str:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyOutput(f"{what}: provider returned no text")
    if len(lines) > 1:
        logger.warning("%s: provider returned %d lines; keeping the first", what, len(lines))
    return lines[0]


def _ask(provider: ChatProvider, template: str, prompt_dir=None, **values) -> tuple[str, UsageRecord]:
    system, user = load_template(template, prompt_dir).render(**values)
    history = [ChatTurn("system", system), ChatTurn("user", user)] if system else [ChatTurn("user", user)]
    turn, usage = chat(provider, history)
    return turn.content, usage


def summarize_post(fix: AnnotatedFix, provider: ChatProvider, prompt_dir=None) -> PostSummary:
    if not fix.rationale.strip():
        raise ValueError(f"post {fix.post_id} has no rationale")
    applied = fix.fixed_code if fix.fixed_code else "(fix not recorded as code; see rationale)"
    text, _ = _ask(provider, "summarize_post", prompt_dir,
                   pattern_name=fix.pattern.display_name, title=fix.title, body=fix.body,
                   applied_fix=applied, rationale=fix.rationale)
    return PostSummary(fix.post_id, fix.pattern, first_line(text, f"summary of post {fix.post_id}"))


def estimate_tokens(text: str) -> int:
    return len(text) // 4 + 1


def _chunks(lines: Sequence[str], budget: int) -> list[list[str]]:
    chunks: list[list[str]] = [[]]
    used = 0
    for line in lines:
        cost = estimate_tokens(line)
        if chunks[-1] and used + cost > budget:
            chunks.append([])
            used = 0
        chunks[-1].append(line)
        used += cost
    return chunks


def synthesize_rule(pattern: FixPatternId, summaries: Sequence[PostSummary], provider: ChatProvider,
                    token_budget: int = 6000, prompt_dir=None,
                    generated_at: str | None = None) -> FixPatternRule:
    if not summaries:
        raise ValueError(f"no summaries for {pattern.name}")
    for s in summaries:
        if s.pattern is not pattern:
            raise PatternMismatch(f"summary of post {s.post_id} is {s.pattern.name}, expected {pattern.name}")
    ordered = sorted(summaries, key=lambda s: s.post_id)
    bullets = [f"- {s.summary}" for s in ordered]

    def one(template: str, key: str, lines: Sequence[str]) -> str:
        text, _ = _ask(provider, template, prompt_dir, pattern_name=pattern.display_name,
                       pattern_id=pattern.name, **{key: "\n".join(lines)})
        if not text.strip():
            raise EmptyOutput(f"rule for {pattern.name}: provider returned no text")
        return text.strip()

    parts = [one("synthesize_rule", "summaries", chunk) for chunk in _chunks(bullets, token_budget)]
    while len(parts) > 1:
        numbered = [f"[{i}] {p}" for i, p in enumerate(parts, 1)]
        parts = [one("merge_rules", "partial_rules", chunk) for chunk in _chunks(numbered, token_budget)]
    rule = FixPatternRule(pattern, parts[0], source_summary_count=len(summaries))
    if generated_at is not None:
        rule = replace(rule, generated_at=generated_at)
    return rule


def generate_intent(title: str, body: str, provider: ChatProvider, prompt_dir=None) -> GeneratedIntent:
    """One-line statement of what the user wants; always needs human sign-off."""
    if not title.strip():
        raise ValueError("title must be non-empty")
    text, _ = _ask(provider, "intent", prompt_dir, title=title, body=body)
    return GeneratedIntent(first_line(text, "intent"))


class StoreEmpty(AgentFixError):
    pass


class UnknownPattern(AgentFixError):
    pass


class RuleMissing(AgentFixError):
    pass


class RuleStore:
    """One rule per pattern, persisted as ``<dir>/<ID>.json``."""

    def __init__(self, rules: Iterable[FixPatternRule] = ()):
        self._rules: dict[FixPatternId, FixPatternRule] = {}
        for rule in rules:
            self.add(rule)

    def add(self, rule: FixPatternRule) -> None:
        self._rules[rule.pattern] = rule

    def __len__(self) -> int:
        return len(self._rules)

    def __contains__(self, pattern: FixPatternId) -> bool:
        return pattern in self._rules

    def rules(self) -> list[FixPatternRule]:
        return [self._rules[p] for p in FixPatternId if p in self._rules]

    def display_names(self) -> list[str]:
        return [r.pattern.display_name for r in self.rules()]

    def get(self, name: str) -> FixPatternRule:
        try:
            pattern = FixPatternId.lookup(name)
        except KeyError:
            raise UnknownPattern(f"{name!r} is not a known fix pattern") from None
        if pattern not in self._rules:
            raise RuleMissing(f"no rule has been generated for {pattern.display_name}")
        return self._rules[pattern]

    def save(self, directory: Path | str) -> list[Path]:
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            paths = []
            for rule in self.rules():
                path = directory / f"{rule.pattern.name}.json"
                path.write_text(json.dumps(rule.to_dict(), indent=2, ensure_ascii=False) + "\n",
                                encoding="utf-8")
                paths.append(path)
        except OSError as exc:
            raise IoError(f"cannot write rules to {directory}: {exc}") from exc
        return paths

    @classmethod
    def load(cls, directory: Path | str) -> "RuleStore":
        directory = Path(directory)
        store = cls()
        for pattern in FixPatternId:
            path = directory / f"{pattern.name}.json"
            if path.is_file():
                store.add(FixPatternRule.from_dict(json.loads(path.read_text(encoding="utf-8"))))
        return store


@dataclass
class PipelineResult:
    store: RuleStore
    summaries: dict[FixPatternId, list[PostSummary]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    absent: list[FixPatternId] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_rule_pipeline(corpus: Sequence[AnnotatedFix], summarizer: ChatProvider,
                      synthesizer: ChatProvider | None = None, concurrency: int = 4,
                      token_budget: int = 6000, prompt_dir=None,
                      generated_at: str | None = None) -> PipelineResult:
    """Summarize every post, then synthesize one rule per pattern that has posts.

    Patterns with no posts are listed in ``absent``; per-pattern failures are
    collected rather than raised so one bad pattern does not sink the run.
    """
    synthesizer = synthesizer or summarizer
    by_pattern: dict[FixPatternId, list[AnnotatedFix]] = defaultdict(list)
    for fix in corpus:
        by_pattern[fix.pattern].append(fix)
    result = PipelineResult(store=RuleStore())
    result.absent = [p for p in FixPatternId if p not in by_pattern]
    for p in result.absent:
        logger.warning("no posts for %s; no rule will be generated", p.name)

    ordered_posts = sorted(corpus, key=lambda f: (list(FixPatternId).index(f.pattern), f.post_id))

    def summarize(fix: AnnotatedFix):
        try:
            return fix, summarize_post(fix, summarizer, prompt_dir), None
        except AgentFixError as exc:
            return fix, None, exc

    # scripted providers are consumed in order, so keep them sequential
    workers = 1 if hasattr(summarizer, "remaining") else max(1, concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(summarize, ordered_posts))

    failed_patterns: set[FixPatternId] = set()
    for fix, summary, exc in outcomes:
        if exc is not None:
            result.failures[fix.pattern.name] = f"summary of post {fix.post_id}: {exc}"
            failed_patterns.add(fix.pattern)
        else:
            result.summaries.setdefault(fix.pattern, []).append(summary)

    for pattern in FixPatternId:
        if pattern not in by_pattern or pattern in failed_patterns:
            continue
        try:
            rule = synthesize_rule(pattern, result.summaries[pattern], synthesizer,
                                   token_budget=token_budget, prompt_dir=prompt_dir,
                                   generated_at=generated_at)
        except AgentFixError as exc:
            result.failures[pattern.name] = str(exc)
            continue
        result.store.add(rule)
    return result
