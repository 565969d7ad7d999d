"""Localization scoring at line, function and agent-component granularity."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ..diffcore import changed_lines, function_map
from ..model import AgentComponent, BenchmarkInstance


@dataclass(frozen=True)
class LocalizationReport:
    line_hit: bool
    function_hit: bool
    component_hit: bool
    predicted_lines: frozenset[int]
    gold_lines: frozenset[int]
    component_fallback: bool = False  # no regions: component_hit mirrors function_hit

    def __post_init__(self):
        if not self.predicted_lines and (self.line_hit or self.function_hit or self.component_hit):
            raise ValueError("an empty prediction cannot hit anything")

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.line_hit, self.function_hit, self.component_hit


def majority_components(lines, regions) -> set[AgentComponent]:
    """Components with the most predicted lines inside regions (all tied leaders)."""
    votes: Counter[AgentComponent] = Counter()
    for line in lines:
        line = max(line, 1)  # prepend anchor 0 belongs with line 1
        for region in regions:
            if line in region:
                votes[region.component] += 1
                break
    if not votes:
        return set()
    top = max(votes.values())
    return {c for c, n in votes.items() if n == top}


def score_localization(buggy: str, candidate: str, gold: str,
                       instance: BenchmarkInstance) -> LocalizationReport:
    predicted = changed_lines(buggy, candidate)
    expected = changed_lines(buggy, gold)
    if not predicted:
        return LocalizationReport(False, False, False, predicted, expected,
                                  component_fallback=not instance.component_regions)
    line_hit = bool(predicted & expected)
    fmap = function_map(buggy)
    function_hit = bool(fmap.names(predicted) & fmap.names(expected))
    if instance.component_regions:
        component_hit = instance.annotated_component in majority_components(
            predicted, instance.component_regions)
        fallback = False
    else:
        component_hit, fallback = function_hit, True
    return LocalizationReport(line_hit, function_hit, component_hit, predicted, expected, fallback)
