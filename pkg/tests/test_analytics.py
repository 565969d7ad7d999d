from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentfix.analytics import (
    EmptyCorpus,
    EmptyInput,
    LengthMismatch,
    cohens_kappa,
    pattern_distribution,
)
from agentfix.model import AgentComponent, AnnotatedFix, FixPatternId, FixSource


def entry(pattern, source=FixSource.STACK_OVERFLOW, component=AgentComponent.TOOL, framework="langchain"):
    return AnnotatedFix(source, "p", "t", "b", "r", FixPatternId[pattern], component, framework)


def test_distribution_counts_and_order():
    table = pattern_distribution([entry("AOO"), entry("CV"), entry("AOO")], "pattern")
    assert [(r.key, r.count, round(r.share, 4)) for r in table.rows] == [("AOO", 2, 0.6667), ("CV", 1, 0.3333)]
    assert table.to_csv().splitlines()[0] == "key,count,share"


def test_distribution_ties_by_key_and_groups():
    corpus = [entry("CV", FixSource.GITHUB_ISSUE), entry("ANA", FixSource.STACK_OVERFLOW,
                                                          AgentComponent.MEMORY, "")]
    assert [r.key for r in pattern_distribution(corpus, "pattern").rows] == ["ANA", "CV"]
    assert [r.key for r in pattern_distribution(corpus, "source").rows] == ["GitHubIssue", "StackOverflow"]
    assert pattern_distribution(corpus, "framework").share_of("(unspecified)") == 0.5
    assert pattern_distribution(corpus, "component").total == 2


def test_distribution_errors():
    with pytest.raises(EmptyCorpus):
        pattern_distribution([], "pattern")
    with pytest.raises(ValueError):
        pattern_distribution([entry("CV")], "colour")


_patterns = st.lists(st.sampled_from(["AOO", "CV", "ANA", "FS"]), min_size=1, max_size=40)


@given(_patterns, st.randoms())
def test_distribution_invariants(patterns, rnd):
    corpus = [entry(p) for p in patterns]
    table = pattern_distribution(corpus)
    assert sum(r.count for r in table.rows) == table.total == len(corpus)
    assert math.isclose(sum(r.share for r in table.rows), 1.0, abs_tol=1e-9)
    shuffled = corpus[:]
    rnd.shuffle(shuffled)
    assert pattern_distribution(shuffled) == table


def test_kappa_examples():
    assert cohens_kappa(["x", "y"], ["x", "y"]) == 1.0
    assert cohens_kappa(list("AABB"), list("ABAB")) == 0.0
    assert cohens_kappa(list("AAAB"), list("AABB")) == 0.5
    assert cohens_kappa(["A", "A"], ["A", "A"]) == 1.0  # degenerate marginals


def test_kappa_errors():
    with pytest.raises(LengthMismatch):
        cohens_kappa(["a"], [])
    with pytest.raises(EmptyInput):
        cohens_kappa([], [])


_labels = st.integers(1, 10).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from("ABC"), min_size=n, max_size=n),
    st.lists(st.sampled_from("ABC"), min_size=n, max_size=n)))


@given(_labels, st.permutations("ABC"))
def test_kappa_relabel_invariant(pair, perm):
    a, b = pair
    mapping = dict(zip("ABC", perm))
    assert math.isclose(cohens_kappa(a, b), cohens_kappa([mapping[x] for x in a], [mapping[x] for x in b]),
                        abs_tol=1e-12)
    assert -1.0 <= cohens_kappa(a, b) <= 1.0


def test_kappa_matches_sklearn_when_available():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = random.Random(3)
    for _ in range(200):
        n = rng.randint(2, 10)
        a = [rng.choice("ABC") for _ in range(n)]
        b = [rng.choice("ABC") for _ in range(n)]
        if len(set(a) | set(b)) == 1:
            continue
        assert math.isclose(cohens_kappa(a, b), metrics.cohen_kappa_score(a, b), abs_tol=1e-12)
