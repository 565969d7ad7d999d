from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentfix.model import (
    AgentComponent,
    AnnotatedFix,
    BenchmarkInstance,
    ComponentRegion,
    ComponentUnknown,
    FixPatternId,
    FixPatternRule,
    ManifestInvalid,
    MissingFile,
    RepairTask,
    load_annotated_corpus,
    parse_instance_manifest,
    parse_requirements,
    validate_corpus,
    write_instance,
)
from synth import make_instance

IDS = ("ANA RA AOPC CV IL AOO ROO CDT CP FS CR UDMo CER CF AEH FAN CPV CID AID UDM CPO MCTDS FDA").split()


def test_taxonomy_cardinalities():
    assert [p.name for p in FixPatternId] == IDS
    assert len({p.display_name for p in FixPatternId}) == 23
    assert len(AgentComponent) == 4
    assert FixPatternId.AOO.display_name == "Addition of Operations"


@pytest.mark.parametrize("pattern", list(FixPatternId))
def test_pattern_lookup_round_trip(pattern):
    assert FixPatternId.lookup(pattern.name) is pattern
    assert FixPatternId.lookup(pattern.display_name.upper()) is pattern


def test_lookup_unknown():
    with pytest.raises(KeyError):
        FixPatternId.lookup("Rewrite Everything")


def test_component_parse():
    assert AgentComponent.parse("tool") is AgentComponent.TOOL
    with pytest.raises(ComponentUnknown):
        AgentComponent.parse("Embedding")


def _write_fixture(root, **meta_overrides):
    meta = {"id": "x1", "intent": "answer questions from a PDF", "component": "Tool",
            "source_site": "stackoverflow.com", "framework": "langchain"}
    meta.update(meta_overrides)
    root.mkdir(parents=True, exist_ok=True)
    (root / "instance.json").write_text(json.dumps(meta))
    (root / "buggy.py").write_text("a = 1\nb = 2\n")
    (root / "fixed.py").write_text("a = 1\nb = 3\n")
    (root / "test.py").write_text("import buggy\n")
    (root / "requirements.txt").write_text(
        "langchain==0.1.0\nopenai>=1.0\n# comment\nfaiss-cpu==1.7.4\ntiktoken\n")
    (root / "README.md").write_text("run python test.py\n")
    return root


def test_parse_well_formed(tmp_path):
    inst = parse_instance_manifest(_write_fixture(tmp_path / "x1"))
    assert len(inst.requirements) == 4
    assert inst.requirements[1] == ("openai", ">=1.0")
    assert inst.annotated_component is AgentComponent.TOOL
    assert inst.subject_framework == "langchain"


def test_missing_test_file(tmp_path):
    root = _write_fixture(tmp_path / "x1")
    (root / "test.py").unlink()
    with pytest.raises(MissingFile) as info:
        parse_instance_manifest(root)
    assert info.value.which == "test"


def test_unknown_component(tmp_path):
    with pytest.raises(ComponentUnknown):
        parse_instance_manifest(_write_fixture(tmp_path / "x1", component="Embedding"))


@pytest.mark.parametrize("overrides, field", [
    ({"intent": "two\nlines"}, "intent"),
    ({"component_regions": [{"start": 1, "end": 9, "component": "Tool"}]}, "component_regions"),
    ({"component_regions": [{"start": 1, "end": 2, "component": "Tool"},
                            {"start": 2, "end": 2, "component": "Memory"}]}, "component_regions"),
    ({"source_site": ""}, "source_site"),
])
def test_manifest_invalid(tmp_path, overrides, field):
    with pytest.raises(ManifestInvalid) as info:
        parse_instance_manifest(_write_fixture(tmp_path / "x1", **overrides))
    assert info.value.field == field


def test_gold_equal_to_buggy_rejected(tmp_path):
    root = _write_fixture(tmp_path / "x1")
    (root / "fixed.py").write_text("a = 1\nb = 2\n")
    with pytest.raises(ManifestInvalid):
        parse_instance_manifest(root)


def test_bad_requirement_line():
    with pytest.raises(ManifestInvalid):
        parse_requirements("=== nonsense\n")


def test_validate_corpus_counts(tmp_path):
    for i in range(3):
        _write_fixture(tmp_path / f"x{i}", id=f"x{i}")
    (tmp_path / "x2" / "buggy.py").unlink()
    report = validate_corpus(tmp_path)
    assert report.count == 2
    assert len(report.errors) == 1 and report.errors[0][0] == "x2"
    assert sum(report.histogram.values()) == report.count


def test_validate_empty_dir(tmp_path):
    report = validate_corpus(tmp_path)
    assert report.count == 0 and report.histogram == {} and report.ok


def test_histogram_per_component(tmp_path):
    comps = ["Tool"] * 3 + ["Memory", "Planning"]
    for i, comp in enumerate(comps):
        _write_fixture(tmp_path / f"x{i}", id=f"x{i}", component=comp)
    assert validate_corpus(tmp_path).histogram == {"Memory": 1, "Planning": 1, "Tool": 3}


_line = st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\n"), max_size=12)


@settings(max_examples=60, deadline=None)
@given(buggy=st.lists(_line, min_size=1, max_size=8), extra=_line,
       newline=st.sampled_from(["\n", "\r\n"]), with_regions=st.booleans())
def test_serialize_round_trip(tmp_path_factory, buggy, extra, newline, with_regions):
    buggy_src = newline.join(buggy) + newline
    regions = (ComponentRegion(1, len(buggy), AgentComponent.MEMORY),) if with_regions else None
    inst = BenchmarkInstance("rt", buggy_src, "do the thing", buggy_src + "x = 1\n", "assert True\n",
                             (("pkg", "==1.0"),), "readme " + extra, AgentComponent.PLANNING,
                             "github.com", "llamaindex", regions)
    root = write_instance(inst, tmp_path_factory.mktemp("rt") / "rt")
    assert parse_instance_manifest(root) == inst


def test_annotated_fix_round_trip(tmp_path):
    fix = AnnotatedFix.from_dict({"source": "StackOverflow", "post_id": "7", "title": "t", "body": "b",
                                  "rationale": "added a call", "pattern": "AOO", "component": "Tool"})
    assert AnnotatedFix.from_dict(fix.to_dict()) == fix
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(fix.to_dict()) + "\n\n")
    assert load_annotated_corpus(path) == [fix]


def test_annotated_fix_needs_rationale():
    with pytest.raises(ValueError):
        AnnotatedFix.from_dict({"source": "GitHubIssue", "post_id": "1", "rationale": " ",
                                "pattern": "CV", "component": "Memory"})


def test_rule_round_trip_and_validation():
    rule = FixPatternRule(FixPatternId.CV, "Pin the version.", 2, generated_at="t")
    assert FixPatternRule.from_dict(rule.to_dict()) == rule
    with pytest.raises(ValueError):
        FixPatternRule(FixPatternId.CV, "  ", 1)


def test_repair_task_from_instance():
    task = RepairTask.from_instance(make_instance("a"))
    assert task.source_site == "stackoverflow.com"
    with pytest.raises(ValueError):
        RepairTask("x", "", "t", "s")
