"""Shared domain types: fix-pattern taxonomy, agent components, benchmark instances.

A benchmark instance lives in its own directory::

    instance.json      id, intent, component, source_site, framework,
                       optional component_regions [{"start", "end", "component"}]
    buggy.py
    fixed.py
    test.py
    requirements.txt   one ``name==version`` / ``name>=version`` per line
    README.md
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

from .diffcore import split_lines
from .errors import AgentFixError


class ManifestError(AgentFixError):
    pass


class MissingFile(ManifestError):
    def __init__(self, which: str, path: Path | str):
        super().__init__(f"missing {which} file: {path}")
        self.which = which
        self.path = Path(path)


class ManifestInvalid(ManifestError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"invalid manifest field {field_name!r}: {reason}")
        self.field = field_name
        self.reason = reason


class ComponentUnknown(ManifestError):
    def __init__(self, value: Any):
        super().__init__(f"unknown agent component {value!r}")
        self.value = value


class FixPatternId(Enum):
    ANA = "Add New Attribute"
    RA = "Remove Attribute"
    AOPC = "Addition of Precondition Check"
    CV = "Change Version"
    IL = "Install Library"
    AOO = "Addition of Operations"
    ROO = "Removal of Operations"
    CDT = "Change Data Type"
    CP = "Change Prompt"
    FS = "Fix Syntax"
    CR = "Change Reference"
    UDMo = "Use Different Module"
    CER = "Change External Resources"
    CF = "Change Function"
    AEH = "Add Exception Handling"
    FAN = "Fix Attribute Name"
    CPV = "Change Parameter Value"
    CID = "Change Input Data"
    AID = "Add Input Data"
    UDM = "Use Different Model"
    CPO = "Change Parameter Order"
    MCTDS = "Move Code to Different Scope"
    FDA = "Fix Data Access"

    @property
    def display_name(self) -> str:
        return self.value

    @classmethod
    def lookup(cls, name: str) -> "FixPatternId":
        """Resolve an abbreviation or display name, case-insensitively."""
        key = name.strip().casefold()
        for member in cls:
            if key in (member.name.casefold(), member.value.casefold()):
                return member
        raise KeyError(name)


class AgentComponent(Enum):
    REASONING = "Reasoning"
    MEMORY = "Memory"
    PLANNING = "Planning"
    TOOL = "Tool"

    @classmethod
    def parse(cls, value: Any) -> "AgentComponent":
        if isinstance(value, AgentComponent):
            return value
        if isinstance(value, str):
            key = value.strip().casefold()
            for member in cls:
                if key == member.value.casefold():
                    return member
        raise ComponentUnknown(value)


class FixSource(Enum):
    STACK_OVERFLOW = "StackOverflow"
    GITHUB_COMMIT = "GitHubCommit"
    GITHUB_ISSUE = "GitHubIssue"
    HUGGINGFACE_FORUM = "HuggingFaceForum"


@dataclass(frozen=True)
class FixPatternRule:
    pattern: FixPatternId
    rule_text: str
    source_summary_count: int
    generated_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def __post_init__(self):
        if not self.rule_text.strip():
            raise ValueError("rule_text must be non-empty")
        if self.source_summary_count < 0:
            raise ValueError("source_summary_count must be non-negative")

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern.name,
            "display_name": self.pattern.display_name,
            "rule_text": self.rule_text,
            "source_summary_count": self.source_summary_count,
            "generated_at": self.generated_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FixPatternRule":
        return cls(
            pattern=FixPatternId[data["pattern"]],
            rule_text=data["rule_text"],
            source_summary_count=int(data["source_summary_count"]),
            generated_at=data.get("generated_at", ""),
        )


@dataclass(frozen=True)
class AnnotatedFix:
    source: FixSource
    post_id: str
    title: str
    body: str
    rationale: str
    pattern: FixPatternId
    component: AgentComponent
    framework: str = ""
    language: str = "Python"
    buggy_code: str | None = None
    fixed_code: str | None = None

    def __post_init__(self):
        if not self.rationale.strip():
            raise ValueError(f"post {self.post_id}: rationale must be non-empty")

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotatedFix":
        try:
            pattern = FixPatternId.lookup(data["pattern"])
        except KeyError:
            raise ManifestInvalid("pattern", f"not in taxonomy: {data['pattern']!r}") from None
        return cls(
            source=FixSource(data["source"]),
            post_id=str(data["post_id"]),
            title=data.get("title", ""),
            body=data.get("body", ""),
            rationale=data.get("rationale", ""),
            pattern=pattern,
            component=AgentComponent.parse(data["component"]),
            framework=data.get("framework", ""),
            language=data.get("language", "Python"),
            buggy_code=data.get("buggy_code"),
            fixed_code=data.get("fixed_code"),
        )

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "post_id": self.post_id,
            "title": self.title,
            "body": self.body,
            "rationale": self.rationale,
            "pattern": self.pattern.name,
            "component": self.component.value,
            "framework": self.framework,
            "language": self.language,
            "buggy_code": self.buggy_code,
            "fixed_code": self.fixed_code,
        }


def load_annotated_corpus(path: Path | str) -> list[AnnotatedFix]:
    """Read a line-delimited JSON file of annotated fixes."""
    fixes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                fixes.append(AnnotatedFix.from_dict(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ManifestInvalid(f"line {lineno}", str(exc)) from exc
    return fixes


@dataclass(frozen=True)
class ComponentRegion:
    start: int
    end: int
    component: AgentComponent

    def __contains__(self, line: int) -> bool:
        return self.start <= line <= self.end


@dataclass(frozen=True)
class BenchmarkInstance:
    instance_id: str
    buggy_source: str
    intent: str
    gold_source: str
    test_source: str
    requirements: tuple[tuple[str, str], ...]
    readme: str
    annotated_component: AgentComponent
    source_site: str
    subject_framework: str = ""
    component_regions: tuple[ComponentRegion, ...] | None = None
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if "\n" in self.intent or "\r" in self.intent:
            raise ManifestInvalid("intent", "must be a single line")
        if not self.intent.strip():
            raise ManifestInvalid("intent", "must be non-empty")
        if self.buggy_source == self.gold_source:
            raise ManifestInvalid("fixed.py", "gold source identical to buggy source")
        if not self.test_source.strip():
            raise ManifestInvalid("test.py", "test source is empty")
        if self.component_regions:
            n_lines = len(split_lines(self.buggy_source))
            ordered = sorted(self.component_regions, key=lambda r: r.start)
            for region in ordered:
                if not 1 <= region.start <= region.end <= n_lines:
                    raise ManifestInvalid(
                        "component_regions",
                        f"range {region.start}-{region.end} outside 1-{n_lines}",
                    )
            for prev, cur in zip(ordered, ordered[1:]):
                if cur.start <= prev.end:
                    raise ManifestInvalid("component_regions", "regions overlap")


_REQ_RE = re.compile(r"^([A-Za-z0-9][A-Za-z0-9._\-\[\],]*)\s*((?:==|>=|<=|~=|!=|<|>).*)?$")


def parse_requirements(text: str) -> tuple[tuple[str, str], ...]:
    reqs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _REQ_RE.match(line)
        if not m:
            raise ManifestInvalid("requirements.txt", f"line {lineno} unparseable: {raw!r}")
        reqs.append((m.group(1), (m.group(2) or "").replace(" ", "")))
    return tuple(reqs)


_FILES = {
    "manifest": "instance.json",
    "buggy": "buggy.py",
    "fixed": "fixed.py",
    "test": "test.py",
    "requirements": "requirements.txt",
    "readme": "README.md",
}


def _read(root: Path, which: str) -> str:
    path = root / _FILES[which]
    if not path.is_file():
        raise MissingFile(which, path)
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def parse_instance_manifest(root: Path | str) -> BenchmarkInstance:
    root = Path(root)
    raw = _read(root, "manifest")
    try:
        meta = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestInvalid("instance.json", str(exc)) from exc
    if not isinstance(meta, dict):
        raise ManifestInvalid("instance.json", "top level must be an object")
    for key in ("id", "intent", "component", "source_site"):
        if not isinstance(meta.get(key), str) or not meta[key].strip():
            raise ManifestInvalid(key, "required non-empty string")

    regions = None
    if meta.get("component_regions") is not None:
        if not isinstance(meta["component_regions"], list):
            raise ManifestInvalid("component_regions", "must be a list")
        regions = []
        for item in meta["component_regions"]:
            try:
                start, end = int(item["start"]), int(item["end"])
            except (KeyError, TypeError, ValueError):
                raise ManifestInvalid("component_regions", f"bad entry {item!r}") from None
            regions.append(ComponentRegion(start, end, AgentComponent.parse(item.get("component"))))
        regions = tuple(regions)

    return BenchmarkInstance(
        instance_id=meta["id"],
        buggy_source=_read(root, "buggy"),
        intent=meta["intent"],
        gold_source=_read(root, "fixed"),
        test_source=_read(root, "test"),
        requirements=parse_requirements(_read(root, "requirements")),
        readme=_read(root, "readme"),
        annotated_component=AgentComponent.parse(meta["component"]),
        source_site=meta["source_site"],
        subject_framework=meta.get("framework", ""),
        component_regions=regions,
        root=root,
    )


def write_instance(instance: BenchmarkInstance, root: Path | str) -> Path:
    """Serialize an instance into the on-disk layout read by parse_instance_manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    meta: dict[str, Any] = {
        "id": instance.instance_id,
        "intent": instance.intent,
        "component": instance.annotated_component.value,
        "source_site": instance.source_site,
        "framework": instance.subject_framework,
    }
    if instance.component_regions is not None:
        meta["component_regions"] = [
            {"start": r.start, "end": r.end, "component": r.component.value}
            for r in instance.component_regions
        ]
    (root / _FILES["manifest"]).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    # newline="" keeps \r\n and friends byte-exact on round trip
    for which, text in (
        ("buggy", instance.buggy_source),
        ("fixed", instance.gold_source),
        ("test", instance.test_source),
        ("readme", instance.readme),
        ("requirements", "".join(f"{name}{spec}\n" for name, spec in instance.requirements)),
    ):
        with open(root / _FILES[which], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return root


@dataclass
class CorpusReport:
    count: int
    histogram: dict[str, int]
    errors: list[tuple[str, str]]
    instances: list[BenchmarkInstance] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_corpus(directory: Path | str) -> CorpusReport:
    """Parse every instance sub-directory; collect failures instead of raising."""
    directory = Path(directory)
    instances: list[BenchmarkInstance] = []
    errors: list[tuple[str, str]] = []
    for sub in sorted(p for p in directory.iterdir() if p.is_dir() and not p.name.startswith(".")):
        try:
            instances.append(parse_instance_manifest(sub))
        except ManifestError as exc:
            errors.append((sub.name, str(exc)))
    histogram = Counter(inst.annotated_component.value for inst in instances)
    return CorpusReport(
        count=len(instances),
        histogram=dict(sorted(histogram.items())),
        errors=errors,
        instances=instances,
    )


@dataclass(frozen=True)
class RepairTask:
    buggy_source: str
    intent: str
    test_source: str
    source_site: str

    def __post_init__(self):
        for name in ("buggy_source", "intent", "test_source", "source_site"):
            if not getattr(self, name).strip():
                raise ValueError(f"RepairTask.{name} must be non-empty")

    @classmethod
    def from_instance(cls, instance: BenchmarkInstance) -> "RepairTask":
        return cls(
            buggy_source=instance.buggy_source,
            intent=instance.intent,
            test_source=instance.test_source,
            source_site=instance.source_site,
        )

