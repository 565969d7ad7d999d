"""Prompt templates stored as editable text assets.

Each file has a ``[system]`` section and a ``[user]`` section; placeholders
use ``str.format`` syntax (``{intent}``, ``{buggy_code}``, ...).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_SECTION_RE = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str
    raw: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.raw.encode("utf-8")).hexdigest()

    @property
    def placeholders(self) -> set[str]:
        return set(re.findall(r"(?<!\{)\{([a-z_]+)\}(?!\})", self.raw))

    def render(self, **values: str) -> tuple[str, str]:
        missing = self.placeholders - values.keys()
        if missing:
            raise KeyError(f"template {self.name!r} missing values for {sorted(missing)}")
        return self.system.format(**values), self.user.format(**values)


def parse_template(name: str, raw: str) -> PromptTemplate:
    parts = _SECTION_RE.split(raw)
    sections = {"system": "", "user": ""}
    # split yields [preamble, tag, body, tag, body, ...]
    for tag, body in zip(parts[1::2], parts[2::2]):
        sections[tag] = body.strip("\n")
    if not sections["user"]:
        raise ValueError(f"template {name!r} has no [user] section")
    return PromptTemplate(name, sections["system"], sections["user"], raw)


def load_template(name: str, override_dir: Path | str | None = None) -> PromptTemplate:
    """Load ``<name>.txt`` from ``override_dir`` if present there, else the packaged copy."""
    if override_dir is not None:
        path = Path(override_dir) / f"{name}.txt"
        if path.is_file():
            return parse_template(name, path.read_text(encoding="utf-8"))
    raw = resources.files("agentfix").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return parse_template(name, raw)
