"""Line-oriented diffing for subject sources.

The edit script is a shortest edit script found with Myers' greedy
middle-snake bisection, so memory stays linear in the input size. Runs of
changes between two kept lines are always emitted deletes-first, which makes
the script (and everything derived from it) deterministic.

Texts are split on ``"\\n"`` only; a single trailing newline is dropped
before diffing and remembered separately so that applying a script
reproduces the target byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

MODULE_SCOPE = "<module>"


def split_lines(text: str) -> list[str]:
    if not text:
        return []
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    return lines


@dataclass(frozen=True)
class Keep:
    a_line: int
    b_line: int
    text: str


@dataclass(frozen=True)
class Delete:
    a_line: int
    text: str


@dataclass(frozen=True)
class Insert:
    after_a_line: int
    b_line: int
    text: str


Op = Union[Keep, Delete, Insert]


@dataclass(frozen=True)
class EditScript:
    ops: tuple[Op, ...]
    a_trailing_newline: bool = False
    b_trailing_newline: bool = False

    @property
    def edit_count(self) -> int:
        return sum(1 for op in self.ops if not isinstance(op, Keep))

    @property
    def is_identity(self) -> bool:
        return self.edit_count == 0

    def apply(self, a: Sequence[str]) -> list[str]:
        """Apply to the line list of A; raises ValueError if the script does not fit A."""
        out: list[str] = []
        expected = 1
        for op in self.ops:
            if isinstance(op, Insert):
                if op.after_a_line != expected - 1:
                    raise ValueError(f"insert anchored at {op.after_a_line}, cursor at {expected - 1}")
                out.append(op.text)
                continue
            if op.a_line != expected or op.a_line > len(a) or a[op.a_line - 1] != op.text:
                raise ValueError(f"script does not match source at line {op.a_line}")
            if isinstance(op, Keep):
                out.append(op.text)
            expected += 1
        if expected != len(a) + 1:
            raise ValueError("script does not consume the whole source")
        return out

    def apply_text(self, a: str) -> str:
        lines = self.apply(split_lines(a))
        text = "\n".join(lines)
        if lines and self.b_trailing_newline:
            text += "\n"
        return text


def _middle_snake(a, alo, ahi, b, blo, bhi):
    """Return (x, y, u, v): the middle snake from (x, y) to (u, v) in absolute coordinates."""
    n = ahi - alo
    m = bhi - blo
    delta = n - m
    odd = delta & 1
    max_d = (n + m + 1) // 2
    offset = max_d + 1
    size = 2 * max_d + 3
    vf = [0] * size
    vb = [0] * size
    for d in range(max_d + 1):
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and vf[offset + k - 1] < vf[offset + k + 1]):
                x = vf[offset + k + 1]
            else:
                x = vf[offset + k - 1] + 1
            y = x - k
            x0, y0 = x, y
            while x < n and y < m and a[alo + x] == b[blo + y]:
                x += 1
                y += 1
            vf[offset + k] = x
            # forward diagonal k meets reverse diagonal delta - k
            if odd and -(d - 1) <= delta - k <= d - 1:
                if x + vb[offset + delta - k] >= n:
                    return alo + x0, blo + y0, alo + x, blo + y
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and vb[offset + k - 1] < vb[offset + k + 1]):
                x = vb[offset + k + 1]
            else:
                x = vb[offset + k - 1] + 1
            y = x - k
            x0, y0 = x, y
            while x < n and y < m and a[ahi - 1 - x] == b[bhi - 1 - y]:
                x += 1
                y += 1
            vb[offset + k] = x
            if not odd and -d <= delta - k <= d:
                if x + vf[offset + delta - k] >= n:
                    return ahi - x, bhi - y, ahi - x0, bhi - y0
    raise AssertionError("middle snake not found")  # pragma: no cover


def _matches(a, alo, ahi, b, blo, bhi, out: list[tuple[int, int]]) -> None:
    """Append matched index pairs (LCS) for a[alo:ahi] vs b[blo:bhi] in order."""
    while alo < ahi and blo < bhi and a[alo] == b[blo]:
        out.append((alo, blo))
        alo += 1
        blo += 1
    tail = []
    while alo < ahi and blo < bhi and a[ahi - 1] == b[bhi - 1]:
        ahi -= 1
        bhi -= 1
        tail.append((ahi, bhi))
    if alo < ahi and blo < bhi:
        x, y, u, v = _middle_snake(a, alo, ahi, b, blo, bhi)
        _matches(a, alo, x, b, blo, y, out)
        out.extend((x + i, y + i) for i in range(u - x))
        _matches(a, u, ahi, b, v, bhi, out)
    out.extend(reversed(tail))


def line_diff(a: str, b: str) -> EditScript:
    a_lines = split_lines(a)
    b_lines = split_lines(b)
    pairs: list[tuple[int, int]] = []
    _matches(a_lines, 0, len(a_lines), b_lines, 0, len(b_lines), pairs)
    pairs.append((len(a_lines), len(b_lines)))

    ops: list[Op] = []
    i = j = 0
    for mi, mj in pairs:
        ops.extend(Delete(k + 1, a_lines[k]) for k in range(i, mi))
        ops.extend(Insert(mi, k + 1, b_lines[k]) for k in range(j, mj))
        if mi < len(a_lines):
            ops.append(Keep(mi + 1, mj + 1, a_lines[mi]))
        i, j = mi + 1, mj + 1
    return EditScript(
        tuple(ops),
        a_trailing_newline=a.endswith("\n"),
        b_trailing_newline=b.endswith("\n"),
    )


@dataclass(frozen=True)
class Hunk:
    a_start: int
    a_count: int
    b_start: int
    b_count: int
    lines: tuple[str, ...]

    @property
    def header(self) -> str:
        return f"@@ -{self.a_start},{self.a_count} +{self.b_start},{self.b_count} @@"


def _positions(ops: Sequence[Op]) -> list[tuple[int, int]]:
    """Lines of A and B consumed before each op."""
    pos = []
    ai = bi = 0
    for op in ops:
        pos.append((ai, bi))
        if not isinstance(op, Insert):
            ai += 1
        if not isinstance(op, Delete):
            bi += 1
    return pos


def hunks(script: EditScript, context: int = 3) -> list[Hunk]:
    if context < 0:
        raise ValueError("context must be >= 0")
    ops = script.ops
    changes = [i for i, op in enumerate(ops) if not isinstance(op, Keep)]
    if not changes:
        return []
    groups: list[list[int]] = [[changes[0], changes[0]]]
    for idx in changes[1:]:
        if idx - groups[-1][1] - 1 <= 2 * context:
            groups[-1][1] = idx
        else:
            groups.append([idx, idx])

    pos = _positions(ops)
    result = []
    for first, last in groups:
        lo = max(0, first - context)
        hi = min(len(ops), last + context + 1)
        body = []
        a_count = b_count = 0
        for op in ops[lo:hi]:
            if isinstance(op, Keep):
                body.append(" " + op.text)
                a_count += 1
                b_count += 1
            elif isinstance(op, Delete):
                body.append("-" + op.text)
                a_count += 1
            else:
                body.append("+" + op.text)
                b_count += 1
        a0, b0 = pos[lo]
        result.append(
            Hunk(
                a_start=a0 + 1 if a_count else a0,
                a_count=a_count,
                b_start=b0 + 1 if b_count else b0,
                b_count=b_count,
                lines=tuple(body),
            )
        )
    return result


def render_unified(script: EditScript, a_name: str = "a", b_name: str = "b", context: int = 3) -> str:
    out = [f"--- {a_name}", f"+++ {b_name}"]
    for h in hunks(script, context):
        out.append(h.header)
        out.extend(h.lines)
    return "\n".join(out) + "\n"


_HUNK_RE = re.compile(r"^@@ -(\d+),(\d+) \+(\d+),(\d+) @@")


def parse_unified(text: str) -> list[Hunk]:
    lines = split_lines(text)
    result = []
    i = 0
    while i < len(lines) and not lines[i].startswith("@@"):
        i += 1
    while i < len(lines):
        m = _HUNK_RE.match(lines[i])
        if not m:
            raise ValueError(f"expected hunk header, got {lines[i]!r}")
        a_start, a_count, b_start, b_count = map(int, m.groups())
        i += 1
        body = []
        seen_a = seen_b = 0
        while seen_a < a_count or seen_b < b_count:
            if i >= len(lines):
                raise ValueError("truncated hunk")
            line = lines[i]
            tag = line[:1]
            if tag == " ":
                seen_a += 1
                seen_b += 1
            elif tag == "-":
                seen_a += 1
            elif tag == "+":
                seen_b += 1
            else:
                raise ValueError(f"bad hunk line {line!r}")
            body.append(line)
            i += 1
        if seen_a != a_count or seen_b != b_count:
            raise ValueError("hunk line counts disagree with header")
        result.append(Hunk(a_start, a_count, b_start, b_count, tuple(body)))
    return result


def apply_unified(a: str, diff_text: str) -> list[str]:
    """Apply a unified diff (as produced by render_unified) to A's lines."""
    src = split_lines(a)
    out: list[str] = []
    cursor = 0
    for h in parse_unified(diff_text):
        start = h.a_start - 1 if h.a_count else h.a_start
        if start < cursor:
            raise ValueError("overlapping hunks")
        out.extend(src[cursor:start])
        cursor = start
        for line in h.lines:
            tag, text = line[0], line[1:]
            if tag == "+":
                out.append(text)
                continue
            if cursor >= len(src) or src[cursor] != text:
                raise ValueError(f"context mismatch at line {cursor + 1}")
            if tag == " ":
                out.append(text)
            cursor += 1
    out.extend(src[cursor:])
    return out


def changed_lines_of(script: EditScript) -> frozenset[int]:
    touched = set()
    for op in script.ops:
        if isinstance(op, Delete):
            touched.add(op.a_line)
        elif isinstance(op, Insert):
            touched.add(op.after_a_line)
    return frozenset(touched)


def changed_lines(a: str, b: str) -> frozenset[int]:
    """A-side footprint of the edit: deleted lines plus insertion anchors (0 = prepend)."""
    return changed_lines_of(line_diff(a, b))


_DEF_RE = re.compile(r"^([ \t]*)(?:async[ \t]+)?def[ \t]+([A-Za-z_]\w*)[ \t]*\(")


def _indent(line: str) -> int:
    expanded = line.expandtabs(8)
    return len(expanded) - len(expanded.lstrip(" "))


@dataclass(frozen=True)
class FunctionMap:
    spans: tuple[tuple[str, int, int], ...]
    line_count: int = 0
    _names: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def name_at(self, line: int) -> str:
        if 1 <= line <= len(self._names):
            return self._names[line - 1]
        return MODULE_SCOPE

    def names(self, lines) -> set[str]:
        return {self.name_at(n) for n in lines}

    def __iter__(self) -> Iterator[tuple[str, int, int]]:
        return iter(self.spans)


@dataclass
class _Frame:
    name: str
    indent: int
    start: int
    last: int


def function_map(source: str) -> FunctionMap:
    """Map each line to its innermost enclosing ``def`` (or ``<module>``).

    A header is ``def``/``async def`` + identifier + ``(`` at any indent. Its
    body runs until the next non-blank line indented no deeper than the
    header; trailing blank lines are left to the enclosing scope.
    """
    lines = split_lines(source)
    owner: list[str | None] = [None] * len(lines)
    stack: list[_Frame] = []

    def close(frame: _Frame) -> None:
        # inner frames close first, so they already own their lines
        for idx in range(frame.start, frame.last + 1):
            if owner[idx] is None:
                owner[idx] = frame.name

    for idx, line in enumerate(lines):
        if not line.strip():
            continue
        ind = _indent(line)
        while stack and ind <= stack[-1].indent:
            close(stack.pop())
        for frame in stack:
            frame.last = idx
        m = _DEF_RE.match(line)
        if m:
            stack.append(_Frame(m.group(2), ind, idx, idx))
    while stack:
        close(stack.pop())

    names = tuple(name or MODULE_SCOPE for name in owner)
    return FunctionMap(spans=_runs(names), line_count=len(lines), _names=names)


def _runs(names: Sequence[str]) -> tuple[tuple[str, int, int], ...]:
    spans = []
    start = 0
    for idx in range(1, len(names) + 1):
        if idx == len(names) or names[idx] != names[start]:
            if names[start] != MODULE_SCOPE:
                spans.append((names[start], start + 1, idx))
            start = idx
    return tuple(spans)
