"""Plain-text RFC parsing: artifact stripping, section tree, chunks, appendix.

Input is an IETF-style paginated text file. The pipeline is:

    RawDocument -> strip_artifacts -> parse_tree -> collect_leaf_chunks
                                                 -> build_appendix
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import EmptyDocument, NoSectionsFound, SchemaViolation

DEFAULT_MAX_CHUNK_CHARS = 6000
MIN_CHUNK_CHARS = 256

# Footer: a line ending with "[Page N]". Stripped wherever it occurs; RFC body
# text never ends a line that way.
_FOOTER_RE = re.compile(r"\[\s*Page\s+\d+\s*\]\s*$")

# Running header: the first non-blank line after a form feed, when it carries
# an RFC number ("RFC 959   File Transfer Protocol   October 1985").
_HEADER_RE = re.compile(r"\bRFC\s*\d+\b")

# Numbered section heading anchored at column 0: "1. Intro", "4.1.2  Title".
# Continuation text in RFC bodies is indented, so column 0 is safe to anchor.
_NUMBERED_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\.?\s+(\S.*)$")

# Lettered appendix headings: "A. Title" or "B.1 Title". The dot after the
# letter (or a numeric tail) is required so ordinary column-0 prose starting
# with a capital letter does not match.
_LETTER_HEADING_RE = re.compile(r"^([A-Z])((?:\.\d+)+\.?|\.)\s+(\S.*)$")

# Word-form appendix headings: "APPENDIX I - PAGE STRUCTURE", "Appendix B.".
_APPENDIX_WORD_RE = re.compile(
    r"^APPENDIX\s+([A-Z]+)\s*[-:.]?\s+(\S.*)$", re.IGNORECASE
)

APPENDIX_PATH_PREFIX = "APP-"


@dataclass(frozen=True)
class RawDocument:
    """An RFC file loaded into memory."""

    text: str
    source_name: str

    @classmethod
    def load(cls, path: str | Path) -> "RawDocument":
        p = Path(path)
        text = p.read_text(encoding="utf-8", errors="replace")
        if not text.strip():
            raise EmptyDocument(f"{p} contains no text")
        return cls(text=text, source_name=p.name)


@dataclass
class SectionNode:
    """One section of the tree.

    `body` holds the section's own lines (heading line included, descendants
    excluded), so concatenating bodies in preorder reproduces the parsed text.
    The root node carries the document preamble and an empty path.
    """

    title: str
    body: str
    path: str
    subsections: list["SectionNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.subsections


@dataclass(frozen=True)
class Chunk:
    """A leaf-section body destined for one prompt.

    `part` is nonzero when an oversized leaf was split; all parts share the
    leaf's path. `ordinal` is dense and unique across the whole chunk list.
    """

    text: str
    path: str
    ordinal: int
    part: int = 0


@dataclass(frozen=True)
class AppendixListing:
    """Ordered (path, title) pairs for every section of the tree."""

    entries: tuple[tuple[str, str], ...]

    def render(self) -> str:
        return "".join(f"{path}\t{title}\n" for path, title in self.entries)


def strip_artifacts(doc: RawDocument | str) -> str:
    """Turn a paginated RFC file into continuous text.

    1) Normalize line endings.
    2) Drop the running-header line that opens each page after a form feed.
    3) Remove form feeds and "[Page N]" footer lines.
    4) Collapse runs of blank lines to a single blank line and trim the
       document edges.

    Body text is preserved byte for byte; the result is stable under a
    second application.
    """
    text = doc.text if isinstance(doc, RawDocument) else doc
    text = text.replace("\r\n", "\n").replace("\r", "\n")

    pages = text.split("\f")
    kept_lines: list[str] = []
    for page_idx, page in enumerate(pages):
        lines = page.split("\n")
        if page_idx > 0:
            lines = _drop_running_header(lines)
        for line in lines:
            if _FOOTER_RE.search(line):
                continue
            kept_lines.append(line)

    return _collapse_blank_runs(kept_lines)


def _drop_running_header(lines: list[str]) -> list[str]:
    """Remove the first non-blank line of a page when it is a running header."""
    for i, line in enumerate(lines):
        if line.strip():
            if _HEADER_RE.search(line):
                return lines[:i] + lines[i + 1 :]
            return lines
    return lines


def _collapse_blank_runs(lines: list[str]) -> str:
    out: list[str] = []
    blank_pending = False
    for line in lines:
        if line.strip():
            if blank_pending and out:
                out.append("")
            out.append(line)
            blank_pending = False
        else:
            blank_pending = True
    return "\n".join(out)


def _match_heading(line: str) -> tuple[tuple[str, ...], str] | None:
    """Return (path components, title) when the line is a section heading."""
    m = _NUMBERED_HEADING_RE.match(line)
    if m:
        return tuple(m.group(1).split(".")), m.group(2).strip()
    m = _APPENDIX_WORD_RE.match(line)
    if m:
        return (APPENDIX_PATH_PREFIX + m.group(1).upper(),), m.group(2).strip()
    m = _LETTER_HEADING_RE.match(line)
    if m:
        head = APPENDIX_PATH_PREFIX + m.group(1)
        tail = tuple(p for p in m.group(2).split(".") if p)
        return (head,) + tail, m.group(3).strip()
    return None


def parse_tree(clean_text: str, root_title: str) -> SectionNode:
    """Segment artifact-stripped text into a section tree.

    Section boundaries are column-0 heading lines; everything before the
    first heading becomes the root body. Lettered appendices join the tree
    with APP- prefixed paths. Raises NoSectionsFound when no numbered
    heading matches.
    """
    lines = clean_text.split("\n")

    marks: list[tuple[int, tuple[str, ...], str]] = []
    for idx, line in enumerate(lines):
        hit = _match_heading(line)
        if hit:
            marks.append((idx, hit[0], hit[1]))

    if not any(not comps[0].startswith(APPENDIX_PATH_PREFIX) for _, comps, _ in marks):
        raise NoSectionsFound(
            "no numbered section headings found; not a parseable RFC body"
        )

    first_idx = marks[0][0]
    root = SectionNode(
        title=root_title,
        body="\n".join(lines[:first_idx]) if first_idx > 0 else "",
        path="",
    )

    # Stack of (components, node); parent of a heading is the deepest stack
    # entry whose components are a proper prefix of the heading's.
    stack: list[tuple[tuple[str, ...], SectionNode]] = [((), root)]
    for i, (line_idx, comps, title) in enumerate(marks):
        next_idx = marks[i + 1][0] if i + 1 < len(marks) else len(lines)
        node = SectionNode(
            title=title,
            body="\n".join(lines[line_idx:next_idx]),
            path=".".join(comps),
        )
        while len(stack) > 1 and (
            len(stack[-1][0]) >= len(comps)
            or stack[-1][0] != comps[: len(stack[-1][0])]
        ):
            stack.pop()
        stack[-1][1].subsections.append(node)
        stack.append((comps, node))

    return root


def iter_sections(tree: SectionNode) -> Iterator[SectionNode]:
    """Preorder walk over the section nodes, root excluded."""
    stack = list(reversed(tree.subsections))
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.subsections))


def reconstruct_text(tree: SectionNode) -> str:
    """Concatenate root body plus all section bodies in preorder."""
    parts = [tree.body] if tree.body else []
    parts.extend(node.body for node in iter_sections(tree))
    return "\n".join(parts)


def collect_leaf_chunks(
    tree: SectionNode, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS
) -> list[Chunk]:
    """Collect one chunk per non-blank leaf body, splitting oversized leaves.

    A leaf is blank when it has no text beyond its heading line. Oversized
    bodies are divided at paragraph boundaries; parts keep the leaf path
    with an incremented part index. Ordinals are assigned densely in
    document order across the whole result.
    """
    if max_chunk_chars < MIN_CHUNK_CHARS:
        raise ValueError(
            f"max_chunk_chars must be >= {MIN_CHUNK_CHARS}, got {max_chunk_chars}"
        )
    chunks: list[Chunk] = []
    for node in iter_sections(tree):
        if not node.is_leaf:
            continue
        body = node.body.rstrip()
        content = body.split("\n", 1)[1] if "\n" in body else ""
        if not content.strip():
            continue
        for part, piece in enumerate(_split_to_limit(body, max_chunk_chars)):
            chunks.append(
                Chunk(text=piece, path=node.path, ordinal=len(chunks), part=part)
            )
    return chunks


def _split_to_limit(text: str, limit: int) -> list[str]:
    """Split text into pieces of at most `limit` chars at paragraph breaks."""
    if len(text) <= limit:
        return [text]
    pieces: list[str] = []
    current = ""
    for para in text.split("\n\n"):
        if len(para) > limit:
            if current:
                pieces.append(current)
                current = ""
            pieces.extend(_split_oversized(para, limit))
            continue
        candidate = f"{current}\n\n{para}" if current else para
        if len(candidate) > limit:
            pieces.append(current)
            current = para
        else:
            current = candidate
    if current:
        pieces.append(current)
    return pieces


def _split_oversized(para: str, limit: int) -> list[str]:
    # Paragraph alone exceeds the limit: fall back to line boundaries, then
    # to hard slices for a pathological single line.
    pieces: list[str] = []
    current = ""
    for line in para.split("\n"):
        while len(line) > limit:
            if current:
                pieces.append(current)
                current = ""
            pieces.append(line[:limit])
            line = line[limit:]
        candidate = f"{current}\n{line}" if current else line
        if len(candidate) > limit:
            pieces.append(current)
            current = line
        else:
            current = candidate
    if current:
        pieces.append(current)
    return pieces


def build_appendix(tree: SectionNode) -> AppendixListing:
    """Preorder (path, title) listing of every section in the tree."""
    return AppendixListing(
        entries=tuple((node.path, node.title) for node in iter_sections(tree))
    )


def tree_to_dict(node: SectionNode) -> dict:
    return {
        "title": node.title,
        "body": node.body,
        "path": node.path,
        "subsections": [tree_to_dict(child) for child in node.subsections],
    }


def tree_to_json(node: SectionNode) -> str:
    return json.dumps(tree_to_dict(node), indent=2, ensure_ascii=False) + "\n"


_NODE_KEYS = {"title", "body", "path", "subsections"}


def tree_from_dict(data: dict, _path: str = "$") -> SectionNode:
    if not isinstance(data, dict):
        raise SchemaViolation(_path, "section node must be an object")
    extra = set(data) - _NODE_KEYS
    if extra:
        raise SchemaViolation(f"{_path}.{sorted(extra)[0]}", "unknown field")
    missing = _NODE_KEYS - set(data)
    if missing:
        raise SchemaViolation(f"{_path}.{sorted(missing)[0]}", "missing field")
    for key in ("title", "body", "path"):
        if not isinstance(data[key], str):
            raise SchemaViolation(f"{_path}.{key}", "expected a string")
    if not isinstance(data["subsections"], list):
        raise SchemaViolation(f"{_path}.subsections", "expected an array")
    return SectionNode(
        title=data["title"],
        body=data["body"],
        path=data["path"],
        subsections=[
            tree_from_dict(child, f"{_path}.subsections[{i}]")
            for i, child in enumerate(data["subsections"])
        ],
    )


def tree_from_json(text: str) -> SectionNode:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise SchemaViolation("$", f"invalid JSON: {exc}") from exc
    return tree_from_dict(data)
