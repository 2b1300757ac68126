"""Syntax-aware chunking of source files.

Chunks follow grammar node boundaries. Oversized nodes are split at the
deepest child statement boundary before the line limit; files that fail to
parse degrade to fixed-size line windows. Spans are 1-based inclusive and
every source line lands in at least one chunk.
"""

from __future__ import annotations

import ast
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import PurePosixPath

from .tokenization import tokenize

MAX_CHUNK_LINES = 120
FALLBACK_WINDOW = 60
FALLBACK_OVERLAP = 10


class ChunkKind(str, Enum):
    FUNCTION = "function"
    METHOD = "method"
    CLASS = "class"
    TOP_LEVEL_BLOCK = "top_level_block"


@dataclass(frozen=True)
class CodeChunk:
    id: str
    file_path: str
    span: tuple[int, int]
    kind: ChunkKind
    text: str
    module_path: str
    token_counts: dict[str, int] = field(compare=False)
    parse_failed: bool = False

    @property
    def doc_length(self) -> int:
        return sum(self.token_counts.values())


def module_path_for(file_path: str) -> str:
    """Dotted module path relative to the repo root; __init__ collapses to its package."""
    parts = list(PurePosixPath(file_path.replace("\\", "/")).parts)
    last = parts[-1]
    if last.endswith(".py"):
        last = last[:-3]
    parts[-1] = last
    if parts[-1] == "__init__" and len(parts) > 1:
        parts.pop()
    return ".".join(parts)


def _chunk_id(file_path: str, span: tuple[int, int], kind: ChunkKind) -> str:
    raw = f"{file_path}:{span[0]}:{span[1]}:{kind.value}"
    return hashlib.sha1(raw.encode("utf-8")).hexdigest()[:16]


def _node_start(node: ast.stmt) -> int:
    decorators = getattr(node, "decorator_list", None) or []
    starts = [node.lineno] + [d.lineno for d in decorators]
    return min(starts)


def _compound_children(stmt: ast.stmt) -> list[ast.stmt]:
    children: list[ast.stmt] = []
    for name in ("body", "orelse", "finalbody"):
        children.extend(getattr(stmt, name, None) or [])
    for handler in getattr(stmt, "handlers", None) or []:
        children.extend(handler.body)
    return sorted(children, key=_node_start)


def _greedy_anchors(start: int, end: int, stmts: list[ast.stmt], limit: int) -> list[int]:
    """Split points for [start, end] at statement boundaries, recursing into a
    single statement when it alone exceeds the limit."""
    anchors = [start]
    cur = start
    for stmt in stmts:
        s = _node_start(stmt)
        e = stmt.end_lineno or s
        if e - cur + 1 > limit and s > cur:
            anchors.append(s)
            cur = s
        if e - cur + 1 > limit and s == cur:
            inner = _compound_children(stmt)
            if inner:
                for a in _greedy_anchors(cur, e, inner, limit):
                    if a != cur:
                        anchors.append(a)
                cur = anchors[-1]
    return anchors


def _def_anchors(node: ast.stmt, kind: ChunkKind, limit: int) -> list[tuple[int, ChunkKind]]:
    start = _node_start(node)
    end = node.end_lineno or start
    if end - start + 1 <= limit:
        return [(start, kind)]
    lines = _greedy_anchors(start, end, list(node.body), limit)
    out = [(lines[0], kind)]
    out.extend((a, ChunkKind.TOP_LEVEL_BLOCK) for a in lines[1:])
    return out


def _block_anchors(stmts: list[ast.stmt], limit: int) -> list[tuple[int, ChunkKind]]:
    start = _node_start(stmts[0])
    end = stmts[-1].end_lineno or start
    lines = _greedy_anchors(start, end, stmts, limit)
    return [(a, ChunkKind.TOP_LEVEL_BLOCK) for a in lines]


def _class_anchors(node: ast.ClassDef, limit: int) -> list[tuple[int, ChunkKind]]:
    start = _node_start(node)
    end = node.end_lineno or start
    if end - start + 1 <= limit:
        return [(start, ChunkKind.CLASS)]
    anchors: list[tuple[int, ChunkKind]] = [(start, ChunkKind.CLASS)]
    # Header covers the class line, docstring and leading assignments; methods
    # and later statement groups become their own chunks.
    units: list[tuple[str, list[ast.stmt]]] = []
    seen_def = False
    for stmt in node.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            units.append(("def", [stmt]))
            seen_def = True
        elif seen_def:
            if units and units[-1][0] == "block":
                units[-1][1].append(stmt)
            else:
                units.append(("block", [stmt]))
    if not units:
        # No methods to cut at; fall back to statement boundaries in the body.
        for a in _greedy_anchors(start, end, node.body, limit):
            if a != start:
                anchors.append((a, ChunkKind.TOP_LEVEL_BLOCK))
        return anchors
    for tag, stmts in units:
        if tag == "def":
            stmt = stmts[0]
            if isinstance(stmt, ast.ClassDef):
                anchors.extend(_class_anchors(stmt, limit))
            else:
                anchors.extend(_def_anchors(stmt, ChunkKind.METHOD, limit))
        else:
            anchors.extend(_block_anchors(stmts, limit))
    return anchors


def _fallback_anchors(n_lines: int) -> list[tuple[int, int]]:
    spans = []
    step = FALLBACK_WINDOW - FALLBACK_OVERLAP
    start = 1
    while start <= n_lines:
        spans.append((start, min(start + FALLBACK_WINDOW - 1, n_lines)))
        if start + FALLBACK_WINDOW - 1 >= n_lines:
            break
        start += step
    return spans


def chunk_file(
    path: str,
    source: str,
    grammar,
    max_chunk_lines: int = MAX_CHUNK_LINES,
) -> list[CodeChunk]:
    """Chunk one file. Empty sources yield no chunks; parse failures yield
    overlapping line windows flagged parse_failed."""
    if source == "":
        return []
    lines = source.splitlines(keepends=True)
    n_lines = len(lines)
    module = module_path_for(path)

    def build(span: tuple[int, int], kind: ChunkKind, failed: bool = False) -> CodeChunk:
        s, e = span
        text = "".join(lines[s - 1 : e])
        return CodeChunk(
            id=_chunk_id(path, span, kind),
            file_path=path,
            span=span,
            kind=kind,
            text=text,
            module_path=module,
            token_counts=dict(Counter(tokenize(text))),
            parse_failed=failed,
        )

    try:
        tree = grammar.parse(source)
    except SyntaxError:
        return [build(span, ChunkKind.TOP_LEVEL_BLOCK, failed=True) for span in _fallback_anchors(n_lines)]

    anchors: list[tuple[int, ChunkKind]] = []
    pending_block: list[ast.stmt] = []

    def flush_block() -> None:
        if pending_block:
            anchors.extend(_block_anchors(pending_block, max_chunk_lines))
            pending_block.clear()

    for stmt in tree.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            flush_block()
            anchors.extend(_def_anchors(stmt, ChunkKind.FUNCTION, max_chunk_lines))
        elif isinstance(stmt, ast.ClassDef):
            flush_block()
            anchors.extend(_class_anchors(stmt, max_chunk_lines))
        else:
            pending_block.append(stmt)
    flush_block()

    if not anchors:
        return [build((1, n_lines), ChunkKind.TOP_LEVEL_BLOCK)]
    if anchors[0][0] > 1:
        anchors.insert(0, (1, ChunkKind.TOP_LEVEL_BLOCK))

    chunks = []
    for i, (start, kind) in enumerate(anchors):
        end = anchors[i + 1][0] - 1 if i + 1 < len(anchors) else n_lines
        if end < start:
            continue
        chunks.append(build((start, end), kind))
    return chunks
