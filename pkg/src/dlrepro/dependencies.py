"""Dependency closure of a retrieved snippet against the chunked corpus.

Names referenced but not defined inside a chunk resolve first against the
chunk's own module and then against modules it imports; anything else is
external. Closure expansion is breadth-first with a depth cap and never
pulls the root chunk back in.
"""

from __future__ import annotations

import ast
import builtins
import re
import textwrap
from dataclasses import dataclass, field

from .chunking import ChunkKind, CodeChunk

DEFAULT_DEPTH = 2

_BUILTINS = frozenset(dir(builtins)) | {"__name__", "__file__", "__doc__"}
_IMPORT_LINE = re.compile(r"^\s*(?:from\s+([.\w]+)\s+import|import\s+([\w.]+(?:\s*,\s*[\w.]+)*))", re.M)
_DEF_LINE = re.compile(r"^\s*(?:class|def)\s+(\w+)", re.M)


@dataclass(frozen=True)
class DependencyClosure:
    root: str
    imported_modules: tuple[str, ...]
    referenced_symbols: tuple[tuple[str, str | None], ...]
    pulled_chunks: tuple[CodeChunk, ...]
    pull_depths: dict[str, int] = field(default_factory=dict, compare=False)
    degraded: bool = False


def _parse(chunk: CodeChunk) -> ast.Module | None:
    try:
        return ast.parse(textwrap.dedent(chunk.text))
    except SyntaxError:
        return None


# Binding targets in a module table.
_DEF = "def"
_IMPORT = "import"


def _resolve_relative(module_path: str, level: int, name: str | None) -> str:
    parts = module_path.split(".")
    anchor = parts[: max(0, len(parts) - level)]
    if name:
        anchor = anchor + name.split(".")
    return ".".join(anchor)


class ChunkedCorpus:
    """Chunk lookup plus per-module name binding tables."""

    def __init__(self, chunks: list[CodeChunk]):
        self.chunks_by_id: dict[str, CodeChunk] = {c.id: c for c in chunks}
        self.chunks_by_module: dict[str, list[CodeChunk]] = {}
        for c in chunks:
            self.chunks_by_module.setdefault(c.module_path, []).append(c)
        self.modules = set(self.chunks_by_module)
        self._bindings: dict[str, dict[str, tuple]] = {}
        for module, members in self.chunks_by_module.items():
            self._bindings[module] = self._module_bindings(module, members)

    @classmethod
    def from_chunks(cls, chunks: list[CodeChunk]) -> "ChunkedCorpus":
        return cls(chunks)

    def _module_bindings(self, module: str, members: list[CodeChunk]) -> dict[str, tuple]:
        table: dict[str, tuple] = {}
        for chunk in members:
            tree = _parse(chunk)
            if tree is None:
                # Header chunks of split classes parse poorly; recover names
                # and import lines textually.
                for m in _DEF_LINE.finditer(chunk.text):
                    table.setdefault(m.group(1), (_DEF, chunk.id))
                continue
            if chunk.kind in (ChunkKind.FUNCTION, ChunkKind.CLASS):
                for stmt in tree.body:
                    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                        table.setdefault(stmt.name, (_DEF, chunk.id))
            elif chunk.kind is ChunkKind.METHOD:
                continue
            else:
                for stmt in tree.body:
                    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                        table.setdefault(stmt.name, (_DEF, chunk.id))
                    elif isinstance(stmt, (ast.Assign, ast.AnnAssign)):
                        targets = stmt.targets if isinstance(stmt, ast.Assign) else [stmt.target]
                        for t in targets:
                            if isinstance(t, ast.Name):
                                table.setdefault(t.id, (_DEF, chunk.id))
                    elif isinstance(stmt, ast.Import):
                        for alias in stmt.names:
                            bound = alias.asname or alias.name.split(".")[0]
                            target = alias.name if alias.asname else alias.name.split(".")[0]
                            table.setdefault(bound, (_IMPORT, target, None))
                    elif isinstance(stmt, ast.ImportFrom):
                        target = _resolve_relative(module, stmt.level, stmt.module) if stmt.level else (stmt.module or "")
                        for alias in stmt.names:
                            table.setdefault(alias.asname or alias.name, (_IMPORT, target, alias.name))
        return table

    def bindings(self, module: str) -> dict[str, tuple]:
        return self._bindings.get(module, {})

    def lookup_definition(self, module: str, name: str) -> str | None:
        entry = self.bindings(module).get(name)
        if entry and entry[0] == _DEF:
            return entry[1]
        return None


class _ReferenceCollector(ast.NodeVisitor):
    """Coarse chunk-level scope walk: loads minus stores minus builtins."""

    def __init__(self):
        self.stored: set[str] = set()
        self.loads: list[tuple[str, str | None]] = []  # (base name, attribute or None)
        self.imports: list[tuple[str, int, str | None, str | None]] = []  # (module, level, orig, alias)

    def visit_FunctionDef(self, node):
        self.stored.add(node.name)
        for arg in list(node.args.args) + list(node.args.posonlyargs) + list(node.args.kwonlyargs):
            self.stored.add(arg.arg)
        if node.args.vararg:
            self.stored.add(node.args.vararg.arg)
        if node.args.kwarg:
            self.stored.add(node.args.kwarg.arg)
        self.generic_visit(node)

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_Lambda(self, node):
        for arg in list(node.args.args) + list(node.args.posonlyargs) + list(node.args.kwonlyargs):
            self.stored.add(arg.arg)
        self.generic_visit(node)

    def visit_ClassDef(self, node):
        self.stored.add(node.name)
        self.generic_visit(node)

    def visit_Name(self, node):
        if isinstance(node.ctx, (ast.Store, ast.Del)):
            self.stored.add(node.id)
        else:
            self.loads.append((node.id, None))

    def visit_Attribute(self, node):
        base = node.value
        if isinstance(base, ast.Name) and isinstance(base.ctx, ast.Load):
            self.loads.append((base.id, node.attr))
            return
        self.generic_visit(node)

    def visit_ExceptHandler(self, node):
        if node.name:
            self.stored.add(node.name)
        self.generic_visit(node)

    def visit_Import(self, node):
        for alias in node.names:
            bound = alias.asname or alias.name.split(".")[0]
            self.stored.add(bound)
            self.imports.append((alias.name, 0, None, bound))

    def visit_ImportFrom(self, node):
        for alias in node.names:
            bound = alias.asname or alias.name
            self.stored.add(bound)
            self.imports.append((node.module or "", node.level, alias.name, bound))


def _chunk_references(chunk: CodeChunk):
    tree = _parse(chunk)
    if tree is None:
        return None
    collector = _ReferenceCollector()
    collector.visit(tree)
    return collector


def _textual_imports(text: str) -> list[str]:
    found: list[str] = []
    for m in _IMPORT_LINE.finditer(text):
        if m.group(1):
            found.append(m.group(1).lstrip("."))
        else:
            for part in m.group(2).split(","):
                found.append(part.strip())
    return [f for f in found if f]


def _resolve_chunk(
    chunk: CodeChunk,
    corpus: ChunkedCorpus,
) -> tuple[list[str], list[tuple[str, str | None]], list[str], bool]:
    """Returns (imported modules, referenced symbols, pulled chunk ids, degraded)."""
    collector = _chunk_references(chunk)
    if collector is None:
        return _textual_imports(chunk.text), [], [], True

    imported: list[str] = []
    local_imports: dict[str, tuple] = {}
    for module, level, orig, alias in collector.imports:
        target = _resolve_relative(chunk.module_path, level, module) if level else module
        imported.append(target)
        local_imports[alias] = (_IMPORT, target, orig)

    symbols: list[tuple[str, str | None]] = []
    pulled: list[str] = []
    seen: set[str] = set()
    module_table = corpus.bindings(chunk.module_path)

    for base, attr in collector.loads:
        if base in collector.stored and base not in local_imports:
            continue
        if base in _BUILTINS:
            continue
        display = f"{base}.{attr}" if attr else base
        if display in seen:
            continue
        seen.add(display)

        entry = local_imports.get(base) or module_table.get(base)
        if entry is None:
            symbols.append((display, None))
            continue
        if entry[0] == _DEF:
            cid = entry[1]
            if cid != chunk.id:
                symbols.append((display, cid))
                pulled.append(cid)
            continue
        _, target_module, orig = entry
        if target_module not in imported:
            imported.append(target_module)
        if orig:
            # from target import orig (bound as base)
            cid = corpus.lookup_definition(target_module, orig) if target_module in corpus.modules else None
            symbols.append((display, cid))
            if cid and cid != chunk.id:
                pulled.append(cid)
        elif attr:
            # module alias attribute access
            cid = corpus.lookup_definition(target_module, attr) if target_module in corpus.modules else None
            symbols.append((display, cid))
            if cid and cid != chunk.id:
                pulled.append(cid)
        elif target_module not in corpus.modules:
            symbols.append((display, None))
    return imported, symbols, pulled, False


def resolve_dependencies(
    snippet: CodeChunk,
    corpus: ChunkedCorpus,
    max_depth: int = DEFAULT_DEPTH,
) -> DependencyClosure:
    imported, symbols, pulled_ids, degraded = _resolve_chunk(snippet, corpus)
    if degraded:
        return DependencyClosure(
            root=snippet.id,
            imported_modules=tuple(dict.fromkeys(imported)),
            referenced_symbols=(),
            pulled_chunks=(),
            degraded=True,
        )
    visited = {snippet.id}
    depths: dict[str, int] = {}
    ordered: list[str] = []
    frontier = [cid for cid in dict.fromkeys(pulled_ids) if cid not in visited]
    depth = 1
    while frontier and depth <= max_depth:
        next_frontier: list[str] = []
        for cid in frontier:
            if cid in visited:
                continue
            visited.add(cid)
            depths[cid] = depth
            ordered.append(cid)
            sub_imported, _, sub_pulled, sub_degraded = _resolve_chunk(corpus.chunks_by_id[cid], corpus)
            if sub_degraded:
                continue
            for mod in sub_imported:
                if mod not in imported:
                    imported.append(mod)
            next_frontier.extend(c for c in sub_pulled if c not in visited)
        frontier = next_frontier
        depth += 1
    return DependencyClosure(
        root=snippet.id,
        imported_modules=tuple(dict.fromkeys(imported)),
        referenced_symbols=tuple(symbols),
        pulled_chunks=tuple(corpus.chunks_by_id[cid] for cid in ordered),
        pull_depths=depths,
        degraded=False,
    )
