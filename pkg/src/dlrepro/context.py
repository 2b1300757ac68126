"""Module grouping, training-loop extraction, and budgeted context assembly.

Retrieved snippets are partitioned by module, each module gets at most one
training loop picked by a relevance scorer, and the surviving material is
rendered into a token-budgeted context block per module.
"""

from __future__ import annotations

import ast
import math
import textwrap
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

from .dependencies import DependencyClosure
from .retrieval import QueryBundle, ScoredSnippet

DEFAULT_TOKEN_BUDGET = 6000
MAX_MODULES = 5
MAX_SNIPPETS = 5
TOKENS_PER_WORD = 1.3

_LOADER_HINTS = ("loader", "batch", "dataset")
_RESET_NAMES = {"zero_grad", "reset", "reset_states"}


def estimate_tokens(text: str) -> int:
    """Whitespace word count scaled by a fixed ratio, rounded up."""
    words = len(text.split())
    if words == 0:
        return 0
    return math.ceil(words * TOKENS_PER_WORD)


@dataclass(frozen=True)
class LoopComponents:
    """Which training-loop roles the matched heuristics vouch for."""

    forward_pass: bool = False
    backward_pass: bool = False
    gradient_step: bool = False
    loss_computation: bool = False
    data_loader: bool = False


@dataclass(frozen=True)
class TrainingLoop:
    chunk_ref: str
    span: tuple[int, int]
    matched_heuristics: tuple[str, ...]
    components: LoopComponents
    text: str
    relevance: float = 0.0
    fallback_ranked: bool = False


@dataclass
class ModuleGroup:
    module_id: str
    members: list[ScoredSnippet]
    priority: float


@dataclass
class ReproductionContext:
    rank: int
    module_id: str
    training_loop: Optional[TrainingLoop]
    snippets: list[ScoredSnippet]
    dependencies: Optional[DependencyClosure]
    rendered: str
    token_budget_used: int
    truncated: bool = False


def partition_modules(
    snippets: Sequence[ScoredSnippet], max_modules: int = MAX_MODULES
) -> list[ModuleGroup]:
    """Group snippets by module path, ranked by best member score.

    Priority is the max over members, not the sum: one strong hit outranks
    a crowd of weak ones. Ties fall back to module id.
    """
    by_module: dict[str, list[ScoredSnippet]] = {}
    for snippet in snippets:
        by_module.setdefault(snippet.chunk.module_path, []).append(snippet)
    groups = [
        ModuleGroup(
            module_id=module,
            members=members,
            priority=max(m.rerank_key for m in members),
        )
        for module, members in by_module.items()
    ]
    groups.sort(key=lambda g: (-g.priority, g.module_id))
    return groups[:max_modules]


# --- heuristic matching ---


def _parse_member(text: str) -> Optional[ast.Module]:
    for candidate in (text, textwrap.dedent(text)):
        try:
            return ast.parse(candidate)
        except SyntaxError:
            continue
    return None


def _parent_map(tree: ast.Module) -> dict[ast.AST, ast.AST]:
    parents: dict[ast.AST, ast.AST] = {}
    for node in ast.walk(tree):
        for child in ast.iter_child_nodes(node):
            parents[child] = node
    return parents


def _identifiers(node: ast.AST) -> Iterable[str]:
    for sub in ast.walk(node):
        if isinstance(sub, ast.Name):
            yield sub.id.lower()
        elif isinstance(sub, ast.Attribute):
            yield sub.attr.lower()
        elif isinstance(sub, ast.arg):
            yield sub.arg.lower()


def _method_calls(node: ast.AST) -> Iterable[str]:
    for sub in ast.walk(node):
        if isinstance(sub, ast.Call) and isinstance(sub.func, ast.Attribute):
            yield sub.func.attr


def _is_tape_with(node: ast.AST) -> bool:
    if not isinstance(node, (ast.With, ast.AsyncWith)):
        return False
    for item in node.items:
        for sub in ast.walk(item.context_expr):
            if isinstance(sub, ast.Attribute) and sub.attr == "GradientTape":
                return True
            if isinstance(sub, ast.Name) and sub.id == "GradientTape":
                return True
    return False


def _has_fit_call(node: ast.AST) -> bool:
    return any(name == "fit" for name in _method_calls(node))


def _mentions_loss(node: ast.AST) -> bool:
    return any("loss" in ident for ident in _identifiers(node))


def _looks_like_model_call(call: ast.Call) -> bool:
    func = call.func
    if isinstance(func, ast.Name):
        name = func.id.lower()
    elif isinstance(func, ast.Attribute):
        if func.attr == "forward":
            return True
        base = func.value
        name = base.id.lower() if isinstance(base, ast.Name) else func.attr.lower()
    else:
        return False
    return "model" in name or "net" in name


def _has_model_call(node: ast.AST) -> bool:
    return any(
        isinstance(sub, ast.Call) and _looks_like_model_call(sub) for sub in ast.walk(node)
    )


def _h7_loss_assigned_then_used(region: ast.AST) -> bool:
    # Positional scan: an assignment of a call to a loss-named target counts
    # only if that name is loaded later inside the same region.
    assigned_at: dict[str, int] = {}
    used_at: dict[str, int] = {}
    for sub in ast.walk(region):
        if isinstance(sub, ast.Assign) and isinstance(sub.value, ast.Call):
            for target in sub.targets:
                if isinstance(target, ast.Name) and "loss" in target.id.lower():
                    pos = (sub.lineno, sub.col_offset)
                    if target.id not in assigned_at or pos < assigned_at[target.id]:
                        assigned_at[target.id] = pos
        if isinstance(sub, ast.Name) and isinstance(sub.ctx, ast.Load):
            if "loss" in sub.id.lower():
                pos = (sub.lineno, sub.col_offset)
                if sub.id not in used_at or pos > used_at[sub.id]:
                    used_at[sub.id] = pos
    return any(name in used_at and used_at[name] > at for name, at in assigned_at.items())


def _loader_iteration(node: ast.AST) -> bool:
    if not isinstance(node, (ast.For, ast.AsyncFor)):
        return False
    iter_names = list(_identifiers(node.iter))
    if not any(hint in name for name in iter_names for hint in _LOADER_HINTS):
        return False
    return _has_model_call(node)


def _match_heuristics(region: ast.AST) -> tuple[tuple[str, ...], LoopComponents]:
    matched: set[str] = set()
    calls = set(_method_calls(region))
    if "fit" in calls:
        matched.add("H1")
    if "step" in calls:
        matched.add("H2")
    if calls & _RESET_NAMES:
        matched.add("H3")
    if "backward" in calls:
        matched.add("H4")
    if _is_tape_with(region) or any(_is_tape_with(sub) for sub in ast.walk(region)):
        matched.add("H5")
    if isinstance(region, (ast.For, ast.AsyncFor, ast.While)) and _mentions_loss(region):
        matched.add("H6")
    if _h7_loss_assigned_then_used(region):
        matched.add("H7")
    if _loader_iteration(region):
        matched.add("H8")
    components = LoopComponents(
        forward_pass="H1" in matched or "H8" in matched,
        backward_pass="H4" in matched or "H5" in matched,
        gradient_step="H2" in matched or "H3" in matched,
        loss_computation="H7" in matched,
        data_loader="H8" in matched,
    )
    return tuple(sorted(matched, key=lambda h: int(h[1:]))), components


def _candidate_regions(tree: ast.Module) -> list[ast.AST]:
    parents = _parent_map(tree)
    regions: list[ast.AST] = []
    seen: set[ast.AST] = set()
    for node in ast.walk(tree):
        if isinstance(node, (ast.For, ast.AsyncFor, ast.While)) or _is_tape_with(node):
            if node not in seen:
                regions.append(node)
                seen.add(node)
    # A bare .fit( call outside any loop or tape scope still marks a region:
    # the enclosing function, or the top-level statement as a last resort.
    for node in ast.walk(tree):
        if not (isinstance(node, ast.Call) and _has_fit_call(node)):
            continue
        cursor: Optional[ast.AST] = node
        enclosing_region = None
        enclosing_func = None
        top_statement: Optional[ast.AST] = None
        while cursor is not None and not isinstance(cursor, ast.Module):
            if cursor in seen and enclosing_region is None:
                enclosing_region = cursor
            if isinstance(cursor, (ast.FunctionDef, ast.AsyncFunctionDef)) and enclosing_func is None:
                enclosing_func = cursor
            parent = parents.get(cursor)
            if isinstance(parent, ast.Module):
                top_statement = cursor
            cursor = parent
        if enclosing_region is not None:
            continue
        region = enclosing_func if enclosing_func is not None else top_statement
        if region is not None and region not in seen:
            regions.append(region)
            seen.add(region)
    regions.sort(key=lambda n: (n.lineno, getattr(n, "end_lineno", n.lineno)))
    return regions


def extract_training_loops(group: ModuleGroup, grammar) -> list[TrainingLoop]:
    """Find every syntactic region in the group matching at least one heuristic.

    Members that fail to parse in isolation are skipped, not fatal.
    """
    loops: list[TrainingLoop] = []
    seen_chunks: set[str] = set()
    seen_spans: set[tuple[str, tuple[int, int]]] = set()
    for snippet in group.members:
        chunk = snippet.chunk
        if chunk.id in seen_chunks or chunk.parse_failed:
            continue
        seen_chunks.add(chunk.id)
        tree = _parse_member(chunk.text)
        if tree is None:
            continue
        lines = textwrap.dedent(chunk.text).splitlines() if not _parses(chunk.text) else chunk.text.splitlines()
        for region in _candidate_regions(tree):
            matched, components = _match_heuristics(region)
            if not matched:
                continue
            start = region.lineno
            end = getattr(region, "end_lineno", start)
            span = (chunk.span[0] + start - 1, chunk.span[0] + end - 1)
            key = (chunk.id, span)
            if key in seen_spans:
                continue
            seen_spans.add(key)
            loops.append(
                TrainingLoop(
                    chunk_ref=chunk.id,
                    span=span,
                    matched_heuristics=matched,
                    components=components,
                    text="\n".join(lines[start - 1 : end]),
                )
            )
    return loops


def _parses(text: str) -> bool:
    try:
        ast.parse(text)
    except SyntaxError:
        return False
    return True


def rank_loops(
    loops: Sequence[TrainingLoop],
    report_query: QueryBundle,
    scorer: Callable[[str, str], float],
) -> Optional[TrainingLoop]:
    """Pick the loop most relevant to the report; None when there are none.

    Scorer failures degrade per loop; if every loop fails, fall back to the
    one matching the most heuristics and flag it.
    """
    if not loops:
        return None
    scored: list[tuple[float, TrainingLoop]] = []
    for loop in loops:
        try:
            value = float(scorer(report_query.raw_text, loop.text))
        except Exception:
            continue
        scored.append((min(1.0, max(0.0, value)), loop))
    if scored:
        scored.sort(
            key=lambda pair: (
                -pair[0],
                -len(pair[1].matched_heuristics),
                pair[1].chunk_ref,
                pair[1].span,
            )
        )
        best_score, best = scored[0]
        return replace(best, relevance=best_score)
    fallback = sorted(
        loops, key=lambda l: (-len(l.matched_heuristics), l.chunk_ref, l.span)
    )[0]
    return replace(fallback, fallback_ranked=True)


# --- assembly ---


@dataclass
class _Segment:
    kind: str  # "loop", "carrier", "snippet", "dependency"
    label: str
    path: str
    span: tuple[int, int]
    text: str
    order: tuple
    score: float = 0.0
    depth: int = 0

    @property
    def cost(self) -> int:
        return estimate_tokens(self._header() + " " + self.text)

    def _header(self) -> str:
        return f"# == {self.path} (lines {self.span[0]}-{self.span[1]}) [{self.label}] =="

    def render(self) -> str:
        body = self.text if self.text.endswith("\n") else self.text + "\n"
        return f"{self._header()}\n{body}"


def _merge_closures(
    module_id: str, selected: Sequence[ScoredSnippet], closures: dict[str, DependencyClosure]
) -> Optional[DependencyClosure]:
    parts = [closures[s.chunk.id] for s in selected if s.chunk.id in closures]
    if not parts:
        return None
    imported: list[str] = []
    symbols: list[tuple[str, Optional[str]]] = []
    pulled = {}
    depths: dict[str, int] = {}
    degraded = False
    for part in parts:
        degraded = degraded or part.degraded
        for mod in part.imported_modules:
            if mod not in imported:
                imported.append(mod)
        for sym in part.referenced_symbols:
            if sym not in symbols:
                symbols.append(sym)
        for chunk in part.pulled_chunks:
            depth = part.pull_depths.get(chunk.id, 1)
            if chunk.id not in pulled or depth < depths[chunk.id]:
                pulled[chunk.id] = chunk
                depths[chunk.id] = depth
    return DependencyClosure(
        root=f"module:{module_id}",
        imported_modules=tuple(imported),
        referenced_symbols=tuple(symbols),
        pulled_chunks=tuple(pulled[cid] for cid in sorted(pulled)),
        pull_depths=depths,
        degraded=degraded,
    )


def _build_segments(
    group: ModuleGroup,
    loop: Optional[TrainingLoop],
    selected: Sequence[ScoredSnippet],
    closure: Optional[DependencyClosure],
) -> list[_Segment]:
    segments: list[_Segment] = []
    snippet_ids = {s.chunk.id for s in selected}
    if loop is not None and loop.chunk_ref not in snippet_ids:
        segments.append(
            _Segment(
                kind="loop",
                label="training loop",
                path=group.module_id.replace(".", "/") + ".py",
                span=loop.span,
                text=loop.text,
                order=(0,),
            )
        )
    for idx, snippet in enumerate(selected):
        carrier = loop is not None and snippet.chunk.id == loop.chunk_ref
        segments.append(
            _Segment(
                kind="carrier" if carrier else "snippet",
                label="training loop" if carrier else "snippet",
                path=snippet.chunk.file_path,
                span=snippet.chunk.span,
                text=snippet.chunk.text,
                order=(1, idx),
                score=snippet.rerank_key,
            )
        )
    if closure is not None:
        dep_chunks = [c for c in closure.pulled_chunks if c.id not in snippet_ids]
        dep_chunks.sort(key=lambda c: (closure.pull_depths.get(c.id, 1), c.id))
        for idx, chunk in enumerate(dep_chunks):
            segments.append(
                _Segment(
                    kind="dependency",
                    label="dependency",
                    path=chunk.file_path,
                    span=chunk.span,
                    text=chunk.text,
                    order=(2, idx),
                    depth=closure.pull_depths.get(chunk.id, 1),
                )
            )
    return segments


def _evict_to_budget(
    segments: list[_Segment], loop: Optional[TrainingLoop], budget: int
) -> tuple[list[_Segment], bool]:
    """Evict until the estimate fits. Order: lowest-scored snippets, then
    deepest dependencies. The training loop is never evicted, only truncated
    as a last resort."""
    truncated = False
    while sum(seg.cost for seg in segments) > budget:
        snippets = [s for s in segments if s.kind == "snippet"]
        if snippets:
            victim = min(snippets, key=lambda s: (s.score, s.order))
            segments.remove(victim)
            continue
        deps = [s for s in segments if s.kind == "dependency"]
        if deps:
            victim = max(deps, key=lambda s: (s.depth, s.order))
            segments.remove(victim)
            continue
        # Only protected material left. Collapse to the loop text alone and
        # truncate it at line boundaries, keeping at least one line.
        keep = [s for s in segments if s.kind in ("loop", "carrier")]
        if not keep:
            break
        seg = keep[0]
        if loop is not None:
            seg.text = loop.text
        lines = seg.text.splitlines()
        while len(lines) > 1:
            seg.text = "\n".join(lines)
            if seg.cost <= budget:
                break
            lines = lines[:-1]
        seg.text = "\n".join(lines)
        segments[:] = [seg]
        truncated = True
        break
    return segments, truncated


def assemble_contexts(
    groups: Sequence[ModuleGroup],
    loops_by_module: dict[str, Optional[TrainingLoop]],
    *,
    budget: int = DEFAULT_TOKEN_BUDGET,
    closures: Optional[dict[str, DependencyClosure]] = None,
    max_snippets: int = MAX_SNIPPETS,
) -> list[ReproductionContext]:
    """Render one budgeted context per group, ranked in the given order."""
    closures = closures or {}
    contexts: list[ReproductionContext] = []
    for rank, group in enumerate(groups, start=1):
        selected = sorted(
            group.members, key=lambda s: (-s.rerank_key, s.chunk.id)
        )[:max_snippets]
        loop = loops_by_module.get(group.module_id)
        closure = _merge_closures(group.module_id, selected, closures)
        segments = _build_segments(group, loop, selected, closure)
        segments, truncated = _evict_to_budget(segments, loop, budget)
        surviving_ids = {s.path + str(s.span) for s in segments}
        kept_snippets = [
            s
            for s in selected
            if (s.chunk.file_path + str(s.chunk.span)) in surviving_ids
        ]
        rendered = "\n\n".join(seg.render() for seg in segments)
        contexts.append(
            ReproductionContext(
                rank=rank,
                module_id=group.module_id,
                training_loop=loop,
                snippets=kept_snippets,
                dependencies=closure,
                rendered=rendered,
                token_budget_used=sum(seg.cost for seg in segments),
                truncated=truncated,
            )
        )
    return contexts
