"""End-to-end orchestration: index, retrieve, contextualize, reproduce, verify.

Every stage writes its artifact under the run's output directory, so a run can
be inspected or re-verified afterwards without the provider. Component
ablations reuse this single driver: each named component maps to one switch in
how the stages are wired.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agent import STAGES as AGENT_STAGES
from .agent import AgentOptions, run_agent
from .ann import DEFAULT_LEAF_SIZE, DEFAULT_N_TREES
from .chunking import chunk_file
from .context import (
    DEFAULT_TOKEN_BUDGET,
    MAX_MODULES,
    MAX_SNIPPETS,
    ModuleGroup,
    assemble_contexts,
    extract_training_loops,
    partition_modules,
    rank_loops,
)
from .dependencies import DEFAULT_DEPTH, ChunkedCorpus, resolve_dependencies
from .errors import LockError, NoChunksError, ScorerFailureError
from .gateway import DEFAULT_EMBED_DIM
from .grammar import get_grammar
from .indexing import (
    IndexBundle,
    build_dense_index,
    build_sparse_index,
    corpus_digest,
    load_index,
    read_corpus,
    write_index,
)
from .planning import Plan, generate_plan, render_plan, skeleton_plan
from .report import (
    fallback_structure,
    load_report,
    render_structured,
    restructure_report,
)
from .retrieval import DEFAULT_ALPHA, DEFAULT_TOP_K, build_query, hybrid_rank, rerank
from .symptoms import DEFAULT_SIMILARITY_THRESHOLD, SymptomOracle
from .trace import RunTrace
from .verification import DEFAULT_MARGIN, DEFAULT_SEEDS, BugSignature, verify_reproduction

COMPONENTS = (
    "restructuring",
    "planning",
    "structural",
    "static",
    "relevance",
    "runtime",
    "ann",
    "bm25",
    "reranker",
    "dependency",
    "partitioning",
    "loop_extraction",
    "loop_ranking",
)


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a reproduction run, with the stock defaults."""

    alpha: float = DEFAULT_ALPHA
    top_k: int = DEFAULT_TOP_K
    max_modules: int = MAX_MODULES
    max_snippets: int = MAX_SNIPPETS
    max_attempts_per_context: int = 5
    max_contexts: int = 5
    token_budget: int = DEFAULT_TOKEN_BUDGET
    dependency_depth: int = DEFAULT_DEPTH
    n_trees: int = DEFAULT_N_TREES
    leaf_size: int = DEFAULT_LEAF_SIZE
    forest_seed: int = 0
    embed_dim: int = DEFAULT_EMBED_DIM
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    margin: float = DEFAULT_MARGIN
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    trial_timeout_s: float = 300.0
    oracle_timeout_s: float = 60.0
    disabled_components: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(
            self, "disabled_components", tuple(str(c) for c in self.disabled_components)
        )
        unknown = [c for c in self.disabled_components if c not in COMPONENTS]
        if unknown:
            raise ValueError(
                f"unknown components {unknown}; known: {', '.join(COMPONENTS)}"
            )
        if self.disabled("ann") and self.disabled("bm25"):
            raise ValueError("cannot disable both ann and bm25; no retriever would remain")

    def disabled(self, component: str) -> bool:
        return component in self.disabled_components

    @property
    def effective_alpha(self) -> float:
        # the blend weight doubles as the ablation switch for either retriever
        if self.disabled("ann"):
            return 0.0
        if self.disabled("bm25"):
            return 1.0
        return self.alpha

    def to_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["seeds"] = list(self.seeds)
        payload["disabled_components"] = list(self.disabled_components)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**payload)


@contextmanager
def run_lock(out_dir: Path):
    """One run per output directory, enforced with an O_EXCL lock file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(str(lock_path)) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode("utf-8"))
    finally:
        os.close(fd)
    try:
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- indexing ---


def ensure_index(
    repo: Path,
    index_dir: Path,
    gateway,
    config: RunConfig,
    trace: Optional[RunTrace] = None,
) -> IndexBundle:
    """Build the index, or load it when the stored corpus digest still matches."""
    repo = Path(repo)
    index_dir = Path(index_dir)
    files = read_corpus(repo)
    if not files:
        raise NoChunksError(f"no Python files under {repo}")
    digest = corpus_digest(files)
    if (index_dir / "manifest.json").exists():
        bundle = load_index(index_dir)
        if bundle.digest == digest:
            if trace:
                trace.emit("index_loaded", chunks=len(bundle.chunks), digest=digest)
            return bundle
    grammar = get_grammar("python")
    chunks = []
    for rel_path in sorted(files):
        chunks.extend(chunk_file(rel_path, files[rel_path], grammar))
    sparse = build_sparse_index(chunks)
    dense = build_dense_index(
        chunks,
        gateway.embed,
        n_trees=config.n_trees,
        leaf_size=config.leaf_size,
        seed=config.forest_seed,
    )
    params = {"n_trees": config.n_trees, "leaf_size": config.leaf_size, "embed_dim": config.embed_dim}
    write_index(index_dir, chunks, sparse, dense, digest, params=params)
    if trace:
        trace.emit("index_built", files=len(files), chunks=len(chunks), digest=digest)
    return IndexBundle(chunks=chunks, sparse=sparse, dense=dense, digest=digest, params=params)


# --- retrieval ---


def retrieve_snippets(bundle: IndexBundle, query, gateway, config: RunConfig, trace=None):
    chunk_map = {c.id: c for c in bundle.chunks}
    ranked = hybrid_rank(
        query,
        bundle.sparse,
        bundle.dense,
        alpha=config.effective_alpha,
        k=config.top_k,
        chunks=chunk_map,
    )
    rerank_degraded = False
    if not config.disabled("reranker"):
        try:
            ranked = rerank(query, ranked, gateway.cross_score)
        except ScorerFailureError:
            # hybrid order still stands when the cross-scorer is down
            rerank_degraded = True
    if trace:
        trace.emit(
            "retrieval_done",
            pool=len(ranked),
            reranked=not config.disabled("reranker") and not rerank_degraded,
            top=[s.chunk.id for s in ranked[:5]],
        )
    return ranked


# --- context assembly ---


def build_contexts(bundle: IndexBundle, snippets, query, gateway, config: RunConfig, trace=None):
    if config.disabled("partitioning"):
        priority = max((s.rerank_key for s in snippets), default=0.0)
        groups = [ModuleGroup(module_id="all", members=list(snippets), priority=priority)]
    else:
        groups = partition_modules(snippets, config.max_modules)

    grammar = get_grammar("python")
    loops_by_module = {}
    for group in groups:
        if config.disabled("loop_extraction"):
            loops_by_module[group.module_id] = None
            continue
        loops = extract_training_loops(group, grammar)
        if not loops:
            loops_by_module[group.module_id] = None
        elif config.disabled("loop_ranking"):
            loops_by_module[group.module_id] = replace(loops[0], fallback_ranked=True)
        else:
            loops_by_module[group.module_id] = rank_loops(loops, query, gateway.cross_score)

    closures = {}
    if not config.disabled("dependency"):
        corpus = ChunkedCorpus(bundle.chunks)
        for group in groups:
            for snip in group.members:
                if snip.chunk.id not in closures:
                    closures[snip.chunk.id] = resolve_dependencies(
                        snip.chunk, corpus, max_depth=config.dependency_depth
                    )

    contexts = assemble_contexts(
        groups,
        loops_by_module,
        budget=config.token_budget,
        closures=closures or None,
        max_snippets=config.max_snippets,
    )
    if trace:
        trace.emit(
            "contexts_built",
            count=len(contexts),
            modules=[c.module_id for c in contexts],
            loops=[c.module_id for c in contexts if c.training_loop is not None],
            truncated=[c.rank for c in contexts if c.truncated],
        )
    return groups, loops_by_module, contexts


# --- full reproduction run ---


def run_reproduction(
    repo: Path,
    report_path: Path,
    out_dir: Path,
    gateway,
    config: Optional[RunConfig] = None,
    *,
    index_dir: Optional[Path] = None,
    clock: Callable[[], float] = time.time,
) -> dict:
    """Drive report -> contexts -> plans -> agent, writing artifacts throughout."""
    config = config or RunConfig()
    out_dir = Path(out_dir)
    with run_lock(out_dir):
        trace = RunTrace(clock)
        trace.emit(
            "run_started",
            report=Path(report_path).name,
            disabled=sorted(config.disabled_components),
        )

        bug = load_report(report_path)
        if config.disabled("restructuring"):
            structured = fallback_structure(bug)
        else:
            structured = restructure_report(bug, gateway)
        structured_text = render_structured(structured)
        (out_dir / "report.structured.md").write_text(structured_text, encoding="utf-8")
        trace.emit(
            "report_structured",
            degraded=structured.degraded,
            steps=len(structured.reproduction_steps),
        )

        bundle = ensure_index(repo, index_dir or out_dir / "index", gateway, config, trace)
        query = build_query(structured_text, gateway.embed)
        snippets = retrieve_snippets(bundle, query, gateway, config, trace)
        groups, loops_by_module, contexts = build_contexts(
            bundle, snippets, query, gateway, config, trace
        )

        contexts_dir = out_dir / "contexts"
        contexts_dir.mkdir(exist_ok=True)
        manifest = []
        for ctx in contexts:
            (contexts_dir / f"context_{ctx.rank}.md").write_text(ctx.rendered, encoding="utf-8")
            manifest.append(
                {
                    "rank": ctx.rank,
                    "module_id": ctx.module_id,
                    "snippets": [s.chunk.id for s in ctx.snippets],
                    "has_training_loop": ctx.training_loop is not None,
                    "token_budget_used": ctx.token_budget_used,
                    "truncated": ctx.truncated,
                }
            )
        _write_json(contexts_dir / "manifest.json", manifest)

        plans_dir = out_dir / "plans"
        plans_dir.mkdir(exist_ok=True)
        plans: list[Plan] = []
        for ctx in contexts:
            if config.disabled("planning"):
                plan = skeleton_plan(structured, ctx.rank)
            else:
                plan = generate_plan(structured, ctx.rendered, ctx.rank, gateway)
            plans.append(plan)
            (plans_dir / f"plan_{ctx.rank}.md").write_text(render_plan(plan), encoding="utf-8")
        trace.emit(
            "plans_ready",
            count=len(plans),
            degraded=[p.context_rank for p in plans if p.degraded],
        )

        oracle = SymptomOracle(
            gateway,
            threshold=config.similarity_threshold,
            timeout_s=config.oracle_timeout_s,
            clock=clock,
        )
        options = AgentOptions(
            max_attempts_per_context=config.max_attempts_per_context,
            max_contexts=config.max_contexts,
            disabled_stages=frozenset(set(AGENT_STAGES) & set(config.disabled_components)),
        )
        outcome = run_agent(
            structured,
            contexts,
            plans,
            gateway,
            oracle.evaluate,
            options=options,
            trace=trace,
            clock=clock,
        )

        if outcome.final_script is not None:
            (out_dir / "repro.py").write_text(outcome.final_script, encoding="utf-8")
        payload = {
            "status": outcome.status,
            "reproduced": outcome.status == "reproduced",
            "attempts_total": outcome.attempts_total,
            "contexts_tried": outcome.contexts_tried,
            "advisory": outcome.advisory,
            "script": "repro.py" if outcome.final_script is not None else None,
            "corpus_digest": bundle.digest,
            "config": config.to_dict(),
        }
        _write_json(out_dir / "outcome.json", payload)
        trace.write_jsonl(out_dir / "trace.jsonl")
        return payload


# --- verification ---


def run_verification(
    report_path: Path,
    script_path: Path,
    out_dir: Path,
    config: Optional[RunConfig] = None,
) -> dict:
    """Verify a finished script against the report's failure signature."""
    config = config or RunConfig()
    bug = load_report(report_path)
    if not bug.signature_data:
        raise ValueError(
            "report carries no failure signature; verification needs expected "
            "error or metric data"
        )
    signature = BugSignature.from_dict(bug.signature_data)
    script_text = Path(script_path).read_text(encoding="utf-8")
    verdict = verify_reproduction(
        signature,
        script_text,
        seeds=config.seeds,
        timeout_s=config.trial_timeout_s,
        margin=config.margin,
    )
    payload = verdict.to_dict()
    payload["script"] = Path(script_path).name
    payload["config"] = config.to_dict()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "verdict.json", payload)
    return payload


# --- ablation sweeps ---


def run_ablation(
    repo: Path,
    report_path: Path,
    out_dir: Path,
    gateway_factory: Callable[[], object],
    config: Optional[RunConfig] = None,
    components: Optional[Sequence[str]] = None,
    *,
    clock: Callable[[], float] = time.time,
) -> dict:
    """Baseline plus one run per disabled component, with outcome deltas.

    gateway_factory must hand back a fresh gateway per run so provider state
    (recording logs, scripted queues) never leaks across arms.
    """
    config = config or RunConfig()
    components = list(components) if components is not None else list(COMPONENTS)
    unknown = [c for c in components if c not in COMPONENTS]
    if unknown:
        raise ValueError(f"unknown components {unknown}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shared_index = out_dir / "index"

    def summarize(outcome: dict) -> dict:
        return {
            "status": outcome["status"],
            "reproduced": outcome["reproduced"],
            "attempts_total": outcome["attempts_total"],
            "contexts_tried": outcome["contexts_tried"],
        }

    baseline = run_reproduction(
        repo,
        report_path,
        out_dir / "baseline",
        gateway_factory(),
        config,
        index_dir=shared_index,
        clock=clock,
    )
    arms = {"baseline": summarize(baseline)}
    for component in components:
        arm_config = replace(
            config, disabled_components=tuple(config.disabled_components) + (component,)
        )
        outcome = run_reproduction(
            repo,
            report_path,
            out_dir / f"ablate_{component}",
            gateway_factory(),
            arm_config,
            index_dir=shared_index,
            clock=clock,
        )
        row = summarize(outcome)
        row["reproduced_changed"] = row["reproduced"] != baseline["reproduced"]
        row["attempts_delta"] = row["attempts_total"] - baseline["attempts_total"]
        arms[component] = row
    summary = {"components": components, "arms": arms, "config": config.to_dict()}
    _write_json(out_dir / "ablation_summary.json", summary)
    return summary
