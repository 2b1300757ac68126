import pytest

from dlrepro.chunking import chunk_file
from dlrepro.context import (
    ModuleGroup,
    assemble_contexts,
    estimate_tokens,
    extract_training_loops,
    partition_modules,
    rank_loops,
)
from dlrepro.dependencies import DependencyClosure
from dlrepro.grammar import get_grammar
from dlrepro.retrieval import QueryBundle, ScoredSnippet
from helpers import hash_embed, make_chunk

GRAMMAR = get_grammar("python")


def snip(text, *, cid, module, cross=0.5, hybrid=0.5, path=None):
    chunk = make_chunk(text, cid=cid, path=path or f"{module.replace('.', '/')}.py", module=module)
    return ScoredSnippet(
        chunk=chunk, bm25_raw=1.0, bm25_norm=0.5, angular=0.5, hybrid=hybrid, cross_score=cross
    )


def group_of(*snips, module=None):
    module = module or snips[0].chunk.module_path
    return ModuleGroup(module_id=module, members=list(snips), priority=max(s.rerank_key for s in snips))


def query():
    return QueryBundle(raw_text="training loss bug", terms=("training", "loss", "bug"), vector=hash_embed("training loss bug"))


# --- partitioning ---


def test_seven_modules_truncate_to_five_with_id_tie_break():
    snips = [snip(f"code {i}", cid=f"c{i}", module=f"mod{i}", cross=0.5) for i in range(7)]
    groups = partition_modules(snips, max_modules=5)
    assert len(groups) == 5
    assert [g.module_id for g in groups] == ["mod0", "mod1", "mod2", "mod3", "mod4"]


def test_priority_is_max_member_score_not_sum():
    many_low = [snip(f"low {i}", cid=f"l{i}", module="crowd", cross=0.4) for i in range(4)]
    one_high = [snip("high", cid="h0", module="star", cross=0.9)]
    groups = partition_modules(many_low + one_high)
    assert groups[0].module_id == "star"
    assert groups[0].priority == 0.9
    assert groups[1].module_id == "crowd"


def test_single_module_single_group():
    snips = [snip("a", cid="a", module="only"), snip("b", cid="b", module="only")]
    groups = partition_modules(snips)
    assert len(groups) == 1
    assert len(groups[0].members) == 2


def test_priority_falls_back_to_hybrid_without_cross():
    s = snip("a", cid="a", module="m", cross=None, hybrid=0.7)
    groups = partition_modules([s])
    assert groups[0].priority == 0.7


# --- training loop extraction ---


def loops_for(src, module="train"):
    chunks = chunk_file(f"{module}.py", src, GRAMMAR)
    members = [
        ScoredSnippet(chunk=c, bm25_raw=0, bm25_norm=0, angular=0, hybrid=0.5, cross_score=0.5)
        for c in chunks
    ]
    return extract_training_loops(group_of(*members, module=module), GRAMMAR)


def test_backward_step_loop_matches_h2_h3_h4_h6():
    src = (
        "def train(model, opt, data):\n"
        "    for e in range(10):\n"
        "        opt.zero_grad()\n"
        "        loss.backward()\n"
        "        opt.step()\n"
    )
    loops = loops_for(src)
    assert len(loops) == 1
    loop = loops[0]
    assert set(loop.matched_heuristics) == {"H2", "H3", "H4", "H6"}
    assert loop.components.backward_pass
    assert loop.components.gradient_step
    assert not loop.components.loss_computation
    assert not loop.components.forward_pass
    assert not loop.components.data_loader


def test_fit_call_matches_h1():
    loops = loops_for("def run(model, x, y):\n    model.fit(x, y)\n")
    assert len(loops) == 1
    assert loops[0].matched_heuristics == ("H1",)
    assert loops[0].components.forward_pass


def test_gradient_tape_scope_matches_h5():
    src = (
        "def step(model, x):\n"
        "    with tf.GradientTape() as tape:\n"
        "        out = model(x)\n"
    )
    loops = loops_for(src)
    assert any("H5" in l.matched_heuristics for l in loops)
    tape_loop = next(l for l in loops if "H5" in l.matched_heuristics)
    assert tape_loop.components.backward_pass


def test_loss_assignment_then_consumption_matches_h7():
    src = (
        "def epoch(model, batches, criterion):\n"
        "    for batch in batches:\n"
        "        loss = criterion(model(batch), batch.y)\n"
        "        total = loss.item()\n"
    )
    loops = loops_for(src)
    assert loops
    assert "H7" in loops[0].matched_heuristics
    assert loops[0].components.loss_computation


def test_loader_iteration_matches_h8():
    src = (
        "def run(model, loader):\n"
        "    for batch in loader:\n"
        "        out = model(batch)\n"
    )
    loops = loops_for(src)
    assert loops
    assert "H8" in loops[0].matched_heuristics
    assert loops[0].components.data_loader
    assert loops[0].components.forward_pass


def test_pure_function_has_no_loops():
    assert loops_for("def add(a, b):\n    return a + b\n") == []


def test_loop_text_and_span_point_into_chunk():
    src = (
        "def train(opt):\n"
        "    for e in range(3):\n"
        "        opt.step()\n"
    )
    loops = loops_for(src)
    (loop,) = loops
    assert loop.text.lstrip().startswith("for e in range(3):")
    assert loop.span == (2, 3)


def test_extraction_is_deterministic():
    src = (
        "def train(model, opt, loader):\n"
        "    for batch in loader:\n"
        "        loss = model(batch)\n"
        "        loss.backward()\n"
        "        opt.step()\n"
    )
    assert loops_for(src) == loops_for(src)


# --- loop ranking ---


def test_rank_empty_returns_none():
    assert rank_loops([], query(), lambda q, d: 0.5) is None


def test_rank_single_returns_it_scored():
    (loop,) = loops_for("def t(opt):\n    for i in range(2):\n        opt.step()\n")
    best = rank_loops([loop], query(), lambda q, d: 0.42)
    assert best.relevance == 0.42
    assert best.chunk_ref == loop.chunk_ref


def test_rank_two_picks_higher_scorer_value():
    src = (
        "def a(opt):\n"
        "    for i in range(2):\n"
        "        opt.step()\n"
        "\n"
        "def b(model, x, y):\n"
        "    model.fit(x, y)\n"
    )
    loops = loops_for(src)
    assert len(loops) == 2
    best = rank_loops(loops, query(), lambda q, d: 0.9 if "fit" in d else 0.1)
    assert "H1" in best.matched_heuristics
    assert best.relevance == 0.9


def test_rank_scorer_total_failure_falls_back_to_most_heuristics():
    src = (
        "def a(model, x, y):\n"
        "    model.fit(x, y)\n"
        "\n"
        "def b(model, opt, loader):\n"
        "    for batch in loader:\n"
        "        loss = criterion(model(batch))\n"
        "        loss.backward()\n"
        "        opt.step()\n"
    )
    loops = loops_for(src)

    def dead(q, d):
        raise RuntimeError("down")

    best = rank_loops(loops, query(), dead)
    assert best.fallback_ranked
    assert len(best.matched_heuristics) == max(len(l.matched_heuristics) for l in loops)


# --- context assembly ---


def closure_for(root_id, pulled, depths):
    return DependencyClosure(
        root=root_id,
        imported_modules=("json",),
        referenced_symbols=tuple((c.text.split()[1].rstrip("():"), c.id) for c in pulled),
        pulled_chunks=tuple(pulled),
        pull_depths=depths,
    )


def make_group_with_loop():
    loop_src = "def train(opt):\n    for i in range(4):\n        opt.step()\n"
    s_loop = snip(loop_src, cid="s_loop", module="pkg.train", cross=0.9)
    s_mid = snip("def helper_one():\n    return 1\n", cid="s_mid", module="pkg.train", cross=0.6)
    s_low = snip("def helper_two():\n    return 2\n", cid="s_low", module="pkg.train", cross=0.3)
    group = group_of(s_loop, s_mid, s_low, module="pkg.train")
    (loop,) = extract_training_loops(group, GRAMMAR)
    return group, loop, (s_loop, s_mid, s_low)


def test_assemble_ample_budget_includes_everything_once():
    group, loop, (s_loop, s_mid, s_low) = make_group_with_loop()
    dep1 = make_chunk("def dep_one():\n    return 10\n", cid="dep1", module="pkg.util")
    dep2 = make_chunk("def dep_two():\n    return 20\n", cid="dep2", module="pkg.util")
    closures = {"s_mid": closure_for("s_mid", [dep1, dep2], {"dep1": 1, "dep2": 2})}
    contexts = assemble_contexts([group], {"pkg.train": loop}, budget=6000, closures=closures)
    (ctx,) = contexts
    assert ctx.rank == 1
    assert ctx.module_id == "pkg.train"
    assert ctx.training_loop is not None
    assert not ctx.truncated
    for text in (s_mid.chunk.text, s_low.chunk.text, dep1.text, dep2.text):
        assert ctx.rendered.count(text) == 1
    assert loop.text.strip() in ctx.rendered
    assert ctx.token_budget_used <= 6000


def test_assemble_ranks_follow_group_order():
    g1 = group_of(snip("alpha code", cid="a", module="m1", cross=0.9))
    g2 = group_of(snip("beta code", cid="b", module="m2", cross=0.5))
    contexts = assemble_contexts([g1, g2], {}, budget=6000)
    assert [c.rank for c in contexts] == [1, 2]
    assert [c.module_id for c in contexts] == ["m1", "m2"]


def test_assemble_caps_snippets_at_five():
    snips = [snip(f"def f{i}():\n    return {i}\n", cid=f"s{i}", module="m", cross=0.9 - i * 0.1) for i in range(7)]
    (ctx,) = assemble_contexts([group_of(*snips, module="m")], {}, budget=6000)
    assert len(ctx.snippets) == 5
    assert {s.chunk.id for s in ctx.snippets} == {"s0", "s1", "s2", "s3", "s4"}


def test_eviction_drops_lowest_scored_snippet_first_then_deepest_dependency():
    group, loop, (s_loop, s_mid, s_low) = make_group_with_loop()
    dep1 = make_chunk("def dep_one():\n    return 10\n", cid="dep1", module="pkg.util")
    dep2 = make_chunk("def dep_two():\n    return 20\n", cid="dep2", module="pkg.util")
    closures = {"s_mid": closure_for("s_mid", [dep1, dep2], {"dep1": 1, "dep2": 2})}

    (full,) = assemble_contexts([group], {"pkg.train": loop}, budget=6000, closures=closures)
    total = full.token_budget_used

    # Room for everything except one snippet: the lowest cross leaves first.
    (ctx,) = assemble_contexts([group], {"pkg.train": loop}, budget=total - 1, closures=closures)
    assert s_low.chunk.text not in ctx.rendered
    assert s_mid.chunk.text in ctx.rendered

    # Squeeze further: both plain snippets gone before any dependency.
    (ctx2,) = assemble_contexts([group], {"pkg.train": loop}, budget=ctx.token_budget_used - 1, closures=closures)
    assert s_mid.chunk.text not in ctx2.rendered
    assert dep1.text in ctx2.rendered or dep2.text in ctx2.rendered

    # Dependencies leave deepest first.
    (ctx3,) = assemble_contexts([group], {"pkg.train": loop}, budget=ctx2.token_budget_used - 1, closures=closures)
    assert dep2.text not in ctx3.rendered
    # The loop carrier chunk survives every squeeze.
    assert "for i in range(4):" in ctx3.rendered


def test_budget_too_small_truncates_loop_and_flags():
    group, loop, _ = make_group_with_loop()
    (ctx,) = assemble_contexts([group], {"pkg.train": loop}, budget=3)
    assert ctx.truncated
    assert ctx.training_loop is not None
    assert "for i in range(4):" in ctx.rendered or "def train" in ctx.rendered


def test_loop_chunk_not_duplicated_when_also_a_snippet():
    group, loop, (s_loop, _, _) = make_group_with_loop()
    (ctx,) = assemble_contexts([group], {"pkg.train": loop}, budget=6000)
    assert ctx.rendered.count("def train(opt):") == 1


def test_estimate_tokens_word_ratio():
    assert estimate_tokens("a b c") == 4  # ceil(3 * 1.3)
    assert estimate_tokens("") == 0
