from pathlib import Path

import pytest

from dlrepro import prompts
from dlrepro.agent import extract_script
from dlrepro.offline import RuleBasedCompleter, offline_gateway
from dlrepro.planning import generate_plan, validate_plan
from dlrepro.report import load_report, render_structured, restructure_report
from dlrepro.sandbox import execution_summary, run_script
from dlrepro.symptoms import SymptomOracle, map_to_taxonomy, parse_state

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def bug():
    return load_report(FIXTURES / "report_shape_mismatch.json")


@pytest.fixture(scope="module")
def structured(bug):
    return restructure_report(bug, offline_gateway())


def test_restructure_is_grounded_and_not_degraded(structured):
    assert not structured.degraded
    assert any("batch_size=32" in step for step in structured.reproduction_steps)
    assert "ValueError: shape mismatch" in structured.observed_behaviour
    assert "shape mismatch" in structured.core_problem


def test_plan_passes_validation(structured):
    plan = generate_plan(structured, "context text", 2, offline_gateway())
    assert not plan.degraded
    assert plan.context_rank == 2
    assert validate_plan(plan) == []
    assert "32" in plan.params_echo


def test_generated_script_reproduces_reported_error(structured):
    gateway = offline_gateway()
    messages = prompts.generation_messages(render_structured(structured), "ctx", "plan", "")
    script = extract_script(gateway.complete(messages, role=prompts.ROLE_GENERATION))
    assert script is not None
    result = run_script(script, seed=0, timeout_s=30)
    assert result.exit_status == 1
    assert "ValueError: shape mismatch: expected (32, 1), got (32,)" in result.stderr
    assert "PHASE training" in result.stdout


def test_relevance_verdicts(structured):
    gateway = offline_gateway()
    rendered = render_structured(structured)
    on_topic = prompts.relevance_messages(rendered, "raise ValueError('shape mismatch')")
    off_topic = prompts.relevance_messages(rendered, "print('hello world')")
    assert "RELEVANT" in gateway.complete(on_topic, role=prompts.ROLE_RELEVANCE).splitlines()[0]
    assert "IRRELEVANT" in gateway.complete(off_topic, role=prompts.ROLE_RELEVANCE)


def test_state_response_parses_for_crash_and_silent(structured):
    gateway = offline_gateway()
    rendered = render_structured(structured)
    crash = run_script("raise ValueError('shape mismatch: expected (32, 1), got (32,)')\n", timeout_s=30)
    crash_msgs = prompts.state_messages(rendered, "s", execution_summary(crash))
    state = parse_state(gateway.complete(crash_msgs, role=prompts.ROLE_RUNTIME))
    assert state.outcome == "crash"
    assert any("ValueError" in s for s in state.signals)

    quiet = run_script("print('METRIC loss 0.5')\n", timeout_s=30)
    quiet_msgs = prompts.state_messages(rendered, "s", execution_summary(quiet))
    state = parse_state(gateway.complete(quiet_msgs, role=prompts.ROLE_RUNTIME))
    assert state.outcome == "silent"


def test_taxonomy_picks_shape_mismatch(structured):
    gateway = offline_gateway()
    crash = run_script("raise ValueError('shape mismatch: expected (32, 1), got (32,)')\n", timeout_s=30)
    msgs = prompts.state_messages(render_structured(structured), "s", execution_summary(crash))
    state = parse_state(gateway.complete(msgs, role=prompts.ROLE_RUNTIME))
    entry = map_to_taxonomy(state, gateway)
    assert entry.category_id == "model/shape-mismatch"
    assert entry.match_method == "model_choice"


def test_similarity_scores(structured):
    gateway = offline_gateway()
    matched = prompts.similarity_messages(
        "ValueError: shape mismatch: expected (32, 1), got (32,)",
        "OUTCOME: crash\nSIGNALS: ValueError: shape mismatch",
    )
    mismatched = prompts.similarity_messages(
        "ValueError: shape mismatch", "OUTCOME: crash\nSIGNALS: KeyError: missing"
    )
    assert "0.95" in gateway.complete(matched, role=prompts.ROLE_RUNTIME)
    assert "0.2" in gateway.complete(mismatched, role=prompts.ROLE_RUNTIME)


def test_oracle_passes_generated_script_end_to_end(structured):
    gateway = offline_gateway()
    messages = prompts.generation_messages(render_structured(structured), "ctx", "plan", "")
    script = extract_script(gateway.complete(messages, role=prompts.ROLE_GENERATION))
    oracle = SymptomOracle(gateway, timeout_s=30)
    record = oracle.evaluate(structured, script)
    assert record.verdict == "pass"
    assert "similarity=0.95" in record.details
    assert "category=model/shape-mismatch" in record.details
