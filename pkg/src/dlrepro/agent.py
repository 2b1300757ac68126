"""Budgeted generate, validate, refine loop.

Each context gets a fixed number of candidate attempts. Every attempt runs
the feedback stages in a fixed order; the first non-pass verdict ends the
attempt, and an irrelevance verdict abandons the whole context. Non-pass
feedback from earlier attempts is threaded into the next generation prompt
without timestamps, so prompt digests stay stable across identical runs.
"""

from __future__ import annotations

import ast
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import prompts
from .context import ReproductionContext
from .errors import ProviderFailure
from .planning import Plan, render_plan
from .report import StructuredReport, extract_fenced_blocks, render_structured
from .static_analysis import default_analyzer
from .trace import RunTrace

STAGES = ("structural", "static", "relevance", "runtime")

_VERDICT_RE = re.compile(r"VERDICT:\s*(RELEVANT|IRRELEVANT)", re.IGNORECASE)
_REASON_RE = re.compile(r"REASON:\s*(.+)")

_ADVISORY_RULES = (
    ("api_dependency", re.compile(r"unresolved-import|ModuleNotFoundError|No module named", re.IGNORECASE)),
    ("environment_dependent", re.compile(r"\bCUDA\b|\bGPU\b|device|driver", re.IGNORECASE)),
    ("data_dependent", re.compile(r"dataset|FileNotFoundError|no such file|download", re.IGNORECASE)),
)


@dataclass(frozen=True)
class AgentOptions:
    max_attempts_per_context: int = 5
    max_contexts: int = 5
    disabled_stages: frozenset = frozenset()

    @property
    def attempt_cap(self) -> int:
        return self.max_attempts_per_context * self.max_contexts


@dataclass(frozen=True)
class FeedbackRecord:
    stage: str
    verdict: str  # pass | regenerate | switch_context
    details: str
    timestamp: float


@dataclass(frozen=True)
class CandidateScript:
    text: str
    context_rank: int
    attempt_number: int
    attempt_global: int


@dataclass
class AgentOutcome:
    status: str  # reproduced | exhausted
    final_script: Optional[str]
    attempts_total: int
    contexts_tried: int
    trace: list[dict] = field(default_factory=list)
    advisory: Optional[str] = None


def extract_script(response: str) -> Optional[str]:
    for block in extract_fenced_blocks(response):
        if block.strip():
            return block
    return None


def feedback_digest(history: Sequence[tuple[int, FeedbackRecord]]) -> str:
    """Non-pass feedback as stable prompt text. Timestamps never enter."""
    lines = [
        f"[attempt {attempt} {record.stage}] {record.details}"
        for attempt, record in history
        if record.verdict != "pass"
    ]
    return "\n".join(lines)


def structural_check(script_text: str, now: float) -> FeedbackRecord:
    try:
        tree = ast.parse(script_text)
    except SyntaxError as exc:
        return FeedbackRecord("structural", "regenerate", f"syntax error: {exc.msg} (line {exc.lineno})", now)
    if not tree.body:
        return FeedbackRecord("structural", "regenerate", "script is empty", now)
    return FeedbackRecord("structural", "pass", "script parses", now)


def static_check(script_text: str, analyzer, now: float) -> FeedbackRecord:
    findings = analyzer.analyze(script_text)
    blocking = [f for f in findings if f.blocking]
    if blocking:
        details = "; ".join(f"{f.code}: {f.message} (line {f.line})" for f in blocking)
        return FeedbackRecord("static", "regenerate", details, now)
    if findings:
        return FeedbackRecord("static", "pass", f"{len(findings)} non-blocking findings", now)
    return FeedbackRecord("static", "pass", "no findings", now)


def relevance_check(structured_text: str, script_text: str, gateway, now: float) -> FeedbackRecord:
    """Ask the judge whether the script targets the reported bug.

    The judge is advisory: if it cannot be reached or parsed twice, the
    attempt proceeds with a warning rather than stalling the loop.
    """
    messages = prompts.relevance_messages(structured_text, script_text)
    response = None
    for _ in range(2):
        try:
            response = gateway.complete(messages, role=prompts.ROLE_RELEVANCE)
        except ProviderFailure:
            return FeedbackRecord("relevance", "pass", "relevance judge unavailable; proceeding", now)
        match = _VERDICT_RE.search(response)
        if match:
            reason_match = _REASON_RE.search(response)
            reason = reason_match.group(1).strip() if reason_match else ""
            if match.group(1).upper() == "IRRELEVANT":
                return FeedbackRecord("relevance", "switch_context", reason or "judged irrelevant", now)
            return FeedbackRecord("relevance", "pass", reason or "judged relevant", now)
    return FeedbackRecord("relevance", "pass", "relevance verdict unparseable; proceeding", now)


def _generate(
    structured_text: str,
    context: ReproductionContext,
    plan_text: str,
    digest: str,
    gateway,
) -> tuple[Optional[str], Optional[str]]:
    """Returns (script, None) or (None, failure detail)."""
    messages = prompts.generation_messages(structured_text, context.rendered, plan_text, digest)
    try:
        response = gateway.complete(messages, role=prompts.ROLE_GENERATION)
    except ProviderFailure as exc:
        return None, f"provider failure during generation: {exc}"
    script = extract_script(response)
    if script is not None:
        return script, None
    try:
        retry = gateway.complete(prompts.regeneration_messages(response), role=prompts.ROLE_GENERATION)
    except ProviderFailure as exc:
        return None, f"provider failure during generation: {exc}"
    script = extract_script(retry)
    if script is not None:
        return script, None
    return None, "response contained no code block after one re-prompt"


def _advisory(stage_events: list[dict]) -> Optional[str]:
    text = "\n".join(e.get("details", "") for e in stage_events)
    for label, pattern in _ADVISORY_RULES:
        if pattern.search(text):
            return label
    return None


def run_agent(
    structured: StructuredReport,
    contexts: Sequence[ReproductionContext],
    plans: Sequence[Plan],
    gateway,
    runtime_oracle: Callable[[StructuredReport, str], FeedbackRecord],
    *,
    options: AgentOptions = AgentOptions(),
    analyzer=None,
    trace: Optional[RunTrace] = None,
    clock: Callable[[], float] = time.time,
) -> AgentOutcome:
    trace = trace or RunTrace(clock=clock)
    structured_text = render_structured(structured)
    if analyzer is None:
        known = {c.module_id for c in contexts}
        for context in contexts:
            if context.dependencies is not None:
                known.update(context.dependencies.imported_modules)
        analyzer = default_analyzer(known)
    plan_by_rank = {plan.context_rank: plan for plan in plans}

    trace.emit(
        "agent_started",
        max_attempts=options.max_attempts_per_context,
        max_contexts=options.max_contexts,
        disabled=sorted(options.disabled_stages),
    )

    attempts_total = 0
    contexts_tried = 0
    last_script: Optional[str] = None

    for context in contexts[: options.max_contexts]:
        contexts_tried += 1
        trace.emit("context_started", context_rank=context.rank, module_id=context.module_id)
        plan = plan_by_rank.get(context.rank)
        plan_text = render_plan(plan) if plan is not None else ""
        history: list[tuple[int, FeedbackRecord]] = []
        abandoned = False

        for attempt in range(1, options.max_attempts_per_context + 1):
            if attempts_total >= options.attempt_cap:
                break
            attempts_total += 1
            trace.emit(
                "attempt_started",
                context_rank=context.rank,
                attempt=attempt,
                attempt_global=attempts_total,
            )

            script, failure = _generate(
                structured_text, context, plan_text, feedback_digest(history), gateway
            )
            if script is None:
                record = FeedbackRecord("structural", "regenerate", failure, clock())
                history.append((attempt, record))
                trace.emit(
                    "stage_result",
                    context_rank=context.rank,
                    attempt=attempt,
                    stage=record.stage,
                    verdict=record.verdict,
                    details=record.details,
                )
                continue
            last_script = script
            trace.emit(
                "candidate_generated", context_rank=context.rank, attempt=attempt, chars=len(script)
            )

            blocked = None
            for stage in STAGES:
                if stage in options.disabled_stages:
                    continue
                if stage == "structural":
                    record = structural_check(script, clock())
                elif stage == "static":
                    record = static_check(script, analyzer, clock())
                elif stage == "relevance":
                    record = relevance_check(structured_text, script, gateway, clock())
                else:
                    record = runtime_oracle(structured, script)
                history.append((attempt, record))
                trace.emit(
                    "stage_result",
                    context_rank=context.rank,
                    attempt=attempt,
                    stage=record.stage,
                    verdict=record.verdict,
                    details=record.details,
                )
                if record.verdict != "pass":
                    blocked = record
                    break

            if blocked is None:
                trace.emit(
                    "agent_finished",
                    status="reproduced",
                    attempts_total=attempts_total,
                    contexts_tried=contexts_tried,
                )
                return AgentOutcome(
                    status="reproduced",
                    final_script=script,
                    attempts_total=attempts_total,
                    contexts_tried=contexts_tried,
                    trace=trace.events,
                )
            if blocked.verdict == "switch_context":
                trace.emit("context_abandoned", context_rank=context.rank, reason=blocked.details)
                abandoned = True
                break

        if abandoned:
            continue

    advisory = _advisory(trace.of_kind("stage_result"))
    trace.emit(
        "agent_finished",
        status="exhausted",
        attempts_total=attempts_total,
        contexts_tried=contexts_tried,
        advisory=advisory,
    )
    return AgentOutcome(
        status="exhausted",
        final_script=last_script,
        attempts_total=attempts_total,
        contexts_tried=contexts_tried,
        trace=trace.events,
        advisory=advisory,
    )
