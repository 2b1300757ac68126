"""Reproduction plan generation and validation.

A plan is a sequence of staged actions with attached checks. Stage kinds must
cover setup, execution, and verification; numeric parameters quoted in the
reproduction steps are merged into the plan so they always copy through.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional

from . import prompts
from .errors import ProviderFailure
from .report import StructuredReport, render_structured

STAGE_KINDS = ("environment_setup", "execution", "verification")
CHECK_KINDS = ("output_assertion", "resource_monitor", "error_verification")

_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?(?:[eE]-?\d+)?")
_HEADER_RE = re.compile(r"^# Reproduction plan \(context (\d+)\)\s*$")
_STAGE_RE = re.compile(r"^## Stage: (.*) \[([a-z_]+)\]\s*$")
_ACTION_RE = re.compile(r"^Action: (.*)$")
_CHECK_RE = re.compile(r"^Check\[([a-z_]+)\]: (.*)$")
_PARAMS_RE = re.compile(r"^Parameters:(.*)$")


@dataclass(frozen=True)
class PlanCheck:
    kind: str
    description: str


@dataclass(frozen=True)
class PlanStage:
    kind: str
    title: str
    actions: tuple[str, ...]
    checks: tuple[PlanCheck, ...]


@dataclass(frozen=True)
class Plan:
    context_rank: int
    stages: tuple[PlanStage, ...]
    params_echo: tuple[str, ...]
    degraded: bool = False


def extract_numeric_literals(steps) -> tuple[str, ...]:
    seen: list[str] = []
    for step in steps:
        for match in _NUMBER_RE.finditer(step):
            value = match.group(0)
            if value not in seen:
                seen.append(value)
    return tuple(seen)


def render_plan(plan: Plan) -> str:
    blocks = [f"# Reproduction plan (context {plan.context_rank})"]
    for stage in plan.stages:
        lines = [f"## Stage: {stage.title} [{stage.kind}]"]
        lines.extend(f"Action: {action}" for action in stage.actions)
        lines.extend(f"Check[{check.kind}]: {check.description}" for check in stage.checks)
        blocks.append("\n".join(lines))
    blocks.append("Parameters: " + ", ".join(plan.params_echo))
    return "\n\n".join(blocks) + "\n"


def parse_plan(text: str) -> Plan:
    rank: Optional[int] = None
    stages: list[dict] = []
    params: tuple[str, ...] = ()
    for line in text.splitlines():
        header = _HEADER_RE.match(line)
        if header:
            rank = int(header.group(1))
            continue
        stage = _STAGE_RE.match(line)
        if stage:
            stages.append({"title": stage.group(1), "kind": stage.group(2), "actions": [], "checks": []})
            continue
        if not stages:
            continue
        action = _ACTION_RE.match(line)
        if action:
            stages[-1]["actions"].append(action.group(1))
            continue
        check = _CHECK_RE.match(line)
        if check:
            stages[-1]["checks"].append(PlanCheck(kind=check.group(1), description=check.group(2)))
            continue
        param_line = _PARAMS_RE.match(line)
        if param_line:
            params = tuple(p.strip() for p in param_line.group(1).split(",") if p.strip())
    if not stages:
        raise ValueError("no plan stages found")
    if rank is None:
        raise ValueError("missing plan header")
    return Plan(
        context_rank=rank,
        stages=tuple(
            PlanStage(
                kind=s["kind"],
                title=s["title"],
                actions=tuple(s["actions"]),
                checks=tuple(s["checks"]),
            )
            for s in stages
        ),
        params_echo=params,
    )


def validate_plan(plan: Plan) -> list[str]:
    problems: list[str] = []
    if len(plan.stages) < 3:
        problems.append("fewer than three stages")
    present = {stage.kind for stage in plan.stages}
    for required in STAGE_KINDS:
        if required not in present:
            problems.append(f"missing stage kind {required}")
    for stage in plan.stages:
        if stage.kind not in STAGE_KINDS:
            problems.append(f"unknown stage kind {stage.kind}")
        if not stage.actions:
            problems.append(f"stage {stage.title!r} has no actions")
        if not stage.checks:
            problems.append(f"stage {stage.title!r} has no checks")
        for check in stage.checks:
            if check.kind not in CHECK_KINDS:
                problems.append(f"unknown check kind {check.kind}")
    return problems


def skeleton_plan(structured: StructuredReport, context_rank: int, *, degraded: bool = True) -> Plan:
    """Deterministic minimal plan used when the model path is unavailable."""
    steps = structured.reproduction_steps or ("Run the failing entry point.",)
    stages = (
        PlanStage(
            kind="environment_setup",
            title="Prepare an isolated run",
            actions=(
                "Create a clean working directory and fix the random seed before running anything.",
                "Make the modules shown in the context importable.",
            ),
            checks=(
                PlanCheck(kind="error_verification", description="All imports resolve without ModuleNotFoundError."),
            ),
        ),
        PlanStage(
            kind="execution",
            title="Run the reported steps",
            actions=steps,
            checks=(
                PlanCheck(kind="resource_monitor", description="Watch wall time and memory while the run progresses."),
                PlanCheck(kind="output_assertion", description="PHASE and METRIC lines appear on stdout."),
            ),
        ),
        PlanStage(
            kind="verification",
            title="Confirm the symptom",
            actions=("Compare the observed failure with the reported symptom.",),
            checks=(
                PlanCheck(kind="error_verification", description="The reported error type is raised."),
                PlanCheck(kind="output_assertion", description="Captured metrics line up with the report."),
            ),
        ),
    )
    return Plan(
        context_rank=context_rank,
        stages=stages,
        params_echo=extract_numeric_literals(steps),
        degraded=degraded,
    )


def _try_parse(response: str, rank: int):
    try:
        plan = parse_plan(response)
    except ValueError as exc:
        return None, str(exc)
    problems = validate_plan(plan)
    if problems:
        return None, "; ".join(problems)
    return replace(plan, context_rank=rank), None


def generate_plan(
    structured: StructuredReport, context_rendered: str, rank: int, gateway
) -> Plan:
    """One model pass, one repair pass, then the skeleton."""
    structured_text = render_structured(structured)
    try:
        response = gateway.complete(
            prompts.plan_messages(structured_text, context_rendered, rank),
            role=prompts.ROLE_PLANNING,
        )
    except ProviderFailure:
        return skeleton_plan(structured, rank)
    plan, problem = _try_parse(response, rank)
    if plan is None:
        try:
            repaired = gateway.complete(
                prompts.plan_repair_messages(structured_text, context_rendered, rank, response, problem),
                role=prompts.ROLE_PLANNING,
            )
        except ProviderFailure:
            return skeleton_plan(structured, rank)
        plan, problem = _try_parse(repaired, rank)
        if plan is None:
            return skeleton_plan(structured, rank)
    merged = list(plan.params_echo)
    for value in extract_numeric_literals(structured.reproduction_steps):
        if value not in merged:
            merged.append(value)
    return replace(plan, params_echo=tuple(merged))
