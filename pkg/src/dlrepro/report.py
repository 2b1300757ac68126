"""Bug report loading and model-assisted restructuring.

The restructurer reorganizes a report into four fixed sections. Everything it
keeps must already appear in the original text: ungrounded lines are dropped,
and a response whose core or steps do not survive that filter is rejected.
One repair round, then a deterministic fallback that never invents content.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import prompts
from .errors import ProviderFailure

_HEADINGS = (
    "[CORE PROBLEM]",
    "[OBSERVED BEHAVIOUR]",
    "[EXPECTED BEHAVIOUR]",
    "[REPRODUCTION STEPS]",
)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_STEP_LINE_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s+)(.*)$")
_TB_START = "Traceback (most recent call last):"

DEFAULT_STEP = "Run the project's training entry point and watch for the reported failure."


@dataclass(frozen=True)
class BugReport:
    title: str
    body: str
    source_path: Optional[str] = None
    signature_data: Optional[dict] = None


@dataclass(frozen=True)
class StructuredReport:
    core_problem: str
    observed_behaviour: str
    expected_behaviour: str
    reproduction_steps: tuple[str, ...]
    degraded: bool = False


def load_report(path) -> BugReport:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        payload = json.loads(text)
        return BugReport(
            title=str(payload["title"]),
            body=str(payload["body"]),
            source_path=str(path),
            signature_data=payload.get("signature"),
        )
    lines = text.splitlines()
    title = ""
    body_lines = lines
    for i, line in enumerate(lines):
        if line.strip():
            title = line.strip().lstrip("#").strip()
            body_lines = lines[i + 1 :]
            break
    body = "\n".join(body_lines).lstrip("\n")
    if text.endswith("\n") and body and not body.endswith("\n"):
        body += "\n"
    return BugReport(title=title, body=body, source_path=str(path))


def extract_fenced_blocks(text: str) -> list[str]:
    return [m.group(1) for m in _FENCE_RE.finditer(text)]


def find_tracebacks(text: str) -> list[str]:
    """Capture traceback blocks: the header, indented frames, and the final
    exception line."""
    lines = text.splitlines()
    blocks = []
    i = 0
    while i < len(lines):
        if lines[i].strip() != _TB_START:
            i += 1
            continue
        j = i + 1
        while j < len(lines) and lines[j].startswith((" ", "\t")):
            j += 1
        if j < len(lines) and lines[j].strip() and not lines[j].startswith("```"):
            j += 1
        blocks.append("\n".join(lines[i:j]))
        i = j
    return blocks


def render_structured(report: StructuredReport) -> str:
    steps = "\n".join(f"{n}. {step}" for n, step in enumerate(report.reproduction_steps, 1))
    sections = (
        report.core_problem,
        report.observed_behaviour,
        report.expected_behaviour,
        steps,
    )
    parts = [f"{heading}\n{text.rstrip()}" for heading, text in zip(_HEADINGS, sections)]
    return "\n\n".join(parts) + "\n"


def parse_structured(text: str) -> StructuredReport:
    positions = []
    lines = text.splitlines()
    for heading in _HEADINGS:
        found = None
        for idx, line in enumerate(lines):
            if line.strip() == heading:
                found = idx
                break
        if found is None:
            raise ValueError(f"missing section heading {heading}")
        positions.append(found)
    if positions != sorted(positions) or len(set(positions)) != 4:
        raise ValueError("section headings out of order")
    bounds = positions + [len(lines)]
    sections = [
        "\n".join(lines[bounds[k] + 1 : bounds[k + 1]]).strip() for k in range(4)
    ]
    steps = []
    for line in sections[3].splitlines():
        if not line.strip():
            continue
        match = _STEP_LINE_RE.match(line)
        steps.append(match.group(1).strip() if match else line.strip())
    return StructuredReport(
        core_problem=sections[0],
        observed_behaviour=sections[1],
        expected_behaviour=sections[2],
        reproduction_steps=tuple(steps),
    )


def _norm(text: str) -> str:
    return " ".join(text.split()).lower()


def _filter_grounded(section: str, source_norm: str) -> str:
    kept = []
    for line in section.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("```"):
            kept.append(line)
            continue
        if _norm(stripped) in source_norm:
            kept.append(line)
    return "\n".join(kept).strip()


def _validate(response: str, report: BugReport):
    """Parse and ground a restructuring response. Returns (report, None) on
    success, (None, reason) on rejection."""
    try:
        parsed = parse_structured(response)
    except ValueError as exc:
        return None, str(exc)
    source_norm = _norm(report.title + "\n" + report.body)
    core = _filter_grounded(parsed.core_problem, source_norm)
    observed = _filter_grounded(parsed.observed_behaviour, source_norm)
    expected = _filter_grounded(parsed.expected_behaviour, source_norm)
    if not core:
        return None, "core problem missing or not grounded in the report"
    if not parsed.reproduction_steps:
        return None, "no reproduction steps"
    for step in parsed.reproduction_steps:
        if _norm(step) not in source_norm:
            return None, f"reproduction step not grounded in the report: {step!r}"
    return (
        replace(
            parsed,
            core_problem=core,
            observed_behaviour=observed,
            expected_behaviour=expected,
        ),
        None,
    )


def _append_missing_tracebacks(structured: StructuredReport, report: BugReport) -> StructuredReport:
    missing = [
        tb
        for tb in find_tracebacks(report.body)
        if _norm(tb) not in _norm(structured.observed_behaviour)
    ]
    if not missing:
        return structured
    observed = (structured.observed_behaviour.rstrip() + "\n\n" + "\n\n".join(missing)).strip()
    return replace(structured, observed_behaviour=observed)


def fallback_structure(report: BugReport, *, degraded: bool = True) -> StructuredReport:
    """Deterministic restructuring without a model. Also serves as the
    passthrough when restructuring is disabled."""
    body_lines = report.body.splitlines()
    core = report.title.strip()
    if not core:
        core = next((l.strip() for l in body_lines if l.strip()), "Unspecified failure.")

    observed_parts = [
        block.rstrip("\n")
        for block in extract_fenced_blocks(report.body)
        if re.search(r"Traceback|Error|Exception|nan|NaN", block)
    ]
    fenced_norm = _norm("\n".join(observed_parts))
    for tb in find_tracebacks(report.body):
        if _norm(tb) not in fenced_norm:
            observed_parts.append(tb)
    if not observed_parts:
        observed_parts = [
            l.strip()
            for l in body_lines
            if re.search(r"error|exception|crash|fail|nan", l, re.IGNORECASE)
        ]
    observed = "\n\n".join(observed_parts).strip() or "No failure text quoted in the report."

    expected_lines = [
        l.strip() for l in body_lines if re.search(r"\bexpect|\bshould\b", l, re.IGNORECASE)
    ]
    expected = "\n".join(expected_lines).strip() or "The run completes without the reported failure."

    steps = []
    for line in body_lines:
        match = _STEP_LINE_RE.match(line)
        if match and match.group(1).strip():
            steps.append(match.group(1).strip())
    if not steps:
        steps = [DEFAULT_STEP]

    return StructuredReport(
        core_problem=core,
        observed_behaviour=observed,
        expected_behaviour=expected,
        reproduction_steps=tuple(steps),
        degraded=degraded,
    )


def restructure_report(report: BugReport, gateway) -> StructuredReport:
    """One model pass, one repair pass, then the deterministic fallback."""
    try:
        response = gateway.complete(
            prompts.restructure_messages(report.title, report.body),
            role=prompts.ROLE_RESTRUCTURING,
        )
    except ProviderFailure:
        return _append_missing_tracebacks(fallback_structure(report), report)
    structured, reason = _validate(response, report)
    if structured is None:
        try:
            repaired = gateway.complete(
                prompts.restructure_repair_messages(report.title, report.body, response, reason),
                role=prompts.ROLE_RESTRUCTURING,
            )
        except ProviderFailure:
            return _append_missing_tracebacks(fallback_structure(report), report)
        structured, reason = _validate(repaired, report)
        if structured is None:
            return _append_missing_tracebacks(fallback_structure(report), report)
    return _append_missing_tracebacks(structured, report)
