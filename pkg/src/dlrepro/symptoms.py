"""Runtime symptom analysis: state approximation, taxonomy mapping, and the
similarity verdict that gates the agent's runtime stage.

Every model interaction degrades safely: a failed or unparseable call can
lower confidence or force a non-pass verdict, never fabricate a pass.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

from . import prompts
from .agent import FeedbackRecord
from .errors import ProviderFailure
from .report import StructuredReport, render_structured
from .sandbox import RunResult, execution_summary, run_script

DEFAULT_SIMILARITY_THRESHOLD = 0.7

_EXC_RE = re.compile(r"\b[A-Z][A-Za-z]*(?:Error|Exception|Interrupt|Warning)\b")
_METRIC_HINT_RE = re.compile(r"\d|loss|accuracy|metric|score", re.IGNORECASE)
_OUTCOME_RE = re.compile(r"OUTCOME:\s*(crash|silent)", re.IGNORECASE)
_SIGNALS_RE = re.compile(r"SIGNALS:\s*(.+)")
_RATIONALE_RE = re.compile(r"RATIONALE:\s*(.+)")
_CATEGORY_RE = re.compile(r"CATEGORY:\s*([A-Za-z0-9_/-]+)")
_NEW_RE = re.compile(r"NEW:\s*([A-Za-z0-9_-]+)")
_SIMILARITY_RE = re.compile(r"SIMILARITY:\s*([-+0-9.eE]+)")


@dataclass(frozen=True)
class StateApproximation:
    outcome: str  # crash | silent
    signals: tuple[str, ...]
    rationale: str
    low_confidence: bool = False


@dataclass(frozen=True)
class TaxonomyEntry:
    category_id: str
    name: str
    family: str
    source: str  # bundled_taxonomy | model_approximated
    match_method: str  # model_choice | model_new | keyword_overlap


@dataclass(frozen=True)
class SymptomMatch:
    similarity: float
    verdict: bool
    threshold: float


def load_taxonomy() -> list[dict]:
    payload = json.loads(
        resources.files("dlrepro.data").joinpath("bug_taxonomy.json").read_text()
    )
    return payload["categories"]


def parse_state(text: str) -> StateApproximation:
    outcome_match = _OUTCOME_RE.search(text)
    signals_match = _SIGNALS_RE.search(text)
    rationale_match = _RATIONALE_RE.search(text)
    if not outcome_match:
        raise ValueError("missing or invalid OUTCOME line")
    if not signals_match:
        raise ValueError("missing SIGNALS line")
    if not rationale_match:
        raise ValueError("missing RATIONALE line")
    outcome = outcome_match.group(1).lower()
    signals = tuple(s.strip() for s in signals_match.group(1).split(";") if s.strip())
    if not signals:
        raise ValueError("SIGNALS line is empty")
    if outcome == "crash" and not any(_EXC_RE.search(s) for s in signals):
        raise ValueError("crash outcome requires an exception-type signal")
    if outcome == "silent" and not any(_METRIC_HINT_RE.search(s) for s in signals):
        raise ValueError("silent outcome requires a metric signal")
    return StateApproximation(
        outcome=outcome,
        signals=signals,
        rationale=rationale_match.group(1).strip(),
    )


def fallback_state(exec_summary: str) -> StateApproximation:
    """State derived from execution output alone, without a model."""
    lines = [l.strip() for l in exec_summary.splitlines() if l.strip()]
    crashed = "Traceback" in exec_summary or bool(_EXC_RE.search(exec_summary))
    if crashed:
        signals = tuple(dict.fromkeys(l for l in lines if _EXC_RE.search(l)))
        if not signals:
            signals = ("unidentified crash",)
        return StateApproximation(
            outcome="crash",
            signals=signals,
            rationale="derived directly from execution output",
            low_confidence=True,
        )
    metric_lines = tuple(l for l in lines if l.startswith("METRIC "))
    signals = metric_lines or tuple(l for l in lines if l.startswith("exit status")) or ("no output",)
    return StateApproximation(
        outcome="silent",
        signals=signals,
        rationale="derived directly from execution output",
        low_confidence=True,
    )


def approximate_runtime_state(
    structured: StructuredReport, script_text: str, exec_summary: str, gateway
) -> StateApproximation:
    """One model pass, one repair pass, then the low-confidence fallback."""
    structured_text = render_structured(structured)
    messages = prompts.state_messages(structured_text, script_text, exec_summary)
    try:
        response = gateway.complete(messages, role=prompts.ROLE_RUNTIME)
    except ProviderFailure:
        return fallback_state(exec_summary)
    try:
        return parse_state(response)
    except ValueError as exc:
        reason = str(exc)
    repair = prompts.state_repair_messages(
        structured_text, script_text, exec_summary, response, reason
    )
    try:
        repaired = gateway.complete(repair, role=prompts.ROLE_RUNTIME)
        return parse_state(repaired)
    except (ProviderFailure, ValueError):
        return fallback_state(exec_summary)


def _state_text(state: StateApproximation) -> str:
    return (
        f"OUTCOME: {state.outcome}\n"
        f"SIGNALS: {'; '.join(state.signals)}\n"
        f"RATIONALE: {state.rationale}"
    )


def _keyword_overlap_entry(state: StateApproximation, taxonomy: list[dict]) -> TaxonomyEntry:
    text = (" ".join(state.signals) + " " + state.rationale).lower()
    scored = sorted(
        taxonomy,
        key=lambda e: (-sum(1 for kw in e["keywords"] if kw in text), e["id"]),
    )
    best = scored[0]
    return TaxonomyEntry(
        category_id=best["id"],
        name=best["name"],
        family=best["family"],
        source="bundled_taxonomy",
        match_method="keyword_overlap",
    )


def map_to_taxonomy(
    state: StateApproximation, gateway, taxonomy: Optional[list[dict]] = None
) -> TaxonomyEntry:
    """Model pick with one retry, then nearest-keyword fallback."""
    taxonomy = taxonomy if taxonomy is not None else load_taxonomy()
    catalogue = "\n".join(f"{e['id']}: {e['name']} ({e['family']})" for e in taxonomy)
    by_id = {e["id"]: e for e in taxonomy}
    messages = prompts.taxonomy_messages(catalogue, _state_text(state))
    for _ in range(2):
        try:
            response = gateway.complete(messages, role=prompts.ROLE_RUNTIME)
        except ProviderFailure:
            break
        category = _CATEGORY_RE.search(response)
        if category and category.group(1) in by_id:
            entry = by_id[category.group(1)]
            return TaxonomyEntry(
                category_id=entry["id"],
                name=entry["name"],
                family=entry["family"],
                source="bundled_taxonomy",
                match_method="model_choice",
            )
        new = _NEW_RE.search(response)
        if new:
            name = new.group(1)
            return TaxonomyEntry(
                category_id=f"new/{name.lower()}",
                name=name,
                family="uncategorized",
                source="model_approximated",
                match_method="model_new",
            )
    return _keyword_overlap_entry(state, taxonomy)


def parse_similarity(text: str) -> float:
    match = _SIMILARITY_RE.search(text)
    if not match:
        raise ValueError("missing SIMILARITY line")
    try:
        value = float(match.group(1))
    except ValueError as exc:
        raise ValueError(f"unreadable similarity value {match.group(1)!r}") from exc
    return min(1.0, max(0.0, value))


def judge_similarity(
    structured: StructuredReport,
    state: StateApproximation,
    entry: Optional[TaxonomyEntry],
    gateway,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> SymptomMatch:
    """Two tries to read a score; anything else counts as zero similarity."""
    reported = structured.core_problem + "\n" + structured.observed_behaviour
    observed = _state_text(state)
    if entry is not None:
        observed += f"\nCATEGORY: {entry.category_id} ({entry.name})"
    messages = prompts.similarity_messages(reported, observed)
    similarity = 0.0
    for _ in range(2):
        try:
            response = gateway.complete(messages, role=prompts.ROLE_RUNTIME)
            similarity = parse_similarity(response)
            break
        except (ProviderFailure, ValueError):
            continue
    return SymptomMatch(similarity=similarity, verdict=similarity >= threshold, threshold=threshold)


class SymptomOracle:
    """Runs a candidate once, derives its runtime state, maps it onto the
    taxonomy, and scores symptom similarity against the report."""

    def __init__(
        self,
        gateway,
        *,
        taxonomy: Optional[list[dict]] = None,
        runner: Optional[Callable[[str], RunResult]] = None,
        threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
        timeout_s: float = 60,
        clock: Callable[[], float] = time.time,
    ):
        self.gateway = gateway
        self.taxonomy = taxonomy if taxonomy is not None else load_taxonomy()
        self.threshold = threshold
        self.clock = clock
        self.runner = runner or (lambda text: run_script(text, seed=0, timeout_s=timeout_s))

    def evaluate(self, structured: StructuredReport, script_text: str) -> FeedbackRecord:
        result = self.runner(script_text)
        summary = execution_summary(result)
        state = approximate_runtime_state(structured, script_text, summary, self.gateway)
        entry = map_to_taxonomy(state, self.gateway, self.taxonomy)
        match = judge_similarity(structured, state, entry, self.gateway, self.threshold)
        verdict = "pass" if match.verdict else "regenerate"
        details = (
            f"outcome={state.outcome} category={entry.category_id} "
            f"similarity={match.similarity:.2f} threshold={match.threshold:.2f}"
        )
        if entry.match_method != "model_choice":
            details += f" match={entry.match_method}"
        if state.low_confidence:
            details += " (low-confidence state)"
        details += f"; signals: {'; '.join(state.signals[:3])}"
        return FeedbackRecord(stage="runtime", verdict=verdict, details=details, timestamp=self.clock())
