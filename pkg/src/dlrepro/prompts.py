"""Prompt builders for every model role.

Builders take plain strings and return chat messages. Output contracts live
in the prompt text itself so parsers elsewhere stay in sync with one file.
Prompts must stay free of timestamps and absolute paths: completion digests
key the replay cache, and any volatile token would break cache hits.
"""

from __future__ import annotations

PROMPT_VERSION = "v1"

ROLE_RESTRUCTURING = "restructuring"
ROLE_PLANNING = "planning"
ROLE_GENERATION = "generation"
ROLE_RELEVANCE = "relevance"
ROLE_RUNTIME = "runtime"


def _chat(system: str, user: str) -> list[dict]:
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]


# --- report restructuring ---

_RESTRUCTURE_SYSTEM = (
    "You reorganize deep learning bug reports. Use ONLY text present in the "
    "report; never invent facts. Reply with exactly four sections, each "
    "starting with its bracket heading on its own line, in this order:\n"
    "[CORE PROBLEM]\n[OBSERVED BEHAVIOUR]\n[EXPECTED BEHAVIOUR]\n"
    "[REPRODUCTION STEPS]\n"
    "Under [REPRODUCTION STEPS] write a numbered list. Copy error messages "
    "and tracebacks verbatim into [OBSERVED BEHAVIOUR]."
)


def restructure_messages(title: str, body: str) -> list[dict]:
    user = f"Bug report title: {title}\n\nBug report body:\n{body}"
    return _chat(_RESTRUCTURE_SYSTEM, user)


def restructure_repair_messages(title: str, body: str, bad_response: str, problem: str) -> list[dict]:
    user = (
        f"Bug report title: {title}\n\nBug report body:\n{body}\n\n"
        f"Your previous answer was rejected: {problem}\n"
        f"Previous answer:\n{bad_response}\n\n"
        "Answer again following the required four-section format exactly, "
        "using only text from the report."
    )
    return _chat(_RESTRUCTURE_SYSTEM, user)


# --- planning ---

_PLAN_SYSTEM = (
    "You write reproduction plans for deep learning bugs. Reply in exactly "
    "this format and nothing else:\n"
    "# Reproduction plan (context N)\n"
    "## Stage: <title> [<kind>]\n"
    "Action: <one concrete action>\n"
    "Check[<check-kind>]: <one concrete check>\n"
    "...\n"
    "Parameters: <comma-separated numeric literals from the report>\n"
    "Stage kinds must include environment_setup, execution, and verification "
    "(at least three stages). Check kinds come from: output_assertion, "
    "resource_monitor, error_verification. Every stage needs at least one "
    "Action line and one Check line. Copy every numeric parameter mentioned "
    "in the reproduction steps into the plan."
)


def plan_messages(structured_report: str, context_rendered: str, rank: int) -> list[dict]:
    user = (
        f"Context rank: {rank}\n\nStructured bug report:\n{structured_report}\n\n"
        f"Code context:\n{context_rendered}\n\n"
        f"Write the reproduction plan for context {rank}."
    )
    return _chat(_PLAN_SYSTEM, user)


def plan_repair_messages(
    structured_report: str, context_rendered: str, rank: int, bad_response: str, problem: str
) -> list[dict]:
    user = (
        f"Context rank: {rank}\n\nStructured bug report:\n{structured_report}\n\n"
        f"Code context:\n{context_rendered}\n\n"
        f"Your previous plan was rejected: {problem}\n"
        f"Previous plan:\n{bad_response}\n\n"
        "Write the plan again following the required format exactly."
    )
    return _chat(_PLAN_SYSTEM, user)


# --- script generation ---

_GENERATION_SYSTEM = (
    "You write standalone Python scripts that reproduce deep learning bugs. "
    "Reply with exactly one fenced code block (```python ... ```) containing "
    "the complete script and no other code blocks. The script must:\n"
    "- run with the standard library plus the modules shown in the context\n"
    "- read its random seed from --seed or the REPRO_SEED environment variable\n"
    "- print progress as 'PHASE <name>' lines and numbers as "
    "'METRIC <name> <value>' lines on stdout\n"
    "- reach the reported failure rather than masking it"
)


def generation_messages(
    structured_report: str,
    context_rendered: str,
    plan_rendered: str,
    feedback_digest: str,
) -> list[dict]:
    parts = [
        f"Structured bug report:\n{structured_report}",
        f"Code context:\n{context_rendered}",
        f"Reproduction plan:\n{plan_rendered}",
    ]
    if feedback_digest:
        parts.append(f"Feedback on previous attempts:\n{feedback_digest}")
    parts.append("Write the reproduction script.")
    return _chat(_GENERATION_SYSTEM, "\n\n".join(parts))


def regeneration_messages(previous_response: str) -> list[dict]:
    user = (
        "Your previous reply contained no fenced Python code block.\n"
        f"Previous reply:\n{previous_response}\n\n"
        "Reply again with exactly one fenced code block containing the full script."
    )
    return _chat(_GENERATION_SYSTEM, user)


# --- relevance judgement ---

_RELEVANCE_SYSTEM = (
    "You judge whether a candidate reproduction script targets the bug "
    "described in a report. Reply with exactly two lines:\n"
    "VERDICT: RELEVANT or VERDICT: IRRELEVANT\n"
    "REASON: <one sentence>"
)


def relevance_messages(structured_report: str, script: str) -> list[dict]:
    user = (
        f"Structured bug report:\n{structured_report}\n\n"
        f"Candidate script:\n```python\n{script}\n```\n\n"
        "Does the script target this bug?"
    )
    return _chat(_RELEVANCE_SYSTEM, user)


# --- runtime symptom analysis ---

_STATE_SYSTEM = (
    "You summarize the runtime outcome of a reproduction attempt. Reply in "
    "exactly this format:\n"
    "OUTCOME: crash or OUTCOME: silent\n"
    "SIGNALS: <semicolon-separated observable signals>\n"
    "RATIONALE: <one sentence>\n"
    "For a crash, SIGNALS must include the exception type. For a silent "
    "failure, SIGNALS must include at least one metric observation."
)


def state_messages(structured_report: str, script: str, execution_summary: str) -> list[dict]:
    user = (
        f"Structured bug report:\n{structured_report}\n\n"
        f"Script:\n```python\n{script}\n```\n\n"
        f"Execution result:\n{execution_summary}\n\n"
        "Summarize the runtime state."
    )
    return _chat(_STATE_SYSTEM, user)


def state_repair_messages(
    structured_report: str, script: str, execution_summary: str, bad_response: str, problem: str
) -> list[dict]:
    user = (
        f"Structured bug report:\n{structured_report}\n\n"
        f"Script:\n```python\n{script}\n```\n\n"
        f"Execution result:\n{execution_summary}\n\n"
        f"Your previous answer was rejected: {problem}\n"
        f"Previous answer:\n{bad_response}\n\n"
        "Answer again in the required format."
    )
    return _chat(_STATE_SYSTEM, user)


_TAXONOMY_SYSTEM_TEMPLATE = (
    "You map an observed deep learning failure onto a known bug taxonomy. "
    "Known categories:\n{catalogue}\n"
    "Reply with exactly one line: CATEGORY:<id> for a listed category, or "
    "NEW:<short-name> if none fits."
)


def taxonomy_messages(catalogue: str, state_summary: str) -> list[dict]:
    system = _TAXONOMY_SYSTEM_TEMPLATE.format(catalogue=catalogue)
    user = f"Observed failure:\n{state_summary}\n\nPick the category."
    return _chat(system, user)


_SIMILARITY_SYSTEM = (
    "You compare an observed failure against a reported bug symptom. Reply "
    "with exactly one line: SIMILARITY: <float between 0 and 1>."
)


def similarity_messages(reported_symptom: str, observed_summary: str) -> list[dict]:
    user = (
        f"Reported symptom:\n{reported_symptom}\n\n"
        f"Observed failure:\n{observed_summary}\n\n"
        "How similar are they?"
    )
    return _chat(_SIMILARITY_SYSTEM, user)
