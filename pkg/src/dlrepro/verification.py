"""Seeded multi-trial execution and reproduction verdicts.

A candidate script reproduces an explicit bug when every trial dies with the
reported error type and at least one trial also carries the reported
diagnostics in the reported phase.  Silent bugs are checked against metric
means (5% relative margin, absolute 1e-6 when the reported value is zero)
plus at least one observed failure pattern.
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .sandbox import run_script

DEFAULT_MARGIN = 0.05
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
ZERO_ABS_TOLERANCE = 1e-6
_TAIL_CHARS = 4000

_METRIC_LINE_RE = re.compile(r"^METRIC\s+(\S+)\s+(\S+)\s*$")
_PHASE_LINE_RE = re.compile(r"^PHASE\s+(\S+)\s*$")
# fallback for scripts that log "loss: 1.5" style lines instead of METRIC
_NAMED_VALUE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*[:=]\s*(\S+)\s*$")
_FALLBACK_NAME_HINTS = ("loss", "acc", "score", "metric")
_EXCEPTION_LINE_RE = re.compile(
    r"^\s*([A-Za-z_][\w.]*(?:Error|Exception|Interrupt|Exit|Warning))\s*(?::|$)",
    re.MULTILINE,
)


@dataclass(frozen=True)
class BugSignature:
    """What the report says the failure looks like."""

    kind: str
    error_type: str | None = None
    diagnostics: tuple[str, ...] = ()
    phase: str | None = None
    metrics: Mapping[str, float] = field(default_factory=dict)
    failure_patterns: tuple[str, ...] = ()
    baselines: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "BugSignature":
        kind = payload.get("kind")
        if kind not in ("explicit", "silent"):
            raise ValueError(f"signature kind must be explicit or silent, got {kind!r}")
        return cls(
            kind=kind,
            error_type=payload.get("error_type"),
            diagnostics=tuple(str(d) for d in payload.get("diagnostics", ())),
            phase=payload.get("phase"),
            metrics={str(k): float(v) for k, v in dict(payload.get("metrics", {})).items()},
            failure_patterns=tuple(str(p) for p in payload.get("failure_patterns", ())),
            baselines={str(k): float(v) for k, v in dict(payload.get("baselines", {})).items()},
        )


@dataclass(frozen=True)
class TrialResult:
    seed: int
    exit_status: int | str
    stdout_tail: str
    stderr_tail: str
    parsed_metrics: Mapping[str, float]
    metric_series: Mapping[str, list[float]]
    phase_reached: str | None
    wall_time: float
    workdir: str


def _try_float(token: str) -> float | None:
    try:
        return float(token)
    except ValueError:
        return None


def parse_trial_output(stdout: str) -> tuple[dict[str, float], dict[str, list[float]], str | None]:
    """Extract METRIC/PHASE protocol lines, falling back to "name: value" logs."""
    series: dict[str, list[float]] = {}
    phase: str | None = None
    for line in stdout.splitlines():
        metric = _METRIC_LINE_RE.match(line)
        if metric:
            value = _try_float(metric.group(2))
            if value is not None:
                series.setdefault(metric.group(1), []).append(value)
            continue
        phase_match = _PHASE_LINE_RE.match(line)
        if phase_match:
            phase = phase_match.group(1)
            continue
        named = _NAMED_VALUE_RE.match(line)
        if named and any(h in named.group(1).lower() for h in _FALLBACK_NAME_HINTS):
            value = _try_float(named.group(2))
            if value is not None:
                series.setdefault(named.group(1), []).append(value)
    latest = {name: values[-1] for name, values in series.items()}
    return latest, series, phase


def extract_error_type(stderr: str) -> str | None:
    """Last exception name printed, without any module qualification."""
    names = _EXCEPTION_LINE_RE.findall(stderr)
    if not names:
        return None
    return names[-1].rsplit(".", 1)[-1]


def execute_trials(
    script_text: str,
    *,
    seeds: Sequence[int],
    n_trials: int | None = None,
    timeout_s: float = 300,
    python: str = sys.executable,
) -> list[TrialResult]:
    """Run the script once per seed, each in a fresh working directory."""
    seeds = tuple(seeds)
    if n_trials is not None and n_trials != len(seeds):
        raise ValueError(f"n_trials={n_trials} does not match {len(seeds)} seeds")
    trials = []
    for seed in seeds:
        result = run_script(script_text, seed=seed, timeout_s=timeout_s, python=python)
        metrics, series, phase = parse_trial_output(result.stdout)
        trials.append(
            TrialResult(
                seed=seed,
                exit_status=result.exit_status,
                stdout_tail=result.stdout[-_TAIL_CHARS:],
                stderr_tail=result.stderr[-_TAIL_CHARS:],
                parsed_metrics=metrics,
                metric_series=series,
                phase_reached=phase,
                wall_time=result.wall_time,
                workdir=result.workdir,
            )
        )
    return trials


# --- explicit bugs ---


def verify_explicit(signature: BugSignature, trials: Sequence[TrialResult]) -> tuple[bool, dict]:
    def error_ok(trial: TrialResult) -> bool:
        # a timed-out trial never counts as a clean occurrence of the error
        if trial.exit_status == "timeout":
            return False
        return extract_error_type(trial.stderr_tail) == signature.error_type

    def diag_ok(trial: TrialResult) -> bool:
        low = trial.stderr_tail.lower()
        return all(d.lower() in low for d in signature.diagnostics)

    def phase_ok(trial: TrialResult) -> bool:
        return signature.phase is None or trial.phase_reached == signature.phase

    per_trial = [
        {
            "seed": t.seed,
            "error": error_ok(t),
            "diagnostics": diag_ok(t),
            "phase": phase_ok(t),
        }
        for t in trials
    ]
    evidence = {
        "error_type_all": bool(trials) and all(row["error"] for row in per_trial),
        "diagnostics_any": any(row["diagnostics"] for row in per_trial),
        "phase_any": any(row["phase"] for row in per_trial),
        "joint_any": any(
            row["error"] and row["diagnostics"] and row["phase"] for row in per_trial
        ),
        "per_trial": per_trial,
    }
    return evidence["error_type_all"] and evidence["joint_any"], evidence


# --- silent bugs ---

Matcher = Callable[[BugSignature, Sequence[TrialResult], float], bool]
_MATCHERS: dict[str, Matcher] = {}


def register_matcher(name: str, fn: Matcher, *, replace: bool = False) -> None:
    if name in _MATCHERS and not replace:
        raise ValueError(f"matcher {name!r} already registered")
    _MATCHERS[name] = fn


def _loss_values(trials: Sequence[TrialResult]) -> Iterable[float]:
    for trial in trials:
        for name, values in trial.metric_series.items():
            if "loss" in name.lower():
                yield from values


def _match_nan_loss(signature: BugSignature, trials: Sequence[TrialResult], margin: float) -> bool:
    return any(math.isnan(v) for v in _loss_values(trials))


def _match_memory_growth(
    signature: BugSignature, trials: Sequence[TrialResult], margin: float
) -> bool:
    for trial in trials:
        for name, values in trial.metric_series.items():
            if "mem" not in name.lower() or len(values) < 2:
                continue
            if values[0] > 0 and values[-1] > values[0] * 1.1:
                return True
    return False


def _match_performance_degradation(
    signature: BugSignature, trials: Sequence[TrialResult], margin: float
) -> bool:
    for name, baseline in signature.baselines.items():
        observed = [t.parsed_metrics[name] for t in trials if name in t.parsed_metrics]
        if not observed:
            continue
        mean = math.fsum(observed) / len(observed)
        low = name.lower()
        if any(h in low for h in ("acc", "score")) and mean < baseline * (1 - margin):
            return True
        if any(h in low for h in ("loss", "err")) and mean > baseline * (1 + margin):
            return True
    return False


register_matcher("nan_loss", _match_nan_loss)
register_matcher("memory_growth", _match_memory_growth)
register_matcher("performance_degradation", _match_performance_degradation)


def _metric_within(reported: float, mean: float, margin: float) -> bool:
    if reported == 0:
        return abs(mean) <= ZERO_ABS_TOLERANCE
    return abs(mean - reported) / abs(reported) <= margin


def verify_silent(
    signature: BugSignature,
    trials: Sequence[TrialResult],
    *,
    margin: float = DEFAULT_MARGIN,
) -> tuple[bool, dict]:
    metric_evidence: dict[str, dict] = {}
    for name, reported in signature.metrics.items():
        observed = [
            t.parsed_metrics[name]
            for t in trials
            if t.exit_status != "timeout" and name in t.parsed_metrics
        ]
        mean = math.fsum(observed) / len(observed) if observed else None
        within = mean is not None and _metric_within(reported, mean, margin)
        metric_evidence[name] = {"reported": reported, "mean": mean, "within": within}

    pattern_evidence = {}
    for pattern in signature.failure_patterns:
        matcher = _MATCHERS.get(pattern)
        pattern_evidence[pattern] = bool(matcher and matcher(signature, trials, margin))

    metrics_ok = all(row["within"] for row in metric_evidence.values())
    patterns_ok = not signature.failure_patterns or any(pattern_evidence.values())
    evidence = {"metrics": metric_evidence, "patterns": pattern_evidence}
    return metrics_ok and patterns_ok, evidence


# --- combined verdict ---


@dataclass
class Verdict:
    reproduced: bool
    kind: str
    evidence: dict
    trials: list[TrialResult]
    margin: float
    seeds: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "reproduced": self.reproduced,
            "kind": self.kind,
            "margin": self.margin,
            "seeds": list(self.seeds),
            "evidence": self.evidence,
            "trials": [
                {
                    "seed": t.seed,
                    "exit_status": t.exit_status,
                    "phase_reached": t.phase_reached,
                    "parsed_metrics": dict(t.parsed_metrics),
                    "stderr_tail": t.stderr_tail[-500:],
                }
                for t in self.trials
            ],
        }


def verify_reproduction(
    signature: BugSignature,
    script_text: str,
    *,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    timeout_s: float = 300,
    margin: float = DEFAULT_MARGIN,
    python: str = sys.executable,
) -> Verdict:
    trials = execute_trials(script_text, seeds=seeds, timeout_s=timeout_s, python=python)
    if signature.kind == "explicit":
        reproduced, evidence = verify_explicit(signature, trials)
    else:
        reproduced, evidence = verify_silent(signature, trials, margin=margin)
    return Verdict(
        reproduced=reproduced,
        kind=signature.kind,
        evidence=evidence,
        trials=trials,
        margin=margin,
        seeds=tuple(seeds),
    )
