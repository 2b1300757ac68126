"""Structured run traces.

Every pipeline decision lands here as one event dict. The clock is
injectable; comparisons across runs must strip timestamps first.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Callable, Optional


class RunTrace:
    def __init__(self, clock: Callable[[], float] = time.time):
        self._clock = clock
        self.events: list[dict] = []

    def emit(self, kind: str, **payload) -> dict:
        event = {"ts": self._clock(), "kind": kind, **payload}
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]

    def write_jsonl(self, path) -> None:
        path = Path(path)
        with path.open("w") as handle:
            for event in self.events:
                handle.write(json.dumps(event, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    events = []
    with Path(path).open() as handle:
        for line in handle:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def without_timestamps(events: list[dict]) -> list[dict]:
    return [{k: v for k, v in event.items() if k != "ts"} for event in events]
