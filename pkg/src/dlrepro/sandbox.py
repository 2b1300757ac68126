"""Subprocess execution of candidate scripts.

Scripts run as `repro.py` inside a private working directory with the seed
passed both ways: REPRO_SEED in the environment and --seed on argv. The
relative invocation keeps traceback paths stable across runs.
"""

from __future__ import annotations

import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .errors import SandboxFailureError

DEFAULT_TIMEOUT_S = 60


@dataclass(frozen=True)
class RunResult:
    exit_status: Union[int, str]  # int, or "timeout"
    stdout: str
    stderr: str
    wall_time: float
    workdir: str
    seed: int


def run_script(
    script_text: str,
    *,
    seed: int = 0,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    workdir: Optional[str] = None,
    python: str = sys.executable,
    extra_env: Optional[dict] = None,
) -> RunResult:
    cleanup = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="dlrepro-run-")
        workdir = tmp.name
        cleanup = tmp
    try:
        target = Path(workdir) / "repro.py"
        target.write_text(script_text)
        env = dict(os.environ)
        env["REPRO_SEED"] = str(seed)
        if extra_env:
            env.update(extra_env)
        started = time.monotonic()
        try:
            proc = subprocess.run(
                [python, "repro.py", "--seed", str(seed)],
                cwd=workdir,
                env=env,
                capture_output=True,
                text=True,
                timeout=timeout_s,
            )
            exit_status: Union[int, str] = proc.returncode
            stdout, stderr = proc.stdout, proc.stderr
        except subprocess.TimeoutExpired as exc:
            exit_status = "timeout"
            stdout = _decode(exc.stdout)
            stderr = _decode(exc.stderr)
        except OSError as exc:
            raise SandboxFailureError(f"cannot launch interpreter {python}: {exc}") from exc
        wall_time = time.monotonic() - started
        return RunResult(
            exit_status=exit_status,
            stdout=stdout,
            stderr=stderr,
            wall_time=wall_time,
            workdir=workdir,
            seed=seed,
        )
    finally:
        if cleanup is not None:
            cleanup.cleanup()


def _decode(raw) -> str:
    if raw is None:
        return ""
    if isinstance(raw, bytes):
        return raw.decode("utf-8", errors="replace")
    return raw


def execution_summary(result: RunResult, *, tail_chars: int = 2000) -> str:
    """Prompt-safe summary: no wall time, no absolute paths, so identical
    runs produce identical completion digests."""

    def tail(text: str) -> str:
        text = text.replace(result.workdir, "<run>")
        return text[-tail_chars:] if len(text) > tail_chars else text

    return (
        f"exit status: {result.exit_status}\n"
        f"stdout tail:\n{tail(result.stdout)}\n"
        f"stderr tail:\n{tail(result.stderr)}"
    )
