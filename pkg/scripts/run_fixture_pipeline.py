#!/usr/bin/env python3
"""Run the bundled fixture project through the full pipeline, offline.

Indexes the mini training project, reproduces its shape-mismatch crash with
the rule-based offline provider, then verifies the produced script against
the report's failure signature. Prints the artifact paths and both verdicts.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT / "src"))

from dlrepro.offline import offline_gateway
from dlrepro.pipeline import RunConfig, run_reproduction, run_verification


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repo", type=Path, default=REPO_ROOT / "tests" / "fixtures" / "miniproj")
    parser.add_argument(
        "--report", type=Path, default=REPO_ROOT / "tests" / "fixtures" / "report_shape_mismatch.json"
    )
    parser.add_argument("--out", type=Path, default=None, help="output dir (default: a temp dir)")
    parser.add_argument("--seeds", type=str, default="0,1,2")
    args = parser.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="fixture_run_"))
    seeds = tuple(int(s) for s in args.seeds.split(","))
    config = RunConfig(seeds=seeds, trial_timeout_s=60, oracle_timeout_s=60)

    result = run_reproduction(args.repo, args.report, out, offline_gateway(), config)
    print(f"status: {result['status']}")
    print(f"attempts: {result['attempts_total']}  contexts: {result['contexts_tried']}")
    for name in ("report.structured.md", "repro.py", "outcome.json", "trace.jsonl"):
        print(f"artifact: {out / name}")
    for path in sorted((out / "contexts").glob("context_*.md")):
        print(f"artifact: {path}")
    for path in sorted((out / "plans").glob("plan_*.md")):
        print(f"artifact: {path}")

    if result["status"] != "reproduced":
        return 1

    verdict = run_verification(args.report, out / "repro.py", out / "verify", config)
    print(f"verified: {verdict['reproduced']}")
    print(f"artifact: {out / 'verify' / 'verdict.json'}")
    print(json.dumps(verdict["evidence"], indent=2, sort_keys=True))
    return 0 if verdict["reproduced"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
