"""Command line front end: index, reproduce, verify, ablate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import DlReproError
from .gateway import HttpGateway, ProviderConfig, RecordingGateway, ReplayGateway
from .offline import offline_gateway
from .pipeline import (
    COMPONENTS,
    RunConfig,
    ensure_index,
    run_ablation,
    run_reproduction,
    run_verification,
)

# flag dest -> RunConfig field; a config file entry overrides any of these
_CONFIG_FLAGS = {
    "alpha": "alpha",
    "top_k": "top_k",
    "max_attempts": "max_attempts_per_context",
    "max_contexts": "max_contexts",
    "token_budget": "token_budget",
    "margin": "margin",
    "similarity_threshold": "similarity_threshold",
    "trial_timeout": "trial_timeout_s",
    "embed_dim": "embed_dim",
    "n_trees": "n_trees",
}


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {raw!r}")


def _parse_model_map(raw: str) -> dict[str, str]:
    mapping = {}
    for pair in raw.split(","):
        pair = pair.strip()
        if not pair:
            continue
        if "=" not in pair:
            raise argparse.ArgumentTypeError(
                f"model map entries look like role=model, got {pair!r}"
            )
        role, model = pair.split("=", 1)
        mapping[role.strip()] = model.strip()
    return mapping


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("provider")
    group.add_argument("--provider-url", help="HTTP provider endpoint; omit to run offline")
    group.add_argument(
        "--offline",
        action="store_true",
        help="use the built-in rule-based provider (the default when no URL is given)",
    )
    group.add_argument(
        "--model-map",
        type=_parse_model_map,
        default={},
        help="per-role model names, e.g. generation=big-code,planning=chatty",
    )
    group.add_argument("--api-key-env", default="", help="env var holding the provider key")
    group.add_argument("--record", metavar="LOG", help="append every exchange to this jsonl log")
    group.add_argument(
        "--replay", metavar="LOG", help="answer strictly from this exchange log; misses fail"
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    group.add_argument(
        "--config",
        help="JSON file of RunConfig fields; entries in it override the flags below",
    )
    group.add_argument("--alpha", type=float)
    group.add_argument("--top-k", type=int, dest="top_k")
    group.add_argument("--max-attempts", type=int, dest="max_attempts")
    group.add_argument("--max-contexts", type=int, dest="max_contexts")
    group.add_argument("--token-budget", type=int, dest="token_budget")
    group.add_argument("--margin", type=float)
    group.add_argument("--similarity-threshold", type=float, dest="similarity_threshold")
    group.add_argument("--trial-timeout", type=float, dest="trial_timeout")
    group.add_argument("--embed-dim", type=int, dest="embed_dim")
    group.add_argument("--n-trees", type=int, dest="n_trees")
    group.add_argument("--seeds", type=_parse_seeds, help="comma-separated trial seeds")
    group.add_argument(
        "--disable",
        default="",
        help=f"comma-separated components to disable; known: {', '.join(COMPONENTS)}",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlrepro",
        description="Index a codebase and reproduce a reported deep learning bug against it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="chunk and index a repository")
    p_index.add_argument("--repo", required=True, type=Path)
    p_index.add_argument("--out", required=True, type=Path)
    _add_provider_flags(p_index)
    _add_config_flags(p_index)

    p_repro = sub.add_parser("reproduce", help="run the full reproduction pipeline")
    p_repro.add_argument("--repo", required=True, type=Path)
    p_repro.add_argument("--report", required=True, type=Path)
    p_repro.add_argument("--out", required=True, type=Path)
    p_repro.add_argument("--index", type=Path, help="reuse an existing index directory")
    _add_provider_flags(p_repro)
    _add_config_flags(p_repro)

    p_verify = sub.add_parser("verify", help="verify a script against the report signature")
    p_verify.add_argument("--report", required=True, type=Path)
    p_verify.add_argument("--script", required=True, type=Path)
    p_verify.add_argument("--out", required=True, type=Path)
    _add_config_flags(p_verify)

    p_ablate = sub.add_parser("ablate", help="baseline plus one run per disabled component")
    p_ablate.add_argument("--repo", required=True, type=Path)
    p_ablate.add_argument("--report", required=True, type=Path)
    p_ablate.add_argument("--out", required=True, type=Path)
    p_ablate.add_argument(
        "--components",
        default="",
        help="comma-separated components to sweep (default: all)",
    )
    _add_provider_flags(p_ablate)
    _add_config_flags(p_ablate)

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then flags, then the config file on top."""
    values: dict = {}
    for dest, field in _CONFIG_FLAGS.items():
        flag_value = getattr(args, dest, None)
        if flag_value is not None:
            values[field] = flag_value
    if getattr(args, "seeds", None) is not None:
        values["seeds"] = args.seeds
    disable_raw = getattr(args, "disable", "") or ""
    disabled = tuple(part.strip() for part in disable_raw.split(",") if part.strip())
    if disabled:
        values["disabled_components"] = disabled
    config_path = getattr(args, "config", None)
    if config_path:
        file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a JSON object of RunConfig fields")
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        values.update(file_values)
    return RunConfig(**values)


def make_gateway(args: argparse.Namespace, config: RunConfig):
    provider_config = ProviderConfig(
        endpoint=getattr(args, "provider_url", None) or "http://127.0.0.1:8080",
        role_models=dict(getattr(args, "model_map", {}) or {}),
        api_key_env=getattr(args, "api_key_env", "") or "",
        embed_dim=config.embed_dim,
    )
    replay = getattr(args, "replay", None)
    if replay:
        gateway = ReplayGateway(Path(replay), config=provider_config)
    elif getattr(args, "provider_url", None) and not getattr(args, "offline", False):
        gateway = HttpGateway(provider_config)
    else:
        gateway = offline_gateway(provider_config)
    record = getattr(args, "record", None)
    if record:
        gateway = RecordingGateway(gateway, Path(record))
    return gateway


def _cmd_index(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    gateway = make_gateway(args, config)
    bundle = ensure_index(args.repo, args.out, gateway, config)
    print(f"indexed {len(bundle.chunks)} chunks into {args.out} (digest {bundle.digest[:12]})")
    return 0


def _cmd_reproduce(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    gateway = make_gateway(args, config)
    outcome = run_reproduction(
        args.repo, args.report, args.out, gateway, config, index_dir=args.index
    )
    print(
        f"status: {outcome['status']} after {outcome['attempts_total']} attempts "
        f"across {outcome['contexts_tried']} contexts"
    )
    if outcome.get("advisory"):
        print(f"advisory: {outcome['advisory']}")
    if outcome["script"]:
        print(f"script: {Path(args.out) / outcome['script']}")
    return 0 if outcome["reproduced"] else 1


def _cmd_verify(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    verdict = run_verification(args.report, args.script, args.out, config)
    word = "reproduced" if verdict["reproduced"] else "not reproduced"
    print(f"{word} over seeds {verdict['seeds']} (kind: {verdict['kind']})")
    return 0 if verdict["reproduced"] else 1


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    components = [c.strip() for c in (args.components or "").split(",") if c.strip()] or None

    def factory():
        return make_gateway(args, config)

    summary = run_ablation(
        args.repo, args.report, args.out, factory, config, components
    )
    for name, row in summary["arms"].items():
        print(f"{name}: {row['status']} ({row['attempts_total']} attempts)")
    return 0


_COMMANDS = {
    "index": _cmd_index,
    "reproduce": _cmd_reproduce,
    "verify": _cmd_verify,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DlReproError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
