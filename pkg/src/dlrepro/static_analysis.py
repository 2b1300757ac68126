"""Static checks for generated reproduction scripts.

Three finding classes block an attempt: undefined names, unresolved imports,
and bad call arity. A pylint subprocess adapter provides them when pylint is
installed; the builtin analyzer is a flow-insensitive fallback that trades
precision for zero dependencies.
"""

from __future__ import annotations

import ast
import builtins
import json
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

# Common deep learning and numerics packages a generated script may assume.
FRAMEWORK_MODULES = frozenset(
    {
        "torch",
        "torchvision",
        "tensorflow",
        "keras",
        "jax",
        "flax",
        "numpy",
        "pandas",
        "scipy",
        "sklearn",
        "transformers",
        "datasets",
        "matplotlib",
        "tqdm",
        "PIL",
        "cv2",
        "wandb",
    }
)

PYLINT_CODE_MAP = {
    "E0602": "undefined-name",
    "E0401": "unresolved-import",
    "E0611": "unresolved-import",
    "E1120": "missing-argument",
    "E1121": "too-many-arguments",
    "E1123": "unexpected-keyword",
}

_BUILTIN_NAMES = frozenset(dir(builtins)) | {"__file__", "__name__", "__doc__", "__package__"}


@dataclass(frozen=True)
class StaticFinding:
    code: str
    message: str
    line: int
    blocking: bool
    source: str


def _bound_names(tree: ast.Module) -> set[str]:
    bound: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store, ast.Del)):
            bound.add(node.id)
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            bound.add(node.name)
        elif isinstance(node, ast.arg):
            bound.add(node.arg)
        elif isinstance(node, ast.Import):
            for alias in node.names:
                bound.add(alias.asname or alias.name.split(".")[0])
        elif isinstance(node, ast.ImportFrom):
            for alias in node.names:
                if alias.name != "*":
                    bound.add(alias.asname or alias.name)
        elif isinstance(node, ast.ExceptHandler) and node.name:
            bound.add(node.name)
        elif isinstance(node, (ast.Global, ast.Nonlocal)):
            bound.update(node.names)
    return bound


@dataclass(frozen=True)
class _Signature:
    pos_names: tuple[str, ...]
    n_defaults: int
    has_vararg: bool
    kwonly: frozenset[str]
    has_kwarg: bool


def _signature_of(node: ast.FunctionDef) -> _Signature:
    args = node.args
    pos = [a.arg for a in args.posonlyargs] + [a.arg for a in args.args]
    return _Signature(
        pos_names=tuple(pos),
        n_defaults=len(args.defaults),
        has_vararg=args.vararg is not None,
        kwonly=frozenset(a.arg for a in args.kwonlyargs),
        has_kwarg=args.kwarg is not None,
    )


class BuiltinAnalyzer:
    """Flow-insensitive scope walk. Anything bound anywhere in the module
    counts as defined, so it under-reports rather than nags."""

    source = "builtin"

    def __init__(self, context_modules: Iterable[str] = ()):  # dotted names
        self.context_modules = frozenset(context_modules)

    def _import_allowed(self, name: str) -> bool:
        root = name.split(".")[0]
        if root in sys.stdlib_module_names or root in FRAMEWORK_MODULES:
            return True
        if name in self.context_modules or root in self.context_modules:
            return True
        return any(
            ctx.startswith(name + ".") or name.startswith(ctx + ".")
            for ctx in self.context_modules
        )

    def analyze(self, source: str) -> list[StaticFinding]:
        try:
            tree = ast.parse(source)
        except SyntaxError as exc:
            return [
                StaticFinding(
                    code="syntax-error",
                    message=f"syntax error: {exc.msg}",
                    line=exc.lineno or 1,
                    blocking=True,
                    source=self.source,
                )
            ]
        findings: list[StaticFinding] = []
        bound = _bound_names(tree)

        for node in ast.walk(tree):
            if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
                if node.id not in bound and node.id not in _BUILTIN_NAMES:
                    findings.append(
                        StaticFinding(
                            code="undefined-name",
                            message=f"undefined name {node.id!r}",
                            line=node.lineno,
                            blocking=True,
                            source=self.source,
                        )
                    )
            elif isinstance(node, ast.Import):
                for alias in node.names:
                    if not self._import_allowed(alias.name):
                        findings.append(
                            StaticFinding(
                                code="unresolved-import",
                                message=f"cannot resolve import {alias.name!r}",
                                line=node.lineno,
                                blocking=True,
                                source=self.source,
                            )
                        )
            elif isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
                if not self._import_allowed(node.module):
                    findings.append(
                        StaticFinding(
                            code="unresolved-import",
                            message=f"cannot resolve import {node.module!r}",
                            line=node.lineno,
                            blocking=True,
                            source=self.source,
                        )
                    )

        findings.extend(self._check_arity(tree))
        findings.sort(key=lambda f: (f.line, f.code))
        return findings

    def _check_arity(self, tree: ast.Module) -> list[StaticFinding]:
        table: dict[str, _Signature] = {}
        for node in tree.body:
            if isinstance(node, ast.FunctionDef):
                table[node.name] = _signature_of(node)
        findings = []
        for node in ast.walk(tree):
            if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
                continue
            sig = table.get(node.func.id)
            if sig is None:
                continue
            if any(isinstance(a, ast.Starred) for a in node.args):
                continue
            if any(k.arg is None for k in node.keywords):
                continue
            given_kw = [k.arg for k in node.keywords]
            for kw in given_kw:
                if kw not in sig.pos_names and kw not in sig.kwonly and not sig.has_kwarg:
                    findings.append(
                        StaticFinding(
                            code="unexpected-keyword",
                            message=f"{node.func.id}() got an unexpected keyword argument {kw!r}",
                            line=node.lineno,
                            blocking=True,
                            source=self.source,
                        )
                    )
            n_pos = len(node.args)
            if n_pos > len(sig.pos_names) and not sig.has_vararg:
                findings.append(
                    StaticFinding(
                        code="too-many-arguments",
                        message=f"{node.func.id}() takes {len(sig.pos_names)} positional arguments but {n_pos} were given",
                        line=node.lineno,
                        blocking=True,
                        source=self.source,
                    )
                )
            required = sig.pos_names[: len(sig.pos_names) - sig.n_defaults]
            for idx, name in enumerate(required):
                if idx >= n_pos and name not in given_kw:
                    findings.append(
                        StaticFinding(
                            code="missing-argument",
                            message=f"{node.func.id}() missing required argument {name!r}",
                            line=node.lineno,
                            blocking=True,
                            source=self.source,
                        )
                    )
        return findings


def map_pylint_messages(payload: list[dict]) -> list[StaticFinding]:
    findings = []
    for item in payload:
        message_id = item.get("message-id") or item.get("messageId") or ""
        mapped = PYLINT_CODE_MAP.get(message_id)
        findings.append(
            StaticFinding(
                code=mapped or message_id,
                message=str(item.get("message", "")),
                line=int(item.get("line", 0) or 0),
                blocking=mapped is not None,
                source="pylint",
            )
        )
    return findings


class PylintAnalyzer:
    """Subprocess adapter around pylint's JSON output. Falls back to the
    builtin analyzer when the subprocess or its output is unusable."""

    source = "pylint"

    def __init__(self, context_modules: Iterable[str] = (), executable: str = "pylint"):
        self.context_modules = frozenset(context_modules)
        self.executable = executable

    @staticmethod
    def available(executable: str = "pylint") -> bool:
        return shutil.which(executable) is not None

    def analyze(self, source: str) -> list[StaticFinding]:
        fallback = BuiltinAnalyzer(self.context_modules)
        with tempfile.TemporaryDirectory() as workdir:
            target = Path(workdir) / "candidate.py"
            target.write_text(source)
            try:
                proc = subprocess.run(
                    [
                        self.executable,
                        "--output-format=json",
                        "--disable=all",
                        "--enable=" + ",".join(sorted(PYLINT_CODE_MAP)),
                        str(target),
                    ],
                    capture_output=True,
                    text=True,
                    timeout=60,
                )
                payload = json.loads(proc.stdout or "[]")
            except (OSError, subprocess.SubprocessError, json.JSONDecodeError):
                return fallback.analyze(source)
        findings = map_pylint_messages(payload)
        # pylint has no notion of context-provided modules; drop import
        # complaints that name one.
        kept = []
        for finding in findings:
            if finding.code == "unresolved-import" and any(
                ctx.split(".")[0] in finding.message for ctx in self.context_modules
            ):
                continue
            kept.append(finding)
        return kept


def default_analyzer(context_modules: Iterable[str] = ()):
    if PylintAnalyzer.available():
        return PylintAnalyzer(context_modules)
    return BuiltinAnalyzer(context_modules)
