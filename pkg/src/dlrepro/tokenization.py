"""Identifier-aware tokenization shared by the sparse index and the mock scorers."""

from __future__ import annotations

import re

# A run is either a dotted identifier path (model.fit) or a bare word.
_WORD_RUN = re.compile(r"[A-Za-z0-9_]+(?:\.[A-Za-z0-9_]+)+|[A-Za-z0-9_]+")
_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on non-alphanumerics, underscores and camelCase.

    Dotted API names contribute the whole path as one term in addition to the
    split parts, so a query for ``model.fit`` matches both spellings.
    """
    tokens: list[str] = []
    for run in _WORD_RUN.findall(text):
        if "." in run:
            tokens.append(run.lower())
            parts = run.split(".")
        else:
            parts = [run]
        for part in parts:
            for piece in part.split("_"):
                if not piece:
                    continue
                for sub in _CAMEL_SPLIT.split(piece):
                    if sub:
                        tokens.append(sub.lower())
    return tokens


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def jaccard(a: str, b: str) -> float:
    """Token-set overlap in [0, 1]; identical inputs score 1.0 even when empty."""
    sa, sb = token_set(a), token_set(b)
    if not sa and not sb:
        return 1.0
    union = len(sa | sb)
    return len(sa & sb) / union if union else 0.0
