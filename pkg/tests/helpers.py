"""Small builders shared by the test modules."""

from __future__ import annotations

import hashlib
from collections import Counter

import numpy as np

from dlrepro.chunking import ChunkKind, CodeChunk
from dlrepro.tokenization import tokenize


def make_chunk(
    text: str,
    *,
    path: str = "m.py",
    span: tuple[int, int] | None = None,
    kind: ChunkKind = ChunkKind.TOP_LEVEL_BLOCK,
    module: str | None = None,
    cid: str | None = None,
) -> CodeChunk:
    if span is None:
        span = (1, max(1, len(text.splitlines())))
    if cid is None:
        cid = hashlib.sha1(f"{path}:{span}:{text}".encode()).hexdigest()[:16]
    return CodeChunk(
        id=cid,
        file_path=path,
        span=span,
        kind=kind,
        text=text,
        module_path=module if module is not None else path.removesuffix(".py").replace("/", "."),
        token_counts=dict(Counter(tokenize(text))),
    )


def hash_embed(text: str, dim: int = 16) -> np.ndarray:
    """Deterministic pseudo-embedding, independent of the package's own mock."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_unit_vectors(n: int, dim: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)
