"""Sparse and dense index construction plus on-disk persistence.

Persistence is a manifest plus per-index blobs, content-addressed by a digest
of the corpus. The projection forest is rebuilt from its recorded seed on
load, so all stored bytes are deterministic for a fixed corpus and config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ann import DEFAULT_LEAF_SIZE, DEFAULT_N_TREES, RandomProjectionForest
from .chunking import ChunkKind, CodeChunk
from .errors import DimMismatchError, NoChunksError, ProviderFailure

BM25_K1 = 1.2
BM25_B = 0.75

_SKIP_DIRS = {"__pycache__", ".git", ".hg", ".venv", "venv", "node_modules"}


@dataclass
class SparseIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float = BM25_K1
    b: float = BM25_B


@dataclass
class DenseIndex:
    vectors: dict[str, np.ndarray]
    dim: int
    forest: RandomProjectionForest
    n_trees: int = DEFAULT_N_TREES


@dataclass
class IndexBundle:
    chunks: list[CodeChunk]
    sparse: SparseIndex
    dense: DenseIndex
    digest: str
    params: dict = field(default_factory=dict)


def build_sparse_index(chunks: list[CodeChunk], k1: float = BM25_K1, b: float = BM25_B) -> SparseIndex:
    if not chunks:
        raise NoChunksError("cannot build a sparse index from zero chunks")
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    if not 0.0 <= b <= 1.0:
        raise ValueError("b must lie in [0, 1]")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for chunk in sorted(chunks, key=lambda c: c.id):
        doc_lengths[chunk.id] = chunk.doc_length
        for term, freq in chunk.token_counts.items():
            if freq > 0:
                postings.setdefault(term, []).append((chunk.id, freq))
    ordered = {term: postings[term] for term in sorted(postings)}
    avg = sum(doc_lengths.values()) / len(doc_lengths)
    return SparseIndex(
        postings=ordered,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=len(doc_lengths),
        k1=k1,
        b=b,
    )


def build_dense_index(
    chunks: list[CodeChunk],
    embed,
    n_trees: int = DEFAULT_N_TREES,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    seed: int = 0,
) -> DenseIndex:
    if not chunks:
        raise NoChunksError("cannot build a dense index from zero chunks")
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for chunk in sorted(chunks, key=lambda c: c.id):
        try:
            raw = np.asarray(embed(chunk.text), dtype=np.float64)
        except ProviderFailure as exc:
            raise ProviderFailure(f"embedding failed for chunk {chunk.id!r}: {exc}", digest=exc.digest) from exc
        if raw.ndim != 1:
            raise DimMismatchError(dim or -1, raw.ndim, chunk_id=chunk.id)
        if dim is None:
            dim = int(raw.shape[0])
        elif raw.shape[0] != dim:
            raise DimMismatchError(dim, int(raw.shape[0]), chunk_id=chunk.id)
        norm = float(np.linalg.norm(raw))
        if norm < 1e-12:
            raw = np.zeros(dim)
            raw[0] = 1.0
            norm = 1.0
        vectors[chunk.id] = raw / norm
    ids = list(vectors)
    matrix = np.vstack([vectors[i] for i in ids])
    forest = RandomProjectionForest(n_trees=n_trees, leaf_size=leaf_size, seed=seed).fit(ids, matrix)
    return DenseIndex(vectors=vectors, dim=dim, forest=forest, n_trees=n_trees)


def corpus_digest(files: dict[str, str]) -> str:
    h = hashlib.sha256()
    for path in sorted(files):
        content = files[path]
        h.update(path.encode("utf-8"))
        h.update(b"\x00")
        h.update(hashlib.sha256(content.encode("utf-8")).digest())
        h.update(b"\n")
    return h.hexdigest()


def read_corpus(repo: Path) -> dict[str, str]:
    """Relative path -> source text for every .py file under the repo root."""
    files: dict[str, str] = {}
    for path in sorted(repo.rglob("*.py")):
        rel = path.relative_to(repo)
        if any(part in _SKIP_DIRS or part.startswith(".") for part in rel.parts):
            continue
        files[rel.as_posix()] = path.read_text(encoding="utf-8", errors="replace")
    return files


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def write_index(
    out_dir: Path,
    chunks: list[CodeChunk],
    sparse: SparseIndex,
    dense: DenseIndex,
    digest: str,
    params: dict | None = None,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chunk_rows = [
        {
            "id": c.id,
            "file_path": c.file_path,
            "span": list(c.span),
            "kind": c.kind.value,
            "text": c.text,
            "module_path": c.module_path,
            "token_counts": c.token_counts,
            "parse_failed": c.parse_failed,
        }
        for c in chunks
    ]
    _dump_json(out_dir / "chunks.json", chunk_rows)
    _dump_json(
        out_dir / "sparse.json",
        {
            "postings": {t: [[cid, f] for cid, f in posts] for t, posts in sparse.postings.items()},
            "doc_lengths": sparse.doc_lengths,
            "avg_doc_length": sparse.avg_doc_length,
            "doc_count": sparse.doc_count,
            "k1": sparse.k1,
            "b": sparse.b,
        },
    )
    ids = sorted(dense.vectors)
    _dump_json(out_dir / "vector_ids.json", ids)
    matrix = np.vstack([dense.vectors[i] for i in ids])
    with open(out_dir / "vectors.npy", "wb") as fh:
        np.save(fh, matrix)
    manifest = {
        "corpus_digest": digest,
        "dim": dense.dim,
        "n_trees": dense.n_trees,
        "leaf_size": dense.forest.leaf_size,
        "forest_seed": dense.forest.seed,
        "params": params or {},
        "blobs": ["chunks.json", "sparse.json", "vector_ids.json", "vectors.npy"],
    }
    _dump_json(out_dir / "manifest.json", manifest)


def load_index(out_dir: Path, embed_dim: int | None = None) -> IndexBundle:
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    chunk_rows = json.loads((out_dir / "chunks.json").read_text(encoding="utf-8"))
    chunks = [
        CodeChunk(
            id=row["id"],
            file_path=row["file_path"],
            span=tuple(row["span"]),
            kind=ChunkKind(row["kind"]),
            text=row["text"],
            module_path=row["module_path"],
            token_counts={t: int(f) for t, f in row["token_counts"].items()},
            parse_failed=row["parse_failed"],
        )
        for row in chunk_rows
    ]
    s = json.loads((out_dir / "sparse.json").read_text(encoding="utf-8"))
    sparse = SparseIndex(
        postings={t: [(cid, int(f)) for cid, f in posts] for t, posts in s["postings"].items()},
        doc_lengths={k: int(v) for k, v in s["doc_lengths"].items()},
        avg_doc_length=float(s["avg_doc_length"]),
        doc_count=int(s["doc_count"]),
        k1=float(s["k1"]),
        b=float(s["b"]),
    )
    ids = json.loads((out_dir / "vector_ids.json").read_text(encoding="utf-8"))
    matrix = np.load(out_dir / "vectors.npy")
    if embed_dim is not None and matrix.shape[1] != embed_dim:
        raise DimMismatchError(embed_dim, int(matrix.shape[1]))
    forest = RandomProjectionForest(
        n_trees=int(manifest["n_trees"]),
        leaf_size=int(manifest["leaf_size"]),
        seed=int(manifest["forest_seed"]),
    ).fit(ids, matrix)
    dense = DenseIndex(
        vectors={cid: matrix[i] for i, cid in enumerate(ids)},
        dim=int(manifest["dim"]),
        forest=forest,
        n_trees=int(manifest["n_trees"]),
    )
    return IndexBundle(chunks=chunks, sparse=sparse, dense=dense, digest=manifest["corpus_digest"], params=manifest.get("params", {}))
