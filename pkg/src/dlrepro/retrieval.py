"""Hybrid lexical plus embedding retrieval and cross-encoder reranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chunking import CodeChunk
from .errors import DimMismatchError, EmptyIndexError, ScorerFailureError, UnknownChunkError
from .indexing import DenseIndex, SparseIndex
from .tokenization import tokenize

DEFAULT_ALPHA = 0.55
DEFAULT_TOP_K = 20
POOL_FACTOR = 4


@dataclass(frozen=True)
class QueryBundle:
    raw_text: str
    terms: tuple[str, ...]
    vector: np.ndarray


@dataclass
class ScoredSnippet:
    chunk: CodeChunk
    bm25_raw: float
    bm25_norm: float
    angular: float
    hybrid: float
    cross_score: float | None = None
    unscored: bool = False

    @property
    def rerank_key(self) -> float:
        """Score used for downstream prioritisation, cross when present."""
        return self.cross_score if self.cross_score is not None else self.hybrid


def build_query(raw_text: str, embed) -> QueryBundle:
    vector = np.asarray(embed(raw_text), dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm > 1e-12:
        vector = vector / norm
    return QueryBundle(raw_text=raw_text, terms=tuple(tokenize(raw_text)), vector=vector)


def bm25_score(query: QueryBundle, chunk_id: str, index: SparseIndex) -> float:
    """Sum of per-term contributions over the query's unique terms."""
    if chunk_id not in index.doc_lengths:
        raise UnknownChunkError(chunk_id)
    dl = index.doc_lengths[chunk_id]
    n_docs = index.doc_count
    avg = index.avg_doc_length
    score = 0.0
    for term in dict.fromkeys(query.terms):
        posts = index.postings.get(term)
        if not posts:
            continue
        freq = 0
        for cid, f in posts:
            if cid == chunk_id:
                freq = f
                break
        if freq == 0:
            continue
        n_t = len(posts)
        idf = math.log(1.0 + (n_docs - n_t + 0.5) / (n_t + 0.5))
        denom = freq + index.k1 * (1.0 - index.b + index.b * dl / avg)
        score += idf * freq * (index.k1 + 1.0) / denom
    return score


def angular_similarity(q: np.ndarray, d: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape:
        raise DimMismatchError(int(q.shape[0]), int(d.shape[0]))
    dot = float(np.clip(q @ d, -1.0, 1.0))
    return 1.0 - math.acos(dot) / math.pi


def minmax_normalize(scores: dict[str, float]) -> dict[str, float]:
    """Best maps to 1, worst to 0; a constant batch maps to all zeros."""
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {k: 0.0 for k in scores}
    span = hi - lo
    return {k: (v - lo) / span for k, v in scores.items()}


def hybrid_score(bm25_norm: float, angular: float, alpha: float = DEFAULT_ALPHA) -> float:
    return (1.0 - alpha) * bm25_norm + alpha * angular


def hybrid_rank(
    query: QueryBundle,
    sparse: SparseIndex,
    dense: DenseIndex,
    alpha: float = DEFAULT_ALPHA,
    k: int = DEFAULT_TOP_K,
    *,
    chunks: dict[str, CodeChunk],
) -> list[ScoredSnippet]:
    """Rank the union of the sparse and ANN candidate pools.

    BM25 is min-max normalised across the candidate pool, so the blend is
    invariant to positive scaling of the raw lexical scores. Ties break on
    chunk id.
    """
    if sparse.doc_count == 0 or not sparse.doc_lengths or not dense.vectors:
        raise EmptyIndexError("cannot rank against an empty index")
    pool_size = POOL_FACTOR * k
    raw = {cid: bm25_score(query, cid, sparse) for cid in sparse.doc_lengths}
    sparse_top = sorted(raw, key=lambda cid: (-raw[cid], cid))[:pool_size]
    ann_top = [cid for cid, _ in dense.forest.query(query.vector, pool_size)]
    pool = sorted(set(sparse_top) | set(ann_top))

    pool_raw = {cid: raw[cid] for cid in pool}
    norm = minmax_normalize(pool_raw)
    rows = []
    for cid in pool:
        ang = angular_similarity(query.vector, dense.vectors[cid])
        rows.append((cid, pool_raw[cid], norm[cid], ang, hybrid_score(norm[cid], ang, alpha)))
    rows.sort(key=lambda r: (-r[4], r[0]))
    return [
        ScoredSnippet(chunk=chunks[cid], bm25_raw=r, bm25_norm=n, angular=a, hybrid=h)
        for cid, r, n, a, h in rows[:k]
    ]


def rerank(query: QueryBundle, snippets: list[ScoredSnippet], scorer) -> list[ScoredSnippet]:
    """Order snippets by cross-encoder score, clamped to [0, 1].

    A snippet whose scorer call fails keeps its hybrid ordering after the
    scored ones and is flagged unscored; if every call fails, that is an error.
    """
    if not snippets:
        raise ValueError("rerank needs at least one snippet")
    scored: list[ScoredSnippet] = []
    unscored: list[ScoredSnippet] = []
    for snip in snippets:
        try:
            value = float(scorer(query.raw_text, snip.chunk.text))
        except Exception:
            unscored.append(replace(snip, cross_score=None, unscored=True))
            continue
        scored.append(replace(snip, cross_score=min(1.0, max(0.0, value)), unscored=False))
    if not scored:
        raise ScorerFailureError("every cross-scorer call failed")
    scored.sort(key=lambda s: (-s.cross_score, -s.hybrid, s.chunk.id))
    return scored + unscored
