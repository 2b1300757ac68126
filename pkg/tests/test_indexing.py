import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlrepro.errors import DimMismatchError, NoChunksError, ProviderFailure
from dlrepro.indexing import (
    SparseIndex,
    build_dense_index,
    build_sparse_index,
    corpus_digest,
    load_index,
    write_index,
)
from helpers import hash_embed, make_chunk


def test_two_chunk_counts_and_average():
    chunks = [make_chunk("model fit", cid="a"), make_chunk("optimizer step", cid="b")]
    idx = build_sparse_index(chunks)
    assert idx.doc_count == 2
    assert idx.avg_doc_length == 2.0
    assert idx.doc_lengths == {"a": 2, "b": 2}


def test_default_parameters():
    idx = build_sparse_index([make_chunk("x")])
    assert idx.k1 == 1.2
    assert idx.b == 0.75


def test_dotted_name_postings():
    idx = build_sparse_index([make_chunk("model.fit(x)", cid="a")])
    for term in ("model.fit", "model", "fit", "x"):
        assert term in idx.postings
        assert ("a", 1) in idx.postings[term]


def test_no_chunks_is_an_error():
    with pytest.raises(NoChunksError):
        build_sparse_index([])


def test_bad_parameters_rejected():
    chunks = [make_chunk("x")]
    with pytest.raises(ValueError):
        build_sparse_index(chunks, k1=0.0)
    with pytest.raises(ValueError):
        build_sparse_index(chunks, b=1.5)


@settings(deadline=None, max_examples=40)
@given(st.lists(st.text(alphabet="abc model.fit xyz_w ", min_size=1, max_size=40), min_size=1, max_size=8))
def test_token_conservation_and_no_zero_postings(texts):
    chunks = [make_chunk(t, cid=f"c{i}") for i, t in enumerate(texts)]
    idx = build_sparse_index(chunks)
    totals: dict[str, int] = {}
    for term, posts in idx.postings.items():
        for cid, freq in posts:
            assert freq > 0
            totals[cid] = totals.get(cid, 0) + freq
    for c in chunks:
        assert totals.get(c.id, 0) == c.doc_length
    assert idx.avg_doc_length == pytest.approx(
        sum(idx.doc_lengths.values()) / idx.doc_count
    )


def test_dense_vectors_unit_norm_and_default_trees():
    chunks = [make_chunk(f"text number {i}", cid=f"c{i}") for i in range(8)]
    dense = build_dense_index(chunks, hash_embed)
    assert dense.n_trees == 50
    for v in dense.vectors.values():
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


def test_dense_self_nearest_neighbour():
    chunks = [make_chunk(f"unique words {i} here", cid=f"c{i}") for i in range(30)]
    dense = build_dense_index(chunks, hash_embed, n_trees=8)
    for cid, vec in dense.vectors.items():
        assert dense.forest.query(vec, k=1)[0][0] == cid


def test_embedding_dim_mismatch_names_chunk():
    chunks = [make_chunk("one", cid="a"), make_chunk("two", cid="b")]

    def bad_embed(text):
        return hash_embed(text, dim=8 if text == "one" else 9)

    with pytest.raises(DimMismatchError) as exc:
        build_dense_index(chunks, bad_embed)
    assert exc.value.chunk_id == "b"


def test_provider_failure_carries_chunk_id():
    def failing(text):
        raise ProviderFailure("boom")

    with pytest.raises(ProviderFailure) as exc:
        build_dense_index([make_chunk("one", cid="a")], failing)
    assert "a" in str(exc.value)


def test_persistence_round_trip_and_determinism(tmp_path):
    chunks = [make_chunk(f"def f{i}(): pass", cid=f"c{i}", path=f"m{i}.py") for i in range(5)]
    sparse = build_sparse_index(chunks)
    dense = build_dense_index(chunks, hash_embed, n_trees=4)
    digest = corpus_digest({f"m{i}.py": f"def f{i}(): pass" for i in range(5)})

    d1, d2 = tmp_path / "one", tmp_path / "two"
    write_index(d1, chunks, sparse, dense, digest)
    write_index(d2, chunks, sparse, dense, digest)
    for name in ("manifest.json", "chunks.json", "sparse.json", "vector_ids.json", "vectors.npy"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    bundle = load_index(d1, embed_dim=dense.dim)
    assert bundle.digest == digest
    assert [c.id for c in bundle.chunks] == [c.id for c in chunks]
    assert bundle.sparse.postings == sparse.postings
    assert bundle.sparse.avg_doc_length == sparse.avg_doc_length
    q = dense.vectors["c3"]
    assert bundle.dense.forest.query(q, k=3) == dense.forest.query(q, k=3)


def test_corpus_digest_sensitive_to_content_and_path():
    base = {"a.py": "x = 1", "b.py": "y = 2"}
    assert corpus_digest(base) == corpus_digest(dict(reversed(list(base.items()))))
    assert corpus_digest(base) != corpus_digest({"a.py": "x = 1", "b.py": "y = 3"})
    assert corpus_digest(base) != corpus_digest({"a.py": "x = 1", "c.py": "y = 2"})
