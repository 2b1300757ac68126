"""Random-projection forest for approximate nearest-neighbour search.

Each tree splits points at the median of a random hyperplane projection until
leaves are small. A query unions the leaf candidates from every tree and
scores them exactly, topping up from the full matrix when the union is
smaller than k, so small corpora get exact rankings.
"""

from __future__ import annotations

import numpy as np

DEFAULT_N_TREES = 50
DEFAULT_LEAF_SIZE = 16

_LEAF = 0
_SPLIT = 1


class RandomProjectionForest:
    def __init__(self, n_trees: int = DEFAULT_N_TREES, leaf_size: int = DEFAULT_LEAF_SIZE, seed: int = 0):
        if n_trees < 1:
            raise ValueError("n_trees must be positive")
        self.n_trees = n_trees
        self.leaf_size = max(1, leaf_size)
        self.seed = seed
        self._ids: list[str] = []
        self._matrix: np.ndarray | None = None
        self._trees: list[tuple] = []

    def fit(self, ids: list[str], matrix: np.ndarray) -> "RandomProjectionForest":
        if len(ids) != matrix.shape[0]:
            raise ValueError("ids and matrix row count differ")
        self._ids = list(ids)
        self._matrix = np.asarray(matrix, dtype=np.float64)
        self._trees = []
        all_idx = np.arange(len(ids))
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            self._trees.append(self._build(all_idx, rng))
        return self

    def _build(self, idx: np.ndarray, rng: np.random.Generator) -> tuple:
        if len(idx) <= self.leaf_size:
            return (_LEAF, idx)
        direction = rng.standard_normal(self._matrix.shape[1])
        direction /= np.linalg.norm(direction)
        proj = self._matrix[idx] @ direction
        offset = float(np.median(proj))
        left_mask = proj < offset
        if not left_mask.any() or left_mask.all():
            return (_LEAF, idx)
        return (
            _SPLIT,
            direction,
            offset,
            self._build(idx[left_mask], rng),
            self._build(idx[~left_mask], rng),
        )

    def _leaf_for(self, tree: tuple, vector: np.ndarray) -> np.ndarray:
        while tree[0] == _SPLIT:
            _, direction, offset, left, right = tree
            tree = left if float(vector @ direction) < offset else right
        return tree[1]

    def query(self, vector: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Best-first (id, cosine) pairs; ties break on id."""
        if self._matrix is None or not len(self._ids):
            return []
        vector = np.asarray(vector, dtype=np.float64)
        candidate = np.zeros(len(self._ids), dtype=bool)
        for tree in self._trees:
            candidate[self._leaf_for(tree, vector)] = True
        if candidate.sum() < min(k, len(self._ids)):
            candidate[:] = True
        idx = np.flatnonzero(candidate)
        scores = self._matrix[idx] @ vector
        order = sorted(range(len(idx)), key=lambda i: (-scores[i], self._ids[idx[i]]))
        return [(self._ids[idx[i]], float(scores[i])) for i in order[:k]]
