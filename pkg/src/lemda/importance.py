"""Gini (MDI) and permutation (MDA) feature importance over a trained forest."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .forest import ForestModel

MDI = "MDI"
MDA = "MDA"


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    """Per-feature scores plus the descending ordering (ties: lower index first)."""

    method: str
    feature_names: tuple[str, ...]
    scores: np.ndarray
    ordering: tuple[int, ...]
    config: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, method: str, names, scores, config=None) -> "ImportanceReport":
        scores = np.asarray(scores, dtype=np.float64)
        scores.flags.writeable = False
        # stable sort on the negated scores keeps lower indices first on ties
        ordering = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
        return cls(method, tuple(names), scores, ordering, dict(config or {}))

    def ranked_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.ordering]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "features": [{"name": n, "score": float(s)}
                         for n, s in zip(self.feature_names, self.scores)],
            "ordering": [self.feature_names[i] for i in self.ordering],
            "config": dict(self.config),
        }


def mdi_scores(m: ForestModel) -> ImportanceReport:
    """Mean decrease in impurity.

    Each split node contributes (fraction of the tree's rows reaching it) x
    (its impurity decrease) to its feature; per-tree sums are averaged over
    trees and normalized to sum to one. A forest of bare leaves scores all
    zeros.
    """
    n_features = len(m.feature_names)
    total = np.zeros(n_features)
    for tree in m.trees:
        internal = tree.left >= 0
        per_tree = np.zeros(n_features)
        np.add.at(per_tree, tree.feature[internal], tree.weight[internal] * tree.decrease[internal])
        total += per_tree
    total /= m.n_trees
    norm = total.sum()
    if norm > 0:
        total = total / norm
    return ImportanceReport.from_scores(MDI, m.feature_names, total, {"n_trees": m.n_trees})


def feature_permutation(seed: int, feature: int, tree: int, repeat: int, n: int) -> np.ndarray:
    """The row permutation MDA applies for one (feature, tree, repeat) triple."""
    ss = np.random.SeedSequence([int(seed), int(feature), int(tree), int(repeat)])
    return np.random.default_rng(ss).permutation(n)


def _tree_error_delta(tree, j: int, X: np.ndarray, y: np.ndarray, repeats: int,
                      seed: int) -> np.ndarray:
    """Sum over repeats of (permuted errors - baseline errors) per feature, as integers."""
    n_features = X.shape[1]
    out = np.zeros(n_features, dtype=np.int64)
    base_errors = int(np.count_nonzero(tree.predict_matrix(X) != y))
    for f in sorted(tree.used_features()):
        for r in range(repeats):
            perm = feature_permutation(seed, f, j, r, y.size)
            errors = int(np.count_nonzero(tree.predict_matrix(X, f, perm) != y))
            out[f] += errors - base_errors
    return out


def mda_scores(m: ForestModel, validation: Dataset, repeats: int = 3, seed: int = 0,
               jobs: int = 1) -> ImportanceReport:
    """Mean decrease in accuracy under within-column permutation.

    ``score_f = (1/n_t) sum_j (sa_jf - sb_jf)`` where ``sb_jf`` is tree j's
    validation error rate and ``sa_jf`` its mean error rate over ``repeats``
    permutations of column f. A feature that tree j never splits on cannot
    change its predictions, so it is skipped and contributes exactly zero.
    Error counts are accumulated as integers, which keeps that zero exact.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if validation.rows == 0:
        raise ValueError("mda_scores needs a non-empty validation set")
    X = m.matrix(validation)
    y = validation.labels

    def work(j):
        return _tree_error_delta(m.trees[j], j, X, y, repeats, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            deltas = list(pool.map(work, range(m.n_trees)))
    else:
        deltas = [work(j) for j in range(m.n_trees)]
    total = np.sum(deltas, axis=0, dtype=np.int64)
    scores = total / (repeats * y.size * m.n_trees)
    config = {"repeats": repeats, "seed": int(seed), "validation_rows": int(y.size),
              "n_trees": m.n_trees}
    return ImportanceReport.from_scores(MDA, m.feature_names, scores, config)


def select_top_k(r: ImportanceReport, k: int) -> list[int]:
    """Indices of the ``k`` best features; the first one is the most informative."""
    if not 1 <= k <= len(r.ordering):
        raise ValueError(f"k must be in [1, {len(r.ordering)}], got {k}")
    return list(r.ordering[:k])
