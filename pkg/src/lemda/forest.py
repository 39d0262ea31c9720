"""CART-style decision trees and bagged random forests for binary labels."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .dataset import Dataset, Kind
from .errors import TrainingError

FORMAT_VERSION = 1


class ClassCounts(NamedTuple):
    normal: int
    attack: int

    @property
    def total(self) -> int:
        return self.normal + self.attack


def gini(c: ClassCounts) -> float:
    """Two-class Gini impurity, ``sum p_i (1 - p_i)``."""
    if c.normal < 0 or c.attack < 0:
        raise ValueError("class counts must be non-negative")
    if c.total <= 0:
        raise ValueError("gini of an empty node is undefined")
    p0 = c.normal / c.total
    p1 = c.attack / c.total
    return p0 * (1.0 - p0) + p1 * (1.0 - p1)


def impurity_decrease(parent: ClassCounts, left: ClassCounts, right: ClassCounts) -> float:
    if (left.normal + right.normal, left.attack + right.attack) != tuple(parent):
        raise ValueError(f"children {left} + {right} do not add up to parent {parent}")
    if left.total == 0 or right.total == 0:
        raise ValueError("both children must be non-empty")
    p_left = left.total / parent.total
    p_right = right.total / parent.total
    return gini(parent) - p_left * gini(left) - p_right * gini(right)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    categorical: bool
    left: ClassCounts
    right: ClassCounts
    decrease: float

    @property
    def p_left(self) -> float:
        return self.left.total / (self.left.total + self.right.total)

    @property
    def p_right(self) -> float:
        return self.right.total / (self.left.total + self.right.total)


def _n_codes(X: np.ndarray, is_cat: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[1], dtype=np.int64)
    for j in np.flatnonzero(is_cat):
        out[j] = int(X[:, j].max()) + 1 if X.shape[0] else 0
    return out


def best_split(rows, features: Sequence[int], d: Dataset) -> SplitCandidate | None:
    """Exhaustive best split of ``rows`` over the given feature indices.

    Numeric candidates sit at midpoints between consecutive distinct values;
    categorical candidates isolate one code from the rest. Returns ``None``
    for a pure node or when no feature separates the rows at all.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("best_split needs at least one row")
    X = d.feature_matrix()
    y = d.labels
    is_cat = d.categorical_mask()
    counts = ClassCounts(int((y[rows] == 0).sum()), int((y[rows] == 1).sum()))
    if counts.normal == 0 or counts.attack == 0:
        return None
    order = np.asarray(sorted(features), dtype=np.int64)
    mult = np.bincount(rows, minlength=d.rows).astype(np.int64)
    f, thr, kind, dec, l0, l1 = _kernels.search_split(
        X, y, mult, _kernels.presort(X), order, order.size, is_cat, _n_codes(X, is_cat))
    if f < 0:
        return None
    left = ClassCounts(int(l0), int(l1))
    right = ClassCounts(counts.normal - left.normal, counts.attack - left.attack)
    return SplitCandidate(int(f), float(thr), bool(kind), left, right, float(dec))


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | str | None = None

    def resolve_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None:
            return n_features
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        mf = int(mf)
        if not 1 <= mf:
            raise ValueError(f"max_features must be >= 1, got {mf}")
        return min(mf, n_features)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"
    bootstrap: bool = True

    def tree_config(self) -> TreeConfig:
        return TreeConfig(self.max_depth, self.min_samples_split, self.max_features)


@dataclass(frozen=True, eq=False)
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    kind: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count0: np.ndarray
    count1: np.ndarray
    decrease: np.ndarray
    oob_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_samples(self) -> np.ndarray:
        return self.count0 + self.count1

    @property
    def weight(self) -> np.ndarray:
        """Fraction of the tree's training rows reaching each node."""
        n = self.n_samples
        return n / n[0]

    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature[self.left >= 0]}

    def predict_matrix(self, X: np.ndarray, perm_feature: int = -1, perm=None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if perm is None:
            perm = np.zeros(0, dtype=np.int64)
        return _kernels.predict_tree(self.feature, self.threshold, self.kind, self.left,
                                     self.right, self.value, X, int(perm_feature),
                                     np.asarray(perm, dtype=np.int64))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "kind": self.kind.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "count0": self.count0.tolist(),
            "count1": self.count1.tolist(),
            "decrease": self.decrease.tolist(),
            "oob_rows": self.oob_rows.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeModel":
        dtypes = {"feature": np.int32, "threshold": np.float64, "kind": np.int8,
                  "left": np.int32, "right": np.int32, "value": np.int8,
                  "count0": np.int64, "count1": np.int64, "decrease": np.float64,
                  "oob_rows": np.int64}
        return cls(**{k: np.asarray(doc[k], dtype=t) for k, t in dtypes.items()})


def _grow(X, y, rows, presorted, is_cat, n_codes, cfg: TreeConfig, seed: int,
          oob=None) -> TreeModel:
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    counts = np.bincount(np.asarray(rows, dtype=np.int64), minlength=X.shape[0])
    arrays = _kernels.build_tree(X, y, counts.astype(np.int64), presorted, is_cat, n_codes,
                                 cfg.resolve_max_features(X.shape[1]), max_depth,
                                 int(cfg.min_samples_split), int(seed))
    if oob is None:
        oob = np.zeros(0, dtype=np.int64)
    return TreeModel(*arrays, oob_rows=oob)


def _training_arrays(d: Dataset):
    X = np.ascontiguousarray(d.feature_matrix())
    y = np.ascontiguousarray(d.labels)
    is_cat = d.categorical_mask()
    return X, y, is_cat, _n_codes(X, is_cat), _kernels.presort(X)


def train_tree(d: Dataset, rows=None, cfg: TreeConfig = TreeConfig(), seed: int = 0) -> TreeModel:
    """Grow a single tree on ``rows`` of ``d`` (all rows by default)."""
    X, y, is_cat, n_codes, presorted = _training_arrays(d)
    rows = np.arange(d.rows) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("train_tree needs at least one row")
    return _grow(X, y, rows, presorted, is_cat, n_codes, cfg, seed)


def _tree_streams(seed: int, index: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    return rng, int(rng.integers(0, 2**31 - 1))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[TreeModel, ...]
    feature_names: tuple[str, ...]
    categorical: tuple[bool, ...]
    code_tables: dict
    config: ForestConfig
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def matrix(self, d: Dataset) -> np.ndarray:
        """Feature matrix of ``d`` aligned to this model's columns and codes."""
        return aligned_matrix(d, self.feature_names, self.categorical, self.code_tables)

    def tree_votes(self, X: np.ndarray) -> np.ndarray:
        return np.stack([t.predict_matrix(X) for t in self.trees])

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        votes = self.tree_votes(X).sum(axis=0, dtype=np.int64)
        return (2 * votes >= self.n_trees).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "format": "lemda-forest",
            "version": FORMAT_VERSION,
            "seed": self.seed,
            "config": {
                "n_trees": self.config.n_trees,
                "max_depth": self.config.max_depth,
                "min_samples_split": self.config.min_samples_split,
                "max_features": self.config.max_features,
                "bootstrap": self.config.bootstrap,
            },
            "feature_names": list(self.feature_names),
            "categorical": list(self.categorical),
            "code_tables": {k: list(v) for k, v in self.code_tables.items()},
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        if doc.get("format") != "lemda-forest":
            raise ValueError("not a serialized forest")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {doc.get('version')}")
        return cls(
            trees=tuple(TreeModel.from_dict(t) for t in doc["trees"]),
            feature_names=tuple(doc["feature_names"]),
            categorical=tuple(bool(c) for c in doc["categorical"]),
            code_tables={k: tuple(v) for k, v in doc["code_tables"].items()},
            config=ForestConfig(**doc["config"]),
            seed=int(doc["seed"]),
        )

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def aligned_matrix(d: Dataset, names, categorical, code_tables) -> np.ndarray:
    """Feature matrix of ``d`` with categorical codes re-keyed to ``code_tables``.

    Values unseen in the reference tables become code -1, which never
    matches a one-vs-rest split.
    """
    if list(d.feature_names) != list(names):
        raise ValueError(f"schema mismatch: model features {list(names)}, "
                         f"dataset features {d.feature_names}")
    if list(d.categorical_mask()) != list(categorical):
        raise ValueError("schema mismatch: column kinds differ from training")
    X = d.feature_matrix(names).copy()
    for j, name in enumerate(names):
        if not categorical[j]:
            continue
        ref = tuple(code_tables[name])
        mine = tuple(d.code_tables[name])
        if mine[: len(ref)] == ref:
            continue
        lookup = {s: i for i, s in enumerate(ref)}
        remap = np.array([lookup.get(s, -1) for s in mine], dtype=np.float64)
        X[:, j] = remap[d.columns[name]] if mine else X[:, j]
    return np.ascontiguousarray(X)


def train_forest(d: Dataset, cfg: ForestConfig = ForestConfig(), seed: int = 0,
                 jobs: int = 1) -> ForestModel:
    """Bagged forest; tree ``t`` draws its bootstrap and feature subsets from
    an RNG stream keyed on ``(seed, t)``, so thread count never changes the
    model."""
    if cfg.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if d.rows < 2 or np.unique(d.labels).size < 2:
        raise TrainingError("forest training needs at least two rows and both classes")
    X, y, is_cat, n_codes, presorted = _training_arrays(d)
    tree_cfg = cfg.tree_config()
    n = d.rows

    def grow(t: int) -> TreeModel:
        rng, tree_seed = _tree_streams(seed, t)
        if cfg.bootstrap:
            rows = rng.integers(0, n, n)
            drawn = np.zeros(n, dtype=bool)
            drawn[rows] = True
            oob = np.flatnonzero(~drawn)
        else:
            rows = np.arange(n)
            oob = np.zeros(0, dtype=np.int64)
        return _grow(X, y, rows, presorted, is_cat, n_codes, tree_cfg, tree_seed, oob)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(grow, range(cfg.n_trees)))
    else:
        trees = tuple(grow(t) for t in range(cfg.n_trees))
    names = tuple(d.feature_names)
    return ForestModel(
        trees=trees,
        feature_names=names,
        categorical=tuple(bool(c) for c in is_cat),
        code_tables={n_: tuple(d.code_tables[n_]) for n_, c in zip(names, is_cat) if c},
        config=cfg,
        seed=int(seed),
    )


def single_tree_forest(d: Dataset, tree: TreeModel, cfg: ForestConfig | None = None) -> ForestModel:
    """Wrap one trained tree so it can be used wherever a forest is expected."""
    names = tuple(d.feature_names)
    is_cat = d.categorical_mask()
    return ForestModel(
        trees=(tree,),
        feature_names=names,
        categorical=tuple(bool(c) for c in is_cat),
        code_tables={n: tuple(d.code_tables[n]) for n, c in zip(names, is_cat) if c},
        config=cfg or ForestConfig(n_trees=1, max_features=None, bootstrap=False),
        seed=0,
    )


def predict_forest(m: ForestModel, d: Dataset) -> np.ndarray:
    """Majority vote over trees; an even split votes attack."""
    return m.predict_matrix(m.matrix(d))


def oob_error(m: ForestModel, d: Dataset) -> float:
    """Out-of-bag misclassification rate of ``m`` on its own training data."""
    X = m.matrix(d)
    votes = np.zeros(d.rows, dtype=np.int64)
    seen = np.zeros(d.rows, dtype=np.int64)
    for t in m.trees:
        if t.oob_rows.size == 0:
            continue
        votes[t.oob_rows] += t.predict_matrix(X[t.oob_rows])
        seen[t.oob_rows] += 1
    mask = seen > 0
    if not mask.any():
        raise ValueError("no out-of-bag rows recorded")
    pred = (2 * votes[mask] >= seen[mask]).astype(np.int8)
    return float(np.mean(pred != d.labels[mask]))
