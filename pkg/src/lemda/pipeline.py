"""WEDF value scoring, the SF recency feature, and the fitted LEMDA pipeline.

WEDF replaces the most informative feature ``f_m`` with a numeric score per
distinct value: ``score_u = b**p_u * w_u`` where ``w_u`` is the training
attack fraction of value ``u`` and ``p_u`` its 1-based rank (attack-bearing
values by descending row count). SF emits ``b**d`` where ``d`` counts rows
since the most recent value other than the normal traffic's modal value.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import ATTACK, NORMAL, ColumnSchema, Dataset, Kind, drop_identifiers, encode_categories, split_folds
from .errors import ConfigurationError, SchemaError
from .forest import ForestConfig, train_forest
from .importance import ImportanceReport, mda_scores, select_top_k

FORMAT_VERSION = 1
MAX_EXACT_VALUES = 256

CATEGORICAL = "categorical"
NUMERIC = "numeric"
BINNED = "binned"


def _check_b(b: float) -> float:
    b = float(b)
    if not 0.0 < b < 1.0:
        raise ValueError(f"decay factor b must be in (0, 1), got {b}")
    return b


def wedf_column_name(name: str) -> str:
    return f"wedf_{name}"


def sf_column_name(name: str) -> str:
    return f"sf_{name}"


@dataclass(frozen=True, eq=False)
class WedfDictionary:
    """Fitted value -> score table for one column.

    ``values`` lists keys in rank order (rank ``p`` is position + 1): strings
    for categorical columns, floats for low-cardinality numeric columns, bin
    indices for ``binned`` columns whose ``bin_edges`` quantize the raw value.
    """

    column: str
    b: float
    key_kind: str
    values: tuple
    counts: tuple[int, ...]
    attacks: tuple[int, ...]
    scores: tuple[float, ...]
    bin_edges: tuple[float, ...] = ()

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(z / n if z else 0.0 for n, z in zip(self.counts, self.attacks))

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.values) + 1))

    def entries(self) -> dict:
        return dict(zip(self.values, self.scores))

    def keys_of(self, d: Dataset) -> np.ndarray:
        """Dictionary keys for every row of ``d`` (object array for strings)."""
        if self.column not in d.names:
            raise ValueError(f"column {self.column!r} not present")
        if self.key_kind == CATEGORICAL:
            if d.kind(self.column) is not Kind.CATEGORICAL:
                raise SchemaError(f"column {self.column!r} must be categorical")
            return d.decode(self.column)
        if d.kind(self.column) is not Kind.NUMERIC:
            raise SchemaError(f"column {self.column!r} must be numeric")
        raw = d[self.column]
        if self.key_kind == BINNED:
            return np.searchsorted(np.asarray(self.bin_edges), raw, side="right")
        return raw

    def lookup(self, d: Dataset) -> np.ndarray:
        """Score per row; values unseen at fit time score 0."""
        table = self.entries()
        if self.key_kind == CATEGORICAL and d.is_encoded(self.column):
            # score each code once instead of each row
            per_code = np.array([table.get(s, 0.0) for s in d.code_tables[self.column]]
                                + [0.0], dtype=np.float64)
            return per_code[d[self.column]]
        keys = self.keys_of(d)
        return np.array([table.get(k, 0.0) for k in keys.tolist()], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "b": self.b,
            "key_kind": self.key_kind,
            "bin_edges": list(self.bin_edges),
            "entries": [{"value": v, "n": n, "z": z, "score": s}
                        for v, n, z, s in zip(self.values, self.counts, self.attacks, self.scores)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WedfDictionary":
        entries = doc["entries"]
        cast = str if doc["key_kind"] == CATEGORICAL else (
            int if doc["key_kind"] == BINNED else float)
        return cls(
            column=doc["column"],
            b=float(doc["b"]),
            key_kind=doc["key_kind"],
            values=tuple(cast(e["value"]) for e in entries),
            counts=tuple(int(e["n"]) for e in entries),
            attacks=tuple(int(e["z"]) for e in entries),
            scores=tuple(float(e["score"]) for e in entries),
            bin_edges=tuple(float(x) for x in doc.get("bin_edges", ())),
        )


def equal_frequency_edges(values: np.ndarray, n_bins: int = MAX_EXACT_VALUES) -> np.ndarray:
    """Interior cut points splitting ``values`` into at most ``n_bins`` equal-count bins."""
    qs = np.quantile(values, np.arange(1, n_bins) / n_bins)
    return np.unique(qs)


def build_wedf_dictionary(train: Dataset, f_m: str, b: float = 0.5) -> WedfDictionary:
    """Score each distinct value of ``f_m`` by its training attack fraction.

    Attack-bearing values are ranked by descending count, then descending
    attack fraction, then first appearance; zero-attack values follow in the
    same order and score 0.
    """
    b = _check_b(b)
    if f_m not in train.names:
        raise ValueError(f"column {f_m!r} not present")
    kind = train.kind(f_m)
    edges: tuple[float, ...] = ()
    if kind is Kind.CATEGORICAL:
        key_kind = CATEGORICAL
        keys = train.decode(f_m)
    elif kind is Kind.NUMERIC:
        raw = train[f_m]
        if np.unique(raw).size <= MAX_EXACT_VALUES:
            key_kind = NUMERIC
            keys = raw
        else:
            key_kind = BINNED
            edges = tuple(float(e) for e in equal_frequency_edges(raw))
            keys = np.searchsorted(np.asarray(edges), raw, side="right")
    else:
        raise ValueError(f"column {f_m!r} is not a feature column")

    keys = keys.tolist()
    counts = Counter(keys)
    attacks = Counter(k for k, y in zip(keys, train.labels.tolist()) if y == ATTACK)
    first = {}
    for i, k in enumerate(keys):
        first.setdefault(k, i)

    def rank_key(k):
        n, z = counts[k], attacks.get(k, 0)
        return (z == 0, -n, -(z / n), first[k])

    ordered = sorted(counts, key=rank_key)
    scores = []
    for p, k in enumerate(ordered, start=1):
        z = attacks.get(k, 0)
        scores.append(b ** p * (z / counts[k]) if z else 0.0)
    return WedfDictionary(
        column=f_m,
        b=b,
        key_kind=key_kind,
        values=tuple(ordered),
        counts=tuple(counts[k] for k in ordered),
        attacks=tuple(attacks.get(k, 0) for k in ordered),
        scores=tuple(scores),
        bin_edges=edges,
    )


def apply_wedf(d: Dataset, w: WedfDictionary) -> Dataset:
    """Replace column ``w.column`` with its numeric WEDF score column, in place."""
    if w.column not in d.names:
        raise ValueError(f"column {w.column!r} not present")
    scores = w.lookup(d)
    position = d.names.index(w.column)
    out = d.drop([w.column])
    return out.with_column(ColumnSchema(wedf_column_name(w.column), Kind.NUMERIC), scores,
                           position=position)


@dataclass(frozen=True)
class SfConfig:
    """SF settings. ``peak_at_one`` makes suspicious rows emit 1 instead of b."""

    column: str
    common_value: str
    b: float = 0.5
    peak_at_one: bool = False

    def __post_init__(self):
        _check_b(self.b)


def common_value_of(train: Dataset, column: str) -> str:
    """Most frequent value among normal rows; ties go to the earliest seen."""
    if train.kind(column) is not Kind.CATEGORICAL:
        raise ConfigurationError(f"SF needs a categorical column; {column!r} is "
                                 f"{train.kind(column).value}")
    values = train.decode(column)[train.labels == NORMAL].tolist()
    if not values:
        raise ConfigurationError("SF needs normal rows to find the common value")
    counts = Counter(values)
    # Counter preserves first-insertion order, and max keeps the first maximum
    return max(counts, key=counts.__getitem__)


def sf_powers(b: float, exponents: np.ndarray) -> np.ndarray:
    """``b**e`` for each exponent, each computed by the scalar ``**``."""
    uniq, inv = np.unique(exponents, return_inverse=True)
    table = np.array([b ** int(e) for e in uniq], dtype=np.float64)
    return table[inv].reshape(exponents.shape)


def compute_sf_series(d: Dataset, cfg: SfConfig) -> np.ndarray:
    """SF value per row, walking rows in their stored (temporal) order.

    A row whose value differs from ``cfg.common_value`` is suspicious. Each
    row emits ``b**d`` where ``d`` is 1 on a suspicious row and grows by one
    per following row; rows before the first suspicious one emit 0.
    """
    if cfg.column not in d.names:
        raise ValueError(f"column {cfg.column!r} not present")
    if d.kind(cfg.column) is not Kind.CATEGORICAL:
        raise ConfigurationError(f"SF needs a categorical column; {cfg.column!r} is not")
    suspicious = d.decode(cfg.column) != cfg.common_value
    n = d.rows
    idx = np.arange(n)
    last = np.maximum.accumulate(np.where(suspicious, idx, -1)) if n else idx
    seen = last >= 0
    exponent = idx - last + (0 if cfg.peak_at_one else 1)
    out = np.zeros(n, dtype=np.float64)
    out[seen] = sf_powers(cfg.b, exponent[seen])
    return out


@dataclass(frozen=True)
class LemdaConfig:
    k_features: int = 5
    b: float = 0.5
    sf_enabled: bool = False
    sf_peak_at_one: bool = False
    seed: int = 0
    mda_repeats: int = 3
    importance_trees: int = 100
    validation_fraction_folds: int = 5

    def __post_init__(self):
        _check_b(self.b)
        if self.k_features < 1:
            raise ValueError("k_features must be >= 1")

    def to_dict(self) -> dict:
        return {
            "k_features": self.k_features,
            "b": self.b,
            "sf_enabled": self.sf_enabled,
            "sf_peak_at_one": self.sf_peak_at_one,
            "seed": self.seed,
            "mda_repeats": self.mda_repeats,
            "importance_trees": self.importance_trees,
            "validation_fraction": 1.0 / self.validation_fraction_folds,
        }


@dataclass(frozen=True, eq=False)
class LemdaPipeline:
    features: tuple[str, ...]
    kinds: tuple[str, ...]
    wedf: WedfDictionary
    sf: SfConfig | None
    config: LemdaConfig
    importance: ImportanceReport | None = None
    source: dict = field(default_factory=dict)

    @property
    def f_m(self) -> str:
        return self.features[0]

    @property
    def output_features(self) -> list[str]:
        out = [wedf_column_name(self.f_m)] + list(self.features[1:])
        if self.sf is not None:
            out.append(sf_column_name(self.f_m))
        return out

    def with_source(self, **info) -> "LemdaPipeline":
        return replace(self, source={**self.source, **info})

    def to_dict(self) -> dict:
        return {
            "format": "lemda-pipeline",
            "version": FORMAT_VERSION,
            "features": list(self.features),
            "kinds": list(self.kinds),
            "b": self.config.b,
            "sf_enabled": self.sf is not None,
            "config": self.config.to_dict(),
            "wedf": self.wedf.to_dict(),
            "sf": None if self.sf is None else {
                "column": self.sf.column,
                "common_value": self.sf.common_value,
                "b": self.sf.b,
                "peak_at_one": self.sf.peak_at_one,
            },
            "importance": None if self.importance is None else self.importance.to_dict(),
            "source": self.source,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "LemdaPipeline":
        if doc.get("format") != "lemda-pipeline":
            raise ValueError("not a serialized LEMDA pipeline")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported pipeline format version {doc.get('version')}")
        cfg = dict(doc["config"])
        folds = round(1.0 / cfg.pop("validation_fraction"))
        config = LemdaConfig(**cfg, validation_fraction_folds=folds)
        importance = None
        if doc.get("importance"):
            imp = doc["importance"]
            names = [f["name"] for f in imp["features"]]
            importance = ImportanceReport.from_scores(
                imp["method"], names, [f["score"] for f in imp["features"]], imp["config"])
        sf = doc.get("sf")
        return cls(
            features=tuple(doc["features"]),
            kinds=tuple(doc["kinds"]),
            wedf=WedfDictionary.from_dict(doc["wedf"]),
            sf=None if sf is None else SfConfig(sf["column"], sf["common_value"], sf["b"],
                                                sf["peak_at_one"]),
            config=config,
            importance=importance,
            source=dict(doc.get("source") or {}),
        )

    @classmethod
    def loads(cls, text: str) -> "LemdaPipeline":
        return cls.from_dict(json.loads(text))


def _feature_view(d: Dataset) -> Dataset:
    return encode_categories(drop_identifiers(d))


def importance_split(train: Dataset, cfg: LemdaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stratified inner split of the training rows: (forest rows, validation rows)."""
    plan = split_folds(train, cfg.validation_fraction_folds, seed=cfg.seed)
    return plan.train_rows(0), plan.test_rows(0)


def rank_features(train: Dataset, cfg: LemdaConfig, jobs: int = 1):
    """Train the importance forest on the inner split and score it with MDA.

    Returns (MDA report, forest).
    """
    d = _feature_view(train)
    fit_rows, val_rows = importance_split(d, cfg)
    forest = train_forest(d.take(fit_rows), ForestConfig(n_trees=cfg.importance_trees),
                          seed=cfg.seed, jobs=jobs)
    report = mda_scores(forest, d.take(val_rows), repeats=cfg.mda_repeats, seed=cfg.seed,
                        jobs=jobs)
    return report, forest


def fit_pipeline(train: Dataset, cfg: LemdaConfig = LemdaConfig(), jobs: int = 1,
                 ranking: ImportanceReport | None = None) -> LemdaPipeline:
    """Select the top-k features by MDA and fit WEDF (and optionally SF) on f_m.

    ``ranking`` reuses a previously computed MDA report over the same rows.
    """
    d = _feature_view(train)
    if ranking is None:
        ranking, _ = rank_features(d, cfg, jobs=jobs)
    if list(ranking.feature_names) != d.feature_names:
        raise ValueError("ranking was computed over a different feature set")
    k = min(cfg.k_features, len(d.feature_names))
    features = tuple(d.feature_names[i] for i in select_top_k(ranking, k))
    f_m = features[0]
    wedf = build_wedf_dictionary(d, f_m, cfg.b)
    sf = None
    if cfg.sf_enabled:
        sf = SfConfig(f_m, common_value_of(d, f_m), cfg.b, cfg.sf_peak_at_one)
    return LemdaPipeline(
        features=features,
        kinds=tuple(d.kind(n).value for n in features),
        wedf=wedf,
        sf=sf,
        config=cfg,
        importance=ranking,
    )


def transform_pipeline(p: LemdaPipeline, d: Dataset) -> Dataset:
    """Keep the selected features, swap f_m for its WEDF score, append SF if fitted."""
    missing = [n for n in p.features if n not in d.names]
    if missing:
        raise SchemaError(f"dataset lacks pipeline features: {', '.join(missing)}")
    for name, kind in zip(p.features, p.kinds):
        if d.kind(name).value != kind:
            raise SchemaError(f"column {name!r} is {d.kind(name).value}, pipeline expects {kind}")
    out = apply_wedf(d.select(p.features), p.wedf)
    if p.sf is not None:
        # SF goes after the features, keeping the label last
        out = out.with_column(ColumnSchema(sf_column_name(p.f_m), Kind.NUMERIC),
                              compute_sf_series(d, p.sf), position=out.names.index(out.label_name))
    return encode_categories(out)
