"""Cross-validated comparison of feature methods across models.

For every fold the feature method is fit on the training rows only, both
partitions are transformed, the model is trained, and the test fold is
predicted. Reports hold per-fold confusion counts, metrics and timings, plus
fold means.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, FoldPlan, drop_identifiers, encode_categories, split_folds
from .errors import LemdaError
from .forest import ForestConfig, TreeConfig, predict_forest, single_tree_forest, train_forest, train_tree
from .importance import ImportanceReport, mdi_scores, select_top_k
from .metrics import SafetyWeights, accuracy, confusion, f1_degenerate, f1_score, safety_score
from .mlp import MlpConfig, predict_mlp, train_mlp
from .pca import fit_pca, transform_pca
from .pipeline import LemdaConfig, fit_pipeline, rank_features, transform_pipeline

METHODS = ("base", "pca", "mdi", "mda", "lemda")
MODELS = ("dt", "rf", "mlp")
METHOD_LABELS = {"base": "Base", "pca": "PCA", "mdi": "MDI", "mda": "MDA", "lemda": "LEMDA"}
MODEL_LABELS = {"dt": "DT", "rf": "RF", "mlp": "MLP"}
METRIC_FIELDS = ("accuracy", "f1", "safety")
TIMING_FIELDS = ("train_s", "detect_s", "feature_s")
COUNT_FIELDS = ("tp", "tn", "fp", "fn")
# fold key for feature methods fit once on the whole dataset; never a real fold index
GLOBAL_FOLD = 0xFFFFFFFF


@dataclass(frozen=True)
class ExperimentConfig:
    k_features: int = 5
    b: float = 0.5
    sf_enabled: bool = False
    sf_peak_at_one: bool = False
    pca_threshold: float = 0.95
    seed: int = 0
    forest: ForestConfig = ForestConfig()
    importance_trees: int = 100
    mda_repeats: int = 3
    mlp: MlpConfig = MlpConfig()
    selection: str = "per_fold"
    safety: SafetyWeights = SafetyWeights()

    def __post_init__(self):
        if self.selection not in ("per_fold", "global"):
            raise ValueError(f"selection must be 'per_fold' or 'global', got {self.selection!r}")

    def lemda_config(self) -> LemdaConfig:
        return LemdaConfig(k_features=self.k_features, b=self.b, sf_enabled=self.sf_enabled,
                           sf_peak_at_one=self.sf_peak_at_one, seed=self.seed,
                           mda_repeats=self.mda_repeats, importance_trees=self.importance_trees)

    def to_dict(self) -> dict:
        f = self.forest
        return {
            "k_features": self.k_features,
            "b": self.b,
            "sf_enabled": self.sf_enabled,
            "sf_peak_at_one": self.sf_peak_at_one,
            "pca_threshold": self.pca_threshold,
            "pca_standardize": True,
            "seed": self.seed,
            "forest": {"n_trees": f.n_trees, "max_depth": f.max_depth,
                       "min_samples_split": f.min_samples_split,
                       "max_features": f.max_features, "bootstrap": f.bootstrap},
            "importance_trees": self.importance_trees,
            "mda_repeats": self.mda_repeats,
            "mda_validation": "stratified 20% of the training fold",
            "mlp": self.mlp.to_dict(),
            "selection": self.selection,
            "safety_weights": self.safety.to_dict(),
        }


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 31-bit seed for a (seed, keys...) stream."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1)[0] & 0x7FFFFFFF)


class FeatureCache:
    """Per-fold MDA rankings shared by the MDA and LEMDA methods of one run."""

    def __init__(self):
        self._rankings: dict = {}

    def ranking(self, key, train: Dataset, cfg: LemdaConfig, jobs: int):
        if key not in self._rankings:
            self._rankings[key] = rank_features(train, cfg, jobs=jobs)
        return self._rankings[key]


@dataclass(frozen=True)
class FittedFeatures:
    """A fitted feature method: ``apply`` maps a dataset to model inputs."""

    method: str
    apply: object
    info: dict = field(default_factory=dict)


def _selected(train: Dataset, names) -> FittedFeatures:
    names = list(names)
    return FittedFeatures("", lambda d: d.select(names), {"features": names})


def fit_method(method: str, train: Dataset, cfg: ExperimentConfig, fold_key,
               cache: FeatureCache | None = None, jobs: int = 1) -> FittedFeatures:
    """Fit one feature method on ``train`` (identifier-free, encoded rows only)."""
    cache = cache or FeatureCache()
    lcfg = replace(cfg.lemda_config(), seed=derive_seed(cfg.seed, *fold_key, 1))
    k = min(cfg.k_features, len(train.feature_names))
    if method == "base":
        fitted = _selected(train, train.feature_names)
    elif method == "pca":
        model = fit_pca(train, cfg.pca_threshold)
        fitted = FittedFeatures("", lambda d: transform_pca(model, d),
                                {"n_pc": model.n_pc, "dropped": list(model.dropped)})
    elif method == "mdi":
        report, forest = cache.ranking(fold_key, train, lcfg, jobs)
        mdi = mdi_scores(forest)
        fitted = _selected(train, [train.feature_names[i] for i in select_top_k(mdi, k)])
    elif method == "mda":
        report, _ = cache.ranking(fold_key, train, lcfg, jobs)
        fitted = _selected(train, [train.feature_names[i] for i in select_top_k(report, k)])
    elif method == "lemda":
        report, _ = cache.ranking(fold_key, train, lcfg, jobs)
        pipeline = fit_pipeline(train, lcfg, ranking=report)
        fitted = FittedFeatures("", lambda d: transform_pipeline(pipeline, d),
                                {"features": list(pipeline.features), "f_m": pipeline.f_m,
                                 "sf": pipeline.sf is not None})
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return replace(fitted, method=method)


def fit_model(model: str, train: Dataset, cfg: ExperimentConfig, seed: int, jobs: int = 1):
    """Train a DT, RF or MLP; returns a ``predict(dataset) -> labels`` callable."""
    if model == "dt":
        tree = train_tree(train, cfg=TreeConfig(cfg.forest.max_depth, cfg.forest.min_samples_split),
                          seed=seed)
        forest = single_tree_forest(train, tree)
        return lambda d: predict_forest(forest, d)
    if model == "rf":
        forest = train_forest(train, cfg.forest, seed=seed, jobs=jobs)
        return lambda d: predict_forest(forest, d)
    if model == "mlp":
        net = train_mlp(train, replace(cfg.mlp, seed=seed))
        return lambda d: predict_mlp(net, d)
    raise ValueError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")


@dataclass(frozen=True)
class FoldResult:
    fold: int
    matrix: object
    accuracy: float
    f1: float
    f1_degenerate: bool
    safety: float
    train_s: float
    detect_s: float
    feature_s: float
    n_features: int
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    model: str
    folds: tuple[FoldResult, ...]
    fold_mode: str

    @property
    def key(self) -> str:
        return f"{METHOD_LABELS[self.method]}/{MODEL_LABELS[self.model]}"

    def mean(self, name: str) -> float:
        """Arithmetic mean of a per-fold field (``fsum`` / count)."""
        if name in COUNT_FIELDS:
            values = [getattr(f.matrix, name) for f in self.folds]
        else:
            values = [getattr(f, name) for f in self.folds]
        return math.fsum(values) / len(values)

    def aggregate(self) -> dict:
        names = METRIC_FIELDS + TIMING_FIELDS + COUNT_FIELDS + ("n_features",)
        return {n: self.mean(n) for n in names}


def run_experiment(d: Dataset, method: str, model: str, plan: FoldPlan,
                   cfg: ExperimentConfig = ExperimentConfig(), cache: FeatureCache | None = None,
                   jobs: int = 1) -> ExperimentReport:
    """Cross-validate one (feature method, model) pair over ``plan``."""
    if plan.rows != d.rows:
        raise ValueError(f"fold plan covers {plan.rows} rows, dataset has {d.rows}")
    data = encode_categories(drop_identifiers(d))
    cache = cache or FeatureCache()
    global_fit = None
    if cfg.selection == "global":
        global_fit = fit_method(method, data, cfg, (GLOBAL_FOLD,), cache, jobs)
    folds = []
    for fold in range(plan.k):
        try:
            folds.append(_run_fold(data, method, model, plan, fold, cfg, cache, jobs, global_fit))
        except LemdaError as exc:
            raise type(exc)(f"fold {fold}: {exc}") from exc
    return ExperimentReport(method, model, tuple(folds), plan.mode)


def _run_fold(data, method, model, plan, fold, cfg, cache, jobs, global_fit) -> FoldResult:
    train = data.take(plan.train_rows(fold))
    test = data.take(plan.test_rows(fold))

    t0 = time.perf_counter()
    fitted = global_fit or fit_method(method, train, cfg, (fold,), cache, jobs)
    train_x = fitted.apply(train)
    test_x = fitted.apply(test)
    feature_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    predict = fit_model(model, train_x, cfg, derive_seed(cfg.seed, fold, 2), jobs)
    train_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    pred = predict(test_x)
    detect_s = time.perf_counter() - t0

    c = confusion(pred, test.labels)
    return FoldResult(
        fold=fold,
        matrix=c,
        accuracy=accuracy(c),
        f1=f1_score(c),
        f1_degenerate=f1_degenerate(c),
        safety=safety_score(c, cfg.safety),
        train_s=train_s,
        detect_s=detect_s,
        feature_s=feature_s,
        n_features=len(train_x.feature_names),
        info=dict(fitted.info),
    )


@dataclass(frozen=True)
class BenchReport:
    config: dict
    experiments: tuple[ExperimentReport, ...]

    def get(self, method: str, model: str) -> ExperimentReport:
        for e in self.experiments:
            if e.method == method and e.model == model:
                return e
        raise KeyError(f"{method}/{model}")

    def to_dict(self) -> dict:
        folds = []
        aggregate = {}
        for e in self.experiments:
            for f in e.folds:
                row = {"method": METHOD_LABELS[e.method], "model": MODEL_LABELS[e.model],
                       "fold": f.fold, **f.matrix.to_dict()}
                for name in METRIC_FIELDS + TIMING_FIELDS:
                    row[name] = round(getattr(f, name), 6)
                row["f1_degenerate"] = f.f1_degenerate
                row["n_features"] = f.n_features
                if f.info:
                    row["features"] = f.info
                folds.append(row)
            aggregate[e.key] = {n: round(v, 6) for n, v in e.aggregate().items()}
        return {"config": self.config, "folds": folds, "aggregate": aggregate}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_bench(d: Dataset, methods=("base", "lemda"), models=("dt", "rf"),
              cfg: ExperimentConfig = ExperimentConfig(), k: int = 10,
              fold_mode: str | None = None, jobs: int = 1, extra_config=None) -> BenchReport:
    """Every method x model pair over one shared fold plan.

    Folds are stratified unless SF is enabled, in which case contiguous
    blocks keep the row order SF depends on.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; expected one of {', '.join(MODELS)}")
    mode = fold_mode or ("block" if cfg.sf_enabled else "stratified")
    plan = split_folds(d, k, seed=cfg.seed, mode=mode)
    cache = FeatureCache()
    experiments = tuple(run_experiment(d, method, model, plan, cfg, cache, jobs)
                        for method in methods for model in models)
    config = {**cfg.to_dict(), "folds": plan.to_dict(), "methods": list(methods),
              "models": list(models), "rows": d.rows, **(extra_config or {})}
    return BenchReport(config, experiments)


def strip_timings(doc: dict) -> dict:
    """Copy of a report document without wall-clock fields."""
    doc = json.loads(json.dumps(doc))
    for row in doc["folds"]:
        for name in TIMING_FIELDS:
            row.pop(name, None)
    for agg in doc["aggregate"].values():
        for name in TIMING_FIELDS:
            agg.pop(name, None)
    return doc


def format_table(doc: dict) -> str:
    """Plain-text summary of a report document, one row per method/model."""
    header = ("Method", "Model", "TP", "FN", "FP", "TN", "Accuracy", "F1", "Safety",
              "Train (s)", "Detect (s)")
    rank = {label: i for i, label in enumerate([*METHOD_LABELS.values(), *MODEL_LABELS.values()])}

    def order(key):
        return tuple(rank.get(part, len(rank)) for part in key.split("/")) + (key,)

    rows = []
    for key in sorted(doc["aggregate"], key=order):
        agg = doc["aggregate"][key]
        method, model = key.split("/")
        rows.append((method, model, f"{agg['tp']:.1f}", f"{agg['fn']:.1f}", f"{agg['fp']:.1f}",
                     f"{agg['tn']:.1f}", f"{100 * agg['accuracy']:.3f}",
                     f"{100 * agg['f1']:.3f}", f"{100 * agg['safety']:.3f}",
                     f"{agg['train_s']:.4f}", f"{agg['detect_s']:.4f}"))
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(c).rjust(w) if i >= 2 else str(c).ljust(w)
                       for i, (c, w) in enumerate(zip(r, widths))) for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    note = "Counts, metrics (%) and times are per-fold means."
    return "\n".join(lines + ["", note]) + "\n"
