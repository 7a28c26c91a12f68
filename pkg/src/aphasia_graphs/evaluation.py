"""Cross-validation, out-of-fold prediction, ablations and case reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import stats
from .features import EDGE_STATS, FEATURE_NAMES, PARA_FEATURES, POS_FEATURES, STRUCTURAL
from .gnn import GraphSample, TrainConfig, train

log = logging.getLogger(__name__)


class TooFewParticipantsError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


class ModelKind(str, Enum):
    RIDGE = "ridge"
    GNN = "gnn"


class Variant(str, Enum):
    GRAPH_ONLY = "GRAPH_ONLY"
    GRAPH_POS = "GRAPH_POS"
    GRAPH_POS_PARA = "GRAPH_POS_PARA"
    POS_ONLY = "POS_ONLY"
    PARA_ONLY = "PARA_ONLY"
    GNN_NO_GESTURE = "GNN_NO_GESTURE"


GRAPH_COLUMNS = STRUCTURAL + EDGE_STATS
VARIANT_COLUMNS = {
    Variant.GRAPH_ONLY: GRAPH_COLUMNS,
    Variant.GRAPH_POS: GRAPH_COLUMNS + POS_FEATURES,
    Variant.GRAPH_POS_PARA: GRAPH_COLUMNS + POS_FEATURES + PARA_FEATURES,
    Variant.POS_ONLY: POS_FEATURES,
    Variant.PARA_ONLY: PARA_FEATURES,
}


@dataclass
class RidgeConfig:
    alpha: float = 1.0
    standardize: bool = True


@dataclass
class EvalConfig:
    k: int = 5
    seed: int = 0
    repeats: int = 5
    stratify: bool = False
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    gnn: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class ExperimentData:
    """Everything one target's experiments need, row-aligned by participant."""
    ids: list[str]
    features: np.ndarray  # (n, 20) graph feature vectors
    graphs: list[GraphSample] | None
    y: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.ids)
        if self.features.shape[0] != n or self.y.shape[0] != n:
            raise ValueError("ids, features and targets must align")
        if self.graphs is not None and len(self.graphs) != n:
            raise ValueError("graphs must align with ids")

    def __len__(self):
        return len(self.ids)

    def columns(self, names) -> "ExperimentData":
        if not names:
            raise ValueError("feature mask selects zero columns")
        idx = [self.feature_names.index(c) for c in names]
        return ExperimentData(self.ids, self.features[:, idx], self.graphs, self.y, tuple(names))

    def without_gestures(self) -> "ExperimentData":
        if self.graphs is None:
            raise ValueError("no graphs to ablate")
        return ExperimentData(self.ids, self.features, [g.without_gestures() for g in self.graphs],
                              self.y, self.feature_names)


@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: dict[str, int]

    def folds(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for pid, f in self.assignments.items():
            out[f].append(pid)
        return out


def kfold_split(ids: list[str], k: int = 5, seed: int = 0, strata=None) -> FoldPlan:
    """Seeded shuffle, then contiguous chunks (earlier folds take the extra rows).

    With ``strata`` (one sortable value per id), participants are sorted by
    stratum after shuffling and dealt round-robin so each fold spans the range.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ids) < k:
        raise TooFewParticipantsError(f"{len(ids)} participants cannot fill {k} folds")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate participant ids")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    if strata is not None:
        strata = np.asarray(strata)
        order = order[np.argsort(strata[order], kind="stable")]
        return FoldPlan(k, seed, {ids[i]: pos % k for pos, i in enumerate(order)})
    assign = {}
    for f, chunk in enumerate(np.array_split(order, k)):
        for i in chunk:
            assign[ids[i]] = f
    return FoldPlan(k, seed, assign)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    pearson: float
    spearman: float


def compute_metrics(true, pred) -> Metrics:
    true = np.asarray(true, dtype=float).ravel()
    pred = np.asarray(pred, dtype=float).ravel()
    if true.shape != pred.shape or true.size == 0:
        raise ValueError("need equal, nonzero lengths")
    err = pred - true
    rmse = math.sqrt(float(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    return Metrics(rmse, mae, stats.pearson(true, pred), stats.spearman(true, pred))


@dataclass
class MetricReport:
    model: str
    target: str
    n_folds: int
    fold_metrics: list[Metrics]
    failures: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def _agg(self, name):
        vals = np.array([getattr(m, name) for m in self.fold_metrics], dtype=float)
        if vals.size == 0:
            return float("nan"), float("nan")
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    def summary(self) -> dict:
        out = {"model": self.model, "target": self.target, "n_folds": self.n_folds,
               "n_failed": len(self.failures)}
        for name in ("rmse", "mae", "pearson", "spearman"):
            out[f"{name}_mean"], out[f"{name}_std"] = self._agg(name)
        out.update(self.extra)
        return out


@dataclass
class CVResult:
    report: MetricReport
    predictions: np.ndarray  # per participant, NaN where the fold failed
    plan: FoldPlan


def fit_predict(model: ModelKind, data: ExperimentData, train_idx, test_idx, cfg: EvalConfig) -> np.ndarray:
    model = ModelKind(model)
    if model is ModelKind.RIDGE:
        fit = stats.ridge_fit(data.features[train_idx], data.y[train_idx], cfg.ridge.alpha,
                              cfg.ridge.standardize)
        return fit.predict(data.features[test_idx])
    if data.graphs is None:
        raise ValueError("GNN needs graphs")
    train_set = [_with_target(data.graphs[i], data.y[i]) for i in train_idx]
    reg = train(train_set, cfg.gnn)
    return np.asarray(reg.predict([data.graphs[i] for i in test_idx]), dtype=float)


def _with_target(g: GraphSample, y: float) -> GraphSample:
    return GraphSample(g.x, g.edges, g.weights, float(y), g.participant_id)


def cross_validate(model: ModelKind, data: ExperimentData, cfg: EvalConfig | None = None,
                   seed: int | None = None, target: str = "") -> CVResult:
    """k-fold CV: per-fold metrics plus each participant's held-out prediction."""
    cfg = cfg or EvalConfig()
    seed = cfg.seed if seed is None else seed
    plan = kfold_split(data.ids, cfg.k, seed, data.y if cfg.stratify else None)
    index = {pid: i for i, pid in enumerate(data.ids)}
    preds = np.full(len(data), np.nan)
    fold_metrics, failures = [], []
    for f, fold_ids in enumerate(plan.folds()):
        test_idx = np.array(sorted(index[p] for p in fold_ids))
        train_idx = np.array([i for i in range(len(data)) if plan.assignments[data.ids[i]] != f])
        if set(train_idx) & set(test_idx):
            raise LeakageError(f"fold {f}: train and test overlap")
        try:
            p = fit_predict(model, data, train_idx, test_idx, cfg)
            preds[test_idx] = p
            fold_metrics.append(compute_metrics(data.y[test_idx], p))
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("fold failed model=%s fold=%d error=%s", ModelKind(model).value, f, exc)
            failures.append(f"fold {f}: {type(exc).__name__}: {exc}")
    report = MetricReport(ModelKind(model).value, target, cfg.k, fold_metrics, failures)
    return CVResult(report, preds, plan)


@dataclass
class OOFResult:
    ids: list[str]
    true: np.ndarray
    mean_prediction: np.ndarray
    per_repeat: np.ndarray  # (repeats, n)
    reports: list[MetricReport]

    def metrics(self) -> Metrics:
        return compute_metrics(self.true, self.mean_prediction)


def oof_predictions(model: ModelKind, data: ExperimentData, cfg: EvalConfig | None = None,
                    repeats: int | None = None, target: str = "") -> OOFResult:
    """Repeated k-fold; repeat r uses seed + r. Predictions are averaged per participant."""
    cfg = cfg or EvalConfig()
    repeats = cfg.repeats if repeats is None else repeats
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows, reports = [], []
    for r in range(repeats):
        res = cross_validate(model, data, cfg, seed=cfg.seed + r, target=target)
        rows.append(res.predictions)
        reports.append(res.report)
    per_repeat = np.vstack(rows)
    return OOFResult(list(data.ids), data.y.copy(), per_repeat.mean(axis=0), per_repeat, reports)


@dataclass(frozen=True)
class CaseRow:
    participant_id: str
    true: float
    predicted: float
    abs_error: float
    group: str


def rank_cases(ids: list[str], predicted, true, n_each: int = 3) -> list[CaseRow]:
    """Best, median and worst cases by absolute error, sorted ascending.

    Ties keep the input order. Overlapping groups (small inputs) are not
    duplicated; a row keeps the first group that selected it.
    """
    predicted = np.asarray(predicted, dtype=float)
    true = np.asarray(true, dtype=float)
    if len(ids) == 0:
        raise ValueError("nothing to rank")
    err = np.abs(true - predicted)
    order = np.argsort(err, kind="stable")
    n = len(order)
    k = min(n_each, n)
    mid = (n - 1) // 2
    start = min(max(0, mid - (k - 1) // 2), n - k)
    picks: dict[int, str] = {}
    for group, positions in (("best", range(k)), ("median", range(start, start + k)),
                             ("worst", range(n - k, n))):
        for pos in positions:
            picks.setdefault(pos, group)
    return [CaseRow(ids[order[pos]], float(true[order[pos]]), float(predicted[order[pos]]),
                    float(err[order[pos]]), picks[pos]) for pos in sorted(picks)]


@dataclass
class AblationResult:
    variant: Variant
    report: MetricReport
    r_squared: float | None = None
    adjusted_r_squared: float | None = None
    oof_rmse: float | None = None
    columns: tuple[str, ...] = ()

    def summary(self) -> dict:
        out = {"variant": self.variant.value, **self.report.summary(),
               "r_squared": self.r_squared, "adjusted_r_squared": self.adjusted_r_squared,
               "oof_rmse": self.oof_rmse, "n_columns": len(self.columns)}
        return out


def ablate(data: ExperimentData, variant: Variant, cfg: EvalConfig | None = None,
           target: str = "", oof_repeats: int | None = None) -> AblationResult:
    """Feature-subset ablations for ridge/OLS, gesture removal for the GNN.

    Regression variants report CV metrics of ridge on the masked columns and
    the in-sample R² of an OLS (HC3) fit on the same columns. The GNN variant
    reports CV metrics and the RMSE of repeated out-of-fold mean predictions.
    """
    cfg = cfg or EvalConfig()
    variant = Variant(variant)
    if variant is Variant.GNN_NO_GESTURE:
        ablated = data.without_gestures()
        cv = cross_validate(ModelKind.GNN, ablated, cfg, target=target)
        oof = oof_predictions(ModelKind.GNN, ablated, cfg, oof_repeats, target=target)
        return AblationResult(variant, cv.report, oof_rmse=oof.metrics().rmse)
    masked = data.columns(VARIANT_COLUMNS[variant])
    cv = cross_validate(ModelKind.RIDGE, masked, cfg, target=target)
    fit = stats.ols_hc3(masked.features, masked.y, allow_rank_deficient=True)
    return AblationResult(variant, cv.report, fit.r_squared, fit.adjusted_r_squared,
                          columns=masked.feature_names)
