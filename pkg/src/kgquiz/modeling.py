"""Difficulty regression: dataset assembly, four from-scratch regressors,
evaluation metrics, importances, and the signal-exclusion ablation grid.

Model kinds: ``linear`` (ordinary least squares with a tiny ridge fallback),
``forest`` (bagged unpruned trees), ``gbt`` (stagewise squared-error boosting),
and ``gbt2`` (the same booster with per-stage row subsampling).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import mae, r2_score, rmse, spearman
from .signals import SIGNAL_ALIASES, SIGNAL_NAMES, NormParams, RawSignals, fit_normalization
from .trees import DecisionTreeRegressor

logger = logging.getLogger(__name__)

DEFAULT_OUTLIER_THRESHOLD = 0.97
DEFAULT_SPLIT_RATIO = 0.8
DEFAULT_SEED = 42

MODEL_KINDS = ("linear", "forest", "gbt", "gbt2")
MODEL_LABELS = {
    "linear": "Linear Regression",
    "forest": "Random Forest",
    "gbt": "Gradient Boosting (conservative)",
    "gbt2": "Gradient Boosting (regularized)",
}

# The three structural signals whose pairwise/triple exclusions complete the
# default ablation grid.
ABLATION_TRIO = ("reasoning", "degree_centrality", "above_largest_gap_count")


class ModelingError(ValueError):
    pass


@dataclass
class LabeledDataset:
    """Normalized signal vectors joined with empirical difficulty labels."""

    mcq_ids: list[str]
    X: np.ndarray
    y: np.ndarray
    liking: np.ndarray
    feature_names: tuple[str, ...] = SIGNAL_NAMES
    norm: Optional[NormParams] = None

    def __post_init__(self) -> None:
        if self.X.shape[0] != len(self.y) or len(self.mcq_ids) != len(self.y):
            raise ModelingError("row count mismatch between ids, features, and labels")
        if np.any(~np.isfinite(self.X)) or np.any(~np.isfinite(self.y)):
            raise ModelingError("dataset contains non-finite values")
        if np.any((self.y < 0) | (self.y > 1)):
            raise ModelingError("difficulty labels must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.y)

    def without_features(self, excluded: Sequence[str]) -> "LabeledDataset":
        unknown = [name for name in excluded if name not in self.feature_names]
        if unknown:
            raise ModelingError(f"unknown feature name(s): {unknown}")
        keep = [i for i, name in enumerate(self.feature_names) if name not in set(excluded)]
        if not keep:
            raise ModelingError("cannot exclude every feature")
        return replace(
            self,
            X=self.X[:, keep],
            feature_names=tuple(self.feature_names[i] for i in keep),
        )


def resolve_feature_names(names: Sequence[str]) -> list[str]:
    """Map display-style or internal signal names onto the internal ones."""
    resolved = []
    for name in names:
        if name in SIGNAL_NAMES:
            resolved.append(name)
        elif name in SIGNAL_ALIASES:
            resolved.append(SIGNAL_ALIASES[name])
        else:
            raise ModelingError(f"unknown signal name {name!r}")
    return resolved


def assemble_dataset(
    mcq_ids: Sequence[str],
    signals: dict[str, RawSignals],
    responses: dict[str, tuple[int, int, Optional[float]]],
    exclude_outlier_threshold: Optional[float] = DEFAULT_OUTLIER_THRESHOLD,
) -> LabeledDataset:
    """Join signals with response statistics into a modeling dataset.

    ``responses`` maps mcq id to (total, incorrect, mean liking in [0,1] or
    None). The label is the incorrect-answer rate. Questions without
    responses are skipped with a warning; labels at or above the outlier
    threshold are excluded before normalization is fitted.
    """
    kept_ids: list[str] = []
    kept_raw: list[RawSignals] = []
    labels: list[float] = []
    likings: list[float] = []
    for mcq_id in mcq_ids:
        if mcq_id not in signals:
            logger.warning("no signals for %s; skipping", mcq_id)
            continue
        stats = responses.get(mcq_id)
        if stats is None or stats[0] == 0:
            logger.warning("no responses for %s; skipping", mcq_id)
            continue
        total, incorrect, liking = stats
        label = incorrect / total
        if exclude_outlier_threshold is not None and label >= exclude_outlier_threshold:
            logger.warning(
                "excluding %s: label %.3f at or above threshold %.2f",
                mcq_id, label, exclude_outlier_threshold,
            )
            continue
        kept_ids.append(mcq_id)
        kept_raw.append(signals[mcq_id])
        labels.append(label)
        likings.append(float("nan") if liking is None else liking)
    if not kept_ids:
        raise ModelingError("no labeled rows after joining signals with responses")
    norm = fit_normalization(kept_raw)
    X = np.stack([(row.as_array() - norm.mins) / (norm.maxs - norm.mins) for row in kept_raw])
    X = np.clip(X, 0.0, 1.0)
    return LabeledDataset(
        mcq_ids=kept_ids,
        X=X,
        y=np.asarray(labels, float),
        liking=np.asarray(likings, float),
        norm=norm,
    )


def split_train_test(
    n_rows: int, ratio: float = DEFAULT_SPLIT_RATIO, seed: int = DEFAULT_SEED
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split; returns (train indices, test indices)."""
    if n_rows < 5:
        raise ModelingError(f"need at least 5 rows to split, got {n_rows}")
    order = np.random.default_rng(seed).permutation(n_rows)
    cut = int(np.floor(n_rows * ratio))
    return order[:cut], order[cut:]


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass
class LinearModel:
    kind: str
    coef: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, float) @ self.coef + self.intercept


@dataclass
class ForestModel:
    kind: str
    trees: list[DecisionTreeRegressor]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)


@dataclass
class GbtModel:
    kind: str
    base: float
    trees: list[DecisionTreeRegressor]
    learning_rate: float
    n_features: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, float)
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


FittedModel = LinearModel | ForestModel | GbtModel


def fit_linear(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Least squares with intercept via normal equations; a tiny ridge term
    takes over when the design matrix is singular."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if X.shape[0] <= X.shape[1]:
        logger.warning(
            "fitting %d coefficients on %d rows; expect overfit", X.shape[1], X.shape[0]
        )
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    gram = design.T @ design
    moment = design.T @ y
    try:
        solution = np.linalg.solve(gram, moment)
        if not np.all(np.isfinite(solution)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        logger.warning("singular normal equations; falling back to ridge 1e-8")
        solution = np.linalg.solve(gram + 1e-8 * np.eye(gram.shape[0]), moment)
    return LinearModel(kind="linear", coef=solution[:-1], intercept=float(solution[-1]))


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    seed: int = DEFAULT_SEED,
) -> ForestModel:
    """Bagged regression trees on bootstrap samples, mean-aggregated."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(y) < 1:
        raise ModelingError("cannot fit a forest on an empty dataset")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        indices = rng.integers(0, len(y), size=len(y))
        tree = DecisionTreeRegressor(max_depth=max_depth, min_samples_leaf=min_samples_leaf)
        tree.fit(X[indices], y[indices])
        trees.append(tree)
    return ForestModel(kind="forest", trees=trees)


def fit_gbt(
    X: np.ndarray,
    y: np.ndarray,
    n_stages: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    subsample: float | None = None,
    seed: int = DEFAULT_SEED,
    kind: str = "gbt",
) -> GbtModel:
    """Stagewise boosting: start from the mean, fit each depth-limited tree to
    the current residuals, and add it scaled by the learning rate."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(y) < 1:
        raise ModelingError("cannot fit a booster on an empty dataset")
    rng = np.random.default_rng(seed)
    base = float(y.mean())
    current = np.full(len(y), base)
    trees: list[DecisionTreeRegressor] = []
    for _ in range(n_stages):
        residuals = y - current
        tree = DecisionTreeRegressor(max_depth=max_depth)
        if subsample is not None and subsample < 1.0:
            size = max(1, int(round(subsample * len(y))))
            picked = rng.choice(len(y), size=size, replace=False)
            tree.fit(X[picked], residuals[picked])
        else:
            tree.fit(X, residuals)
        current = current + learning_rate * tree.predict(X)
        trees.append(tree)
    return GbtModel(
        kind=kind, base=base, trees=trees, learning_rate=learning_rate, n_features=X.shape[1]
    )


def fit_model(kind: str, X: np.ndarray, y: np.ndarray, seed: int = DEFAULT_SEED) -> FittedModel:
    if kind == "linear":
        return fit_linear(X, y)
    if kind == "forest":
        return fit_random_forest(X, y, seed=seed)
    if kind == "gbt":
        return fit_gbt(X, y, seed=seed, kind="gbt")
    if kind == "gbt2":
        return fit_gbt(X, y, subsample=0.8, seed=seed, kind="gbt2")
    raise ModelingError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def predict(model: FittedModel, features: np.ndarray, clamp: bool = True) -> float:
    """Score one feature vector; the reported value is clamped to [0, 1]."""
    features = np.asarray(features, float)
    if features.ndim != 1:
        raise ModelingError("predict expects a single feature vector")
    expected = _model_arity(model)
    if expected is not None and len(features) != expected:
        raise ModelingError(f"expected {expected} features, got {len(features)}")
    raw = float(model.predict(features[None, :])[0])
    return float(np.clip(raw, 0.0, 1.0)) if clamp else raw


def _model_arity(model: FittedModel) -> int | None:
    if isinstance(model, LinearModel):
        return len(model.coef)
    if isinstance(model, GbtModel) and model.n_features:
        return model.n_features
    if isinstance(model, ForestModel) and model.trees:
        return model.trees[0].n_features
    return None


# ---------------------------------------------------------------------------
# Evaluation and importances
# ---------------------------------------------------------------------------


@dataclass
class ModelReport:
    model: str
    rmse: float
    mae: float
    r2: Optional[float]
    spearman_rho: Optional[float]
    train_size: int
    test_size: int
    seed: int
    excluded: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "rmse": self.rmse,
            "mae": self.mae,
            "r2": self.r2,
            "spearman_rho": self.spearman_rho,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "seed": self.seed,
            "excluded": list(self.excluded),
        }


def evaluate(
    model: FittedModel,
    X_test: np.ndarray,
    y_test: np.ndarray,
    train_size: int = 0,
    seed: int = DEFAULT_SEED,
    excluded: tuple[str, ...] = (),
) -> ModelReport:
    if len(y_test) == 0:
        raise ModelingError("cannot evaluate on an empty test set")
    y_pred = np.clip(model.predict(X_test), 0.0, 1.0)
    return ModelReport(
        model=model.kind,
        rmse=rmse(y_test, y_pred),
        mae=mae(y_test, y_pred),
        r2=r2_score(y_test, y_pred),
        spearman_rho=spearman(y_test, y_pred),
        train_size=train_size,
        test_size=len(y_test),
        seed=seed,
        excluded=excluded,
    )


def feature_importance(model: GbtModel, feature_names: Sequence[str]) -> dict[str, float]:
    """Summed squared-error reduction per feature, normalized to sum to 1."""
    if not isinstance(model, GbtModel):
        raise ModelingError("gain importances are recorded for boosted models only")
    totals = np.zeros(len(feature_names))
    for tree in model.trees:
        for feature, gain in tree.split_gains.items():
            totals[feature] += gain
    grand_total = totals.sum()
    if grand_total == 0.0:
        logger.warning("model has no splits; importances are all zero")
        return {name: 0.0 for name in feature_names}
    return {name: float(totals[i] / grand_total) for i, name in enumerate(feature_names)}


def permutation_importance(
    model: FittedModel,
    X_test: np.ndarray,
    y_test: np.ndarray,
    feature_names: Sequence[str],
    seed: int = DEFAULT_SEED,
    n_repeats: int = 10,
) -> dict[str, float]:
    """Mean RMSE increase over seeded shuffles of each feature column."""
    X_test = np.asarray(X_test, float)
    baseline = rmse(y_test, model.predict(X_test))
    rng = np.random.default_rng(seed)
    importances = {}
    for i, name in enumerate(feature_names):
        increases = []
        for _ in range(n_repeats):
            shuffled = X_test.copy()
            shuffled[:, i] = shuffled[rng.permutation(len(y_test)), i]
            increases.append(rmse(y_test, model.predict(shuffled)) - baseline)
        importances[name] = float(np.mean(increases))
    return importances


# ---------------------------------------------------------------------------
# Ablation grid
# ---------------------------------------------------------------------------


def default_ablation_grid() -> list[tuple[str, ...]]:
    """Baseline, every single-signal exclusion, and the pair/triple
    exclusions over the three structural signals: 14 runs in total."""
    grid: list[tuple[str, ...]] = [()]
    grid += [(name,) for name in SIGNAL_NAMES]
    grid += [pair for pair in combinations(ABLATION_TRIO, 2)]
    grid.append(ABLATION_TRIO)
    return grid


def train_and_evaluate(
    ds: LabeledDataset,
    model_kind: str,
    seed: int = DEFAULT_SEED,
    ratio: float = DEFAULT_SPLIT_RATIO,
    excluded: Sequence[str] = (),
) -> tuple[FittedModel, ModelReport, tuple[np.ndarray, np.ndarray]]:
    """Split, fit, and evaluate; returns the model, the report, and the
    (test ids order, predictions) pair for plotting."""
    working = ds.without_features(excluded) if excluded else ds
    train_idx, test_idx = split_train_test(len(working), ratio=ratio, seed=seed)
    model = fit_model(model_kind, working.X[train_idx], working.y[train_idx], seed=seed)
    report = evaluate(
        model,
        working.X[test_idx],
        working.y[test_idx],
        train_size=len(train_idx),
        seed=seed,
        excluded=tuple(excluded),
    )
    predictions = np.clip(model.predict(working.X[test_idx]), 0.0, 1.0)
    return model, report, (test_idx, predictions)


def ablation(
    ds: LabeledDataset,
    exclusion_sets: Optional[list[tuple[str, ...]]] = None,
    model_kind: str = "gbt2",
    seed: int = DEFAULT_SEED,
) -> list[tuple[tuple[str, ...], ModelReport]]:
    """Retrain on the same seeded split with each named signal set removed."""
    grid = exclusion_sets if exclusion_sets is not None else default_ablation_grid()
    results = []
    for excluded in grid:
        excluded = tuple(resolve_feature_names(excluded))
        _, report, _ = train_and_evaluate(ds, model_kind, seed=seed, excluded=excluded)
        results.append((excluded, report))
    return results


# ---------------------------------------------------------------------------
# Report emission and dataset IO
# ---------------------------------------------------------------------------


def _format_metric(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _format_spearman(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.1f}%"


def emit_reports(
    reports: list[ModelReport],
    out_dir: str | Path,
    points: Optional[dict[str, tuple[np.ndarray, np.ndarray]]] = None,
) -> list[Path]:
    """Write the metric table (text and JSON) and per-model prediction files."""
    if not reports:
        raise ModelingError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    header = f"{'Model':<38} {'RMSE':>8} {'MAE':>8} {'R2':>8} {'Spearman':>9}"
    lines = [header, "-" * len(header)]
    for report in reports:
        label = MODEL_LABELS.get(report.model, report.model)
        if report.excluded:
            label += f" minus {{{', '.join(report.excluded)}}}"
        lines.append(
            f"{label:<38} {report.rmse:>8.4f} {report.mae:>8.4f}"
            f" {_format_metric(report.r2):>8} {_format_spearman(report.spearman_rho):>9}"
        )
    table_txt = out_dir / "metrics.txt"
    table_txt.write_text("\n".join(lines) + "\n")
    written.append(table_txt)

    table_json = out_dir / "metrics.json"
    table_json.write_text(
        json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2) + "\n"
    )
    written.append(table_json)

    for model_name, (y_true, y_pred) in (points or {}).items():
        path = out_dir / f"points_{model_name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["actual", "predicted"])
            for actual, predicted in zip(y_true, y_pred):
                writer.writerow([repr(float(actual)), repr(float(predicted))])
        written.append(path)
    return written


_LABEL_ALIASES = ("difficulty", "incorrect_rate", "Difficulty", "IncorrectAnswerRate", "label")
_LIKING_ALIASES = ("liking", "Liking", "mean_liking", "LikingScore")


def load_labeled_csv(path: str | Path) -> LabeledDataset:
    """Read a signals+labels table, accepting internal or display column names.

    Feature columns may be ``norm_<name>``, ``raw_<name>`` (renormalized when
    only raw values are present), bare internal names, or display aliases.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ModelingError(f"no rows in {path}")
    columns = rows[0].keys()

    def find_column(name: str) -> Optional[str]:
        aliases = [f"norm_{name}", name]
        aliases += [alias for alias, internal in SIGNAL_ALIASES.items() if internal == name]
        for alias in aliases:
            if alias in columns:
                return alias
        return None

    feature_columns = {}
    normalized_input = True
    for name in SIGNAL_NAMES:
        column = find_column(name)
        if column is None and f"raw_{name}" in columns:
            column = f"raw_{name}"
            normalized_input = False
        if column is None:
            raise ModelingError(f"no column found for signal {name!r} in {path}")
        feature_columns[name] = column

    label_column = next((c for c in _LABEL_ALIASES if c in columns), None)
    if label_column is None:
        raise ModelingError(f"no difficulty label column in {path}")
    liking_column = next((c for c in _LIKING_ALIASES if c in columns), None)
    id_column = "mcq_id" if "mcq_id" in columns else None

    mcq_ids = []
    X = np.zeros((len(rows), len(SIGNAL_NAMES)))
    y = np.zeros(len(rows))
    liking = np.full(len(rows), np.nan)
    for i, row in enumerate(rows):
        mcq_ids.append(row[id_column] if id_column else f"row{i}")
        for j, name in enumerate(SIGNAL_NAMES):
            X[i, j] = float(row[feature_columns[name]])
        y[i] = float(row[label_column])
        if liking_column and row.get(liking_column):
            liking[i] = float(row[liking_column])

    norm = None
    if not normalized_input:
        raw_rows = [RawSignals(**{name: X[i, j] for j, name in enumerate(SIGNAL_NAMES)}) for i in range(len(rows))]
        norm = fit_normalization(raw_rows)
        X = np.clip((X - norm.mins) / (norm.maxs - norm.mins), 0.0, 1.0)
    return LabeledDataset(mcq_ids=mcq_ids, X=X, y=y, liking=liking, norm=norm)
