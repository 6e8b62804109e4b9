"""Gradient-boosted regression trees mapping bounding-box features to distance.

Squared-error boosting: the ensemble starts from the target mean and every
round fits a depth-limited tree to the current residuals with exact greedy
variance-reduction splits. Row subsampling and per-tree / per-level column
sampling follow the usual XGBoost parameter names.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FEATURES = ("cx", "cy", "w", "h")
N_FEATURES = len(FEATURES)
MODEL_MAGIC = "padguard-gbdt"
MODEL_VERSION = 1


class DatasetError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BBoxFeatures:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in vals):
            raise DatasetError(f"box features must lie in [0, 1], got {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class GbdtHyperParams:
    max_depth: int = 3
    learning_rate: float = 0.05
    n_estimators: int = 500
    colsample_bytree: float = 0.5
    colsample_bylevel: float = 0.8
    subsample: float = 0.6

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        for name in ("colsample_bytree", "colsample_bylevel", "subsample"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


# result of a randomized search on real detections; used as the default
TUNED_DEFAULTS = GbdtHyperParams()


@dataclass
class Tree:
    """Binary regression tree stored as parallel arrays in pre-order.

    ``feature[i] == -1`` marks a leaf; internal nodes send ``x < threshold``
    to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[rows, np.where(internal, f, 0)] < self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)


@dataclass
class GbdtModel:
    base_score: float
    learning_rate: float
    trees: list = field(default_factory=list)

    def __post_init__(self):
        self._packed = None

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base_score)
        if not self.trees or len(X) == 0:
            return out
        feat, thr, left, right, val, depth = self._pack()
        n_rows, n_trees = len(X), len(self.trees)
        t_idx = np.broadcast_to(np.arange(n_trees), (n_rows, n_trees))
        r_idx = np.broadcast_to(np.arange(n_rows)[:, None], (n_rows, n_trees))
        node = np.zeros((n_rows, n_trees), dtype=np.intp)
        for _ in range(depth):
            f = feat[t_idx, node]
            internal = f >= 0
            go_left = X[r_idx, np.where(internal, f, 0)] < thr[t_idx, node]
            nxt = np.where(go_left, left[t_idx, node], right[t_idx, node])
            node = np.where(internal, nxt, node)
        # summing tree outputs in a fixed order keeps predictions bit-stable
        return out + self.learning_rate * val[t_idx, node].sum(axis=1)

    def predict(self, X) -> np.ndarray:
        return np.maximum(self.raw_predict(X), 0.0)

    def predict_one(self, f: BBoxFeatures) -> float:
        return float(self.predict(f.as_array()[None, :])[0])

    def _pack(self):
        if self._packed is None:
            width = max(t.n_nodes for t in self.trees)
            n = len(self.trees)
            feat = np.full((n, width), -1, dtype=np.intp)
            thr = np.zeros((n, width))
            left = np.zeros((n, width), dtype=np.intp)
            right = np.zeros((n, width), dtype=np.intp)
            val = np.zeros((n, width))
            for i, t in enumerate(self.trees):
                k = t.n_nodes
                feat[i, :k] = t.feature
                thr[i, :k] = t.threshold
                left[i, :k] = t.left
                right[i, :k] = t.right
                val[i, :k] = t.value
            depth = max(t.depth() for t in self.trees)
            self._packed = (feat, thr, left, right, val, depth)
        return self._packed


def _n_pick(frac: float, n: int) -> int:
    return max(1, min(n, int(math.floor(frac * n + 0.5))))


def _best_split(X, r, idx, features):
    """Exact greedy split maximizing the reduction in squared error.

    Returns ``(gain, feature, threshold, left_mask)`` or ``None``.
    """
    n = len(idx)
    total = r[idx].sum()
    base = total * total / n
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cs = np.cumsum(r[idx][order])
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        n_left = np.arange(1, n)
        s_left = cs[:-1]
        s_right = total - s_left
        gain = s_left**2 / n_left + s_right**2 / (n - n_left) - base
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        g = gain[i]
        if best is None or g > best[0]:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo < thr <= hi:
                thr = hi
            best = (g, f, thr)
    if best is None:
        return None
    g, f, thr = best
    # relative cutoff: ignores gains at the level of cumsum round-off
    if not g > 1e-12 * float(np.dot(r[idx], r[idx])):
        return None
    return g, f, thr, X[idx, f] < thr


def _build_tree(X, r, rows, tree_features, hp: GbdtHyperParams, rng) -> Tree:
    nodes = []  # [feature, threshold, left, right, value]
    level_features = {}

    def features_at(depth):
        if depth not in level_features:
            k = _n_pick(hp.colsample_bylevel, len(tree_features))
            picked = rng.choice(tree_features, size=k, replace=False)
            level_features[depth] = np.sort(picked)
        return level_features[depth]

    def grow(idx, depth):
        me = len(nodes)
        nodes.append([-1, 0.0, -1, -1, float(r[idx].mean())])
        if depth >= hp.max_depth or len(idx) < 2:
            return me
        split = _best_split(X, r, idx, features_at(depth))
        if split is None:
            return me
        _, f, thr, mask = split
        nodes[me][0] = int(f)
        nodes[me][1] = float(thr)
        nodes[me][2] = grow(idx[mask], depth + 1)
        nodes[me][3] = grow(idx[~mask], depth + 1)
        return me

    grow(rows, 0)
    cols = list(zip(*nodes))
    return Tree(
        feature=np.array(cols[0], dtype=np.intp),
        threshold=np.array(cols[1], dtype=float),
        left=np.array(cols[2], dtype=np.intp),
        right=np.array(cols[3], dtype=np.intp),
        value=np.array(cols[4], dtype=float),
    )


def _check_dataset(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise DatasetError(f"expected (n, {N_FEATURES}) features, got {X.shape}")
    if len(X) == 0:
        raise DatasetError("dataset is empty")
    if len(y) != len(X):
        raise DatasetError("feature/target length mismatch")
    if not np.all(np.isfinite(y)):
        raise DatasetError("targets must be finite")
    if not np.all(np.isfinite(X)):
        raise DatasetError("features must be finite")
    if np.any(y < 0):
        raise DatasetError("distances must be >= 0")
    return X, y


def fit(X, y, hp: GbdtHyperParams = TUNED_DEFAULTS, seed: int = 0) -> GbdtModel:
    X, y = _check_dataset(X, y)
    rng = np.random.default_rng(seed)
    n = len(y)
    model = GbdtModel(base_score=float(y.mean()), learning_rate=hp.learning_rate)
    pred = np.full(n, model.base_score)
    all_features = np.arange(N_FEATURES)
    n_rows = _n_pick(hp.subsample, n)
    for _ in range(hp.n_estimators):
        r = y - pred
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        k = _n_pick(hp.colsample_bytree, N_FEATURES)
        tree_features = np.sort(rng.choice(all_features, size=k, replace=False))
        tree = _build_tree(X, r, rows, tree_features, hp, rng)
        model.trees.append(tree)
        pred = pred + hp.learning_rate * tree.predict(X)
    return model


@dataclass(frozen=True)
class RegressionMetrics:
    mae: float
    medae: float
    maxerr: float
    expvar: float


def regression_metrics(y_true, y_pred) -> RegressionMetrics:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if len(y_true) == 0:
        raise DatasetError("cannot score an empty holdout")
    err = np.abs(y_true - y_pred)
    var_y = np.var(y_true)
    var_res = np.var(y_true - y_pred)
    if var_y > 0:
        expvar = 1.0 - var_res / var_y
    else:
        expvar = 1.0 if var_res == 0 else 0.0
    return RegressionMetrics(
        mae=float(err.mean()),
        medae=float(np.median(err)),
        maxerr=float(err.max()),
        expvar=float(expvar),
    )


def evaluate(model: GbdtModel, X, y) -> RegressionMetrics:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise DatasetError("cannot score an empty holdout")
    return regression_metrics(y, model.predict(X))


def kfold_indices(n: int, k: int, seed: int):
    if k < 2:
        raise DatasetError("k_folds must be >= 2")
    if n < k:
        raise DatasetError(f"dataset of {n} rows is smaller than k_folds={k}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    for i in range(k):
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        yield train, np.sort(folds[i])


def cv_mae(X, y, hp: GbdtHyperParams, k_folds: int = 5, seed: int = 0) -> float:
    X, y = _check_dataset(X, y)
    maes = []
    for train, test in kfold_indices(len(y), k_folds, seed):
        model = fit(X[train], y[train], hp, seed=seed)
        maes.append(evaluate(model, X[test], y[test]).mae)
    return float(np.mean(maes))


def random_search_cv(
    X,
    y,
    search_space: Mapping[str, Sequence],
    k_folds: int = 5,
    n_trials: int = 10,
    seed: int = 0,
    base: GbdtHyperParams = TUNED_DEFAULTS,
) -> tuple[GbdtHyperParams, list[tuple[GbdtHyperParams, float]]]:
    """Randomized hyperparameter search scored by mean cross-validated MAE.

    Each trial draws every searched parameter uniformly from its candidate
    list; unsearched parameters come from ``base``. Returns the best
    configuration (first one on ties) and the full trial table.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    X, y = _check_dataset(X, y)
    if len(y) < k_folds:
        raise DatasetError(f"dataset of {len(y)} rows is smaller than k_folds={k_folds}")
    rng = np.random.default_rng(seed)
    names = sorted(search_space)
    trials = []
    for _ in range(n_trials):
        draw = {name: search_space[name][int(rng.integers(len(search_space[name])))] for name in names}
        hp = replace(base, **draw)
        score = cv_mae(X, y, hp, k_folds=k_folds, seed=seed)
        logger.debug("trial %s -> cv mae %.4f", draw, score)
        trials.append((hp, score))
    best = min(range(len(trials)), key=lambda i: (trials[i][1], i))
    return trials[best][0], trials


# -- persistence -------------------------------------------------------------


def save_model(model: GbdtModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def dumps_model(model: GbdtModel) -> str:
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"base_score {model.base_score!r}",
        f"learning_rate {model.learning_rate!r}",
        f"n_trees {len(model.trees)}",
    ]
    for i, t in enumerate(model.trees):
        lines.append(f"tree {i} {t.n_nodes}")

        def emit(j):
            if t.feature[j] < 0:
                lines.append(f"leaf {float(t.value[j])!r}")
            else:
                lines.append(f"split {int(t.feature[j])} {float(t.threshold[j])!r} {float(t.value[j])!r}")
                emit(t.left[j])
                emit(t.right[j])

        emit(0)
    return "\n".join(lines) + "\n"


def load_model(path) -> GbdtModel:
    return loads_model(Path(path).read_text())


def loads_model(text: str) -> GbdtModel:
    try:
        return _parse_model(iter(text.splitlines()))
    except (StopIteration, IndexError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc or 'truncated'}") from exc


def _parse_model(lines) -> GbdtModel:
    magic, version = next(lines).split()
    if magic != MODEL_MAGIC or int(version) != MODEL_VERSION:
        raise ValueError(f"unsupported model header {magic} {version}")
    base = float(next(lines).split()[1])
    lr = float(next(lines).split()[1])
    n_trees = int(next(lines).split()[1])
    trees = []
    for _ in range(n_trees):
        _, _, n_nodes = next(lines).split()
        nodes = []

        def parse():
            parts = next(lines).split()
            me = len(nodes)
            if parts[0] == "leaf":
                nodes.append([-1, 0.0, -1, -1, float(parts[1])])
            else:
                nodes.append([int(parts[1]), float(parts[2]), -1, -1, float(parts[3])])
                nodes[me][2] = parse()
                nodes[me][3] = parse()
            return me

        parse()
        if len(nodes) != int(n_nodes):
            raise ValueError("tree node count mismatch")
        cols = list(zip(*nodes))
        trees.append(
            Tree(
                np.array(cols[0], dtype=np.intp),
                np.array(cols[1], dtype=float),
                np.array(cols[2], dtype=np.intp),
                np.array(cols[3], dtype=np.intp),
                np.array(cols[4], dtype=float),
            )
        )
    return GbdtModel(base_score=base, learning_rate=lr, trees=trees)


def write_dataset_csv(path, X, y) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*FEATURES, "distance_m"])
        for row, d in zip(np.asarray(X), np.asarray(y)):
            w.writerow([repr(float(v)) for v in row] + [repr(float(d))])


def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    X = np.array([[float(r[f]) for f in FEATURES] for r in rows]).reshape(-1, N_FEATURES)
    y = np.array([float(r["distance_m"]) for r in rows])
    return _check_dataset(X, y)


def hyperparams_dict(hp: GbdtHyperParams) -> dict:
    return asdict(hp)
