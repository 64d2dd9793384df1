"""Random forest of Gini CART trees, used to rank features by mean decrease in impurity."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, DimensionError


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2
    max_features: Optional[int] = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_split < 2:
            raise ValueError("need n_trees >= 1, max_depth >= 1, min_samples_split >= 2")


def _gini(n1, n):
    p = n1 / n
    return 2.0 * p * (1.0 - p)


class DecisionTree:
    """Binary CART tree on 0/1 labels, stored as flat node arrays.

    A row goes left when ``x[feature] <= threshold``. Leaves have feature -1.
    """

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.counts: list[tuple[int, int]] = []
        self.impurity_decrease: list[float] = []  # weighted by node share of the sample

    def _add(self, counts):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(counts)
        self.impurity_decrease.append(0.0)
        return len(self.feature) - 1

    def fit(self, X, y, rng, max_features, max_depth, min_samples_split) -> "DecisionTree":
        n_total = y.size
        p = X.shape[1]
        root_idx = np.arange(n_total)
        stack = [(self._add((int(n_total - y.sum()), int(y.sum()))), root_idx, 0)]
        while stack:
            node, idx, depth = stack.pop()
            n = idx.size
            n1 = int(y[idx].sum())
            if depth >= max_depth or n < min_samples_split or n1 == 0 or n1 == n:
                continue
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
            best = _best_split(X[idx], y[idx], feats)
            if best is None:
                continue
            gain, f, thr = best
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            self.feature[node] = int(f)
            self.threshold[node] = float(thr)
            self.impurity_decrease[node] = n / n_total * gain
            l = self._add((int(li.size - y[li].sum()), int(y[li].sum())))
            r = self._add((int(ri.size - y[ri].sum()), int(y[ri].sum())))
            self.left[node], self.right[node] = l, r
            stack.append((r, ri, depth + 1))
            stack.append((l, li, depth + 1))
        self._freeze()
        return self

    def _freeze(self):
        self._feature = np.array(self.feature)
        self._threshold = np.array(self.threshold)
        self._left = np.array(self.left)
        self._right = np.array(self.right)
        c = np.array(self.counts, dtype=float)
        self._leaf_class = (c[:, 1] > c[:, 0]).astype(int)

    def apply(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        active = self._feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self._feature[nd]] <= self._threshold[nd]
            node[r] = np.where(go_left, self._left[nd], self._right[nd])
            active = self._feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self._leaf_class[self.apply(X)]

    def importances(self, p: int) -> np.ndarray:
        imp = np.zeros(p)
        for f, d in zip(self.feature, self.impurity_decrease):
            if f >= 0:
                imp[f] += d
        return imp


def _best_split(X, y, feats):
    """Best (gain, feature, threshold) over ``feats``; ties keep the lowest feature, then lowest threshold."""
    n = y.size
    n1 = y.sum()
    parent = _gini(n1, n)
    best = None
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        nl = np.arange(1, n)
        l1 = np.cumsum(ys)[:-1]
        nr = n - nl
        r1 = n1 - l1
        pl, pr = l1 / nl, r1 / nr
        child = (nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)) / n
        gain = np.where(valid, parent - child, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] <= 0:
            continue
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), int(f), (xs[i] + xs[i + 1]) / 2.0)
    return best


@dataclass
class RandomForest:
    config: ForestConfig
    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)
    oob_score: Optional[float] = None

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"forest fitted on {self.n_features} features, got shape {X.shape}")
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict(X)
        return (2 * votes > len(self.trees)).astype(int)


def fit(X, y, config: ForestConfig = ForestConfig()) -> RandomForest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError(f"X of shape {X.shape} does not match {y.size} labels")
    if y.size < 2 or len(np.unique(y)) < 2:
        raise DegenerateInputError("forest needs at least 2 rows covering both classes")
    n, p = X.shape
    k = config.max_features or math.ceil(math.sqrt(p))
    k = min(max(1, k), p)
    forest = RandomForest(config, p)
    oob_votes = np.zeros(n)
    oob_counts = np.zeros(n)
    # independent per-tree streams: the result does not depend on fitting order
    for child in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.Generator(np.random.PCG64(child))
        sample = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        tree = DecisionTree().fit(X[sample], y[sample], rng, k, config.max_depth, config.min_samples_split)
        forest.trees.append(tree)
        if config.bootstrap:
            oob = np.ones(n, dtype=bool)
            oob[sample] = False
            if oob.any():
                oob_votes[oob] += tree.predict(X[oob])
                oob_counts[oob] += 1
    if config.bootstrap and oob_counts.any():
        seen = oob_counts > 0
        pred = (2 * oob_votes[seen] > oob_counts[seen]).astype(int)
        forest.oob_score = float(np.mean(pred == y[seen]))
    return forest


def predict(forest: RandomForest, rows) -> np.ndarray:
    return forest.predict(rows)


@dataclass
class ImportanceReport:
    feature_names: list[str]
    importances: list[float]
    metadata: dict = field(default_factory=dict)

    @property
    def ranking(self) -> list[int]:
        """Feature indices, most important first; ties by index."""
        return sorted(range(len(self.importances)), key=lambda i: (-self.importances[i], i))

    def to_csv(self, path, fingerprint: str = "") -> None:
        rank = {j: r + 1 for r, j in enumerate(self.ranking)}
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            if fingerprint:
                fh.write(f"# fingerprint={fingerprint}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "importance", "rank"])
            for j in self.ranking:
                w.writerow([self.feature_names[j], repr(float(self.importances[j])), rank[j]])


def feature_importance(forest: RandomForest, feature_names=None) -> ImportanceReport:
    """Mean decrease in Gini impurity: per-tree normalized, averaged, renormalized to sum 1."""
    p = forest.n_features
    total = np.zeros(p)
    for t in forest.trees:
        imp = t.importances(p)
        s = imp.sum()
        if s > 0:
            total += imp / s
    if total.sum() > 0:
        total = total / total.sum()
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(p)]
    meta = {"forest": asdict(forest.config), "oob_score": forest.oob_score}
    return ImportanceReport(names, total.tolist(), meta)
