"""CART classification trees and random forests on comparison features.

Trees split on ``x <= threshold`` with thresholds at midpoints between
consecutive distinct training values, choosing the split with the largest
decrease in Gini impurity (count weighted).  Forests grow each tree on a
bootstrap sample with ``mtry`` features drawn per split; every tree has its
own PCG64 stream derived from ``(seed, tree_index)``, so results do not
depend on training order or worker count.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import EmptyDataError, SchemaMismatchError
from .features import FEATURE_NAMES, FeatureVector, feature_matrix

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
_MIN_GAIN = 1e-12
_TIE_REL = 1e-10


@dataclass(frozen=True)
class Leaf:
    match_fraction: float
    n: int
    depth: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    gain: float = 0.0


TreeNode = Union[Leaf, Split]


@dataclass
class Forest:
    trees: list
    seed: int
    mtry: int
    min_leaf: int
    max_depth: int
    importance: np.ndarray
    oob: dict = field(default_factory=dict)
    oob_trace: list = field(default_factory=list)
    feature_names: tuple = FEATURE_NAMES

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def training_arrays(fvs: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and 0/1 labels of the labelled rows of ``fvs``."""
    rows = [fv for fv in fvs if fv.label in ("match", "nonmatch")]
    X = feature_matrix(rows)
    y = np.array([fv.label == "match" for fv in rows], dtype=np.int8)
    return X, y


def gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, features,
               min_leaf: int):
    """Best ``(gain, feature, threshold)`` over ``features``, or None."""
    m = idx.size
    pos = float(y[idx].sum())
    parent = m * gini(pos, m)
    best = None
    for f in sorted(features):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        cum = np.cumsum(y[idx][order], dtype=np.float64)
        cut = np.flatnonzero(xs_s[1:] != xs_s[:-1]) + 1  # left sizes
        cut = cut[(cut >= min_leaf) & (m - cut >= min_leaf)]
        if cut.size == 0:
            continue
        n_l = cut.astype(np.float64)
        n_r = m - n_l
        p_l = cum[cut - 1]
        p_r = pos - p_l
        child = 2.0 * p_l * (n_l - p_l) / n_l + 2.0 * p_r * (n_r - p_r) / n_r
        gain = parent - child
        # gains equal up to rounding count as ties: smallest threshold wins here,
        # lowest feature index across features
        tol = _TIE_REL * max(1.0, parent)
        j = int(np.flatnonzero(gain >= gain.max() - tol)[0])
        g = float(gain[j])
        if g > _MIN_GAIN and (best is None or g > best[0] + tol):
            lo, hi = xs_s[cut[j] - 1], xs_s[cut[j]]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (g, int(f), float(thr))
    return best


def _grow(X, y, idx, depth, min_leaf, max_depth, mtry, rng, importance):
    m = idx.size
    pos = int(y[idx].sum())
    leaf = Leaf(match_fraction=pos / m, n=m, depth=depth)
    if pos == 0 or pos == m or depth >= max_depth or m < 2 * min_leaf:
        return leaf
    p = X.shape[1]
    if mtry is None or mtry >= p:
        features = range(p)
    else:
        features = rng.choice(p, size=mtry, replace=False)
    found = best_split(X, y, idx, features, min_leaf)
    if found is None:
        return leaf
    gain, f, thr = found
    importance[f] += gain
    go_left = X[idx, f] <= thr
    left = _grow(X, y, idx[go_left], depth + 1, min_leaf, max_depth, mtry, rng, importance)
    right = _grow(X, y, idx[~go_left], depth + 1, min_leaf, max_depth, mtry, rng, importance)
    return Split(feature=f, threshold=thr, left=left, right=right, gain=gain)


def fit_tree(X, y, min_leaf: int = 7, max_depth: int = 30, mtry: int | None = None,
             rng: np.random.Generator | None = None,
             importance: np.ndarray | None = None) -> TreeNode:
    """Grow a classification tree on features ``X`` and 0/1 labels ``y``.

    Growth stops at pure nodes, at ``max_depth``, or when no split leaves
    ``min_leaf`` rows on both sides.  Gini decreases of the chosen splits are
    added to ``importance`` when given.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataError("no training rows")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per row")
    if mtry is not None and rng is None:
        rng = np.random.default_rng(0)
    if importance is None:
        importance = np.zeros(X.shape[1])
    return _grow(X, y, np.arange(X.shape[0]), 0, min_leaf, max_depth, mtry, rng, importance)


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tree_index])))


def _fit_one(args):
    X, y, seed, t, mtry, min_leaf, max_depth = args
    rng = tree_rng(seed, t)
    n = X.shape[0]
    sample = rng.integers(0, n, size=n)
    imp = np.zeros(X.shape[1])
    tree = fit_tree(X[sample], y[sample], min_leaf=min_leaf, max_depth=max_depth,
                    mtry=mtry, rng=rng, importance=imp)
    inbag = np.zeros(n, dtype=bool)
    inbag[sample] = True
    return tree, imp, inbag


def fit_forest(X, y, n_trees: int = 300, mtry: int = 2, seed: int = 0,
               min_leaf: int = 1, max_depth: int = 30, jobs: int = 1) -> Forest:
    """Random forest with out-of-bag error and mean Gini importance.

    A row's out-of-bag probability averages the trees whose bootstrap sample
    missed it; it is called a match above 0.5.  ``oob`` reports the overall,
    false positive and false negative rates, and ``oob_trace`` the overall
    rate after each tree.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataError("no training rows")
    n = X.shape[0]
    tasks = [(X, y, seed, t, mtry, min_leaf, max_depth) for t in range(n_trees)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fit_one, tasks, chunksize=max(1, n_trees // (4 * jobs))))
    else:
        results = [_fit_one(t) for t in tasks]

    trees = []
    importance = np.zeros(X.shape[1])
    votes = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    trace = []
    for tree, imp, inbag in results:
        trees.append(tree)
        importance += imp
        oob = ~inbag
        if oob.any():
            votes[oob] += predict_tree_array(tree, X[oob])
            counts[oob] += 1
        has = counts > 0
        if has.any():
            pred = votes[has] / counts[has] > 0.5
            trace.append(float(np.mean(pred != (y[has] == 1))))
        else:
            trace.append(float("nan"))
    importance /= n_trees

    has = counts > 0
    if not has.all():
        logger.warning("%d rows have no out-of-bag trees and are left out of the OOB error",
                       int((~has).sum()))
    prob = np.full(n, np.nan)
    prob[has] = votes[has] / counts[has]
    wrong = (prob > 0.5) != (y == 1)
    neg, posv = has & (y == 0), has & (y == 1)
    oob = {
        "error": float(wrong[has].mean()) if has.any() else float("nan"),
        "false_positive_rate": float(wrong[neg].mean()) if neg.any() else float("nan"),
        "false_negative_rate": float(wrong[posv].mean()) if posv.any() else float("nan"),
        "n_scored": int(has.sum()),
        "probabilities": prob,
    }
    return Forest(trees=trees, seed=seed, mtry=mtry, min_leaf=min_leaf, max_depth=max_depth,
                  importance=importance, oob=oob, oob_trace=trace)


def predict_tree_array(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])

    def walk(nd, idx):
        if isinstance(nd, Leaf):
            out[idx] = nd.match_fraction
            return
        left = X[idx, nd.feature] <= nd.threshold
        walk(nd.left, idx[left])
        walk(nd.right, idx[~left])

    walk(node, np.arange(X.shape[0]))
    return out


def predict_array(model, X) -> np.ndarray:
    """Match probabilities for the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
        raise SchemaMismatchError(
            f"expected {len(FEATURE_NAMES)} feature columns, got shape {X.shape}")
    if isinstance(model, Forest):
        total = np.zeros(X.shape[0])
        for tree in model.trees:
            total += predict_tree_array(tree, X)
        return total / model.n_trees
    return predict_tree_array(model, X)


def predict(model, fv) -> float:
    """Probability that the pair behind ``fv`` is a match."""
    row = fv.values() if isinstance(fv, FeatureVector) else list(fv)
    return float(predict_array(model, np.array([row], dtype=np.float64))[0])


def importance(forest: Forest) -> list[tuple[str, float]]:
    """Features ordered by mean Gini decrease, largest first."""
    order = sorted(range(len(forest.importance)), key=lambda i: (-forest.importance[i], i))
    return [(forest.feature_names[i], float(forest.importance[i])) for i in order]


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


# serialization

def node_to_list(node: TreeNode) -> list:
    if isinstance(node, Leaf):
        return ["leaf", node.match_fraction, node.n, node.depth]
    return ["split", node.feature, node.threshold, node_to_list(node.left),
            node_to_list(node.right), node.gain]


def node_from_list(data) -> TreeNode:
    if data[0] == "leaf":
        return Leaf(match_fraction=float(data[1]), n=int(data[2]), depth=int(data[3]))
    if data[0] == "split":
        gain = float(data[5]) if len(data) > 5 else 0.0
        return Split(feature=int(data[1]), threshold=float(data[2]),
                     left=node_from_list(data[3]), right=node_from_list(data[4]), gain=gain)
    raise SchemaMismatchError(f"unknown node type {data[0]!r}")


def model_to_dict(model) -> dict:
    base = {"schema_version": SCHEMA_VERSION, "feature_names": list(FEATURE_NAMES)}
    if isinstance(model, Forest):
        oob = {k: v for k, v in model.oob.items() if k != "probabilities"}
        return {**base, "kind": "forest", "seed": model.seed, "n_trees": model.n_trees,
                "mtry": model.mtry, "min_leaf": model.min_leaf, "max_depth": model.max_depth,
                "oob": oob, "oob_trace": model.oob_trace,
                "importance": [float(v) for v in model.importance],
                "trees": [node_to_list(t) for t in model.trees]}
    return {**base, "kind": "tree", "tree": node_to_list(model)}


def model_from_dict(data: dict):
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatchError(f"unsupported model schema {data.get('schema_version')!r}")
    if tuple(data.get("feature_names", ())) != FEATURE_NAMES:
        raise SchemaMismatchError("model was trained on a different feature set")
    if data.get("kind") == "tree":
        return node_from_list(data["tree"])
    if data.get("kind") == "forest":
        return Forest(trees=[node_from_list(t) for t in data["trees"]], seed=data["seed"],
                      mtry=data["mtry"], min_leaf=data["min_leaf"],
                      max_depth=data["max_depth"],
                      importance=np.array(data["importance"], dtype=np.float64),
                      oob=dict(data.get("oob", {})), oob_trace=list(data.get("oob_trace", [])))
    raise SchemaMismatchError(f"unknown model kind {data.get('kind')!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
