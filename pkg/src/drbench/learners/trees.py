"""CART regression trees, random forests, and gradient boosted trees.

Trees are grown by an exact greedy least-squares split search compiled with
numba and stored as flat arrays. The same grower serves all three uses:
plain regression (forest), class fractions on 0/1 targets (forest
probability), and pseudo-residual fitting with Newton leaf values
(boosting). All randomness flows from an explicit seed, so fits are
bit-reproducible regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.special import expit

from drbench.learners.base import (
    PROB_EPS,
    FittedLearner,
    LearnerError,
    LearnerSpec,
    Task,
    check_xy,
)


@njit(cache=True)
def _grow(Xv, grad, hess, idx, mtry, max_depth, min_leaf, uniforms):
    n_rows = idx.shape[0]
    p = Xv.shape[1]
    max_nodes = 2 ** (max_depth + 1) + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes)

    work = idx.copy()
    tmp = np.empty(n_rows, np.int64)
    feat_pool = np.arange(p)
    xs = np.empty(n_rows)
    gv = np.empty(n_rows)

    stack_node = np.empty(max_nodes, np.int64)
    stack_start = np.empty(max_nodes, np.int64)
    stack_end = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_rows
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    cursor = 0

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start

        sg = 0.0
        sh = 0.0
        for i in range(start, end):
            sg += grad[work[i]]
            sh += hess[work[i]]
        value[node] = sg / sh if sh > 1e-12 else 0.0

        if depth >= max_depth or m < 2 * min_leaf:
            continue

        k = mtry if mtry < p else p
        if k < p:
            for j in range(k):
                u = uniforms[cursor % uniforms.shape[0]]
                cursor += 1
                swap = j + int(u * (p - j))
                if swap >= p:
                    swap = p - 1
                t = feat_pool[j]
                feat_pool[j] = feat_pool[swap]
                feat_pool[swap] = t

        for i in range(m):
            gv[i] = grad[work[start + i]]

        best_gain = 1e-12
        best_f = -1
        best_thr = 0.0
        base = sg * sg / m
        for jj in range(k):
            f = feat_pool[jj]
            for i in range(m):
                xs[i] = Xv[work[start + i], f]
            order = np.argsort(xs[:m])
            acc = 0.0
            for i in range(1, m):
                acc += gv[order[i - 1]]
                if i < min_leaf or m - i < min_leaf:
                    continue
                x_lo = xs[order[i - 1]]
                x_hi = xs[order[i]]
                if x_hi <= x_lo:
                    continue
                gain = acc * acc / i + (sg - acc) * (sg - acc) / (m - i) - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (x_lo + x_hi)

        if best_f < 0:
            continue

        nl = 0
        for i in range(start, end):
            if Xv[work[i], best_f] <= best_thr:
                nl += 1
        pos_l = 0
        pos_r = nl
        for i in range(start, end):
            w = work[i]
            if Xv[w, best_f] <= best_thr:
                tmp[pos_l] = w
                pos_l += 1
            else:
                tmp[pos_r] = w
                pos_r += 1
        for i in range(m):
            work[start + i] = tmp[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[top] = lid
        stack_start[top] = start
        stack_end[top] = start + nl
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = rid
        stack_start[top] = start + nl
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
    )


@njit(cache=True)
def _predict_one_tree(feature, threshold, left, right, value, Xv, out):
    for i in range(Xv.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Xv[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


def _tree_matrix(values: np.ndarray, active: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values[:, active])


def _active_columns(values: np.ndarray) -> np.ndarray:
    return values.std(axis=0) > 1e-12


def fit_random_forest(X, y, family: str = "linear", seed: int = 0, n_trees: int = 200,
                      max_depth: int = 8, min_leaf: int = 5, mtry: int | None = None) -> FittedLearner:
    """Bagged CART forest; probability predictions are mean leaf class fractions."""
    if family not in ("linear", "logistic"):
        raise LearnerError(f"unknown family {family!r}")
    values, y, columns = check_xy(X, y, min_rows=20)
    if family == "logistic" and not np.isin(y, (0.0, 1.0)).all():
        raise LearnerError("y must be binary 0/1")

    active = _active_columns(values)
    Xv = _tree_matrix(values, active)
    n, p_eff = Xv.shape
    if p_eff == 0:
        raise LearnerError("all columns are constant")
    m_try = int(np.ceil(np.sqrt(p_eff))) if mtry is None else min(int(mtry), p_eff)

    rng = np.random.default_rng(seed)
    hess = np.ones(n)
    buf = max(m_try * min(2 ** max_depth, n), 16)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, n).astype(np.int64)
        uniforms = rng.random(buf)
        trees.append(_grow(Xv, y, hess, boot, m_try, max_depth, min_leaf, uniforms))

    params = {"trees": trees, "active": active, "logistic": family == "logistic"}
    return FittedLearner(
        spec=LearnerSpec("random_forest", {"n_trees": n_trees, "max_depth": max_depth,
                                           "min_leaf": min_leaf, "mtry": mtry}),
        task=Task.BINARY_PROBABILITY if family == "logistic" else Task.REGRESSION,
        training_columns=columns,
        parameters=params,
        warnings=(),
    )


def _predict_forest(params, values: np.ndarray) -> np.ndarray:
    Xv = _tree_matrix(values, params["active"])
    out = np.zeros(Xv.shape[0])
    for tree in params["trees"]:
        _predict_one_tree(*tree, Xv, out)
    return out / len(params["trees"])


def fit_gbt(X, y, family: str = "linear", seed: int = 0, n_trees: int = 100,
            max_depth: int = 3, min_leaf: int = 5, learning_rate: float = 0.1) -> FittedLearner:
    """Gradient boosting with shallow regression trees.

    Squared loss boosts on residuals; logistic loss boosts on the log-odds
    scale with per-leaf Newton steps. Probability output is clamped to
    [1e-6, 1 - 1e-6].
    """
    if family not in ("linear", "logistic"):
        raise LearnerError(f"unknown family {family!r}")
    values, y, columns = check_xy(X, y, min_rows=20)
    logistic = family == "logistic"
    if logistic and not np.isin(y, (0.0, 1.0)).all():
        raise LearnerError("y must be binary 0/1")

    active = _active_columns(values)
    Xv = _tree_matrix(values, active)
    n, p_eff = Xv.shape
    if p_eff == 0:
        raise LearnerError("all columns are constant")

    rng = np.random.default_rng(seed)
    full_idx = np.arange(n, dtype=np.int64)
    no_uniforms = np.empty(1)

    if logistic:
        p0 = float(np.clip(y.mean(), PROB_EPS, 1.0 - PROB_EPS))
        f0 = float(np.log(p0 / (1.0 - p0)))
    else:
        f0 = float(y.mean())
    F = np.full(n, f0)
    trees = []
    for _ in range(n_trees):
        if logistic:
            prob = expit(F)
            grad = y - prob
            hess = np.clip(prob * (1.0 - prob), 1e-6, None)
        else:
            grad = y - F
            hess = np.ones(n)
        tree = _grow(Xv, grad, hess, full_idx, p_eff, max_depth, min_leaf, no_uniforms)
        trees.append(tree)
        step = np.zeros(n)
        _predict_one_tree(*tree, Xv, step)
        F += learning_rate * step

    params = {"trees": trees, "active": active, "logistic": logistic,
              "f0": f0, "learning_rate": learning_rate}
    return FittedLearner(
        spec=LearnerSpec("gbt", {"n_trees": n_trees, "max_depth": max_depth,
                                 "min_leaf": min_leaf, "learning_rate": learning_rate}),
        task=Task.BINARY_PROBABILITY if logistic else Task.REGRESSION,
        training_columns=columns,
        parameters=params,
        warnings=(),
    )


def _predict_gbt(params, values: np.ndarray) -> np.ndarray:
    Xv = _tree_matrix(values, params["active"])
    acc = np.zeros(Xv.shape[0])
    for tree in params["trees"]:
        _predict_one_tree(*tree, Xv, acc)
    F = params["f0"] + params["learning_rate"] * acc
    if params["logistic"]:
        return np.clip(expit(F), PROB_EPS, 1.0 - PROB_EPS)
    return F
