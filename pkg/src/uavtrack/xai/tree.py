"""CART regression tree with minimal cost-complexity pruning.

Split search works on the sorted unique values of each feature, so it is
exact for any input.  It is fast when features take few distinct values,
as on the policy grid.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

LEAF = -1


class RegressionTree(RegressorMixin, BaseEstimator):
    """Variance-reduction regression tree.

    Parameters
    ----------
    max_depth : int
        Depth cap of the grown tree (root has depth 0).
    ccp_alpha : float
        Cost-complexity pruning coefficient, on the scale of the mean
        squared error of the whole training set.
    min_samples_leaf : int
        Minimum number of samples in each child of a split.

    Attributes
    ----------
    nodes_ : dict of arrays
        ``left``, ``right``, ``feature``, ``threshold``, ``value``,
        ``n_samples`` and ``sse`` per node; leaves have ``feature == -1``.
        Samples with ``x[feature] <= threshold`` go left.
    """

    def __init__(self, max_depth=8, ccp_alpha=0.0, min_samples_leaf=1):
        self.max_depth = max_depth
        self.ccp_alpha = ccp_alpha
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.ccp_alpha < 0:
            raise ValueError("ccp_alpha must be non-negative")
        self.n_features_in_ = X.shape[1]
        self.n_train_ = X.shape[0]
        self.full_nodes_ = _grow(X, y, self.max_depth, max(1, int(self.min_samples_leaf)))
        self.full_nodes_["collapse_alpha"] = _collapse_alphas(self.full_nodes_, self.n_train_)
        self.nodes_ = _prune(self.full_nodes_, self.ccp_alpha)
        return self

    # ------------------------------------------------------------------
    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row lands in."""
        check_is_fitted(self, "nodes_")
        X = check_array(X, dtype=np.float64)
        nodes = self.nodes_
        out = np.zeros(X.shape[0], dtype=np.int64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            f = nodes["feature"][node]
            if f == LEAF:
                out[rows] = node
                continue
            go_left = X[rows, f] <= nodes["threshold"][node]
            stack.append((nodes["right"][node], rows[~go_left]))
            stack.append((nodes["left"][node], rows[go_left]))
        return out

    def predict(self, X) -> np.ndarray:
        return self.nodes_["value"][self.apply(X)]

    @property
    def n_leaves_(self) -> int:
        check_is_fitted(self, "nodes_")
        return int(np.sum(self.nodes_["feature"] == LEAF))

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "nodes_")
        depth = np.zeros(len(self.nodes_["feature"]), dtype=int)
        for i, (l, r) in enumerate(zip(self.nodes_["left"], self.nodes_["right"])):
            if l != LEAF:
                depth[l] = depth[r] = depth[i] + 1
        return int(depth.max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.nodes_["feature"] == LEAF)

    def cost_complexity_pruning_path(self) -> np.ndarray:
        """Effective alphas at which the grown tree loses nodes, ascending,
        starting with 0."""
        check_is_fitted(self, "full_nodes_")
        alphas = self.full_nodes_["collapse_alpha"]
        return np.unique(np.concatenate([[0.0], alphas[np.isfinite(alphas)]]))

    def pruned(self, ccp_alpha) -> "RegressionTree":
        """Copy of this tree pruned at ``ccp_alpha`` without refitting."""
        check_is_fitted(self, "full_nodes_")
        clone = RegressionTree(self.max_depth, ccp_alpha, self.min_samples_leaf)
        clone.n_features_in_ = self.n_features_in_
        clone.n_train_ = self.n_train_
        clone.full_nodes_ = self.full_nodes_
        clone.nodes_ = _prune(self.full_nodes_, ccp_alpha)
        return clone

    def paths(self) -> dict:
        """Map leaf index -> list of ``(feature, threshold, went_left)``."""
        check_is_fitted(self, "nodes_")
        nodes = self.nodes_
        out = {}
        stack = [(0, [])]
        while stack:
            node, path = stack.pop()
            f = nodes["feature"][node]
            if f == LEAF:
                out[int(node)] = path
                continue
            thr = float(nodes["threshold"][node])
            stack.append((nodes["right"][node], path + [(int(f), thr, False)]))
            stack.append((nodes["left"][node], path + [(int(f), thr, True)]))
        return out

    def to_dict(self, feature_names=None) -> dict:
        check_is_fitted(self, "nodes_")
        names = feature_names or [f"x{i}" for i in range(self.n_features_in_)]
        nodes = []
        for i in range(len(self.nodes_["feature"])):
            f = int(self.nodes_["feature"][i])
            entry = {
                "id": i,
                "value": float(self.nodes_["value"][i]),
                "n_samples": int(self.nodes_["n_samples"][i]),
            }
            if f != LEAF:
                entry.update(
                    feature=names[f],
                    feature_index=f,
                    threshold=float(self.nodes_["threshold"][i]),
                    left=int(self.nodes_["left"][i]),
                    right=int(self.nodes_["right"][i]),
                )
            nodes.append(entry)
        return {"params": self.get_params(), "features": list(names), "nodes": nodes}

    def to_json(self, feature_names=None) -> str:
        return json.dumps(self.to_dict(feature_names), indent=1)

    def to_dot(self, feature_names=None, precision=3) -> str:
        check_is_fitted(self, "nodes_")
        names = feature_names or [f"x{i}" for i in range(self.n_features_in_)]
        n = self.nodes_
        lines = ["digraph tree {", '  node [shape=box, fontname="helvetica"];']
        for i in range(len(n["feature"])):
            f = n["feature"][i]
            value = f"value = {n['value'][i]:.{precision}f}\\nsamples = {n['n_samples'][i]}"
            if f == LEAF:
                lines.append(f'  {i} [label="{value}", style=rounded];')
            else:
                cond = f"{names[f]} <= {n['threshold'][i]:.{precision}f}"
                lines.append(f'  {i} [label="{cond}\\n{value}"];')
                lines.append(f'  {i} -> {n["left"][i]} [label="yes"];')
                lines.append(f'  {i} -> {n["right"][i]} [label="no"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _grow(X, y, max_depth, min_leaf) -> dict:
    n, n_feat = X.shape
    uniques, codes = [], []
    for f in range(n_feat):
        u, c = np.unique(X[:, f], return_inverse=True)
        uniques.append(u)
        codes.append(c.astype(np.int32))

    left, right, feature, threshold, value, count, sse = [], [], [], [], [], [], []

    def new_node(rows):
        ys = y[rows]
        mean = float(ys.mean())
        left.append(LEAF)
        right.append(LEAF)
        feature.append(LEAF)
        threshold.append(np.nan)
        value.append(mean)
        count.append(rows.size)
        resid = ys - mean
        # rounding in the mean must not make a constant node look impure
        sse.append(float(resid @ resid) if ys.max() > ys.min() else 0.0)
        return len(value) - 1

    root = new_node(np.arange(n))
    frontier = [(root, np.arange(n), 0)]
    while frontier:
        node, rows, depth = frontier.pop(0)
        if depth >= max_depth or rows.size < 2 * min_leaf or sse[node] <= 0.0:
            continue
        best = _best_split(rows, y[rows] - value[node], codes, uniques, min_leaf)
        if best is None:
            continue
        f, code, gain = best
        if gain <= 1e-12 * max(sse[node], 1e-300):
            continue
        node_codes = codes[f][rows]
        mask = node_codes <= code
        u = uniques[f]
        feature[node] = f
        # midpoint between the adjacent values actually present in this node
        threshold[node] = 0.5 * (u[code] + u[node_codes[~mask].min()])
        l_rows, r_rows = rows[mask], rows[~mask]
        left[node] = new_node(l_rows)
        right[node] = new_node(r_rows)
        frontier.append((left[node], l_rows, depth + 1))
        frontier.append((right[node], r_rows, depth + 1))

    return {
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "value": np.array(value, dtype=float),
        "n_samples": np.array(count, dtype=np.int64),
        "sse": np.array(sse, dtype=float),
    }


def _best_split(rows, y_centered, codes, uniques, min_leaf):
    """(feature, last code going left, SSE reduction) of the best split."""
    n = rows.size
    total_sum = y_centered.sum()
    total_sq = float(y_centered @ y_centered)
    best = None
    best_sse = np.inf
    for f, (c_all, u) in enumerate(zip(codes, uniques)):
        if u.size < 2:
            continue
        c = c_all[rows]
        cnt = np.bincount(c, minlength=u.size)[:-1].cumsum()
        s = np.bincount(c, weights=y_centered, minlength=u.size)[:-1].cumsum()
        q = np.bincount(c, weights=y_centered * y_centered, minlength=u.size)[:-1].cumsum()
        ok = (cnt >= min_leaf) & (n - cnt >= min_leaf)
        # splits between equal occupied neighbours are duplicates; keep the first
        ok[1:] &= cnt[1:] != cnt[:-1]
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            sse_l = q - s * s / cnt
            n_r = n - cnt
            s_r = total_sum - s
            sse_r = (total_sq - q) - s_r * s_r / n_r
        split_sse = np.where(ok, sse_l + sse_r, np.inf)
        j = int(np.argmin(split_sse))
        if split_sse[j] < best_sse - 1e-12 * max(total_sq, 1e-300):
            best_sse = split_sse[j]
            best = (f, j, total_sq - split_sse[j])
    return best


def _subtree_stats(nodes, n_train):
    """Leaf risk sum and leaf count below every node (post-order)."""
    m = len(nodes["feature"])
    risk = nodes["sse"] / n_train
    leaf_risk = np.zeros(m)
    n_leaves = np.zeros(m, dtype=int)
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if nodes["feature"][i] != LEAF:
            stack.extend((nodes["left"][i], nodes["right"][i]))
    for i in reversed(order):
        if nodes["feature"][i] == LEAF:
            leaf_risk[i] = risk[i]
            n_leaves[i] = 1
        else:
            l, r = nodes["left"][i], nodes["right"][i]
            leaf_risk[i] = leaf_risk[l] + leaf_risk[r]
            n_leaves[i] = n_leaves[l] + n_leaves[r]
    return risk, leaf_risk, n_leaves, order


def _weakest_link(nodes, n_train):
    risk, leaf_risk, n_leaves, order = _subtree_stats(nodes, n_train)
    internal = [i for i in order if nodes["feature"][i] != LEAF]
    g = {i: (risk[i] - leaf_risk[i]) / (n_leaves[i] - 1) for i in internal}
    best = min(g.values())
    return max(best, 0.0), g


def _collapse_alphas(nodes, n_train) -> np.ndarray:
    """Weakest-link sequence: the alpha at which each internal node becomes
    a leaf (inf for leaves of the grown tree)."""
    work = {k: v.copy() for k, v in nodes.items()}
    out = np.full(len(work["feature"]), np.inf)
    previous = 0.0
    while work["feature"][0] != LEAF:
        alpha, g = _weakest_link(work, n_train)
        alpha = max(alpha, previous)
        previous = alpha
        tol = 1e-12 * max(abs(alpha), 1e-300) + 1e-300
        for i, gi in g.items():
            if gi <= alpha + tol:
                work["feature"][i] = LEAF
                out[i] = alpha
    return out


def _prune(nodes, ccp_alpha) -> dict:
    """Collapse every node whose weakest-link alpha is <= ccp_alpha, then
    renumber reachable nodes in pre-order."""
    nodes = {k: v.copy() for k, v in nodes.items()}
    collapse = nodes["collapse_alpha"] <= ccp_alpha
    nodes["feature"][collapse] = LEAF
    nodes["left"][collapse] = LEAF
    nodes["right"][collapse] = LEAF
    nodes["threshold"][collapse] = np.nan
    return _compact(nodes)


def _compact(nodes) -> dict:
    remap = {}
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        remap[i] = len(order)
        order.append(i)
        if nodes["feature"][i] != LEAF:
            stack.extend((nodes["right"][i], nodes["left"][i]))
    out = {k: v[order].copy() for k, v in nodes.items()}
    for key in ("left", "right"):
        out[key] = np.array([remap[c] if c != LEAF else LEAF for c in out[key]], dtype=np.int64)
    return out
