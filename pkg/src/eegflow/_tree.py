"""Compiled tree-growing kernels shared by the tree ensembles.

Trees are flat arrays: ``feature[k] == -1`` marks a leaf, samples with
``x[feature] <= threshold`` go to ``left[k]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def _gini(counts, total):
    if total <= 0:
        return 0.0
    s = 0.0
    for c in counts:
        p = c / total
        s += p * p
    return 1.0 - s


@njit(cache=True)
def grow_classifier(X, y, n_classes, max_features, min_samples_split, max_depth, random_split, seed):
    """Gini classification tree.

    ``random_split`` selects extremely-randomised splitting: up to
    ``max_features`` non-constant candidate features per node, one uniform
    random cut point each. Otherwise every feature and every cut point
    between distinct values is scanned. ``max_depth < 0`` means unlimited.
    Importance accumulates ``n_node * impurity_decrease`` per feature.
    """
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes))
    importance = np.zeros(d)

    idx = np.arange(n)
    feats = np.arange(d)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)
    rcounts = np.zeros(n_classes)
    vals = np.empty(n)

    top = 1
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n, 0
    n_nodes = 1
    while top > 0:
        top -= 1
        node, start, end, depth = st_node[top], st_start[top], st_end[top], st_depth[top]
        m = end - start
        counts[:] = 0.0
        for i in range(start, end):
            counts[y[idx[i]]] += 1.0
        value[node, :] = counts
        parent = _gini(counts, m)
        if m < min_samples_split or parent <= 0.0 or (max_depth >= 0 and depth >= max_depth):
            continue

        best_gain = -1.0
        best_f = -1
        best_t = 0.0
        if random_split:
            tried = 0
            remaining = d
            while tried < max_features and remaining > 0:
                j = np.random.randint(0, remaining)
                f = feats[j]
                feats[j] = feats[remaining - 1]
                feats[remaining - 1] = f
                remaining -= 1
                lo = np.inf
                hi = -np.inf
                for i in range(start, end):
                    v = X[idx[i], f]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
                if hi <= lo:
                    continue
                tried += 1
                t = lo + np.random.random() * (hi - lo)
                if t >= hi:
                    t = lo
                lcounts[:] = 0.0
                nl = 0
                for i in range(start, end):
                    if X[idx[i], f] <= t:
                        lcounts[y[idx[i]]] += 1.0
                        nl += 1
                nr = m - nl
                for c in range(n_classes):
                    rcounts[c] = counts[c] - lcounts[c]
                gain = parent - (nl * _gini(lcounts, nl) + nr * _gini(rcounts, nr)) / m
                if gain > best_gain:
                    best_gain, best_f, best_t = gain, f, t
        else:
            for f in range(d):
                for i in range(m):
                    vals[i] = X[idx[start + i], f]
                order = np.argsort(vals[:m])
                lcounts[:] = 0.0
                for p in range(m - 1):
                    lcounts[y[idx[start + order[p]]]] += 1.0
                    v0 = vals[order[p]]
                    v1 = vals[order[p + 1]]
                    if v1 <= v0:
                        continue
                    nl = p + 1
                    nr = m - nl
                    for c in range(n_classes):
                        rcounts[c] = counts[c] - lcounts[c]
                    gain = parent - (nl * _gini(lcounts, nl) + nr * _gini(rcounts, nr)) / m
                    if gain > best_gain:
                        t = 0.5 * (v0 + v1)
                        if t >= v1:
                            t = v0
                        best_gain, best_f, best_t = gain, f, t
        if best_f < 0:
            continue

        # in-place partition of idx[start:end]
        i, j = start, end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                idx[i], idx[j] = idx[j], idx[i]
                j -= 1
        mid = i
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        importance[best_f] += m * max(best_gain, 0.0)
        st_node[top], st_start[top], st_end[top], st_depth[top] = n_nodes + 1, mid, end, depth + 1
        top += 1
        st_node[top], st_start[top], st_end[top], st_depth[top] = n_nodes, start, mid, depth + 1
        top += 1
        n_nodes += 2

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], importance)


@njit(cache=True)
def grow_boosting_tree(X, order, r, h, max_depth, min_samples_split, scale):
    """Depth-limited regression tree on pseudo-residuals ``r``, grown level by level.

    ``order`` holds each column's presorted row indices so one pass per
    feature evaluates every cut point of every node on the current level.
    Split gain is the reduction in squared error of ``r``; leaf values are
    ``scale * sum(r) / sum(h)``.
    """
    n, d = X.shape
    cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    importance = np.zeros(d)
    node_of = np.zeros(n, np.int64)

    level_start, level_end = 0, 1
    n_nodes = 1
    for depth in range(max_depth + 1):
        width = level_end - level_start
        cnt = np.zeros(width)
        s = np.zeros(width)
        hs = np.zeros(width)
        for i in range(n):
            k = node_of[i] - level_start
            if k >= 0:
                cnt[k] += 1.0
                s[k] += r[i]
                hs[k] += h[i]
        for k in range(width):
            value[level_start + k] = scale * s[k] / max(hs[k], 1e-12)
        if depth == max_depth:
            break

        parent = np.zeros(width)
        for k in range(width):
            if cnt[k] > 0:
                parent[k] = s[k] * s[k] / cnt[k]
        best_gain = np.full(width, 1e-12)
        best_f = np.full(width, -1, np.int64)
        best_t = np.zeros(width)
        nl = np.zeros(width)
        sl = np.zeros(width)
        last = np.zeros(width)
        for f in range(d):
            nl[:] = 0.0
            sl[:] = 0.0
            for p in range(n):
                i = order[p, f]
                k = node_of[i] - level_start
                if k < 0:
                    continue
                v = X[i, f]
                if nl[k] > 0 and v > last[k]:
                    nr = cnt[k] - nl[k]
                    sr = s[k] - sl[k]
                    g = sl[k] * sl[k] / nl[k] + sr * sr / nr - parent[k]
                    if g > best_gain[k]:
                        t = 0.5 * (last[k] + v)
                        if t >= v:
                            t = last[k]
                        best_gain[k], best_f[k], best_t[k] = g, f, t
                nl[k] += 1.0
                sl[k] += r[i]
                last[k] = v

        new_start = n_nodes
        for k in range(width):
            node = level_start + k
            if best_f[k] >= 0 and cnt[k] >= min_samples_split:
                feature[node] = best_f[k]
                threshold[node] = best_t[k]
                left[node] = n_nodes
                right[node] = n_nodes + 1
                importance[best_f[k]] += best_gain[k]
                n_nodes += 2
        if n_nodes == new_start:
            break
        for i in range(n):
            node = node_of[i]
            if node >= level_start and feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node_of[i] = left[node]
                else:
                    node_of[i] = right[node]
            elif node >= level_start:
                node_of[i] = -1 - node  # frozen in a leaf
        level_start, level_end = new_start, n_nodes

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], importance)


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = k
    return out


@njit(cache=True)
def complete_tree(feature, threshold, left, right, value, depth):
    """Pad a tree to a complete one of ``depth`` levels in heap order.

    Node ``k`` has children ``2k+1`` and ``2k+2``. A leaf above the last
    level becomes a chain of always-left splits (threshold +inf) and its
    value fills every bottom slot beneath it.
    """
    n_int = 2**depth - 1
    feat = np.zeros(n_int, np.int64)
    thr = np.full(n_int, np.inf)
    leaf = np.zeros(2**depth)
    stack = np.zeros((len(feature) + 1, 3), np.int64)  # (node, heap position, level)
    top = 1
    while top > 0:
        top -= 1
        node, pos, level = stack[top, 0], stack[top, 1], stack[top, 2]
        if feature[node] < 0:
            first = pos
            for _ in range(depth - level):
                first = 2 * first + 1
            span = 2 ** (depth - level)
            leaf[first - n_int:first - n_int + span] = value[node]
        else:
            feat[pos] = feature[node]
            thr[pos] = threshold[node]
            stack[top, 0], stack[top, 1], stack[top, 2] = left[node], 2 * pos + 1, level + 1
            stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2] = right[node], 2 * pos + 2, level + 1
            top += 2
    return feat, thr, leaf


@njit(cache=True)
def boosted_decision_function(X, feat, thr, leaf, tree_class, n_classes, base):
    """Sum of all boosting-tree outputs per class over complete heap-ordered trees.

    Row ``t`` of ``feat``/``thr``/``leaf`` is tree ``t``. All rows advance one
    level at a time, which keeps the inner loop free of data-dependent exits.
    """
    n = X.shape[0]
    depth = int(np.log2(leaf.shape[1]) + 0.5)
    n_int = leaf.shape[1] - 1
    out = np.empty((n, n_classes))
    for i in range(n):
        for c in range(n_classes):
            out[i, c] = base[c]
    k = np.empty(n, np.int64)
    for t in range(len(tree_class)):
        c = tree_class[t]
        ft, th, lf = feat[t], thr[t], leaf[t]
        k[:] = 0
        for _ in range(depth):
            for i in range(n):
                kk = k[i]
                k[i] = 2 * kk + 1 + (X[i, ft[kk]] > th[kk])
        for i in range(n):
            out[i, c] += lf[k[i] - n_int]
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]
