"""Compiled tree-building kernels.

Trees are stored as flat parallel arrays: ``feature[i] < 0`` marks a leaf
holding ``value[i]``; internal nodes route rows with ``x[feature] <=
threshold`` to ``left`` and the rest to ``right``. Builders work on
pre-sorted per-feature index columns that get partitioned in place as nodes
split, so each split costs one linear scan per feature.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LAM = 1.0  # L2 regulariser on boosting leaf weights


@njit(cache=True)
def _gini_weighted(n1_left, n_left, n1_total, n_total):
    """Sum of child Gini impurities weighted by child sizes."""
    n_right = n_total - n_left
    n1_right = n1_total - n1_left
    p1l = n1_left / n_left
    p1r = n1_right / n_right
    gl = 1.0 - p1l * p1l - (1.0 - p1l) * (1.0 - p1l)
    gr = 1.0 - p1r * p1r - (1.0 - p1r) * (1.0 - p1r)
    return n_left * gl + n_right * gr


@njit(cache=True)
def build_cart(X, y, order, min_split, min_leaf, max_features, seed):
    """Grow a Gini CART to purity (or constraints) and return flat arrays.

    ``order`` is (d, m): per feature, row indices ascending by feature value;
    bootstrap duplicates simply appear multiple times. It is destroyed.
    """
    d = X.shape[1]
    m = order.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)

    tmp_l = np.empty(m, dtype=np.int32)
    tmp_r = np.empty(m, dtype=np.int32)
    stack = np.empty((2 * m + 2, 3), dtype=np.int64)

    if max_features < d:
        np.random.seed(seed)

    n_nodes = 1
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = 0
    stack[top, 2] = m
    top += 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        n = end - start

        n1 = 0.0
        for j in range(start, end):
            n1 += y[order[0, j]]
        value[node] = n1 / n

        if n < min_split or n1 == 0.0 or n1 == n:
            continue

        if max_features < d:
            cand = np.random.permutation(d)[:max_features]
        else:
            cand = np.arange(d)

        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        best_nl = 0
        for ci in range(len(cand)):
            f = cand[ci]
            cl = 0
            cl1 = 0.0
            for j in range(start, end - 1):
                idx = order[f, j]
                cl += 1
                cl1 += y[idx]
                v = X[idx, f]
                vn = X[order[f, j + 1], f]
                if vn <= v:
                    continue
                if cl < min_leaf or n - cl < min_leaf:
                    continue
                score = _gini_weighted(cl1, cl, n1, n)
                if score < best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (v + vn)
                    if thr >= vn:
                        thr = v
                    best_thr = thr
                    best_nl = cl

        if best_f < 0:
            continue

        li = 0
        ri = 0
        for g in range(d):
            li = 0
            ri = 0
            for j in range(start, end):
                idx = order[g, j]
                if X[idx, best_f] <= best_thr:
                    tmp_l[li] = idx
                    li += 1
                else:
                    tmp_r[ri] = idx
                    ri += 1
            order[g, start:start + li] = tmp_l[:li]
            order[g, start + li:end] = tmp_r[:ri]

        node_l = n_nodes
        node_r = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = node_l
        right[node] = node_r

        stack[top, 0] = node_r
        stack[top, 1] = start + best_nl
        stack[top, 2] = end
        top += 1
        stack[top, 0] = node_l
        stack[top, 1] = start
        stack[top, 2] = start + best_nl
        top += 1

    # copies, not slices: the cap-sized buffers must not outlive the build
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def _leaf_best_split(X, g, h, order, start, end, d):
    """Best gain split of one segment under the usual second-order gain."""
    G = 0.0
    H = 0.0
    for j in range(start, end):
        idx = order[0, j]
        G += g[idx]
        H += h[idx]
    base = G * G / (H + LAM)
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    best_nl = 0
    for f in range(d):
        Gl = 0.0
        Hl = 0.0
        for j in range(start, end - 1):
            idx = order[f, j]
            Gl += g[idx]
            Hl += h[idx]
            v = X[idx, f]
            vn = X[order[f, j + 1], f]
            if vn <= v:
                continue
            Gr = G - Gl
            Hr = H - Hl
            gain = Gl * Gl / (Hl + LAM) + Gr * Gr / (Hr + LAM) - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (v + vn)
                if thr >= vn:
                    thr = v
                best_thr = thr
                best_nl = j - start + 1
    return best_gain, best_f, best_thr, best_nl, G, H


@njit(cache=True)
def build_leafwise_tree(X, g, h, order, num_leaves, lr, raw, max_depth):
    """Grow one best-first tree; leaves get -G/(H+lam)*lr; updates ``raw``.

    Splits only while a strictly positive gain exists and both the leaf
    budget and ``max_depth`` allow. ``order`` is destroyed.
    """
    d = X.shape[1]
    m = order.shape[1]
    cap = 2 * num_leaves + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)

    # per live leaf: node id, segment bounds, cached best split
    seg_node = np.empty(cap, dtype=np.int64)
    seg_start = np.empty(cap, dtype=np.int64)
    seg_end = np.empty(cap, dtype=np.int64)
    seg_depth = np.empty(cap, dtype=np.int64)
    seg_gain = np.empty(cap, dtype=np.float64)
    seg_f = np.empty(cap, dtype=np.int64)
    seg_thr = np.empty(cap, dtype=np.float64)
    seg_nl = np.empty(cap, dtype=np.int64)
    seg_G = np.empty(cap, dtype=np.float64)
    seg_H = np.empty(cap, dtype=np.float64)

    tmp_l = np.empty(m, dtype=np.int32)
    tmp_r = np.empty(m, dtype=np.int32)

    gain, f, thr, nl, G, H = _leaf_best_split(X, g, h, order, 0, m, d)
    if max_depth == 0:
        gain = 0.0
    seg_node[0] = 0
    seg_start[0] = 0
    seg_end[0] = m
    seg_depth[0] = 0
    seg_gain[0] = gain
    seg_f[0] = f
    seg_thr[0] = thr
    seg_nl[0] = nl
    seg_G[0] = G
    seg_H[0] = H
    n_segs = 1
    n_nodes = 1
    n_leaves = 1

    while n_leaves < num_leaves:
        best_i = -1
        best_gain = 0.0
        for i in range(n_segs):
            if seg_node[i] >= 0 and seg_gain[i] > best_gain:
                best_gain = seg_gain[i]
                best_i = i
        if best_i < 0:
            break

        node = seg_node[best_i]
        start = seg_start[best_i]
        end = seg_end[best_i]
        bf = seg_f[best_i]
        bthr = seg_thr[best_i]
        bnl = seg_nl[best_i]

        li = 0
        ri = 0
        for gg in range(d):
            li = 0
            ri = 0
            for j in range(start, end):
                idx = order[gg, j]
                if X[idx, bf] <= bthr:
                    tmp_l[li] = idx
                    li += 1
                else:
                    tmp_r[ri] = idx
                    ri += 1
            order[gg, start:start + li] = tmp_l[:li]
            order[gg, start + li:end] = tmp_r[:ri]

        node_l = n_nodes
        node_r = n_nodes + 1
        n_nodes += 2
        feature[node] = bf
        threshold[node] = bthr
        left[node] = node_l
        right[node] = node_r

        mid = start + bnl
        gain_l, f_l, thr_l, nl_l, G_l, H_l = _leaf_best_split(X, g, h, order, start, mid, d)
        gain_r, f_r, thr_r, nl_r, G_r, H_r = _leaf_best_split(X, g, h, order, mid, end, d)
        child_depth = seg_depth[best_i] + 1
        if child_depth >= max_depth:
            gain_l = 0.0
            gain_r = 0.0

        seg_node[best_i] = node_l
        seg_start[best_i] = start
        seg_end[best_i] = mid
        seg_depth[best_i] = child_depth
        seg_gain[best_i] = gain_l
        seg_f[best_i] = f_l
        seg_thr[best_i] = thr_l
        seg_nl[best_i] = nl_l
        seg_G[best_i] = G_l
        seg_H[best_i] = H_l

        seg_node[n_segs] = node_r
        seg_start[n_segs] = mid
        seg_end[n_segs] = end
        seg_depth[n_segs] = child_depth
        seg_gain[n_segs] = gain_r
        seg_f[n_segs] = f_r
        seg_thr[n_segs] = thr_r
        seg_nl[n_segs] = nl_r
        seg_G[n_segs] = G_r
        seg_H[n_segs] = H_r
        n_segs += 1
        n_leaves += 1

    for i in range(n_segs):
        node = seg_node[i]
        if node >= 0 and feature[node] < 0:
            val = -seg_G[i] / (seg_H[i] + LAM) * lr
            value[node] = val
            for j in range(seg_start[i], seg_end[i]):
                raw[order[0, j]] += val

    # copies, not slices: the cap-sized buffers must not outlive the build
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def build_oblivious_tree(X, g, h, order, depth, lr, raw):
    """Grow one symmetric tree: one shared (feature, threshold) per level.

    Thresholds maximise the aggregate second-order gain summed over all
    current leaves. Rows route by bit: leaf code shifts left, gaining a 1
    when x[feature] > threshold. Updates ``raw`` and returns the level
    splits plus the 2**depth leaf values.
    """
    n, d = X.shape
    code = np.zeros(n, dtype=np.int64)
    feats = np.empty(depth, dtype=np.int64)
    thrs = np.empty(depth, dtype=np.float64)

    for level in range(depth):
        n_leaves = 1 << level
        Gt = np.zeros(n_leaves, dtype=np.float64)
        Ht = np.zeros(n_leaves, dtype=np.float64)
        for i in range(n):
            Gt[code[i]] += g[i]
            Ht[code[i]] += h[i]
        base = 0.0
        for c in range(n_leaves):
            base += Gt[c] * Gt[c] / (Ht[c] + LAM)

        best_gain = -np.inf
        best_f = -1
        best_thr = np.inf
        Gl = np.empty(n_leaves, dtype=np.float64)
        Hl = np.empty(n_leaves, dtype=np.float64)
        term = np.empty(n_leaves, dtype=np.float64)
        for f in range(d):
            for c in range(n_leaves):
                Gl[c] = 0.0
                Hl[c] = 0.0
                term[c] = Gt[c] * Gt[c] / (Ht[c] + LAM)
            total = base
            for j in range(n - 1):
                idx = order[f, j]
                c = code[idx]
                total -= term[c]
                Gl[c] += g[idx]
                Hl[c] += h[idx]
                gr = Gt[c] - Gl[c]
                hr = Ht[c] - Hl[c]
                term[c] = Gl[c] * Gl[c] / (Hl[c] + LAM) + gr * gr / (hr + LAM)
                total += term[c]
                v = X[idx, f]
                vn = X[order[f, j + 1], f]
                if vn <= v:
                    continue
                gain = total - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (v + vn)
                    if thr >= vn:
                        thr = v
                    best_thr = thr

        if best_f < 0:
            best_f = 0
            best_thr = np.inf  # degenerate level: every row keeps bit 0
        feats[level] = best_f
        thrs[level] = best_thr
        for i in range(n):
            bit = 1 if X[i, best_f] > best_thr else 0
            code[i] = (code[i] << 1) | bit

    n_final = 1 << depth
    Gf = np.zeros(n_final, dtype=np.float64)
    Hf = np.zeros(n_final, dtype=np.float64)
    for i in range(n):
        Gf[code[i]] += g[i]
        Hf[code[i]] += h[i]
    values = np.empty(n_final, dtype=np.float64)
    for c in range(n_final):
        values[c] = -Gf[c] / (Hf[c] + LAM) * lr
    for i in range(n):
        raw[i] += values[code[i]]
    return feats, thrs, values


@njit(cache=True)
def predict_oblivious(feats, thrs, values, X):
    n = X.shape[0]
    depth = len(feats)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        c = 0
        for level in range(depth):
            bit = 1 if X[i, feats[level]] > thrs[level] else 0
            c = (c << 1) | bit
        out[i] = values[c]
    return out
