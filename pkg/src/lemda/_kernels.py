"""Compiled inner loops for tree growth and traversal.

Split kinds: 0 = numeric (``x <= threshold`` goes left), 1 = categorical
one-code-vs-rest (``x == code`` goes left).

Within one node the Gini decrease is an affine function of
``l0*l1/nl + r0*r1/nr``, so candidates are ranked on that quantity and the
decrease is evaluated only for the winner.
"""

import numpy as np
from numba import njit

# Decreases closer than this are ties; ties go to the lower feature index,
# then the lower threshold.
TIE_TOL = 1e-12


@njit(cache=True, nogil=True)
def gini_counts(c0, c1):
    n = c0 + c1
    p0 = c0 / n
    p1 = c1 / n
    return p0 * (1.0 - p0) + p1 * (1.0 - p1)


@njit(cache=True, nogil=True)
def decrease_counts(c0, c1, l0, l1):
    n = c0 + c1
    nl = l0 + l1
    nr = n - nl
    return (gini_counts(c0, c1)
            - (nl / n) * gini_counts(l0, l1)
            - (nr / n) * gini_counts(c0 - l0, c1 - l1))


@njit(cache=True, nogil=True)
def _child_cost(c0, c1, l0, l1):
    nl = l0 + l1
    nr = c0 + c1 - nl
    return (l0 * l1) / nl + ((c0 - l0) * (c1 - l1)) / nr


@njit(cache=True, nogil=True)
def _better(cost, f, thr, best_cost, best_f, best_thr, tol):
    if best_f < 0:
        return True
    if cost < best_cost - tol:
        return True
    if cost <= best_cost + tol:
        if f < best_f:
            return True
        if f == best_f and thr < best_thr:
            return True
    return False


@njit(cache=True, nogil=True)
def _segment_best(sorted_val, ys, sorted_pos, start, end, c0, c1, order, n_visit, is_cat,
                  n_codes, cnt0, cnt1):
    """Best split for the node occupying ``[start, end)`` of every sorted list.

    Features are visited in ``order`` until ``n_visit`` of them admit a
    candidate. Returns (feature, threshold, kind, l0, l1); feature -1 when
    nothing separates the node.
    """
    m = end - start
    # cost differences scale as 2/m relative to decrease differences
    tol = TIE_TOL * m / 2.0
    best_f = -1
    best_thr = 0.0
    best_kind = 0
    best_cost = 0.0
    best_l0 = 0
    best_l1 = 0
    visited = 0
    for oi in range(order.size):
        if visited >= n_visit:
            break
        f = order[oi]
        found = False
        if is_cat[f]:
            k = n_codes[f]
            for code in range(k):
                cnt0[code] = 0
                cnt1[code] = 0
            for i in range(start, end):
                code = int(sorted_val[f, i])
                if ys[sorted_pos[f, i]] == 1:
                    cnt1[code] += 1
                else:
                    cnt0[code] += 1
            for code in range(k):
                cm = cnt0[code] + cnt1[code]
                if cm == 0 or cm == m:
                    continue
                found = True
                cost = _child_cost(c0, c1, cnt0[code], cnt1[code])
                if _better(cost, f, float(code), best_cost, best_f, best_thr, tol):
                    best_f = f
                    best_thr = float(code)
                    best_kind = 1
                    best_cost = cost
                    best_l0 = cnt0[code]
                    best_l1 = cnt1[code]
        else:
            # Along a run of same-label samples the child cost is strictly
            # concave, so only cuts whose neighbouring value blocks are not
            # jointly pure can be optimal. A cut is decided once the block
            # after it has ended.
            l0 = 0
            l1 = 0
            pend = False
            p_thr = 0.0
            p_l0 = 0
            p_l1 = 0
            block_start = start
            prev_block_start = start
            last_change = start
            prev_lab = ys[sorted_pos[f, start]]
            for i in range(start, end - 1):
                lab = ys[sorted_pos[f, i]]
                if lab != prev_lab:
                    last_change = i
                    prev_lab = lab
                if lab == 1:
                    l1 += 1
                else:
                    l0 += 1
                a = sorted_val[f, i]
                b = sorted_val[f, i + 1]
                if a < b:
                    found = True
                    if pend and last_change > prev_block_start:
                        cost = _child_cost(c0, c1, p_l0, p_l1)
                        if _better(cost, f, p_thr, best_cost, best_f, best_thr, tol):
                            best_f = f
                            best_thr = p_thr
                            best_kind = 0
                            best_cost = cost
                            best_l0 = p_l0
                            best_l1 = p_l1
                    thr = (a + b) / 2.0
                    if thr >= b:
                        thr = a
                    pend = True
                    p_thr = thr
                    p_l0 = l0
                    p_l1 = l1
                    prev_block_start = block_start
                    block_start = i + 1
            if pend:
                lab = ys[sorted_pos[f, end - 1]]
                if lab != prev_lab:
                    last_change = end - 1
                if last_change > prev_block_start:
                    cost = _child_cost(c0, c1, p_l0, p_l1)
                    if _better(cost, f, p_thr, best_cost, best_f, best_thr, tol):
                        best_f = f
                        best_thr = p_thr
                        best_kind = 0
                        best_cost = cost
                        best_l0 = p_l0
                        best_l1 = p_l1
        if found:
            visited += 1
    return best_f, best_thr, best_kind, best_l0, best_l1


def presort(X):
    """Per-column row order by value, shape (features, rows)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int32)


@njit(cache=True, nogil=True)
def _prepare(X, y, counts, order_rows):
    """Expand row multiplicities into sample positions.

    Sample positions are grouped by source row, so walking each presorted
    row list and emitting every copy yields value-sorted position lists in
    linear time.
    """
    n_rows, n_features = X.shape
    first = np.empty(n_rows, dtype=np.int64)
    n = 0
    for r in range(n_rows):
        first[r] = n
        n += counts[r]
    ys = np.empty(n, dtype=np.int8)
    for r in range(n_rows):
        for c in range(counts[r]):
            ys[first[r] + c] = y[r]
    sorted_pos = np.empty((n_features, n), dtype=np.int32)
    sorted_val = np.empty((n_features, n), dtype=np.float64)
    xt = np.empty((n_features, n), dtype=np.float64)
    for f in range(n_features):
        k = 0
        for i in range(n_rows):
            r = order_rows[f, i]
            v = X[r, f]
            for c in range(counts[r]):
                p = first[r] + c
                sorted_pos[f, k] = p
                sorted_val[f, k] = v
                xt[f, p] = v
                k += 1
    return xt, ys, sorted_pos, sorted_val


@njit(cache=True, nogil=True)
def search_split(X, y, counts, order_rows, order, n_visit, is_cat, n_codes):
    """Best split of the rows with ``counts > 0`` over features taken from
    ``order``. ``order_rows`` is the output of :func:`presort`.

    Returns (feature, threshold, kind, decrease, left0, left1); feature is
    -1 when no candidate exists.
    """
    xt, ys, sorted_pos, sorted_val = _prepare(X, y, counts, order_rows)
    c1 = 0
    for p in range(ys.size):
        c1 += ys[p]
    c0 = ys.size - c1
    k = 1
    for f in range(n_codes.size):
        k = max(k, n_codes[f])
    cnt0 = np.zeros(k, dtype=np.int64)
    cnt1 = np.zeros(k, dtype=np.int64)
    f, thr, sk, l0, l1 = _segment_best(sorted_val, ys, sorted_pos, 0, ys.size, c0, c1, order,
                                       n_visit, is_cat, n_codes, cnt0, cnt1)
    dec = 0.0
    if f >= 0:
        dec = decrease_counts(c0, c1, l0, l1)
    return f, thr, sk, dec, l0, l1


@njit(cache=True, nogil=True)
def build_tree(X, y, counts, order_rows, is_cat, n_codes, max_features, max_depth,
               min_samples_split, seed):
    """Grow one tree on the rows of ``X`` weighted by integer ``counts``
    (bootstrap multiplicities; zero excludes a row). ``order_rows`` is the
    output of :func:`presort`.

    Each feature keeps a list of sample positions sorted by value; a split
    stably partitions every list, so node segments stay sorted and no
    per-node sort is needed. ``max_depth < 0`` means unlimited.
    Returns node arrays: feature, threshold, kind, left, right, value,
    count0, count1, decrease.
    """
    np.random.seed(seed)
    n_features = X.shape[1]
    xt, ys, sorted_pos, sorted_val = _prepare(X, y, counts, order_rows)
    n = ys.size

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    kind = np.zeros(cap, dtype=np.int8)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.int8)
    count0 = np.zeros(cap, dtype=np.int64)
    count1 = np.zeros(cap, dtype=np.int64)
    decrease = np.zeros(cap, dtype=np.float64)

    s_start = np.empty(n + 1, dtype=np.int64)
    s_end = np.empty(n + 1, dtype=np.int64)
    s_depth = np.empty(n + 1, dtype=np.int64)
    s_node = np.empty(n + 1, dtype=np.int64)
    s_start[0] = 0
    s_end[0] = n
    s_depth[0] = 0
    s_node[0] = 0
    top = 1
    n_nodes = 1
    order = np.arange(n_features)
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int32)
    vbuf = np.empty(n, dtype=np.float64)
    k = 1
    for f in range(n_features):
        k = max(k, n_codes[f])
    cnt0 = np.zeros(k, dtype=np.int64)
    cnt1 = np.zeros(k, dtype=np.int64)

    while top > 0:
        top -= 1
        start = s_start[top]
        end = s_end[top]
        depth = s_depth[top]
        node = s_node[top]
        m = end - start
        c1 = 0
        for i in range(start, end):
            c1 += ys[sorted_pos[0, i]]
        c0 = m - c1
        count0[node] = c0
        count1[node] = c1
        value[node] = 1 if c1 >= c0 else 0

        if c0 == 0 or c1 == 0:
            continue
        if m < min_samples_split:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        if max_features < n_features:
            # fresh Fisher-Yates shuffle of the visiting order
            for i in range(n_features):
                order[i] = i
            for i in range(n_features - 1, 0, -1):
                j = np.random.randint(0, i + 1)
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp

        bf, bthr, bkind, l0, l1 = _segment_best(sorted_val, ys, sorted_pos, start, end, c0, c1,
                                                order, max_features, is_cat, n_codes,
                                                cnt0, cnt1)
        if bf < 0:
            continue

        n_left = 0
        for i in range(start, end):
            p = sorted_pos[0, i]
            v = xt[bf, p]
            gl = (v == bthr) if bkind == 1 else (v <= bthr)
            goes_left[p] = gl
            if gl:
                n_left += 1
        for f in range(n_features):
            # left entries compact in place; right entries wait in the buffer
            li = start
            ri = 0
            for i in range(start, end):
                p = sorted_pos[f, i]
                v = sorted_val[f, i]
                if goes_left[p]:
                    sorted_pos[f, li] = p
                    sorted_val[f, li] = v
                    li += 1
                else:
                    buf[ri] = p
                    vbuf[ri] = v
                    ri += 1
            for i in range(ri):
                sorted_pos[f, li + i] = buf[i]
                sorted_val[f, li + i] = vbuf[i]
        mid = start + n_left

        feature[node] = bf
        threshold[node] = bthr
        kind[node] = bkind
        decrease[node] = decrease_counts(c0, c1, l0, l1)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode

        s_start[top] = mid
        s_end[top] = end
        s_depth[top] = depth + 1
        s_node[top] = rnode
        top += 1
        s_start[top] = start
        s_end[top] = mid
        s_depth[top] = depth + 1
        s_node[top] = lnode
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), kind[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy(),
            count0[:n_nodes].copy(), count1[:n_nodes].copy(), decrease[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, kind, left, right, value, X, perm_feature, perm):
    """Leaf class per row. When ``perm_feature >= 0`` that column is read
    through ``perm`` (row i sees ``X[perm[i], perm_feature]``)."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            f = feature[node]
            if f == perm_feature:
                v = X[perm[i], f]
            else:
                v = X[i, f]
            if kind[node] == 1:
                go_left = v == threshold[node]
            else:
                go_left = v <= threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = value[node]
    return out
