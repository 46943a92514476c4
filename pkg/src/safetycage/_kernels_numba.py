"""Numba-compiled twins of ``_kernels_numpy``.

``fastmath`` stays off: the numpy path is the reference and results must
match it bit for bit.
"""
import numpy as np
from numba import njit

JIT_OPTIONS = {"nogil": True, "cache": True}


@njit(**JIT_OPTIONS)
def harmonic_reciprocal_sums(flux, center, grid, radius, eps):
    S, N, C, L = flux.shape
    G = grid.shape[0]
    acc = np.zeros((S, C, G))
    for a in range(S):
        for c in range(C):
            for g in range(G):
                total = 0.0
                for n in range(N):
                    for j in range(-radius, radius + 1):
                        s = grid[g] + j
                        m = 2 * center - s
                        term = 0.0
                        if 0 <= s < L:
                            term += 1.0 / max(flux[a, n, c, s], eps)
                        if 0 <= m < L:
                            term += 1.0 / max(flux[a, n, c, m], eps)
                        total += term
                acc[a, c, g] = total
    return acc


@njit(**JIT_OPTIONS)
def build_tree(X, sub_idx, uniforms, max_depth):
    psi = sub_idx.shape[0]
    d = X.shape[1]
    m = 2 * psi - 1
    feature = np.full(m, -1, dtype=np.int64)
    threshold = np.zeros(m)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    size = np.zeros(m, dtype=np.int64)
    depth = np.zeros(m, dtype=np.int64)

    idx = sub_idx.copy()
    st_node = np.empty(m, dtype=np.int64)
    st_start = np.empty(m, dtype=np.int64)
    st_end = np.empty(m, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = psi
    top = 1
    n_nodes = 1
    u_pos = 0
    lo = np.empty(d)
    hi = np.empty(d)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        n = end - start
        size[node] = n
        if depth[node] >= max_depth or n <= 1:
            continue
        for f in range(d):
            v = X[idx[start], f]
            lo[f] = v
            hi[f] = v
        for i in range(start + 1, end):
            for f in range(d):
                v = X[idx[i], f]
                if v < lo[f]:
                    lo[f] = v
                if v > hi[f]:
                    hi[f] = v
        nc = 0
        for f in range(d):
            if hi[f] > lo[f]:
                nc += 1
        if nc == 0:
            continue
        k = int(uniforms[u_pos] * nc)
        if k >= nc:
            k = nc - 1
        f_split = -1
        seen = 0
        for f in range(d):
            if hi[f] > lo[f]:
                if seen == k:
                    f_split = f
                    break
                seen += 1
        thr = lo[f_split] + uniforms[u_pos + 1] * (hi[f_split] - lo[f_split])
        if thr <= lo[f_split]:
            thr = hi[f_split]
        u_pos += 2

        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], f_split] < thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i

        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        feature[node] = f_split
        threshold[node] = thr
        left[node] = l
        right[node] = r
        depth[l] = depth[node] + 1
        depth[r] = depth[node] + 1
        st_node[top] = r
        st_start[top] = mid
        st_end[top] = end
        top += 1
        st_node[top] = l
        st_start[top] = start
        st_end[top] = mid
        top += 1
    return feature, threshold, left, right, size, depth, n_nodes


@njit(**JIT_OPTIONS)
def forest_path_sums(X, feature, threshold, left, right, leaf_value):
    n = X.shape[0]
    T = feature.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(T):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] < threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += leaf_value[t, node]
        out[i] = acc
    return out
