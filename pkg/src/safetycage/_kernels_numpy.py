"""Pure-numpy implementations of the hot loops.

Every function here mirrors one in ``_kernels_numba`` operation for
operation, including the order in which floating point sums are
accumulated, so the two backends return bit-identical arrays.
"""
import numpy as np


def harmonic_reciprocal_sums(flux, center, grid, radius, eps):
    """Sum of clamped reciprocals over each mirror-stacked window.

    ``flux`` has shape (S, N, C, L); the result has shape (S, C, G).
    """
    S, N, C, L = flux.shape
    acc = np.zeros((S, C, grid.shape[0]))
    for n in range(N):
        block = flux[:, n]
        for j in range(-radius, radius + 1):
            s = grid + j
            m = 2 * center - s
            s_ok = (s >= 0) & (s < L)
            m_ok = (m >= 0) & (m < L)
            orig = 1.0 / np.maximum(block[:, :, np.clip(s, 0, L - 1)], eps)
            mirr = 1.0 / np.maximum(block[:, :, np.clip(m, 0, L - 1)], eps)
            pair = np.where(s_ok, orig, 0.0) + np.where(m_ok, mirr, 0.0)
            acc += pair
    return acc


def build_tree(X, sub_idx, uniforms, max_depth):
    psi = sub_idx.shape[0]
    m = 2 * psi - 1
    feature = np.full(m, -1, dtype=np.int64)
    threshold = np.zeros(m)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    size = np.zeros(m, dtype=np.int64)
    depth = np.zeros(m, dtype=np.int64)

    n_nodes = 1
    u_pos = 0
    stack = [(0, sub_idx.copy())]
    while stack:
        node, idx = stack.pop()
        n = idx.shape[0]
        size[node] = n
        if depth[node] >= max_depth or n <= 1:
            continue
        rows = X[idx]
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        nc = candidates.shape[0]
        if nc == 0:
            continue
        k = int(uniforms[u_pos] * nc)
        if k >= nc:
            k = nc - 1
        f = candidates[k]
        thr = lo[f] + uniforms[u_pos + 1] * (hi[f] - lo[f])
        if thr <= lo[f]:
            thr = hi[f]
        u_pos += 2

        go_left = rows[:, f] < thr
        l, r = n_nodes, n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = l
        right[node] = r
        depth[l] = depth[r] = depth[node] + 1
        stack.append((r, idx[~go_left]))
        stack.append((l, idx[go_left]))
    return feature, threshold, left, right, size, depth, n_nodes


def forest_path_sums(X, feature, threshold, left, right, leaf_value):
    """Per-row sum over trees of the leaf path value reached."""
    n = X.shape[0]
    rows = np.arange(n)
    acc = np.zeros(n)
    for t in range(feature.shape[0]):
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[t, node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] < threshold[t, node]
            nxt = np.where(go_left, left[t, node], right[t, node])
            node = np.where(internal, nxt, node)
        acc += leaf_value[t, node]
    return acc
