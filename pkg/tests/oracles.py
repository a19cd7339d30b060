"""Slow reference computations used to check the library, kept deliberately naive."""

import itertools

import numpy as np


def floyd_warshall(n, edges):
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    for e in edges:
        u, v = e[0], e[1]
        w = e[2] if len(e) > 2 else 1.0
        D[u, v] = D[v, u] = min(D[u, v], w)
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    return D


def four_point_brute(D):
    n = len(D)
    best = 0.0
    for x, y, z, w in itertools.combinations(range(n), 4):
        s = sorted([D[x, y] + D[z, w], D[x, z] + D[y, w], D[x, w] + D[y, z]])
        best = max(best, 0.5 * (s[2] - s[1]))
    return best


def simple_paths(adj, u, v):
    """Every simple path from u to v as a vertex tuple."""
    out = []
    stack = [(u, (u,))]
    while stack:
        cur, path = stack.pop()
        if cur == v:
            out.append(path)
            continue
        for w in adj[cur]:
            if w not in path:
                stack.append((w, path + (w,)))
    return out


def path_len(lengths, path):
    return sum(lengths[frozenset(e)] for e in zip(path, path[1:]))


def qi_constants_brute(ds, dt, grid=1e-4):
    """Least K on a fine grid with ds/K - K <= dt <= K ds + K for all pairs."""
    K = 1.0
    while True:
        if np.all(ds / K - K <= dt + 1e-12) and np.all(dt <= K * ds + K + 1e-12):
            return K
        K += grid


def ladder_retraction_brute(fiber_D, rung):
    """Smallest-position nearest point of every vertex on a rung."""
    out = []
    for y in range(len(fiber_D)):
        d = [fiber_D[y, v] for v in rung]
        out.append(rung[int(np.argmin(d))])
    return out
