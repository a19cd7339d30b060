"""Compiled inner loops for the four-point hyperbolicity constant."""

import numpy as np
from numba import njit


@njit(cache=True)
def _pair_list(D):
    n = D.shape[0]
    m = n * (n - 1) // 2
    a = np.empty(m, dtype=np.int64)
    b = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            a[k] = i
            b[k] = j
            k += 1
    return a, b


@njit(cache=True)
def _exhaustive(D, a, b, order):
    # pairs visited by decreasing distance; a 4-tuple built from pairs (i, j)
    # has defect at most min(d_i, d_j) / 2, which gives the stopping rule
    best = 0.0
    w0 = -1
    w1 = -1
    w2 = -1
    w3 = -1
    count = 0
    m = order.shape[0]
    for ii in range(m):
        pi = order[ii]
        x = a[pi]
        y = b[pi]
        dxy = D[x, y]
        if dxy <= 2.0 * best + 1e-12:
            break
        for jj in range(ii):
            pj = order[jj]
            z = a[pj]
            w = b[pj]
            count += 1
            s1 = dxy + D[z, w]
            s2 = D[x, z] + D[y, w]
            s3 = D[x, w] + D[y, z]
            other = s2 if s2 > s3 else s3
            h = 0.5 * (s1 - other)
            if h > best + 1e-12:
                best = h
                w0 = x
                w1 = y
                w2 = z
                w3 = w
    return best, np.array([w0, w1, w2, w3]), count


def far_apart_mask(D, edge_u, edge_v, edge_len, tol=1e-12):
    """``mask[x, y]`` is False when some neighbour x' of x has d(x', y) = d(x, y) + |xx'|.

    Sliding x to such a neighbour raises the largest pair sum of any 4-tuple
    with top pairing (x, y), (z, w) by exactly |xx'| and every other sum by at
    most that much, so the defect does not drop.  Some maximizing 4-tuple
    therefore pairs only vertices that are far apart in both directions.
    """
    ext = np.zeros(D.shape, dtype=bool)
    for u, v, w in zip(edge_u.tolist(), edge_v.tolist(), edge_len.tolist()):
        ext[u] |= D[v] >= D[u] + w - tol
        ext[v] |= D[u] >= D[v] + w - tol
    return ~(ext | ext.T)


def four_point_exhaustive(D, far=None):
    """Exact maximum four-point defect over all 4-tuples of the distance table.

    ``far`` (see :func:`far_apart_mask`) restricts the pairs searched without
    changing the result.
    """
    a, b = _pair_list(D)
    if far is not None:
        keep = far[a, b]
        a, b = a[keep], b[keep]
    d = D[a, b]
    order = np.argsort(-d, kind="stable")
    best, w, count = _exhaustive(D, a, b, order)
    if w[0] < 0:
        w = np.zeros(0, dtype=np.int64)
    return best, w, count


@njit(cache=True)
def four_point_sampled(D, quads):
    best = 0.0
    arg = -1
    for k in range(quads.shape[0]):
        x = quads[k, 0]
        y = quads[k, 1]
        z = quads[k, 2]
        w = quads[k, 3]
        s1 = D[x, y] + D[z, w]
        s2 = D[x, z] + D[y, w]
        s3 = D[x, w] + D[y, z]
        # largest minus second largest
        if s1 >= s2 and s1 >= s3:
            top, sec = s1, (s2 if s2 > s3 else s3)
        elif s2 >= s3:
            top, sec = s2, (s1 if s1 > s3 else s3)
        else:
            top, sec = s3, (s1 if s1 > s2 else s2)
        h = 0.5 * (top - sec)
        if h > best:
            best = h
            arg = k
    return best, arg
