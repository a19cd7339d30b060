"""Quasi-isometry certificates, quasigeodesic constants and projection checks.

Constants are measured, never assumed: every certificate reports the pair
that forces it (its witness) so a number in a report can be traced back to
two vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ctladder.metric_graph import (TOL, ContractError, DeltaEstimate, GraphInputError,
                                   MetricGraph, PathInGraph)

K_TOL = 1e-7
GRID_EPS = 0.5
K_THRESHOLD = 3.0


@dataclass
class QIMap:
    """Vertex map with measured quasi-isometry constants.

    ``K`` is the least K >= 1 for which the map is a (K, K)-quasi-isometric
    embedding on the checked pairs, and ``eps`` the least additive constant
    that goes with that K.  ``cobound`` is the largest distance from a target
    vertex to the image.
    """

    source: MetricGraph
    target: MetricGraph
    map: np.ndarray
    K: float
    eps: float
    cobound: float
    certified: bool
    pairs_checked: int = 0
    witness: tuple = ()
    meta: dict = field(default_factory=dict)

    def __call__(self, v):
        return self.map[v]


def _reduce(ds, dt, a, b):
    """Keep only the convex-hull points of {(ds, dt)}: both constraint families are linear."""
    if len(ds) <= 8:
        return ds, dt, a, b
    pts = np.column_stack([ds, dt])
    try:
        keep = ConvexHull(pts).vertices
    except QhullError:
        # degenerate (collinear or repeated) point set: its extremes span it
        keep = np.unique([np.argmin(ds), np.argmax(ds), np.argmin(dt), np.argmax(dt),
                          np.argmin(ds - dt), np.argmax(ds - dt)])
    return ds[keep], dt[keep], a[keep], b[keep]


def _pair_arrays(src: MetricGraph, tgt: MetricGraph, f: np.ndarray, policy, rng, block=256):
    n = src.n
    if policy == "exhaustive":
        parts = []
        full = src.n * src.n <= src.cache_budget and tgt.n * tgt.n <= tgt.cache_budget
        cols = np.arange(n)
        for s0 in range(0, n, block):
            idx = np.arange(s0, min(n, s0 + block))
            if full:
                Ds = src.distance_matrix()[idx]
                Dt = tgt.distance_matrix()[f[idx]][:, f]
            else:
                Ds = src._compute_rows(idx)
                Dt = tgt._compute_rows(f[idx])[:, f]
            mask = cols[None, :] > idx[:, None]
            ii, jj = np.nonzero(mask)
            parts.append(_reduce(Ds[ii, jj], Dt[ii, jj], idx[ii], jj))
        ds, dt, a, b = (np.concatenate(x) for x in zip(*parts))
        ds, dt, a, b = _reduce(ds, dt, a, b)
        return (a, b, ds, dt), n * (n - 1) // 2
    kind, m = policy
    if kind != "sampled" or m <= 0:
        raise GraphInputError(f"unknown certification policy {policy!r}")
    a = rng.integers(0, n, size=m)
    b = rng.integers(0, n, size=m)
    keep = a != b
    a, b = a[keep], b[keep]
    ds = np.array([src.distance(int(u), int(v)) for u, v in zip(a.tolist(), b.tolist())])
    dt = np.array([tgt.distance(int(f[u]), int(f[v])) for u, v in zip(a.tolist(), b.tolist())])
    return (a, b, ds, dt), len(a)


def _eps_needed(K, ds, dt):
    if len(ds) == 0:
        return 0.0, -1
    lower = ds / K - dt
    upper = dt - K * ds
    viol = np.maximum(lower, upper)
    k = int(np.argmax(viol))
    return max(0.0, float(viol[k])), k


def _min_square_K(ds, dt):
    """Least K >= 1 with eps_needed(K) <= K, by bisection (eps_needed - K is decreasing)."""
    if _eps_needed(1.0, ds, dt)[0] <= 1.0:
        return 1.0
    lo, hi = 1.0, 2.0
    while _eps_needed(hi, ds, dt)[0] > hi:
        lo, hi = hi, hi * 2
    while hi - lo > K_TOL:
        mid = 0.5 * (lo + hi)
        if _eps_needed(mid, ds, dt)[0] <= mid:
            hi = mid
        else:
            lo = mid
    return hi


def certify_qi(f, src: MetricGraph, tgt: MetricGraph, policy="exhaustive",
               rng: np.random.Generator | None = None) -> QIMap:
    """Measure (K, eps) and the cobound of a vertex map.

    ``policy`` is ``"exhaustive"`` (all vertex pairs; the result is
    certified) or ``("sampled", m)``.
    """
    f = np.asarray(f, dtype=np.int64)
    if f.shape != (src.n,):
        raise GraphInputError("map must assign one target vertex to every source vertex")
    if f.size and (f.min() < 0 or f.max() >= tgt.n):
        bad = int(np.flatnonzero((f < 0) | (f >= tgt.n))[0])
        raise GraphInputError(f"vertex {bad} is mapped outside the target ({f[bad]})")
    rng = rng if rng is not None else np.random.default_rng(0)
    (a, b, ds, dt), checked = _pair_arrays(src, tgt, f, policy, rng)
    K = _min_square_K(ds, dt)
    eps, k = _eps_needed(K, ds, dt)
    witness = ()
    if K > 1.0:
        # a pair that breaks (K', K') just below the reported K
        Kb = max(1.0, K - 10 * K_TOL)
        _, kb = _eps_needed(Kb, ds, dt)
        witness = (int(a[kb]), int(b[kb]))
    cobound = float(np.max(tgt.distance_to_set(np.unique(f))))
    return QIMap(src, tgt, f, float(K), float(eps), cobound, policy == "exhaustive",
                 checked, witness)


def qi_inverse(f: QIMap, policy="exhaustive") -> QIMap:
    """Coarse inverse: each target vertex goes to a preimage of its nearest image point.

    Among equidistant image points the smallest id wins (for large images the
    shortest-path kernel's own deterministic choice is kept), and among
    preimages of one point the smallest source id.
    """
    if not math.isfinite(f.cobound):
        raise ContractError("coarse inverse needs a finite cobound")
    if not f.certified:
        raise ContractError("coarse inverse needs a certified map")
    g = coarse_inverse_map(f.map, f.target)
    inv = certify_qi(g, f.target, f.source, policy)
    back = g[f.map]
    moved = np.flatnonzero(back != np.arange(f.source.n))
    disp = np.array([f.source.distance(int(back[y]), int(y)) for y in moved.tolist()])
    inv.meta["roundtrip"] = float(disp.max()) if disp.size else 0.0
    inv.meta["roundtrip_witness"] = int(moved[np.argmax(disp)]) if disp.size else -1
    return inv


def coarse_inverse_map(f_map: np.ndarray, target: MetricGraph) -> np.ndarray:
    """Per target vertex, the smallest preimage of its nearest image point."""
    image = np.unique(f_map)
    first = {}
    for y, x in enumerate(f_map.tolist()):
        first.setdefault(x, y)
    _, nearest = target.distance_to_set(image, return_nearest=True)
    return np.array([first[int(x)] for x in nearest], dtype=np.int64)


# ---------------------------------------------------------------------------
# quasigeodesics

@dataclass
class QuasigeodesicCert:
    path: PathInGraph
    K: float
    eps: float
    method: str = "eps0"
    witness: tuple = ()


def _grid_ceil(x, step):
    return step * math.ceil(x / step - 1e-9)


def qg_constants(D: np.ndarray, t: np.ndarray):
    """(K, eps, method, witness) for points with parameters ``t`` and distance table ``D``.

    First the least K with eps = 0.  When that exceeds the threshold (or is
    infinite because the path revisits a point), the lexicographically least
    (K, eps) on the grid K in 1 + 0.1 N, eps in 0.5 N.  With K first, that is
    K = 1 and the least grid eps covering every parameter gap.
    """
    m = len(t)
    if m < 2:
        return 1.0, 0.0, "eps0", ()
    iu, ju = np.triu_indices(m, k=1)
    dt = t[ju] - t[iu]
    d = D[iu, ju]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > TOL, dt / np.maximum(d, TOL), np.where(dt > TOL, np.inf, 1.0))
        # the upper inequality d <= K dt: parameters follow the path so it holds with K = 1
        up = np.where(dt > TOL, d / np.maximum(dt, TOL), np.where(d > TOL, np.inf, 1.0))
    k = int(np.argmax(ratio))
    K0 = max(1.0, float(ratio[k]), float(up.max()))
    if K0 <= K_THRESHOLD:
        return K0, 0.0, "eps0", (int(iu[k]), int(ju[k]))
    # every K on the grid admits some eps, so the least pair has K = 1
    need = np.maximum(dt - d, d - dt)
    j = int(np.argmax(need))
    return 1.0, _grid_ceil(max(0.0, float(need[j])), GRID_EPS), "grid", (int(iu[j]), int(ju[j]))


def measure_quasigeodesic(g: MetricGraph, path: PathInGraph) -> QuasigeodesicCert:
    seq = list(path.vertex_seq)
    g.make_path(seq)
    steps = [g.edge_length(a, b) for a, b in zip(seq, seq[1:])]
    t = np.concatenate([[0.0], np.cumsum(steps)])
    D = g.rows(seq)[:, seq]
    K, eps, method, w = qg_constants(D, t)
    witness = tuple(seq[i] for i in w)
    return QuasigeodesicCert(path, K, eps, method, witness)


def measure_dotted(g: MetricGraph, points) -> QuasigeodesicCert:
    """Constants of a dotted path: points parameterized by cumulative gap distance.

    Repeated consecutive points are merged first.
    """
    pts = [int(points[0])]
    for p in points[1:]:
        if int(p) != pts[-1]:
            pts.append(int(p))
    D = g.rows(pts)[:, pts]
    gaps = np.array([D[i, i + 1] for i in range(len(pts) - 1)])
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    K, eps, method, w = qg_constants(D, t)
    length = float(t[-1])
    return QuasigeodesicCert(PathInGraph(tuple(pts), length, False), K, eps, method,
                             tuple(pts[i] for i in w))


# ---------------------------------------------------------------------------
# lemma checks

def _close_pairs(g: MetricGraph, radius: float = 1.0):
    if g.n * g.n <= g.cache_budget:
        D = g.distance_matrix()
        a, b = np.nonzero(np.triu(D <= radius + TOL, k=1))
        return a, b, D[a, b]
    keep = g.edge_len <= radius + TOL
    return g.edge_u[keep], g.edge_v[keep], g.edge_len[keep]


def check_projection_lipschitz(g: MetricGraph, mu: PathInGraph, delta: DeltaEstimate,
                               tol: float = 1e-6) -> dict:
    """Largest projection displacement over vertex pairs at distance <= 1."""
    pos = g.project_all(mu)
    proj = np.asarray(mu.vertex_seq)[pos]
    a, b, _ = _close_pairs(g)
    bound = 4 * delta.value + 1
    if len(a) == 0:
        return {"max_displacement": 0.0, "bound": bound, "pass": True, "witness": (), "pairs": 0}
    # distances between projections are distances along the geodesic mu
    t = np.concatenate([[0.0], np.cumsum([g.edge_length(x, y)
                                          for x, y in zip(mu.vertex_seq, mu.vertex_seq[1:])])])
    disp = np.abs(t[pos[a]] - t[pos[b]])
    k = int(np.argmax(disp))
    best = float(disp[k])
    return {"max_displacement": best, "bound": bound, "pass": best <= bound + tol,
            "witness": (int(a[k]), int(b[k]), int(proj[a[k]]), int(proj[b[k]])),
            "pairs": int(len(a))}


def check_tripod_concat(g: MetricGraph, x: int, mu: PathInGraph) -> QuasigeodesicCert:
    """Worst quasigeodesic constant of [x, proj(x)] followed by [proj(x), z], z an endpoint of mu."""
    y = g.nearest_point_projection(x, mu)
    worst = None
    for z in (mu.start, mu.end):
        path = g.concat(g.shortest_path(x, y), g.shortest_path(y, z))
        cert = measure_quasigeodesic(g, path)
        if worst is None or (cert.K, cert.eps) > (worst.K, worst.eps):
            worst = cert
    return worst


def _locate(seq, vertices):
    out, start = [], 0
    for v in vertices:
        try:
            i = seq.index(v, start)
        except ValueError:
            raise ContractError(f"vertices {tuple(vertices)} do not appear in order on the path") from None
        out.append(i)
        start = i
    return out


def check_order_gromov(g: MetricGraph, cert: QuasigeodesicCert, p: int, q: int, r: int) -> float:
    """(p, r)_q for three vertices met in this order along the certified path."""
    _locate(list(cert.path.vertex_seq), (p, q, r))
    return g.gromov_product(p, r, q)


def check_npp_qi_commute(phi: QIMap, mu1: PathInGraph, p: int) -> float:
    """d(r, phi(q)) with q = proj(p, mu1) and r = proj(phi(p), mu2), mu2 = [phi(a), phi(b)]."""
    src, tgt = phi.source, phi.target
    q = src.nearest_point_projection(p, mu1)
    mu2 = tgt.shortest_path(int(phi.map[mu1.start]), int(phi.map[mu1.end]))
    r = tgt.nearest_point_projection(int(phi.map[p]), mu2)
    return tgt.distance(r, int(phi.map[q]))


def npp_commute_sweep(phi: QIMap, pairs) -> dict:
    """Largest :func:`check_npp_qi_commute` value over every source vertex and every geodesic in ``pairs``."""
    src, tgt = phi.source, phi.target
    f = np.asarray(phi.map)
    best, witness = 0.0, ()
    for a, b in pairs:
        mu1 = src.shortest_path(int(a), int(b))
        q = np.asarray(mu1.vertex_seq)[src.project_all(mu1)]
        mu2 = tgt.shortest_path(int(f[a]), int(f[b]))
        seq2 = np.asarray(mu2.vertex_seq)
        pos2 = tgt.project_all(mu2)
        # row k of D2 is mu2's k-th vertex, so positions index it directly
        D2 = tgt.rows(seq2)
        disc = D2[pos2[f], f[q]]
        k = int(np.argmax(disc))
        if disc[k] > best + TOL:
            best, witness = float(disc[k]), (int(a), int(b), k)
    return {"max": best, "witness": witness, "geodesics": len(pairs), "points": src.n}
