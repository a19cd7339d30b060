"""Generators for the concrete spaces used by the experiments.

Trees and free-group Cayley balls are combinatorial (unit edges).  The
hyperbolic plane is discretized as a deterministic polar net in the Poincare
disk; the truncated model removes a family of shrunk Ford horoballs, read in
the upper half-plane through the Cayley transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ctladder.metric_graph import (ContractError, GraphInputError, MetricGraph,
                                   PathInGraph, TOL)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class GenerationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# trees and free groups

def build_tree(valence: int, radius: int) -> MetricGraph:
    """Regular rooted tree: every non-leaf vertex (root included) has degree ``valence``."""
    if valence < 2:
        raise GraphInputError("valence must be at least 2")
    if radius < 0:
        raise GraphInputError("radius must be non-negative")
    addresses = [()]
    edges = []
    frontier = [0]
    for depth in range(radius):
        nxt = []
        for parent in frontier:
            addr = addresses[parent]
            kids = valence if depth == 0 else valence - 1
            for i in range(kids):
                addresses.append(addr + (i,))
                child = len(addresses) - 1
                edges.append((parent, child))
                nxt.append(child)
        frontier = nxt
    tags = [{"address": a} for a in addresses]
    return MetricGraph(len(addresses), edges, tags=tags,
                       meta={"generator": "tree", "valence": valence, "radius": radius})


def letters(rank: int) -> list[str]:
    out = []
    for i in range(rank):
        c = chr(ord("a") + i)
        out.extend([c, c.upper()])
    return out


def inverse_word(w: str) -> str:
    return w[::-1].swapcase()


def reduce_word(w: str) -> str:
    out = []
    for ch in w:
        if out and out[-1] == ch.swapcase():
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def build_cayley_ball(rank: int, radius: int) -> MetricGraph:
    """Ball in the Cayley graph of the free group on ``rank`` generators.

    Vertices are reduced words (``A`` is the inverse of ``a``), enumerated
    by length then generator order; edges are right multiplication by a
    generator.
    """
    if rank < 1 or radius < 0:
        raise GraphInputError("rank must be >= 1 and radius >= 0")
    gens = letters(rank)
    words = [""]
    layer = [""]
    for _ in range(radius):
        nxt = []
        for w in layer:
            for g in gens:
                if w and w[-1] == g.swapcase():
                    continue
                nxt.append(w + g)
        words.extend(nxt)
        layer = nxt
    index = {w: i for i, w in enumerate(words)}
    edges = [(index[w[:-1]], i) for i, w in enumerate(words) if w]
    tags = [{"word": w} for w in words]
    return MetricGraph(len(words), edges, tags=tags,
                       meta={"generator": "cayley_ball", "rank": rank, "radius": radius})


def word_index(g: MetricGraph) -> dict[str, int]:
    return {t["word"]: i for i, t in enumerate(g.tags)}


# ---------------------------------------------------------------------------
# hyperbolic plane

def disk_distance(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Hyperbolic distance between Poincare-disk points given as complex arrays."""
    num = 2.0 * np.abs(z - w) ** 2
    den = (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)
    return np.arccosh(1.0 + num / den)


def disk_to_halfplane(z):
    return 1j * (1 + z) / (1 - z)


def halfplane_to_disk(w):
    return (w - 1j) / (w + 1j)


def _ring_points(radius: float, mesh: float):
    k_max = int(math.floor(radius / mesh + 1e-9))
    pts, ring = [0j], [0]
    for k in range(1, k_max + 1):
        r = k * mesh
        count = max(1, math.ceil(2 * math.pi * math.sinh(r) / mesh))
        shift = (k * GOLDEN) % 1.0
        theta = 2 * math.pi * (np.arange(count) + shift) / count
        rho = math.tanh(r / 2)
        pts.extend((rho * np.exp(1j * theta)).tolist())
        ring.extend([k] * count)
    return np.asarray(pts), np.asarray(ring)


def build_h2_net(radius: float, mesh: float) -> MetricGraph:
    """Polar net of the hyperbolic disk of the given radius.

    Rings are spaced by ``mesh`` with about ``2 pi sinh(r) / mesh`` points per
    ring; net points within hyperbolic distance ``2 * mesh`` are joined by an
    edge carrying the true hyperbolic length.  Coordinates are Poincare-disk
    points ``(x, y)``.
    """
    if radius <= 0 or mesh <= 0:
        raise GraphInputError("radius and mesh must be positive")
    z, ring = _ring_points(radius, mesh)
    reach = 2.0 * mesh
    edges = []
    starts = np.searchsorted(ring, np.arange(ring.max() + 2))
    for k in range(ring.max() + 1):
        ik = np.arange(starts[k], starts[k + 1])
        for k2 in range(k, min(k + 3, ring.max() + 1)):
            ik2 = np.arange(starts[k2], starts[k2 + 1])
            d = disk_distance(z[ik][:, None], z[ik2][None, :])
            a, b = np.nonzero(d <= reach + 1e-12)
            for i, j, length in zip(ik[a].tolist(), ik2[b].tolist(), d[a, b].tolist()):
                if i < j:
                    edges.append((i, j, length))
    coords = np.column_stack([z.real, z.imag])
    meta = {"generator": "h2_net", "radius": radius, "mesh": mesh, "edge_factor": 2.0}
    try:
        g = MetricGraph(len(z), edges, coords=coords, meta=meta)
    except GraphInputError as exc:
        raise GenerationError(f"h2 net (radius={radius}, mesh={mesh}) is disconnected: {exc}") from exc
    g.tags = [{"ring": int(r)} for r in ring]
    return g


def complex_coords(g: MetricGraph) -> np.ndarray:
    return g.coords[:, 0] + 1j * g.coords[:, 1]


def nearest_net_vertex(z_net: np.ndarray, targets: np.ndarray, candidates=None, k: int = 8) -> np.ndarray:
    """Index of the net vertex nearest (hyperbolically) to each target point.

    Euclidean nearest neighbours in the disk are refined by the exact
    hyperbolic distance; ties go to the smaller vertex id.
    """
    cand = np.arange(len(z_net)) if candidates is None else np.asarray(candidates)
    pts = np.column_stack([z_net[cand].real, z_net[cand].imag])
    tree = cKDTree(pts)
    kk = min(k, len(cand))
    _, idx = tree.query(np.column_stack([targets.real, targets.imag]), k=kk)
    idx = idx.reshape(len(targets), kk)
    d = disk_distance(z_net[cand][idx], targets[:, None])
    # order candidates by id so argmin ties resolve to the smallest id
    ids = cand[idx]
    order = np.argsort(ids, axis=1, kind="stable")
    ids = np.take_along_axis(ids, order, axis=1)
    d = np.take_along_axis(d, order, axis=1)
    m = d.min(axis=1, keepdims=True)
    pick = np.argmax(d <= m + 1e-12, axis=1)
    return ids[np.arange(len(targets)), pick]


def distortion_report(g: MetricGraph, n_pairs: int = 200, min_distance: float = 1.0,
                      seed: int = 0) -> dict:
    """Compare path distance with true hyperbolic distance on a fixed pair sample.

    Sample points are drawn in the disk from ``seed`` (independent of the net)
    and snapped to their nearest net vertex, so runs at different meshes see
    the same geometric pairs.
    """
    radius = g.meta["radius"]
    rng = np.random.default_rng(seed)
    z = complex_coords(g)
    ratios = []
    tries = 0
    while len(ratios) < n_pairs and tries < 50 * n_pairs:
        tries += 1
        r = rng.uniform(0, radius, size=2)
        th = rng.uniform(0, 2 * math.pi, size=2)
        pts = np.tanh(r / 2) * np.exp(1j * th)
        u, v = nearest_net_vertex(z, pts)
        true = float(disk_distance(z[u], z[v]))
        if true < min_distance:
            continue
        path = g.distance(int(u), int(v))
        ratios.append(path / true)
    top = float(max(ratios)) if ratios else 1.0
    # path <= (1 + eps) * D <= (1 + eps) * D + eps on the sample
    return {"pairs": len(ratios), "max_ratio": top, "eps_mesh": top - 1.0,
            "min_ratio": float(min(ratios)) if ratios else 1.0}


# ---------------------------------------------------------------------------
# horoballs

@dataclass
class Horoball:
    id: int
    base: dict
    interior: frozenset
    horosphere: frozenset
    depth: dict = field(repr=False)

    @property
    def members(self) -> frozenset:
        return self.interior | self.horosphere


@dataclass
class HoroballSystem:
    """Disjoint horoballs on a host graph (vertex ids of the full graph).

    ``owner[v]`` is the horoball containing ``v`` in its closure (interior or
    horosphere) or -1; ``depth[v]`` is positive exactly on interiors.
    """

    horoballs: list
    n: int

    def __post_init__(self):
        self.owner = -np.ones(self.n, dtype=np.int64)
        self.depth = np.zeros(self.n)
        self.interior_mask = np.zeros(self.n, dtype=bool)
        for pos, h in enumerate(self.horoballs):
            if h.id != pos:
                raise GraphInputError("horoball ids must be 0..k-1 in order")
            for v in h.members:
                if self.owner[v] >= 0:
                    raise GraphInputError(f"vertex {v} belongs to horoballs {self.owner[v]} and {h.id}")
                self.owner[v] = h.id
            for v in h.interior:
                self.interior_mask[v] = True
                self.depth[v] = h.depth[v]
        if np.any(self.depth[self.interior_mask] <= 0):
            raise GraphInputError("interior vertices must have positive depth")

    def __len__(self):
        return len(self.horoballs)

    def __getitem__(self, h: int) -> Horoball:
        return self.horoballs[h]


class TruncatedSpace:
    """A full graph, a horoball system on it, and the graph with interiors removed.

    The truncated graph is the induced subgraph on non-interior vertices,
    numbered in increasing order of their full ids.
    """

    def __init__(self, full: MetricGraph, system: HoroballSystem, meta: dict | None = None):
        if system.n != full.n:
            raise GraphInputError("horoball system does not match host graph")
        self.full = full
        self.system = system
        keep = np.flatnonzero(~system.interior_mask)
        try:
            self.truncated, self.to_full = full.induced_subgraph(keep)
        except GraphInputError as exc:
            raise GenerationError(f"truncation disconnects the graph ({exc}); use a finer mesh") from exc
        self.to_trunc = -np.ones(full.n, dtype=np.int64)
        self.to_trunc[self.to_full] = np.arange(len(self.to_full))
        self.owner_t = system.owner[self.to_full]
        self.meta = dict(meta or {})
        self._horo_graphs = {}
        self._electric = None

    def horosphere_t(self, h: int) -> np.ndarray:
        return np.sort(self.to_trunc[np.fromiter(self.system[h].horosphere, dtype=np.int64)])

    def horosphere_graph(self, h: int):
        if h not in self._horo_graphs:
            verts = self.horosphere_t(h)
            self._horo_graphs[h] = self.truncated.induced_subgraph(verts, check_connected=False)
        return self._horo_graphs[h]

    def full_path(self, path: PathInGraph) -> PathInGraph:
        """Re-express a truncated-graph path with full-graph vertex ids."""
        return self.full.make_path([int(self.to_full[v]) for v in path.vertex_seq])

    def trunc_path(self, path: PathInGraph) -> PathInGraph:
        ids = [int(self.to_trunc[v]) for v in path.vertex_seq]
        if min(ids) < 0:
            raise ContractError("path enters a horoball interior")
        return self.truncated.make_path(ids)


def _ford_candidates(max_den: int, radius: float, shrink: float):
    """Shrunk Ford disks meeting the window disk around i (Euclidean test in the half-plane)."""
    wc, wr = math.cosh(radius), math.sinh(radius)
    out = []
    if max_den >= 1:
        out.append({"kind": "ford", "p": 1, "q": 0, "height": 1.0 / shrink})
    for q in range(1, max_den + 1):
        diam = shrink / q ** 2
        lo = math.floor((-wr - 1) * q)
        hi = math.ceil((wr + 1) * q)
        for p in range(lo, hi + 1):
            if math.gcd(p, q) != 1:
                continue
            x0 = p / q
            if math.hypot(x0, wc - diam / 2) <= wr + diam / 2:
                out.append({"kind": "ford", "p": p, "q": q, "diameter": diam})
    return out


def busemann_depth(base: dict, w: np.ndarray) -> np.ndarray:
    """Signed distance into a horoball (positive inside) for half-plane points ``w``."""
    if base["q"] == 0:
        return np.log(w.imag / base["height"])
    x0 = base["p"] / base["q"]
    return np.log(base["diameter"] * w.imag / np.abs(w - x0) ** 2)


def layered_system(full: MetricGraph, candidates, where: str = "",
                   drop_disconnected: bool = True):
    """Horoball system from interior vertex sets.

    ``candidates`` holds ``(base, interior_ids, interior_depths)``.  The
    horosphere of each horoball is the set of non-interior vertices adjacent
    to its interior.  Candidates whose horosphere is empty or does not induce
    a connected subgraph are dropped (repeatedly, since dropping changes the
    layers) when ``drop_disconnected`` is set, and rejected otherwise.
    Returns the system and the number of dropped candidates.
    """
    n = full.n
    eu, ev = full.edge_u, full.edge_v
    active = list(range(len(candidates)))
    dropped = 0
    while True:
        owner = -np.ones(n, dtype=np.int64)
        for k in active:
            owner[candidates[k][1]] = k
        cross = owner[eu] != owner[ev]
        both = cross & (owner[eu] >= 0) & (owner[ev] >= 0)
        if np.any(both):
            i = int(np.flatnonzero(both)[0])
            raise GenerationError(
                f"edge ({eu[i]}, {ev[i]}) joins two horoball interiors ({where}); "
                "use a finer mesh or a smaller shrink factor")
        layer: dict[int, set] = {}
        for a, b in ((eu, ev), (ev, eu)):
            sel = cross & (owner[a] < 0) & (owner[b] >= 0)
            for v, k in zip(a[sel].tolist(), owner[b[sel]].tolist()):
                layer.setdefault(v, set()).add(k)
        clash = [v for v, ks in layer.items() if len(ks) > 1]
        if clash:
            raise GenerationError(
                f"vertex {clash[0]} touches two horoballs ({where}); "
                "use a finer mesh or a smaller shrink factor")
        spheres: dict[int, list] = {}
        for v, ks in layer.items():
            spheres.setdefault(next(iter(ks)), []).append(v)
        bad = []
        for k in active:
            sphere = sorted(spheres.get(k, []))
            ok = bool(sphere)
            if ok and len(sphere) > 1:
                sub, _ = full.induced_subgraph(sphere, check_connected=False)
                ok = connected_components(sub.csr, directed=False)[0] == 1
            if not ok:
                bad.append(k)
        if not bad:
            break
        if not drop_disconnected:
            raise GenerationError(f"horosphere of horoball candidate {bad[0]} is not connected ({where})")
        dropped += len(bad)
        active = [k for k in active if k not in set(bad)]
    horoballs = []
    for k in active:
        base, inside, dep = candidates[k]
        sphere = sorted(spheres[k])
        depth = {int(v): float(d) for v, d in zip(np.asarray(inside).tolist(), np.asarray(dep).tolist())}
        depth.update({int(v): 0.0 for v in sphere})
        horoballs.append(Horoball(len(horoballs), base, frozenset(np.asarray(inside).tolist()),
                                  frozenset(sphere), depth))
    return HoroballSystem(horoballs, n), dropped


def build_truncated_h2(radius: float, mesh: float, cusp_density: int = 8,
                       shrink: float = 0.8) -> TruncatedSpace:
    """Net of the hyperbolic disk of ``radius`` around i, minus shrunk Ford horoballs.

    ``cusp_density`` is the largest denominator q of the Ford points p/q
    considered (0 selects no horoballs; q = 0 stands for the horoball at
    infinity, included whenever ``cusp_density >= 1``).  Each Ford disk is
    scaled by ``shrink`` about its tangency point.  A candidate is kept when
    it contains a net vertex and its horosphere layer (non-interior vertices
    adjacent to the interior) induces a connected subgraph.
    """
    if not 0 < shrink <= 1:
        raise GraphInputError("shrink must lie in (0, 1]")
    full = build_h2_net(radius, mesh)
    full.meta.update({"generator": "truncated_h2", "cusp_density": cusp_density, "shrink": shrink})
    z = complex_coords(full)
    w = disk_to_halfplane(z)
    candidates = []
    for base in _ford_candidates(cusp_density, radius, shrink):
        b = busemann_depth(base, w)
        inside = np.flatnonzero(b > 1e-9)
        if len(inside):
            candidates.append((base, inside, b[inside]))
    where = f"radius={radius}, mesh={mesh}, shrink={shrink}"
    system, dropped = layered_system(full, candidates, where=where, drop_disconnected=True)
    ts = TruncatedSpace(full, system, meta={
        "generator": "truncated_h2", "radius": radius, "mesh": mesh,
        "cusp_density": cusp_density, "shrink": shrink, "dropped_horoballs": dropped})
    return ts


def horoball_index(ts: TruncatedSpace) -> dict:
    """Map (p, q) Ford labels to horoball ids."""
    return {(h.base["p"], h.base["q"]): h.id for h in ts.system.horoballs if "q" in h.base}


def horospherical_path(ts: TruncatedSpace, h: int, u: int, v: int) -> PathInGraph:
    """Shortest path between horosphere vertices u, v (truncated ids) inside the horosphere."""
    sub, verts = ts.horosphere_graph(h)
    pos = {int(x): i for i, x in enumerate(verts.tolist())}
    if u not in pos or v not in pos:
        raise ContractError(f"vertex {u if u not in pos else v} is not on the horosphere of horoball {h}")
    if u == v:
        return PathInGraph((u,), 0.0, True)
    if not np.isfinite(sub.row(pos[v])[pos[u]]):
        raise ContractError(f"horosphere of horoball {h} does not connect {u} and {v}")
    p = sub.shortest_path(pos[u], pos[v])
    seq = tuple(int(verts[i]) for i in p.vertex_seq)
    geo = abs(p.length - ts.truncated.distance(u, v)) <= TOL * max(1.0, p.length)
    return PathInGraph(seq, p.length, geo)
