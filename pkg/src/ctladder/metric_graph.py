"""Finite weighted graphs carrying their path metric.

Every space in the package (fibers, total spaces, truncated models) is a
:class:`MetricGraph`.  Distances come from scipy's shortest-path kernels and
are cached per source row; geodesics and projections use one deterministic
tie-break rule so every downstream constant is reproducible.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from ctladder._kernels import far_apart_mask, four_point_exhaustive, four_point_sampled

TOL = 1e-9


class GraphInputError(ValueError):
    """Invalid vertex ids, edge data or query parameters."""


class ContractError(RuntimeError):
    """A documented precondition of an operation was violated."""


@dataclass(frozen=True)
class PathInGraph:
    """Vertex sequence in a graph with its length.

    ``geodesic`` is only set by constructors that know the path realizes the
    distance between its endpoints.
    """

    vertex_seq: tuple[int, ...]
    length: float
    geodesic: bool = False

    @property
    def start(self) -> int:
        return self.vertex_seq[0]

    @property
    def end(self) -> int:
        return self.vertex_seq[-1]

    def __len__(self) -> int:
        return len(self.vertex_seq)

    def __iter__(self):
        return iter(self.vertex_seq)


@dataclass(frozen=True)
class DeltaEstimate:
    value: float
    method: str
    exhaustive: bool
    sample_size: int
    witness: tuple[int, ...] = ()


class MetricGraph:
    """Connected graph with positive edge lengths and its path metric.

    Parameters
    ----------
    n : int
        Number of vertices; ids are ``0 .. n-1``.
    edges : iterable of (u, v) or (u, v, length)
        Undirected edges.  Length defaults to 1.
    coords : (n, 2) array, optional
        Planar coordinates for geometric models.
    tags : list of dict, optional
        Per-vertex labels (word labels, tree addresses, ...).
    cache_budget : int
        Maximum number of cached distance entries.  When ``n*n`` fits, the
        whole table is computed in one call.
    """

    def __init__(self, n: int, edges: Iterable, coords=None, tags=None,
                 meta: dict | None = None, cache_budget: int = 20_000_000,
                 check_connected: bool = True):
        if n < 1:
            raise GraphInputError("graph needs at least one vertex")
        us, vs, ls = [], [], []
        seen = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            length = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= u < n and 0 <= v < n):
                raise GraphInputError(f"edge ({u}, {v}) references a vertex outside [0, {n})")
            if u == v:
                raise GraphInputError(f"self-loop at vertex {u}")
            if not length > 0 or not math.isfinite(length):
                raise GraphInputError(f"edge ({u}, {v}) has non-positive length {length}")
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            us.append(key[0])
            vs.append(key[1])
            ls.append(length)
        self.n = n
        self.edge_u = np.asarray(us, dtype=np.int64)
        self.edge_v = np.asarray(vs, dtype=np.int64)
        self.edge_len = np.asarray(ls, dtype=float)
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        data = np.concatenate([self.edge_len, self.edge_len])
        self.csr = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self.csr.sort_indices()
        self.unit = bool(len(ls) == 0 or np.allclose(self.edge_len, 1.0))
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.tags = tags if tags is not None else [{} for _ in range(n)]
        self.meta = dict(meta or {})
        self.cache_budget = cache_budget
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._full: np.ndarray | None = None
        if check_connected and n > 1:
            ncomp, labels = connected_components(self.csr, directed=False)
            if ncomp > 1:
                a = int(np.flatnonzero(labels == labels[0])[0])
                b = int(np.flatnonzero(labels != labels[0])[0])
                raise GraphInputError(
                    f"graph is disconnected ({ncomp} components); vertices {a} and {b} "
                    "lie in different components")

    # -- structure ----------------------------------------------------
    @property
    def num_edges(self) -> int:
        return len(self.edge_u)

    def edges(self):
        return zip(self.edge_u.tolist(), self.edge_v.tolist(), self.edge_len.tolist())

    def neighbors(self, u: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[u]:self.csr.indptr[u + 1]]

    def edge_length(self, u: int, v: int) -> float:
        start, stop = self.csr.indptr[u], self.csr.indptr[u + 1]
        idx = np.searchsorted(self.csr.indices[start:stop], v)
        if idx < stop - start and self.csr.indices[start + idx] == v:
            return float(self.csr.data[start + idx])
        raise GraphInputError(f"({u}, {v}) is not an edge")

    def has_edge(self, u: int, v: int) -> bool:
        start, stop = self.csr.indptr[u], self.csr.indptr[u + 1]
        idx = np.searchsorted(self.csr.indices[start:stop], v)
        return bool(idx < stop - start and self.csr.indices[start + idx] == v)

    def degree(self, u: int) -> int:
        return int(self.csr.indptr[u + 1] - self.csr.indptr[u])

    def check_vertex(self, *vs: int) -> None:
        for v in vs:
            if not (0 <= int(v) < self.n):
                raise GraphInputError(f"unknown vertex id {v} (graph has {self.n} vertices)")

    def induced_subgraph(self, vertices: Sequence[int], check_connected=True):
        """Subgraph on ``vertices`` (new ids follow the given order) and the old-id array."""
        vertices = np.asarray(vertices, dtype=np.int64)
        index = -np.ones(self.n, dtype=np.int64)
        index[vertices] = np.arange(len(vertices))
        keep = (index[self.edge_u] >= 0) & (index[self.edge_v] >= 0)
        edges = zip(index[self.edge_u[keep]].tolist(), index[self.edge_v[keep]].tolist(),
                    self.edge_len[keep].tolist())
        coords = None if self.coords is None else self.coords[vertices]
        tags = [self.tags[v] for v in vertices.tolist()]
        sub = MetricGraph(len(vertices), edges, coords=coords, tags=tags,
                          cache_budget=self.cache_budget, check_connected=check_connected)
        return sub, vertices

    # -- distances ----------------------------------------------------
    def _compute_rows(self, sources: Sequence[int]) -> np.ndarray:
        return dijkstra(self.csr, directed=False, indices=list(sources), unweighted=self.unit)

    def distance_matrix(self) -> np.ndarray:
        """Full all-pairs table (computed once, regardless of the cache budget)."""
        if self._full is None:
            self._full = dijkstra(self.csr, directed=False, unweighted=self.unit)
            self._full.setflags(write=False)
        return self._full

    def row(self, u: int) -> np.ndarray:
        """Distances from ``u`` to every vertex."""
        if self._full is not None:
            return self._full[u]
        if self.n * self.n <= self.cache_budget:
            return self.distance_matrix()[u]
        r = self._rows.get(u)
        if r is not None:
            self._rows.move_to_end(u)
            return r
        r = self._compute_rows([u])[0]
        r.setflags(write=False)
        self._rows[u] = r
        while len(self._rows) * self.n > self.cache_budget and len(self._rows) > 1:
            self._rows.popitem(last=False)
        return r

    def rows(self, sources: Sequence[int]) -> np.ndarray:
        sources = [int(s) for s in sources]
        if self._full is not None or self.n * self.n <= self.cache_budget:
            return self.distance_matrix()[sources]
        missing = [s for s in dict.fromkeys(sources) if s not in self._rows]
        if missing:
            block = self._compute_rows(missing)
            for s, r in zip(missing, block):
                r.setflags(write=False)
                self._rows[s] = r
        out = np.vstack([self._rows[s] for s in sources]) if sources else np.zeros((0, self.n))
        while len(self._rows) * self.n > self.cache_budget and len(self._rows) > 1:
            self._rows.popitem(last=False)
        return out

    def distance(self, u: int, v: int) -> float:
        self.check_vertex(u, v)
        if u == v:
            return 0.0
        return float(self.row(v)[u])

    def distance_to_set(self, sources: Iterable[int], return_nearest: bool = False):
        """Distance from every vertex to the nearest vertex of ``sources``.

        With ``return_nearest`` also returns, per vertex, the nearest source
        (smallest id among equidistant sources).
        """
        src = sorted({int(s) for s in sources})
        if not src:
            raise GraphInputError("empty source set")
        self.check_vertex(*src)
        if not return_nearest:
            return dijkstra(self.csr, directed=False, indices=src, min_only=True,
                            unweighted=self.unit)
        d, _, nearest = dijkstra(self.csr, directed=False, indices=src, min_only=True,
                                 return_predecessors=True, unweighted=self.unit)
        return d, _canonical_nearest(self, d, nearest, src)

    # -- geodesics ----------------------------------------------------
    def shortest_path(self, u: int, v: int) -> PathInGraph:
        """Lexicographically smallest geodesic vertex sequence from u to v."""
        self.check_vertex(u, v)
        if u == v:
            return PathInGraph((u,), 0.0, True)
        to_v = self.row(v)
        seq = [u]
        cur = u
        indptr, indices, data = self.csr.indptr, self.csr.indices, self.csr.data
        length = 0.0
        while cur != v:
            lo, hi = indptr[cur], indptr[cur + 1]
            nb = indices[lo:hi]
            w = data[lo:hi]
            ok = np.abs(to_v[nb] + w - to_v[cur]) <= TOL * max(1.0, to_v[cur])
            k = int(np.argmax(ok))  # neighbors are sorted, so first hit is smallest id
            cur = int(nb[k])
            length += float(w[k])
            seq.append(cur)
        return PathInGraph(tuple(seq), length, True)

    def path_length(self, seq: Sequence[int]) -> float:
        total = 0.0
        for a, b in zip(seq, seq[1:]):
            total += self.edge_length(a, b)
        return total

    def make_path(self, seq: Sequence[int]) -> PathInGraph:
        """Validate adjacency and build a path; geodesic flag set when it realizes the distance."""
        seq = tuple(int(s) for s in seq)
        if not seq:
            raise GraphInputError("empty path")
        self.check_vertex(*seq)
        length = self.path_length(seq)
        geo = abs(length - self.distance(seq[0], seq[-1])) <= TOL * max(1.0, length)
        return PathInGraph(seq, length, geo)

    def concat(self, *paths: PathInGraph) -> PathInGraph:
        seq = list(paths[0].vertex_seq)
        for p in paths[1:]:
            if p.start != seq[-1]:
                raise GraphInputError("paths do not share endpoints")
            seq.extend(p.vertex_seq[1:])
        return self.make_path(seq)

    def gromov_product(self, a: int, b: int, c: int) -> float:
        """(a, b)_c = (d(a,c) + d(b,c) - d(a,b)) / 2."""
        self.check_vertex(a, b, c)
        return 0.5 * (self.distance(a, c) + self.distance(b, c) - self.distance(a, b))

    def ball(self, center: int, radius: float) -> set[int]:
        self.check_vertex(center)
        if radius < 0:
            raise GraphInputError("radius must be non-negative")
        return set(np.flatnonzero(self.row(center) <= radius + TOL).tolist())

    def diameter(self) -> float:
        return float(self.distance_matrix().max())

    # -- projections --------------------------------------------------
    def project_all(self, mu: PathInGraph) -> np.ndarray:
        """Nearest-point projection of every vertex onto ``mu``.

        Returns the chosen position index along ``mu`` per vertex; ties go
        to the smallest position.
        """
        if not mu.geodesic:
            raise ContractError("projection target must be a geodesic path")
        d = self.rows(mu.vertex_seq)
        m = d.min(axis=0)
        return np.argmax(d <= m + TOL, axis=0)

    def nearest_point_projection(self, x: int, mu: PathInGraph) -> int:
        if not mu.geodesic:
            raise ContractError("projection target must be a geodesic path")
        self.check_vertex(x)
        d = self.row(x)[list(mu.vertex_seq)]
        return mu.vertex_seq[int(np.argmax(d <= d.min() + TOL))]

    # -- hyperbolicity ------------------------------------------------
    def estimate_delta(self, method: str = "four_point", budget: int | None = None,
                       rng: np.random.Generator | None = None) -> DeltaEstimate:
        """Gromov hyperbolicity constant of the graph.

        ``budget=None`` means exhaustive.  Otherwise ``budget`` random
        4-tuples (``four_point``) or triangles (``thin_triangles``) are drawn.
        """
        if budget is not None and budget <= 0:
            raise GraphInputError("sampling budget must be positive")
        if self.n == 1:
            return DeltaEstimate(0.0, method, True, 0)
        rng = rng if rng is not None else np.random.default_rng(0)
        if method == "four_point":
            D = np.ascontiguousarray(self.distance_matrix())
            if budget is None:
                val, w, count = four_point_exhaustive(
                    D, far_apart_mask(D, self.edge_u, self.edge_v, self.edge_len))
                return DeltaEstimate(max(0.0, float(val)), method, True, int(count),
                                     tuple(int(x) for x in w))
            quads = rng.integers(0, self.n, size=(budget, 4))
            val, k = four_point_sampled(D, quads)
            witness = tuple(int(x) for x in quads[k]) if k >= 0 else ()
            return DeltaEstimate(max(0.0, float(val)), method, False, budget, witness)
        if method == "thin_triangles":
            return self._thin_triangles(budget, rng)
        raise GraphInputError(f"unknown delta method {method!r}")

    def _thin_triangles(self, budget, rng) -> DeltaEstimate:
        if budget is None:
            triples = itertools.combinations(range(self.n), 3)
            exhaustive = True
        else:
            triples = (tuple(t) for t in rng.integers(0, self.n, size=(budget, 3)))
            exhaustive = False
        best, witness, count = 0.0, (), 0
        for a, b, c in triples:
            count += 1
            sides = [self.shortest_path(a, b), self.shortest_path(b, c), self.shortest_path(c, a)]
            for i in range(3):
                others = set(sides[(i + 1) % 3].vertex_seq) | set(sides[(i + 2) % 3].vertex_seq)
                D = self.rows(sides[i].vertex_seq)[:, sorted(others)]
                slack = float(D.min(axis=1).max())
                if slack > best + TOL:
                    best, witness = slack, (a, b, c)
        return DeltaEstimate(best, "thin_triangles", exhaustive, count, witness)


def _canonical_nearest(g: MetricGraph, d: np.ndarray, nearest: np.ndarray, src: list[int]) -> np.ndarray:
    # scipy's nearest-source labels depend on heap order; recompute ties by smallest source id
    if len(src) <= 64:
        block = g.rows(src)
        return np.asarray(src)[np.argmax(block <= d + TOL, axis=0)]
    return nearest


def edge_list_text(g: MetricGraph, header: str | None = None) -> str:
    """Serialize to the ``u v length`` edge-list format (plus ``# coord`` lines)."""
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    lines.append(f"# vertices {g.n}")
    if g.coords is not None:
        for i, (x, y) in enumerate(g.coords.tolist()):
            lines.append(f"# coord {i} {x!r} {y!r}")
    for u, v, length in g.edges():
        lines.append(f"{u} {v} {length!r}")
    return "\n".join(lines) + "\n"


def read_edge_list(text: str) -> MetricGraph:
    """Parse the edge-list format; rejects disconnected graphs."""
    edges, coords = [], {}
    n_decl = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["coord"] and len(parts) == 4:
                coords[int(parts[1])] = (float(parts[2]), float(parts[3]))
            elif parts[:1] == ["vertices"] and len(parts) == 2:
                n_decl = int(parts[1])
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphInputError(f"line {lineno}: expected 'u v [length]', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0))
    n = n_decl if n_decl is not None else 1 + max(
        [max(u, v) for u, v, _ in edges] + list(coords) + [0])
    xy = None
    if coords:
        xy = np.full((n, 2), np.nan)
        for i, c in coords.items():
            xy[i] = c
    return MetricGraph(n, edges, coords=xy)


def path_graph(n: int) -> MetricGraph:
    return MetricGraph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> MetricGraph:
    return MetricGraph(n, [(i, (i + 1) % n) for i in range(n)])
