"""Paths that see horoballs.

Conventions used throughout:

* a vertex is *inside* a horoball when its depth is positive, and lies in the
  *closed* horoball when it is inside or on the horosphere;
* an intersection record is a maximal run of consecutive path vertices in
  one closed horoball; its entry and exit are the first and last vertices of
  the run, and it counts as *entered* when the run reaches the interior.

Truncated-graph paths use truncated ids; everything else uses full ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from ctladder.metric_graph import TOL, ContractError, GraphInputError, MetricGraph, PathInGraph
from ctladder.models import HoroballSystem, TruncatedSpace, horospherical_path, layered_system

AMBIENT_GRID = 0.1


@dataclass
class HoroAmbientPath:
    """Truncated-graph path with the horosphere detours that replaced interior excursions.

    ``segments`` holds ``(horoball id, entry, exit, (first, last))`` with
    truncated ids and positions in ``path``.
    """

    path: PathInGraph
    segments: list
    source: PathInGraph | None = None
    diagnostics: list = field(default_factory=list)


def _runs(owner_seq):
    """Maximal runs of equal non-negative owners: (owner, first index, last index)."""
    out = []
    i = 0
    m = len(owner_seq)
    while i < m:
        h = owner_seq[i]
        j = i
        while j + 1 < m and owner_seq[j + 1] == h:
            j += 1
        if h >= 0:
            out.append((int(h), i, j))
        i = j + 1
    return out


def horo_ambient(ts: TruncatedSpace, full_geodesic: PathInGraph) -> HoroAmbientPath:
    """Replace every interior excursion of a full-graph path by a horosphere path."""
    seq = list(full_geodesic.vertex_seq)
    inside = ts.system.interior_mask
    if inside[seq[0]] or inside[seq[-1]]:
        raise ContractError("path endpoints must lie outside horoball interiors")
    out = [int(ts.to_trunc[seq[0]])]
    segments = []
    i = 1
    while i < len(seq):
        v = seq[i]
        if not inside[v]:
            out.append(int(ts.to_trunc[v]))
            i += 1
            continue
        k = i
        while inside[seq[k + 1]]:
            k += 1
        h = int(ts.system.owner[v])
        entry, exit_ = int(ts.to_trunc[seq[i - 1]]), int(ts.to_trunc[seq[k + 1]])
        detour = horospherical_path(ts, h, entry, exit_)
        first = len(out) - 1
        out.extend(detour.vertex_seq[1:])
        segments.append((h, entry, exit_, (first, len(out) - 1)))
        i = k + 2
    path = ts.truncated.make_path(out)
    return HoroAmbientPath(path, segments, full_geodesic)


# ---------------------------------------------------------------------------
# ambient certificate

@dataclass
class AmbientCert:
    K: float
    max_ratio: float
    witness: tuple
    subsegments: int
    policy: str


def certify_ambient(ts: TruncatedSpace, path, rng: np.random.Generator | None = None,
                    n_random: int = 100, exhaustive_below: int = 40) -> AmbientCert:
    """Least grid K (step 0.1) with L(beta) <= K L(A) + K on the checked subsegments.

    ``A`` is a truncated-graph geodesic with the endpoints of the subsegment
    ``beta``.  Paths shorter than ``exhaustive_below`` vertices are checked on
    every subsegment; longer ones on all prefixes and ``n_random`` random
    subsegments.
    """
    P = path.path if isinstance(path, HoroAmbientPath) else path
    g = ts.truncated
    seq = list(P.vertex_seq)
    m = len(seq)
    steps = [g.edge_length(a, b) for a, b in zip(seq, seq[1:])]
    t = np.concatenate([[0.0], np.cumsum(steps)])
    if m < exhaustive_below:
        ii, jj = np.triu_indices(m, k=1)
        policy = "exhaustive"
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        a = rng.integers(0, m, size=n_random)
        b = rng.integers(0, m, size=n_random)
        ii = np.concatenate([np.zeros(m - 1, dtype=np.int64), np.minimum(a, b)])
        jj = np.concatenate([np.arange(1, m), np.maximum(a, b)])
        keep = ii < jj
        ii, jj = ii[keep], jj[keep]
        policy = f"prefixes+{n_random}random"
    if len(ii) == 0:
        return AmbientCert(1.0, 0.0, (), 0, policy)
    starts = sorted({seq[i] for i in ii.tolist()})
    rows = g.rows(starts)
    where = {v: k for k, v in enumerate(starts)}
    LA = np.array([rows[where[seq[i]], seq[j]] for i, j in zip(ii.tolist(), jj.tolist())])
    LB = t[jj] - t[ii]
    ratio = LB / (LA + 1.0)
    k = int(np.argmax(ratio))
    top = float(ratio[k])
    K = max(1.0, AMBIENT_GRID * math.ceil(top / AMBIENT_GRID - 1e-9))
    return AmbientCert(round(K, 10), top, (int(ii[k]), int(jj[k])), int(len(ii)), policy)


# ---------------------------------------------------------------------------
# electric metric

def _electric_csr(ts: TruncatedSpace):
    if ts._electric is None:
        g = ts.full
        own = ts.system.owner
        w = g.edge_len.copy()
        w[(own[g.edge_u] >= 0) & (own[g.edge_u] == own[g.edge_v])] = 0.0
        rows = np.concatenate([g.edge_u, g.edge_v])
        cols = np.concatenate([g.edge_v, g.edge_u])
        data = np.concatenate([w, w])
        # explicit zeros are kept as edges by the csgraph routines
        ts._electric = sp.csr_matrix((data, (rows, cols)), shape=(g.n, g.n))
    return ts._electric


def electric_rows(ts: TruncatedSpace, sources) -> np.ndarray:
    return dijkstra(_electric_csr(ts), directed=False, indices=list(sources))


def electric_distance(ts: TruncatedSpace, u: int, v: int) -> float:
    """Path metric on the full graph with edges inside one closed horoball made free."""
    ts.full.check_vertex(u, v)
    return float(electric_rows(ts, [u])[0, v])


# ---------------------------------------------------------------------------
# backtracking

def _splice(seq, owner):
    seq = list(seq)
    while True:
        diagnostics = []
        runs = _runs([owner[v] for v in seq])
        last = {}
        cut = None
        for h, i, j in runs:
            if h in last:
                _, pj = last[h]
                if seq[pj] == seq[i]:
                    cut = (pj, i)
                    break
                rec = (h, seq[pj], seq[i])
                if rec not in diagnostics:
                    diagnostics.append(rec)
            last[h] = (i, j)
        if cut is None:
            return seq, diagnostics
        a, b = cut
        seq = seq[:a] + seq[b:]


def remove_backtracking(p, ts: TruncatedSpace | None = None, space: str = "trunc"):
    """Splice out returns to a horoball made at the vertex where the path left it.

    Accepts a :class:`HoroAmbientPath` (truncated ids) or, with ``ts`` and
    ``space="full"``, a full-graph :class:`PathInGraph`.  Returns a value of
    the same kind; re-entries at a different vertex are left in place and
    listed as ``(horoball, exit vertex, re-entry vertex)`` diagnostics.
    """
    if isinstance(p, HoroAmbientPath):
        if ts is None:
            raise GraphInputError("a TruncatedSpace is needed to read horoball membership")
        seq, diag = _splice(p.path.vertex_seq, ts.owner_t)
        path = ts.truncated.make_path(seq)
        segs = p.segments if len(seq) == len(p.path) else _resegment(ts, path)
        return HoroAmbientPath(path, segs, p.source, diag)
    if ts is None:
        raise GraphInputError("a TruncatedSpace is needed to read horoball membership")
    g = ts.full if space == "full" else ts.truncated
    owner = ts.system.owner if space == "full" else ts.owner_t
    seq, diag = _splice(p.vertex_seq, owner)
    out = g.make_path(seq)
    return out, diag


def _resegment(ts, path):
    # after splicing, flag horosphere runs of length > 1 as detour segments
    segs = []
    for h, i, j in _runs([ts.owner_t[v] for v in path.vertex_seq]):
        if j > i:
            segs.append((h, path.vertex_seq[i], path.vertex_seq[j], (i, j)))
    return segs


# ---------------------------------------------------------------------------
# neighbourhoods and patterns

def _as_full(ts: TruncatedSpace, path):
    if isinstance(path, HoroAmbientPath):
        return [int(ts.to_full[v]) for v in path.path.vertex_seq]
    return list(path.vertex_seq)


def neighborhood_check(ts: TruncatedSpace, gamma, eta: PathInGraph) -> float:
    """Largest full-graph distance from a vertex of gamma to eta plus the horoballs eta meets."""
    gseq = _as_full(ts, gamma)
    eseq = list(eta.vertex_seq)
    if {gseq[0], gseq[-1]} != {eseq[0], eseq[-1]}:
        raise ContractError("gamma and eta must share endpoints")
    target = set(eseq)
    for h in {int(ts.system.owner[v]) for v in eseq} - {-1}:
        target |= ts.system[h].members
    d = ts.full.distance_to_set(target)
    return float(d[gseq].max())


@dataclass
class PatternRecord:
    horoball: int
    entered: bool
    entry: int
    exit: int
    depth: float
    travel: float
    first: int
    last: int


@dataclass
class IntersectionPattern:
    records: list
    start: int
    end: int

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.records], sort_keys=True)

    @staticmethod
    def from_json(text: str, start: int = -1, end: int = -1) -> "IntersectionPattern":
        return IntersectionPattern([PatternRecord(**r) for r in json.loads(text)], start, end)


def extract_pattern(ts: TruncatedSpace, path, space: str = "full") -> IntersectionPattern:
    """Closed-horoball runs of a path, in traversal order (full ids in the records)."""
    if isinstance(path, HoroAmbientPath):
        seq = _as_full(ts, path)
    elif space == "trunc":
        seq = [int(ts.to_full[v]) for v in path.vertex_seq]
    else:
        seq = list(path.vertex_seq)
    own = ts.system.owner
    depth = ts.system.depth
    recs = []
    for h, i, j in _runs([own[v] for v in seq]):
        run = seq[i:j + 1]
        travel = sum(ts.full.edge_length(a, b) for a, b in zip(run, run[1:]))
        recs.append(PatternRecord(h, bool(np.any(depth[run] > 0)), run[0], run[-1],
                                  float(depth[run].max()), float(travel), i, j))
    return IntersectionPattern(recs, seq[0], seq[-1])


def _aggregate(p: IntersectionPattern):
    out = {}
    for r in p.records:
        if r.horoball not in out:
            out[r.horoball] = dict(entered=r.entered, entry=r.entry, exit=r.exit,
                                   depth=r.depth, travel=r.travel, visits=1)
        else:
            a = out[r.horoball]
            a.update(entered=a["entered"] or r.entered, exit=r.exit, depth=max(a["depth"], r.depth),
                     travel=a["travel"] + r.travel, visits=a["visits"] + 1)
    return out


def compare_patterns(p1: IntersectionPattern, p2: IntersectionPattern, graph: MetricGraph,
                     exclude_first_last: bool | None = None, ts: TruncatedSpace | None = None) -> dict:
    """Entry/exit discrepancies for shared horoballs and lone penetrations for the rest.

    ``exclude_first_last`` drops horoballs whose closure contains an endpoint
    of either path; ``None`` turns it on exactly when such a horoball exists
    (this needs ``ts``).
    """
    a1, a2 = _aggregate(p1), _aggregate(p2)
    ends = set()
    if ts is not None:
        for v in (p1.start, p1.end, p2.start, p2.end):
            if v >= 0 and ts.system.owner[v] >= 0:
                ends.add(int(ts.system.owner[v]))
    if exclude_first_last is None:
        exclude_first_last = bool(ends)
    skip = ends if exclude_first_last else set()
    both = sorted((set(a1) & set(a2)) - skip)
    lone = sorted((set(a1) ^ set(a2)) - skip)
    entry_max = exit_max = 0.0
    worst = None
    if both:
        src = sorted({a1[h]["entry"] for h in both} | {a1[h]["exit"] for h in both})
        rows = graph.rows(src)
        where = {v: k for k, v in enumerate(src)}
        for h in both:
            de = float(rows[where[a1[h]["entry"]], a2[h]["entry"]])
            dx = float(rows[where[a1[h]["exit"]], a2[h]["exit"]])
            if max(de, dx) > max(entry_max, exit_max):
                worst = h
            entry_max, exit_max = max(entry_max, de), max(exit_max, dx)
    lone_depth = max((a[h]["depth"] for a in (a1, a2) for h in lone if h in a), default=0.0)
    lone_travel = max((a[h]["travel"] for a in (a1, a2) for h in lone if h in a), default=0.0)
    return {"shared": len(both), "lone": len(lone), "excluded": sorted(skip),
            "entry_max": entry_max, "exit_max": exit_max, "lone_depth_max": lone_depth,
            "lone_travel_max": lone_travel, "worst_shared": worst,
            "repeat_visits": sum(a[h]["visits"] - 1 for a in (a1, a2) for h in a)}


# ---------------------------------------------------------------------------
# horoballs of a total space

def total_truncated_space(total: MetricGraph, fiber_ts: TruncatedSpace, levels: int) -> TruncatedSpace:
    """Horoball system on a total space whose fibers are copies of ``fiber_ts.full``.

    The interiors are the connected components of the subgraph spanned by
    all interior vertices of all levels: a fiber horoball and the horoballs
    it is glued to by vertical edges form one chain.
    """
    n = fiber_ts.full.n
    interior = np.tile(fiber_ts.system.interior_mask, levels)
    depth = np.tile(fiber_ts.system.depth, levels)
    fiber_owner = np.tile(fiber_ts.system.owner, levels)
    ids = np.flatnonzero(interior)
    if len(ids) == 0:
        return TruncatedSpace(total, HoroballSystem([], total.n), meta={"chains": 0})
    sub, old = total.induced_subgraph(ids, check_connected=False)
    k, lab = connected_components(sub.csr, directed=False)
    candidates = []
    for c in range(k):
        members = old[lab == c]
        chain = sorted({(int(fiber_owner[v]), int(v // n)) for v in members.tolist()},
                       key=lambda t: (t[1], t[0]))
        candidates.append(({"kind": "chain", "fiber_horoballs": chain}, members, depth[members]))
    system, _ = layered_system(total, candidates, where="total space", drop_disconnected=False)
    return TruncatedSpace(total, system, meta={"chains": len(system)})
