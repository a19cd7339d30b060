"""Ladders over a tree of spaces and the retraction onto them.

A ladder starts from a path in level 0 and is pushed level by level: the
next rung joins the images of the current rung's endpoints (under ``phi``
going up, under the coarse inverse going down), either by the canonical
fiber geodesic or, in a truncated fiber, by the horo-ambient path built from
the full-fiber geodesic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ctladder.horoball_geom import HoroAmbientPath, certify_ambient, horo_ambient
from ctladder.metric_graph import TOL, ContractError, GraphInputError, PathInGraph
from ctladder.models import TruncatedSpace
from ctladder.quasi import coarse_inverse_map, measure_dotted
from ctladder.tree_of_spaces import SpaceTree

QC_GAPS = (0, 1, 2, 4)


@dataclass
class Ladder:
    host: SpaceTree
    levels: dict
    flavor: str
    seed: PathInGraph
    ts: TruncatedSpace | None = None
    ambient_K: dict = field(default_factory=dict)
    segments: dict = field(default_factory=dict)

    def __post_init__(self):
        st = self.host
        self.members = {}
        for j in sorted(self.levels):
            for pos, y in enumerate(self.levels[j].vertex_seq):
                self.members.setdefault(int(st.vid(y, j)), (j, pos))
        self.B = np.array(sorted(self.members), dtype=np.int64)
        self._pi = None
        self._table = None
        self._dist_to_B = None

    @property
    def pi(self) -> np.ndarray:
        """Retraction table over all total-space vertices."""
        if self._pi is None:
            st = self.host
            out = np.empty(st.total.n, dtype=np.int64)
            for j, lam in self.levels.items():
                seq = np.asarray(lam.vertex_seq)
                d = st.fiber.rows(seq)
                m = d.min(axis=0)
                pos = np.argmax(d <= m + TOL, axis=0)
                out[st.vid(np.arange(st.n), j)] = st.vid(seq[pos], j)
            self._pi = out
        return self._pi

    def table(self):
        """Total-space distances between ladder vertices, with an id -> row index map."""
        if self._table is None:
            rows = self.host.total.rows(self.B)[:, self.B]
            self._table = (rows, {int(v): k for k, v in enumerate(self.B.tolist())})
        return self._table

    def dist_to_ladder(self) -> np.ndarray:
        if self._dist_to_B is None:
            self._dist_to_B = self.host.total.distance_to_set(self.B)
        return self._dist_to_B


def _psi(st: SpaceTree) -> np.ndarray:
    if st.psi is not None:
        return st.psi.map
    if "psi_map" not in st.meta:
        st.meta["psi_map"] = coarse_inverse_map(st.phi.map, st.fiber)
    return st.meta["psi_map"]


def _rung(st: SpaceTree, a: int, b: int, flavor: str, ts):
    if flavor == "geodesic":
        return st.fiber.shortest_path(int(a), int(b)), []
    full = ts.full.shortest_path(int(ts.to_full[a]), int(ts.to_full[b]))
    hp = horo_ambient(ts, full)
    return hp.path, hp.segments


def build_ladder(st: SpaceTree, seed, flavor: str = "geodesic",
                 ts: TruncatedSpace | None = None) -> Ladder:
    """Ladder over the whole window of ``st`` starting from ``seed`` in level 0.

    ``flavor="geodesic"`` needs a fiber geodesic seed.  ``flavor="horo_ambient"``
    needs ``ts`` with ``ts.truncated`` as the fiber and a seed equal to the
    horo-ambient path of the full geodesic between its endpoints.
    """
    if isinstance(seed, HoroAmbientPath):
        seed = seed.path
    if flavor == "geodesic":
        if not st.fiber.make_path(seed.vertex_seq).geodesic:
            raise ContractError("geodesic ladder needs a geodesic seed")
    elif flavor == "horo_ambient":
        if ts is None or ts.truncated.n != st.fiber.n:
            raise GraphInputError("horo-ambient ladder needs the truncated space of the fiber")
        expect, _ = _rung(st, seed.start, seed.end, flavor, ts)
        if tuple(expect.vertex_seq) != tuple(seed.vertex_seq):
            raise ContractError("seed is not the horo-ambient path between its endpoints")
    else:
        raise GraphInputError(f"unknown ladder flavor {flavor!r}")
    seed = st.fiber.make_path(seed.vertex_seq)
    levels = {0: seed}
    segments = {0: _rung(st, seed.start, seed.end, flavor, ts)[1] if flavor == "horo_ambient" else []}
    phi = st.phi.map
    for j in range(0, st.hi):
        lam = levels[j]
        levels[j + 1], segments[j + 1] = _rung(st, phi[lam.start], phi[lam.end], flavor, ts)
    if st.lo < 0:
        psi = _psi(st)
        for j in range(0, st.lo, -1):
            lam = levels[j]
            levels[j - 1], segments[j - 1] = _rung(st, psi[lam.start], psi[lam.end], flavor, ts)
    lad = Ladder(st, dict(sorted(levels.items())), flavor, seed, ts, segments=segments)
    if flavor == "horo_ambient":
        lad.ambient_K = {j: certify_ambient(ts, lam).K for j, lam in lad.levels.items()}
    return lad


def retract(l: Ladder, x: int) -> int:
    """Nearest-point projection of x onto the rung of its own level (smallest position on ties)."""
    l.host.total.check_vertex(x)
    return int(l.pi[x])


@dataclass
class RetractionReport:
    C0: float
    case_max: dict
    case_count: dict
    witness: tuple
    policy: str


def _pairs_by_case(l: Ladder):
    st = l.host
    n = st.n
    fe_u, fe_v, fe_len = st.fiber.edge_u, st.fiber.edge_v, st.fiber.edge_len
    cases = {"a": [], "b": [], "c": []}
    for j in st.levels:
        off = (j - st.lo) * n
        cases["a"].append((fe_u + off, fe_v + off, fe_len))
    vert = st.vertical_edges()
    if vert:
        lo_, hi_, kind = zip(*vert)
        lo_, hi_, kind = np.asarray(lo_), np.asarray(hi_), np.asarray(kind)
        for name, key in (("b", "up"), ("c", "down")):
            sel = kind == key
            cases[name].append((lo_[sel], hi_[sel], np.ones(int(sel.sum()))))
    return {k: tuple(np.concatenate(p) for p in zip(*v)) if v else
            (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)) for k, v in cases.items()}


def measure_retraction(l: Ladder, policy="exhaustive", rng: np.random.Generator | None = None) -> RetractionReport:
    """Largest d_X(Pi x, Pi y) / d_X(x, y) over fiber edges (a), up-hops (b) and down-hops (c).

    Fiber edges carry d_X equal to their length and vertical edges d_X = 1,
    since any detour through another level costs at least 2.
    """
    D, where = l.table()
    pi = l.pi
    case_max, case_count, witness, C0 = {}, {}, (), 0.0
    for name, (u, v, d) in _pairs_by_case(l).items():
        if policy != "exhaustive" and len(u):
            rng = rng if rng is not None else np.random.default_rng(0)
            k = rng.choice(len(u), size=min(policy[1], len(u)), replace=False)
            u, v, d = u[k], v[k], d[k]
        case_count[name] = int(len(u))
        if len(u) == 0:
            case_max[name] = 0.0
            continue
        ru = np.array([where[int(x)] for x in pi[u].tolist()])
        rv = np.array([where[int(x)] for x in pi[v].tolist()])
        ratio = D[ru, rv] / d
        k = int(np.argmax(ratio))
        case_max[name] = float(ratio[k])
        if ratio[k] > C0:
            C0, witness = float(ratio[k]), (name, int(u[k]), int(v[k]))
    return RetractionReport(C0, case_max, case_count, witness,
                            policy if isinstance(policy, str) else f"sampled{policy[1]}")


def _sample_pairs(l: Ladder, samples_per_gap: int, rng):
    st = l.host
    span = st.hi - st.lo
    gaps = sorted({g for g in QC_GAPS if g <= span} | {span})
    out = []
    for gap in gaps:
        for _ in range(samples_per_gap):
            i = int(rng.integers(st.lo, st.hi - gap + 1))
            j = i + gap
            a = rng.choice(np.asarray(l.levels[i].vertex_seq))
            b = rng.choice(np.asarray(l.levels[j].vertex_seq))
            out.append((gap, int(st.vid(a, i)), int(st.vid(b, j))))
    return out


def measure_quasiconvexity(l: Ladder, samples_per_gap: int = 20, rng: np.random.Generator | None = None,
                           extra_pairs=()) -> dict:
    """Largest distance to the ladder along total geodesics between ladder points.

    Endpoint pairs are stratified by level gap (0, 1, 2, 4 and the window
    span).  For each geodesic the projected dotted path is measured too.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    dB = l.dist_to_ladder()
    pairs = _sample_pairs(l, samples_per_gap, rng) + [("extra", int(a), int(b)) for a, b in extra_pairs]
    per_gap = {}
    C, witness = 0.0, ()
    dotted_K, dotted_eps = 1.0, 0.0
    for gap, a, b in pairs:
        mu = l.host.total.shortest_path(a, b)
        seq = np.asarray(mu.vertex_seq)
        k = int(np.argmax(dB[seq]))
        c = float(dB[seq][k])
        per_gap[gap] = max(per_gap.get(gap, 0.0), c)
        if c > C:
            C, witness = c, (a, b, int(seq[k]))
        cert = measure_dotted(l.host.total, l.pi[seq])
        if (cert.K, cert.eps) > (dotted_K, dotted_eps):
            dotted_K, dotted_eps = cert.K, cert.eps
    return {"C": C, "per_gap": {str(k): v for k, v in per_gap.items()}, "witness": witness,
            "pairs": len(pairs), "dotted_K": dotted_K, "dotted_eps": dotted_eps}


def _nearest_on(l: Ladder, y: int, j: int) -> int:
    lam = np.asarray(l.levels[j].vertex_seq)
    d = l.host.fiber.row(int(y))[lam]
    return int(lam[int(np.argmax(d <= d.min() + TOL))])


def vertical_descent(l: Ladder, a: int):
    """Walk from ladder vertex ``a`` down to level 0, one rung at a time.

    Each step transports the current point one level toward 0 (coarse
    inverse from above, ``phi`` from below) and moves to the nearest vertex
    of that rung.  Returns ``(b, audit)`` with the per-step costs and their
    maximum ``A``.
    """
    st = l.host
    if int(a) not in l.members:
        raise ContractError(f"vertex {a} is not on the ladder")
    D, where = l.table()
    j = int(st.level_of(a))
    cur = int(a)
    steps = []
    psi = _psi(st) if j > 0 else None
    while j != 0:
        y = int(st.fiber_of(cur))
        if j > 0:
            nxt_j, moved = j - 1, psi[y]
        else:
            nxt_j, moved = j + 1, st.phi.map[y]
        q = int(st.vid(_nearest_on(l, moved, nxt_j), nxt_j))
        steps.append(float(D[where[cur], where[q]]))
        cur, j = q, nxt_j
    A = max(steps, default=0.0)
    lev = abs(int(st.level_of(a)))
    return cur, {"steps": steps, "A": A, "distance": float(D[where[int(a)], where[cur]]),
                 "bound": A * lev, "level": lev}


def descent_constant(l: Ladder) -> tuple[float, int]:
    """Largest single descent step over all ladder vertices, with a vertex attaining it."""
    best, arg = 0.0, -1
    for v in l.B.tolist():
        if l.host.level_of(v) == 0:
            continue
        _, audit = vertical_descent(l, v)
        if audit["steps"][0] > best:
            best, arg = audit["steps"][0], v
    return best, arg


# ---------------------------------------------------------------------------
# horocyclic split and rays

@dataclass
class LadderSplit:
    Bb: set
    Bc: set
    junctions: set


def split_b_c(l: Ladder) -> LadderSplit:
    """Separate rung vertices on horosphere detours (c) from the rest (b).

    A detour's end vertices, where it meets the rest of its rung, belong to
    both parts and are listed as junctions.
    """
    if l.flavor != "horo_ambient":
        raise ContractError("the split is defined for horo-ambient ladders")
    st = l.host
    Bb, Bc, junctions = set(), set(), set()
    for j, lam in l.levels.items():
        seq = lam.vertex_seq
        on_c = np.zeros(len(seq), dtype=bool)
        ends = set()
        for _, _, _, (first, last) in l.segments.get(j, []):
            on_c[first:last + 1] = True
            ends.update((first, last))
        for pos, y in enumerate(seq):
            x = int(st.vid(y, j))
            if on_c[pos]:
                Bc.add(x)
                if pos in ends:
                    Bb.add(x)
                    junctions.add(x)
            else:
                Bb.add(x)
    # a vertex repeated on a rung may sit both inside and outside a detour
    junctions |= Bb & Bc
    return LadderSplit(Bb, Bc, junctions)


def build_ray(l: Ladder, x: int, split: LadderSplit | None = None):
    """Ray through the off-horocycle part of the ladder, one vertex per level.

    From ``x`` on level k the ray moves level by level in both directions
    (up by ``phi``, down by the coarse inverse), each time to the nearest
    b-vertex of the next rung.  Returns ``(ray, audit)``; ``ray`` maps level
    to total vertex id and ``audit`` holds the largest jump ``C`` and the
    checked two-sided bound.
    """
    split = split if split is not None else split_b_c(l)
    st = l.host
    if x in split.Bc and x not in split.Bb:
        raise ContractError(f"vertex {x} lies on a horocyclic segment")
    if x not in split.Bb:
        raise ContractError(f"vertex {x} is not on the ladder")
    k = int(st.level_of(x))
    ray = {k: int(x)}
    bmask = {}
    for j, lam in l.levels.items():
        ids = st.vid(np.asarray(lam.vertex_seq), j)
        keep = [int(v) for v in ids.tolist() if v in split.Bb]
        bmask[j] = np.asarray(sorted(set(keep)), dtype=np.int64)
    psi = _psi(st) if st.lo < k else None
    for direction in (1, -1):
        j, cur = k, int(x)
        while st.lo <= j + direction <= st.hi:
            y = int(st.fiber_of(cur))
            moved = st.phi.map[y] if direction == 1 else psi[y]
            nj = j + direction
            cand = bmask[nj]
            if len(cand) == 0:
                break
            d = st.fiber.row(int(moved))[st.fiber_of(cand)]
            cur = int(cand[int(np.argmax(d <= d.min() + TOL))])
            ray[nj] = cur
            j = nj
    ray = dict(sorted(ray.items()))
    ids = list(ray.values())
    levs = list(ray.keys())
    D = st.total.rows(ids)[:, ids]
    jumps = [float(D[i, i + 1]) for i in range(len(ids) - 1)]
    C = max(jumps, default=0.0)
    ok = True
    for i in range(len(ids)):
        for m in range(i + 1, len(ids)):
            gap = abs(levs[m] - levs[i])
            if not (gap - TOL <= D[i, m] <= C * gap + TOL):
                ok = False
    return ray, {"C": C, "jumps": jumps, "bound_holds": ok}


def dump(l: Ladder) -> str:
    st = l.host
    lines = [f"# ladder flavor {l.flavor}", f"# window {st.lo} {st.hi}",
             f"# fiber {st.fiber.meta}"]
    for j, lam in l.levels.items():
        lines.append(f"{j}: " + " ".join(str(v) for v in lam.vertex_seq))
    return "\n".join(lines) + "\n"
