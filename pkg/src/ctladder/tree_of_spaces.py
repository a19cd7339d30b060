"""Total spaces fibered over an integer interval.

Level j of the window ``[lo, hi]`` is a copy of the fiber Y.  Vertex ``y`` of
level ``j`` gets the flat id ``(j - lo) * |Y| + y``.  Levels are glued by
unit vertical edges: ``(y, j) -- (phi(y), j + 1)`` for ``j >= 0`` and
``(y, j) -- (psi(y), j - 1)`` for ``j <= 0``, with ``psi`` the coarse inverse
of ``phi`` fixed at assembly time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ctladder import __version__
from ctladder.metric_graph import (TOL, ContractError, GraphInputError, MetricGraph,
                                   PathInGraph, edge_list_text)
from ctladder.quasi import QIMap, qi_inverse


@dataclass
class SpaceTree:
    fiber: MetricGraph
    phi: QIMap
    psi: QIMap | None
    lo: int
    hi: int
    total: MetricGraph
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.fiber.n

    @property
    def levels(self) -> range:
        return range(self.lo, self.hi + 1)

    def vid(self, y, j):
        """Flat id of fiber vertex ``y`` in level ``j`` (vectorized over ``y``)."""
        if not self.lo <= j <= self.hi:
            raise GraphInputError(f"level {j} outside window [{self.lo}, {self.hi}]")
        return (j - self.lo) * self.n + y

    def level_of(self, x):
        return self.lo + x // self.n

    def fiber_of(self, x):
        return x % self.n

    def vertical_edges(self):
        """Vertical edges as (lower id, upper id, kind) with kind 'up' (j >= 0) or 'down' (j <= 0)."""
        out = []
        ys = np.arange(self.n)
        for j in range(max(self.lo, 0), self.hi):
            up = self.vid(self.phi.map, j + 1)
            out.extend(zip(self.vid(ys, j).tolist(), up.tolist(), itertools.repeat("up")))
        for j in range(min(self.hi, 0), self.lo, -1):
            down = self.vid(self.psi.map, j - 1)
            out.extend(zip(down.tolist(), self.vid(ys, j).tolist(), itertools.repeat("down")))
        return out


def level_of(st: SpaceTree, x: int) -> int:
    return int(st.level_of(x))


def assemble(Y: MetricGraph, phi, window, psi: QIMap | None = None) -> SpaceTree:
    """Build the total graph over the window ``(lo, hi)`` with ``lo <= 0 <= hi``.

    ``phi`` is one certified QIMap or a list of them; a list must carry one
    shared (K, eps) pair.  ``psi`` (the map used for edges below level 0)
    defaults to :func:`qi_inverse` of ``phi`` and is only needed when
    ``lo < 0``.
    """
    lo, hi = int(window[0]), int(window[1])
    if not lo <= 0 <= hi:
        raise GraphInputError(f"window [{lo}, {hi}] must contain level 0")
    maps = phi if isinstance(phi, (list, tuple)) else [phi]
    for m in maps:
        if not m.certified:
            raise ContractError("level maps must be certified before assembly")
        if (m.K, m.eps) != (maps[0].K, maps[0].eps):
            raise ContractError("level maps carry different (K, eps) constants")
        if not np.array_equal(m.map, maps[0].map):
            raise GraphInputError("only a single repeated level map is supported")
    phi = maps[0]
    if phi.source is not Y or phi.target is not Y:
        if phi.source.n != Y.n or phi.target.n != Y.n:
            raise GraphInputError("level map must act on the fiber")
    if lo < 0 and psi is None:
        psi = qi_inverse(phi)
    n = Y.n
    L = hi - lo + 1
    us, vs, ls = [], [], []
    for k in range(L):
        us.append(Y.edge_u + k * n)
        vs.append(Y.edge_v + k * n)
        ls.append(Y.edge_len)
    st = SpaceTree(Y, phi, psi, lo, hi, None)
    vert = st.vertical_edges()
    if vert:
        a, b, _ = zip(*vert)
        us.append(np.asarray(a))
        vs.append(np.asarray(b))
        ls.append(np.ones(len(a)))
    u, v, length = np.concatenate(us), np.concatenate(vs), np.concatenate(ls)
    st.total = MetricGraph(n * L, zip(u.tolist(), v.tolist(), length.tolist()),
                           cache_budget=Y.cache_budget,
                           meta={"generator": "space_tree", "window": (lo, hi),
                                 "fiber": dict(Y.meta)})
    st.meta = {"window": (lo, hi), "fiber": dict(Y.meta), "K": phi.K, "eps": phi.eps,
               "vertical_edges": len(vert), "version": __version__}
    _spot_check_levels(st)
    return st


def _spot_check_levels(st: SpaceTree, samples: int = 32) -> None:
    rng = np.random.default_rng(0)
    N = st.total.n
    lev = st.level_of(np.arange(N))
    for x in rng.integers(0, N, size=min(samples, N)).tolist():
        row = st.total.row(x)
        if np.any(row + TOL < np.abs(lev - st.level_of(x))):
            raise ContractError("level distance bound violated in the assembled total space")


def proper_embedding_profile(st: SpaceTree, j: int, M_grid, pairs=None, max_pairs: int = 500_000,
                             rng: np.random.Generator | None = None):
    """Table of (M, N(M)): the largest fiber distance among level-j pairs with d_X <= M.

    Exhaustive over all pairs of the level when that is at most ``max_pairs``,
    otherwise a uniform sample of that size (or the given ``pairs``).
    """
    ys = np.arange(st.n)
    if pairs is None:
        total_pairs = st.n * (st.n - 1) // 2
        if total_pairs <= max_pairs:
            a, b = np.triu_indices(st.n, k=1)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            a = rng.integers(0, st.n, size=max_pairs)
            b = rng.integers(0, st.n, size=max_pairs)
    else:
        a, b = (np.asarray(x) for x in zip(*pairs))
    ids = st.vid(ys, j)
    DX = st.total.rows(ids[np.unique(a)])
    pos = -np.ones(st.n, dtype=np.int64)
    pos[np.unique(a)] = np.arange(len(np.unique(a)))
    dX = DX[pos[a], ids[b]]
    dY = st.fiber.rows(np.unique(a))[pos[a], b]
    out = []
    for M in M_grid:
        sel = dX <= M + TOL
        out.append((float(M), float(dY[sel].max()) if np.any(sel) else 0.0))
    return out


def level_modulus(st: SpaceTree, p: int, N: float, j: int = 0) -> float:
    """min d_X(p, y) over level-j vertices y with fiber distance >= N from p (inf if none)."""
    dY = st.fiber.row(p)
    far = np.flatnonzero(dY >= N - TOL)
    if len(far) == 0:
        return float("inf")
    dX = st.total.row(st.vid(p, j))
    return float(dX[st.vid(far, j)].min())


@dataclass
class AdmissiblePath:
    """Horizontal runs inside single levels alternating with unit vertical hops."""

    pieces: list
    path: PathInGraph
    deviation: float = 0.0

    @property
    def length(self) -> float:
        return self.path.length

    @property
    def hops(self) -> int:
        return sum(1 for p in self.pieces if p[0] == "v")


def admissible_approximation(st: SpaceTree, path) -> AdmissiblePath:
    """Split a total-graph path into horizontal runs and vertical hops.

    Every edge of the total graph is a fiber edge or one of the admissible
    unit hops, so the decomposition reproduces the input path exactly
    (deviation 0).  Each vertical hop is checked against the level maps.
    """
    seq = list(path.vertex_seq if isinstance(path, PathInGraph) else path)
    P = st.total.make_path(seq)
    up = set()
    for a, b, _ in st.vertical_edges():
        up.add((a, b))
    pieces = []
    run = [seq[0]]
    for a, b in zip(seq, seq[1:]):
        la, lb = st.level_of(a), st.level_of(b)
        if la == lb:
            run.append(b)
            continue
        pair = (a, b) if la < lb else (b, a)
        if pair not in up:
            raise ContractError(f"hop {a} -> {b} is not a vertical edge of the window")
        pieces.append(("h", int(la), st.fiber.make_path([st.fiber_of(x) for x in run])))
        pieces.append(("v", a, b))
        run = [b]
    pieces.append(("h", int(st.level_of(run[0])), st.fiber.make_path([st.fiber_of(x) for x in run])))
    return AdmissiblePath(pieces, P, 0.0)


def dump(st: SpaceTree) -> str:
    """Self-describing text: provenance header, fiber edge list, window and map tables."""
    header = "\n".join([
        f"ctladder {__version__} space_tree",
        f"fiber {st.fiber.meta}",
        f"window {st.lo} {st.hi}",
        f"phi K={st.phi.K!r} eps={st.phi.eps!r}",
    ])
    lines = [edge_list_text(st.fiber, header).rstrip("\n")]
    lines.extend(f"# phi {y} {int(v)}" for y, v in enumerate(st.phi.map))
    if st.psi is not None:
        lines.extend(f"# psi {y} {int(v)}" for y, v in enumerate(st.psi.map))
    return "\n".join(lines) + "\n"
