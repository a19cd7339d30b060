"""Modulus experiments: how far from a basepoint do ambient geodesics stay?

The closed pipeline pushes level-0 geodesics that avoid the N-ball into a
ladder and measures the total-space geodesic between their endpoints.  The
punctured pipeline repeats this in a truncated fiber with horo-ambient rungs,
tracks the geodesic's horoball excursions, and records every intermediate
path so the endpoint bookkeeping can be audited.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ctladder.horoball_geom import (certify_ambient, compare_patterns, extract_pattern,
                                    horo_ambient, remove_backtracking, total_truncated_space)
from ctladder.ladder import (build_ladder, build_ray, descent_constant, measure_quasiconvexity,
                             measure_retraction, split_b_c)
from ctladder.metric_graph import TOL, ContractError, GraphInputError, MetricGraph, PathInGraph
from ctladder.models import TruncatedSpace
from ctladder.quasi import certify_qi
from ctladder.tree_of_spaces import SpaceTree, assemble, level_modulus

N_SECTORS = 8


@dataclass
class ModulusRow:
    N: float
    f: float
    M_observed: float
    M_bound: float
    seeds: int


@dataclass
class ModulusCurve:
    rows: list
    basepoint: int
    model: dict
    constants: dict = field(default_factory=dict)
    verdict: str = ""

    COLUMNS = ("N", "f", "M_observed", "M_bound")

    def table(self):
        return [(r.N, r.f, r.M_observed, r.M_bound) for r in self.rows]


# ---------------------------------------------------------------------------
# seeds

def _cones(g: MetricGraph, p: int, verts) -> np.ndarray:
    """Neighbour of p on the canonical geodesic from p to each vertex (p itself for p)."""
    out = np.empty(len(verts), dtype=np.int64)
    for k, v in enumerate(verts):
        seq = g.shortest_path(p, int(v)).vertex_seq
        out[k] = seq[1] if len(seq) > 1 else p
    return out


def _sectors(g: MetricGraph, p: int, verts) -> np.ndarray:
    if g.coords is None:
        return _cones(g, p, verts)
    z = g.coords[:, 0] + 1j * g.coords[:, 1]
    ang = np.angle(z[np.asarray(verts)] - z[p])
    return np.floor((ang + np.pi) / (2 * np.pi) * N_SECTORS).astype(np.int64) % N_SECTORS


def sample_seeds(g: MetricGraph, p: int, N: float, count: int, rng: np.random.Generator,
                 endpoints=None, dist_p=None, attempts: int = 400):
    """Geodesics of ``g`` whose distance to ``p`` is at least ``N``.

    Endpoints are drawn round-robin over direction classes (cones of ``p``
    for combinatorial fibers, angular sectors for planar nets) so the sample
    does not sit in one direction.  ``dist_p`` (defaults to the graph metric
    from ``p``) measures the distance to the basepoint.
    """
    dp = g.row(p) if dist_p is None else dist_p
    if endpoints is None:
        endpoints = np.flatnonzero(dp >= dp.max() - TOL)
    endpoints = np.asarray(endpoints)
    endpoints = endpoints[dp[endpoints] >= N - TOL]
    if len(endpoints) < 2:
        return []
    cls = _sectors(g, p, endpoints)
    groups = [endpoints[cls == c] for c in np.unique(cls)]
    seeds, seen = [], set()
    tries = 0
    while len(seeds) < count and tries < attempts:
        grp = groups[tries % len(groups)]
        tries += 1
        u = int(rng.choice(grp))
        du = g.row(u)
        gp = 0.5 * (dp[u] + dp[endpoints] - du[endpoints])
        cand = endpoints[(gp >= N - 1 - TOL) & (endpoints != u)]
        if len(cand) == 0:
            continue
        v = int(rng.choice(cand))
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        lam = g.shortest_path(*key)
        if dp[list(lam.vertex_seq)].min() >= N - TOL:
            seen.add(key)
            seeds.append(lam)
    return seeds


# ---------------------------------------------------------------------------
# closed case

def ct_modulus_closed(st: SpaceTree, basepoint: int, N_grid, seeds_per_N: int = 8,
                      rng: np.random.Generator | None = None, qc_samples: int = 4,
                      tol: float = 1.0) -> tuple[ModulusCurve, list]:
    """Modulus curve over ``N_grid`` with constants measured on the seed ladders.

    Seeds of all rows form one pool; the observed modulus at N is the least
    distance from the basepoint to a total geodesic joining the endpoints of
    any pooled seed that avoids the N-ball.  The bound uses the largest
    descent step A and quasiconvexity C over the pool (the seed's own
    geodesic is always among the quasiconvexity samples).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    Y, X = st.fiber, st.total
    p0 = int(st.vid(basepoint, 0))
    dX = X.row(p0)
    dY = Y.row(basepoint)
    pool, per_seed, skipped = {}, [], []
    for N in N_grid:
        seeds = sample_seeds(Y, basepoint, N, seeds_per_N, rng)
        if not seeds:
            skipped.append(N)
        for lam in seeds:
            pool.setdefault((lam.start, lam.end), lam)
    A = C = 0.0
    for key in sorted(pool):
        lam = pool[key]
        lad = build_ladder(st, lam)
        a, b = int(st.vid(lam.start, 0)), int(st.vid(lam.end, 0))
        mu = X.shortest_path(a, b)
        qc = measure_quasiconvexity(lad, qc_samples, rng, extra_pairs=[(a, b)])
        A_seed = descent_constant(lad)[0]
        A, C = max(A, A_seed), max(C, qc["C"])
        per_seed.append({"start": key[0], "end": key[1],
                         "d_fiber": float(dY[list(lam.vertex_seq)].min()),
                         "M": float(dX[list(mu.vertex_seq)].min()),
                         "ladder_min": float(dX[lad.B].min()),
                         "A": A_seed, "C": qc["C"]})
    rows = []
    for N in N_grid:
        if N in skipped:
            continue
        qual = [s for s in per_seed if s["d_fiber"] >= N - TOL]
        f = level_modulus(st, basepoint, N)
        rows.append(ModulusRow(float(N), f, min(s["M"] for s in qual),
                               max(0.0, f / (A + 1) - C), len(qual)))
    curve = ModulusCurve(rows, basepoint, {"window": (st.lo, st.hi), **st.fiber.meta},
                         {"A": A, "C": C, "skipped": skipped})
    ok = all(r.M_observed >= r.M_bound - tol for r in rows)
    trend = properness_verdict(curve)
    curve.verdict = "PASS" if ok and trend == "PASS" else ("INCONCLUSIVE" if trend == "INCONCLUSIVE" and ok else "FAIL")
    curve.constants.update({"bound_holds": ok, "trend": trend})
    return curve, per_seed


def properness_verdict(curve: ModulusCurve, column: str = "M_observed", slack: float = 1.0) -> str:
    """PASS when the column never drops by more than ``slack`` and its last third beats its first third."""
    vals = [getattr(r, column) for r in curve.rows]
    if len(vals) < 3:
        return "INCONCLUSIVE"
    mono = all(b >= a - slack - TOL for a, b in zip(vals, vals[1:]))
    k = max(1, len(vals) // 3)
    grows = np.mean(vals[-k:]) > np.mean(vals[:k]) + TOL
    return "PASS" if mono and grows else "FAIL"


def boundary_map_sample(st: SpaceTree, pairs) -> list:
    """Per level-0 pair: deepest level reached and midpoint drift of the total geodesic."""
    out = []
    for u, v in pairs:
        a, b = int(st.vid(u, 0)), int(st.vid(v, 0))
        mu = st.total.shortest_path(a, b)
        lam = st.fiber.shortest_path(int(u), int(v))
        levels = st.level_of(np.asarray(mu.vertex_seq))
        mid_mu = _midpoint(st.total, mu)
        mid_lam = int(st.vid(_midpoint(st.fiber, lam), 0))
        out.append({"u": int(u), "v": int(v), "max_level": int(levels.max()),
                    "min_level": int(levels.min()), "length": mu.length,
                    "fiber_length": lam.length,
                    "midpoint_drift": st.total.distance(mid_mu, mid_lam)})
    return out


def _midpoint(g: MetricGraph, path: PathInGraph) -> int:
    seq = path.vertex_seq
    t = 0.0
    for a, b in zip(seq, seq[1:]):
        if t >= path.length / 2 - TOL:
            return a
        t += g.edge_length(a, b)
    return seq[-1]


# ---------------------------------------------------------------------------
# punctured case

def horoball_chord_bound(ts: TruncatedSpace, h: int, basepoint: int, u: int, v: int) -> float:
    """Least distance from the basepoint to the full-graph geodesic [u, v] through horoball h."""
    sphere = ts.system[h].horosphere
    for w in (u, v):
        if w not in sphere:
            raise ContractError(f"vertex {w} is not on the horosphere of horoball {h}")
    chord = ts.full.shortest_path(u, v)
    return float(ts.full.row(basepoint)[list(chord.vertex_seq)].min())


@dataclass
class PuncturedRunRecord:
    n: float
    seed: tuple
    m_n: float
    ray_C: float
    far1_min: float
    far1_bound: float
    retraction_C0: float
    ambient_K: float
    farb: dict
    far2_ok: bool
    far2_violations: int
    beta_b_min: float
    beta_c_min: float
    f_n: float
    M_observed: float
    backtrack_diagnostics: int
    stages: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        d = asdict(self)
        d.pop("stages")
        d["farb_entry_max"] = self.farb["entry_max"]
        d["farb_exit_max"] = self.farb["exit_max"]
        d["farb_lone_max"] = max(self.farb["lone_depth_max"], self.farb["lone_travel_max"])
        d.pop("farb")
        d["seed"] = f"{self.seed[0]}-{self.seed[1]}"
        return d


@dataclass
class PuncturedModel:
    fiber: TruncatedSpace
    X: SpaceTree
    Xh: SpaceTree
    tsX: TruncatedSpace

    @classmethod
    def build(cls, fiber: TruncatedSpace, phi_full: np.ndarray, phi_trunc: np.ndarray, levels: int,
              policy="exhaustive"):
        """Truncated and full total spaces over the ray window [0, levels]."""
        qf = certify_qi(phi_full, fiber.full, fiber.full, policy)
        qt = certify_qi(phi_trunc, fiber.truncated, fiber.truncated, policy)
        Xh = assemble(fiber.full, qf, (0, levels))
        X = assemble(fiber.truncated, qt, (0, levels))
        tsX = total_truncated_space(Xh.total, fiber, levels + 1)
        _check_correspondence(X, tsX)
        return cls(fiber, X, Xh, tsX)


def _check_correspondence(X: SpaceTree, tsX: TruncatedSpace) -> None:
    # the truncated total space must be the full total space minus the chain interiors
    T = tsX.truncated
    if T.n != X.total.n:
        raise ContractError("truncated total space and total of truncated fibers differ in size")
    e1 = set(zip(T.edge_u.tolist(), T.edge_v.tolist()))
    e2 = set(zip(X.total.edge_u.tolist(), X.total.edge_v.tolist()))
    if e1 != e2:
        raise ContractError(f"truncated total spaces disagree on {len(e1 ^ e2)} edges")


def _dedupe(seq):
    out = [int(seq[0])]
    for v in seq[1:]:
        if int(v) != out[-1]:
            out.append(int(v))
    return out


def _check_ends(stage: str, seq, a: int, b: int, stages: dict):
    ok = int(seq[0]) == a and int(seq[-1]) == b
    stages[stage] = ok
    if not ok:
        raise ContractError(f"stage {stage} moved the endpoints ({seq[0]}, {seq[-1]}) != ({a}, {b})")


def run_punctured_seed(model: PuncturedModel, lam_h: PathInGraph, p: int, n: float,
                       rng: np.random.Generator) -> PuncturedRunRecord:
    """All stages of the punctured pipeline for one full-fiber geodesic ``lam_h``."""
    ts, X, Xh, tsX = model.fiber, model.X, model.Xh, model.tsX
    stages = {}
    lam = horo_ambient(ts, lam_h)
    _check_ends("lambda", [ts.to_full[v] for v in (lam.path.start, lam.path.end)],
                lam_h.start, lam_h.end, stages)
    lad = build_ladder(X, lam, "horo_ambient", ts)
    split = split_b_c(lad)
    p_t = int(X.vid(ts.to_trunc[p], 0))
    p_h = int(Xh.vid(p, 0))
    dXp = X.total.row(p_t)
    # rays from every off-horocycle ladder vertex; far1 on every such vertex
    ray_C, far1_min = 0.0, np.inf
    bb = sorted(split.Bb)
    for x in bb:
        if X.level_of(x) == 0:
            continue
        _, audit = build_ray(lad, x, split)
        ray_C = max(ray_C, audit["C"])
    for x in bb:
        far1_min = min(far1_min, float(dXp[x]))
    far1_bound = (n - ray_C) / (ray_C + 1)
    m_n = far1_bound - ray_C
    # beta^h and its horo-ambient version in the truncated total space
    a_h, b_h = int(Xh.vid(lam_h.start, 0)), int(Xh.vid(lam_h.end, 0))
    beta_h = Xh.total.shortest_path(a_h, b_h)
    beta0 = horo_ambient(tsX, beta_h)
    a_t, b_t = int(tsX.to_trunc[a_h]), int(tsX.to_trunc[b_h])
    _check_ends("beta_amb0", beta0.path.vertex_seq, a_t, b_t, stages)
    amb_K = certify_ambient(tsX, beta0, rng).K
    beta_amb = _dedupe(lad.pi[list(beta0.path.vertex_seq)])
    _check_ends("beta_amb", beta_amb, a_t, b_t, stages)
    # project to eta plus its horoballs, reconnect, remove trivial backtracks
    eta = list(beta_h.vertex_seq)
    target = set(eta)
    for h in {int(tsX.system.owner[v]) for v in eta} - {-1}:
        target |= tsX.system[h].members
    _, nearest = Xh.total.distance_to_set(target, return_nearest=True)
    dots = _dedupe(nearest[tsX.to_full[beta_amb]])
    _check_ends("beta1_dots", dots, a_h, b_h, stages)
    seq = [dots[0]]
    for u, v in zip(dots, dots[1:]):
        seq.extend(Xh.total.shortest_path(u, v).vertex_seq[1:])
    beta1 = Xh.total.make_path(seq)
    beta, diag = remove_backtracking(beta1, tsX, space="full")
    _check_ends("beta", beta.vertex_seq, a_h, b_h, stages)
    farb = compare_patterns(extract_pattern(tsX, beta), extract_pattern(tsX, beta_h), Xh.total, ts=tsX)
    # far2 on beta^h
    dh = Xh.total.row(p_h)
    bh = np.asarray(beta_h.vertex_seq)
    inside = tsX.system.interior_mask[bh]
    viol = int(np.sum(~inside & (dh[bh] < m_n - TOL)))
    # beta^b and beta^c minima
    own = tsX.system.owner
    bseq = np.asarray(beta.vertex_seq)
    off = bseq[own[bseq] < 0]
    beta_b_min = float(dh[off].min()) if len(off) else np.inf
    beta_c_min = np.inf
    for rec in extract_pattern(tsX, beta).records:
        if rec.entry != rec.exit:
            beta_c_min = min(beta_c_min, horoball_chord_bound(tsX, rec.horoball, p_h, rec.entry, rec.exit))
    f_n = min(beta_b_min, beta_c_min)
    ret = measure_retraction(lad, ("sampled", 2000), rng)
    return PuncturedRunRecord(
        n=float(n), seed=(int(lam_h.start), int(lam_h.end)), m_n=float(m_n), ray_C=ray_C,
        far1_min=float(far1_min), far1_bound=float(far1_bound), retraction_C0=ret.C0,
        ambient_K=amb_K, farb=farb, far2_ok=viol == 0, far2_violations=viol,
        beta_b_min=beta_b_min, beta_c_min=float(beta_c_min), f_n=float(f_n),
        M_observed=float(dh[bh].min()), backtrack_diagnostics=len(diag), stages=stages)


def ct_modulus_punctured(model: PuncturedModel, basepoint: int, n_grid, seeds_per_n: int = 4,
                         rng: np.random.Generator | None = None) -> tuple[ModulusCurve, list]:
    """Punctured pipeline over ``n_grid``; seeds are full-fiber geodesics avoiding the n-ball.

    The n-ball is taken in the full total space, so every seed vertex is at
    total distance at least n from the basepoint.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    ts = model.fiber
    if ts.system.interior_mask[basepoint]:
        raise ContractError("basepoint lies inside a horoball")
    Xh = model.Xh
    dist0 = Xh.total.row(int(Xh.vid(basepoint, 0)))[Xh.vid(np.arange(ts.full.n), 0)]
    ends = np.flatnonzero(~ts.system.interior_mask)
    ends = ends[dist0[ends] >= np.quantile(dist0[ends], 0.8)]
    records, rows = [], []
    for n in n_grid:
        seeds = sample_seeds(ts.full, basepoint, n, seeds_per_n, rng, endpoints=ends, dist_p=dist0)
        recs = [run_punctured_seed(model, lam, basepoint, n, rng) for lam in seeds]
        records.extend(recs)
        if recs:
            rows.append(ModulusRow(float(n), min(r.f_n for r in recs),
                                   min(r.M_observed for r in recs),
                                   max(0.0, max(r.m_n for r in recs)), len(recs)))
    curve = ModulusCurve(rows, basepoint, {"window": (Xh.lo, Xh.hi), **ts.meta})
    far2 = all(r.far2_ok for r in records)
    bb = all(r.beta_b_min >= r.m_n - TOL for r in records)
    far1 = all(r.far1_min >= r.far1_bound - TOL for r in records)
    trend = properness_verdict(curve, column="f")
    curve.constants = {"ray_C": max((r.ray_C for r in records), default=0.0),
                       "far1": far1, "far2": far2, "beta_b_bound": bb, "trend": trend,
                       "stages_ok": all(all(r.stages.values()) for r in records)}
    curve.verdict = "PASS" if far1 and far2 and bb and trend == "PASS" else "FAIL"
    return curve, records
