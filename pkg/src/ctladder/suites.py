"""Measurement suites shared by the command line runner and the acceptance tests.

Each suite returns plain dictionaries of measured constants plus a verdict,
so the caller can write them to a report or compare them with a ledger.
"""

from __future__ import annotations

import itertools

import numpy as np

from ctladder.horoball_geom import (certify_ambient, compare_patterns, extract_pattern, horo_ambient,
                                    neighborhood_check, remove_backtracking)
from ctladder.ladder import build_ladder, descent_constant, measure_quasiconvexity, measure_retraction, vertical_descent
from ctladder.metric_graph import TOL, MetricGraph
from ctladder.models import TruncatedSpace
from ctladder.quasi import (QIMap, check_order_gromov, check_projection_lipschitz, check_tripod_concat,
                            npp_commute_sweep)
from ctladder.tree_of_spaces import SpaceTree

DELTA_EXHAUSTIVE_MAX = 2000


def model_params(g: MetricGraph) -> tuple[str, str]:
    """(model name, canonical parameter string) used as the first two parts of a ledger key."""
    meta = dict(g.meta)
    name = str(meta.pop("generator", "graph"))
    params = ",".join(f"{k}={meta[k]:g}" if isinstance(meta[k], (int, float)) else f"{k}={meta[k]}"
                      for k in sorted(meta) if isinstance(meta[k], (int, float, str)))
    return name, params


def vertex_pairs(n: int, budget: int, rng: np.random.Generator):
    """All unordered pairs when there are at most ``budget``, else ``budget`` distinct random ones."""
    total = n * (n - 1) // 2
    if total <= budget:
        return list(itertools.combinations(range(n), 2)), True
    seen = set()
    while len(seen) < budget:
        a, b = (int(x) for x in rng.integers(0, n, size=2))
        if a != b:
            seen.add((min(a, b), max(a, b)))
    return sorted(seen), False


def lemma_suite(g: MetricGraph, rng: np.random.Generator, tol: float | None = None,
                pair_budget: int = 20000, tripod_geodesics: int = 200, tripod_points: int = 8) -> dict:
    """Projection, tripod and Gromov-product checks on one fiber.

    Projection displacement is checked on the geodesic of every vertex pair
    when there are at most ``pair_budget`` pairs (a random sample otherwise).
    Tripods ``[x, proj x] + [proj x, z]`` are measured on a subset of those
    geodesics; for each one the Gromov product at the junction and at a random
    interior point is recorded.
    """
    unit = bool(np.all(np.abs(g.edge_len - 1.0) <= TOL))
    tol = (1e-6 if unit else float(g.edge_len.max())) if tol is None else tol
    exhaustive_delta = g.n <= DELTA_EXHAUSTIVE_MAX
    delta = g.estimate_delta(budget=None if exhaustive_delta else 10**6, rng=rng)
    pairs, exhaustive = vertex_pairs(g.n, pair_budget, rng)
    proj = {"max_displacement": 0.0, "witness": ()}
    for a, b in pairs:
        r = check_projection_lipschitz(g, g.shortest_path(a, b), delta, tol)
        if r["max_displacement"] > proj["max_displacement"]:
            proj = r
    bound = 4 * delta.value + 1
    proj_ok = proj["max_displacement"] <= bound + tol
    idx = rng.permutation(len(pairs))[:tripod_geodesics]
    tri_K, tri_eps, gromov, witness = 1.0, 0.0, 0.0, ()
    for i in idx.tolist():
        mu = g.shortest_path(*pairs[i])
        for x in rng.choice(g.n, size=min(tripod_points, g.n), replace=False).tolist():
            cert = check_tripod_concat(g, x, mu)
            tri_K, tri_eps = max(tri_K, cert.K), max(tri_eps, cert.eps)
            seq = list(cert.path.vertex_seq)
            y = g.nearest_point_projection(x, mu)
            triples = [(seq[0], y, seq[-1])]
            if len(seq) >= 3:
                k = sorted(rng.choice(len(seq), size=3, replace=False).tolist())
                triples.append(tuple(seq[j] for j in k))
            for p, q, r in triples:
                gp = check_order_gromov(g, cert, p, q, r)
                if gp > gromov:
                    gromov, witness = gp, (p, q, r)
    constants = {"delta": delta.value, "projection_displacement": proj["max_displacement"],
                 "tripod_K": tri_K, "tripod_eps": tri_eps, "order_gromov": gromov}
    return {"constants": constants, "projection_pass": bool(proj_ok), "projection_bound": bound,
            "tolerance": tol, "delta_exhaustive": exhaustive_delta, "pairs_exhaustive": exhaustive,
            "geodesics": len(pairs), "witness": {"projection": proj["witness"], "order_gromov": witness}}


def npp_suite(phi: QIMap, rng: np.random.Generator, pair_budget: int = 2000) -> dict:
    pairs, exhaustive = vertex_pairs(phi.source.n, pair_budget, rng)
    r = npp_commute_sweep(phi, pairs)
    r["exhaustive"] = exhaustive
    return r


def ladder_seeds(st: SpaceTree, count: int, rng: np.random.Generator, min_length: float = 2.0):
    """Distinct level-0 geodesics of length at least ``min_length`` with random endpoints."""
    g = st.fiber
    out, seen = [], set()
    for _ in range(50 * count):
        if len(out) == count:
            break
        a, b = (int(x) for x in rng.integers(0, g.n, size=2))
        key = (min(a, b), max(a, b))
        if a == b or key in seen or g.distance(a, b) < min_length - TOL:
            continue
        seen.add(key)
        out.append(g.shortest_path(*key))
    return out


def ladder_suite(st: SpaceTree, seeds, rng: np.random.Generator, retraction_policy="exhaustive",
                 qc_samples: int = 10) -> dict:
    """Retraction and quasiconvexity constants over a list of seeds, with idempotence checks."""
    rows = []
    for lam in seeds:
        lad = build_ladder(st, lam)
        ret = measure_retraction(lad, retraction_policy, rng)
        qc = measure_quasiconvexity(lad, qc_samples, rng)
        pi = lad.pi
        rows.append({"start": lam.start, "end": lam.end, "ladder_size": len(lad.B), "C0": ret.C0,
                     "C0_a": ret.case_max["a"], "C0_b": ret.case_max["b"], "C0_c": ret.case_max["c"],
                     "C": qc["C"], "dotted_K": qc["dotted_K"], "dotted_eps": qc["dotted_eps"],
                     "idempotent": bool(np.array_equal(pi[pi], pi)),
                     "fixes_ladder": bool(np.array_equal(pi[lad.B], lad.B))})
    return {"rows": rows,
            "C0": max((r["C0"] for r in rows), default=0.0),
            "C": max((r["C"] for r in rows), default=0.0),
            "idempotent": all(r["idempotent"] for r in rows),
            "fixes_ladder": all(r["fixes_ladder"] for r in rows)}


def descent_suite(st: SpaceTree, seeds) -> dict:
    """Per-seed descent constant A and the check d_X(a, level-0 rung) <= A * |level| on every ladder vertex."""
    rows = []
    for lam in seeds:
        lad = build_ladder(st, lam)
        A, _ = descent_constant(lad)
        D, where = lad.table()
        base = [where[int(st.vid(y, 0))] for y in lam.vertex_seq]
        worst, ok = 0.0, True
        for v in lad.B.tolist():
            lev = abs(int(st.level_of(v)))
            if lev == 0:
                continue
            _, audit = vertical_descent(lad, v)
            d0 = float(D[where[v], base].min())
            worst = max(worst, d0 / lev)
            ok &= d0 <= A * lev + TOL and audit["distance"] <= audit["bound"] + TOL
        rows.append({"start": lam.start, "end": lam.end, "A": A, "worst_ratio": worst, "bound_holds": bool(ok)})
    As = [r["A"] for r in rows if r["A"] > 0]
    spread = max(As) / min(As) if As else 1.0
    return {"rows": rows, "A": max((r["A"] for r in rows), default=0.0), "spread": spread,
            "bound_holds": all(r["bound_holds"] for r in rows)}


def crossing_pairs(ts: TruncatedSpace, count: int, rng: np.random.Generator, attempts: int = 100):
    """Distinct non-interior endpoint pairs whose full geodesic enters some horoball interior."""
    keep = np.flatnonzero(~ts.system.interior_mask)
    out, seen = [], set()
    for _ in range(attempts * count):
        if len(out) == count:
            break
        a, b = sorted(int(x) for x in rng.choice(keep, size=2, replace=False))
        if (a, b) in seen:
            continue
        seen.add((a, b))
        lam = ts.full.shortest_path(a, b)
        if ts.system.interior_mask[list(lam.vertex_seq)].any():
            out.append(lam)
    return out


def horoball_suite(ts: TruncatedSpace, rng: np.random.Generator, count: int = 50) -> dict:
    """Horo-ambient certificates, neighbourhood radius and pattern agreement on crossing geodesics.

    For each full geodesic ``lam`` that crosses a horoball, ``hp`` is its
    horo-ambient replacement and ``tg`` the geodesic of the truncated graph
    with the same endpoints.  R is the largest distance from ``tg`` to ``lam``
    plus the horoballs it meets; the pattern maxima compare the entry and exit
    points of ``tg`` and ``hp`` on shared horoballs, skipping horoballs that
    contain an endpoint.
    """
    rows = []
    for lam in crossing_pairs(ts, count, rng):
        hp = horo_ambient(ts, lam)
        cert = certify_ambient(ts, hp, rng)
        tg = ts.truncated.shortest_path(int(ts.to_trunc[lam.start]), int(ts.to_trunc[lam.end]))
        tg_full = ts.full.make_path([int(ts.to_full[v]) for v in tg.vertex_seq])
        cmp = compare_patterns(extract_pattern(ts, tg_full), extract_pattern(ts, hp), ts.full, ts=ts)
        once = remove_backtracking(hp, ts)
        twice = remove_backtracking(once, ts)
        plain, _ = remove_backtracking(lam, ts, space="full")
        plain2, _ = remove_backtracking(plain, ts, space="full")
        rows.append({"start": lam.start, "end": lam.end, "horoballs": len(hp.segments),
                     "ambient_K": cert.K, "R": neighborhood_check(ts, tg_full, lam),
                     "entry_max": cmp["entry_max"], "exit_max": cmp["exit_max"], "shared": cmp["shared"],
                     "excluded": len(cmp["excluded"]),
                     "idempotent": once.path.vertex_seq == twice.path.vertex_seq
                     and plain.vertex_seq == plain2.vertex_seq})
    return {"rows": rows,
            "ambient_K": max((r["ambient_K"] for r in rows), default=1.0),
            "R": max((r["R"] for r in rows), default=0.0),
            "farb_entry_exit": max((max(r["entry_max"], r["exit_max"]) for r in rows), default=0.0),
            "idempotent": all(r["idempotent"] for r in rows)}
