import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctladder.horoball_geom import (IntersectionPattern, certify_ambient, compare_patterns, electric_distance,
                                    electric_rows, extract_pattern, horo_ambient, neighborhood_check,
                                    remove_backtracking)
from ctladder.metric_graph import ContractError, MetricGraph
from ctladder.models import HoroballSystem, TruncatedSpace, build_truncated_h2


@pytest.fixture(scope="module")
def ts():
    return build_truncated_h2(3, 0.3, 8, 0.4)


def outside(ts):
    return np.flatnonzero(~ts.system.interior_mask)


def crossing_geodesics(ts, count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    verts = outside(ts)
    while len(out) < count:
        a, b = rng.choice(verts, size=2, replace=False)
        lam = ts.full.shortest_path(int(a), int(b))
        if ts.system.interior_mask[list(lam.vertex_seq)].any():
            out.append(lam)
    return out


def test_horo_ambient_avoids_interiors_and_keeps_endpoints(ts):
    for lam in crossing_geodesics(ts, 10):
        hp = horo_ambient(ts, lam)
        full = [int(ts.to_full[v]) for v in hp.path.vertex_seq]
        assert not ts.system.interior_mask[full].any()
        assert (full[0], full[-1]) == (lam.start, lam.end)
        for h, entry, exit_, (first, last) in hp.segments:
            seg = hp.path.vertex_seq[first:last + 1]
            assert (seg[0], seg[-1]) == (entry, exit_)
            assert set(seg) <= set(ts.horosphere_t(h).tolist())
        assert np.isfinite(certify_ambient(ts, hp).K)


def test_horo_ambient_unchanged_without_horoballs(ts):
    verts = outside(ts)
    for a, b in itertools.combinations(verts[:40], 2):
        lam = ts.full.shortest_path(int(a), int(b))
        if not ts.system.interior_mask[list(lam.vertex_seq)].any():
            hp = horo_ambient(ts, lam)
            assert [int(ts.to_full[v]) for v in hp.path.vertex_seq] == list(lam.vertex_seq)
            assert hp.segments == []
            return
    pytest.fail("no horoball-free geodesic found")


def test_horo_ambient_rejects_interior_endpoint(ts):
    inside = int(np.flatnonzero(ts.system.interior_mask)[0])
    with pytest.raises(ContractError):
        horo_ambient(ts, ts.full.shortest_path(inside, int(outside(ts)[0])))


def test_certify_ambient_geodesic_and_backtrack(ts):
    g = ts.truncated
    assert certify_ambient(ts, g.shortest_path(0, 100)).K == 1.0
    u = 0
    v = int(g.neighbors(u)[0])
    back = g.make_path([u, v, u])
    cert = certify_ambient(ts, back)
    # L(beta) = 2|uv| and L(A) = 0 give ratio 2|uv|; K is that rounded up to the grid, at least 1
    L = 2 * g.edge_length(u, v)
    assert cert.max_ratio == pytest.approx(L)
    assert cert.K == pytest.approx(max(1.0, 0.1 * np.ceil(L / 0.1 - 1e-9)))
    assert cert.policy == "exhaustive"


def test_certify_ambient_unit_backtrack_oracle():
    # on a unit-length path graph embedded as a truncated space without horoballs: K = 2
    ts0 = build_truncated_h2(2, 0.4, 0, 0.4)
    g = MetricGraph(3, [(0, 1), (1, 2)])
    unit = TruncatedSpace(g, HoroballSystem([], 3))
    assert certify_ambient(unit, g.make_path([0, 1, 0])).K == 2.0
    assert certify_ambient(ts0, ts0.truncated.shortest_path(0, 5)).K == 1.0


@given(st.integers(0, 748), st.integers(0, 748))
def test_electric_never_exceeds_ordinary(u, v):
    ts_ = _cached()
    assert electric_distance(ts_, u, v) <= ts_.full.distance(u, v) + 1e-9


_TS = []


def _cached():
    if not _TS:
        _TS.append(build_truncated_h2(3, 0.3, 8, 0.4))
    return _TS[0]


def test_electric_zero_on_one_horosphere(ts):
    sphere = sorted(ts.system[0].horosphere)
    row = electric_rows(ts, [sphere[0]])[0]
    assert np.all(row[sphere] == 0.0)
    none = build_truncated_h2(2, 0.4, 0, 0.4)
    assert electric_distance(none, 0, 30) == pytest.approx(none.full.distance(0, 30))


def test_remove_backtracking_splices_trivial_return(ts):
    g = ts.truncated
    h = 0
    sphere = ts.horosphere_t(h)
    s = int(sphere[0])
    out = [int(w) for w in g.neighbors(s) if ts.owner_t[w] < 0]
    assert out
    w = out[0]
    # sphere -> outside -> back to the same sphere vertex
    path = g.make_path([w, s, w, s])
    hp = horo_ambient(ts, ts.full.shortest_path(int(ts.to_full[w]), int(ts.to_full[w])))
    hp.path = path
    cleaned = remove_backtracking(hp, ts)
    assert cleaned.path.length < path.length
    assert (cleaned.path.start, cleaned.path.end) == (path.start, path.end)
    again = remove_backtracking(cleaned, ts)
    assert again.path.vertex_seq == cleaned.path.vertex_seq


def test_remove_backtracking_idempotent_on_horo_ambient_paths(ts):
    for lam in crossing_geodesics(ts, 10, seed=3):
        hp = horo_ambient(ts, lam)
        once = remove_backtracking(hp, ts)
        twice = remove_backtracking(once, ts)
        assert once.path.vertex_seq == twice.path.vertex_seq
        assert once.path.length <= hp.path.length + 1e-12
        pat = extract_pattern(ts, once)
        if not once.diagnostics:
            ids = [r.horoball for r in pat.records]
            assert len(ids) == len(set(ids))


def independent_runs(ts, seq):
    runs, prev = 0, -1
    for v in seq:
        h = int(ts.system.owner[v])
        if h >= 0 and h != prev:
            runs += 1
        prev = h
    return runs


def test_pattern_records_match_independent_scan(ts):
    for lam in crossing_geodesics(ts, 15, seed=5):
        pat = extract_pattern(ts, lam)
        assert len(pat.records) == independent_runs(ts, lam.vertex_seq)
        firsts = [r.first for r in pat.records]
        assert firsts == sorted(firsts)
        for r in pat.records:
            assert r.first <= r.last and r.entered == (r.depth > 0)
        back = IntersectionPattern.from_json(pat.to_json(), pat.start, pat.end)
        assert back.records == pat.records


def test_compare_patterns_identity_and_ambient(ts):
    for lam in crossing_geodesics(ts, 5, seed=7):
        pat = extract_pattern(ts, lam)
        same = compare_patterns(pat, pat, ts.full, exclude_first_last=False)
        assert same["entry_max"] == same["exit_max"] == 0.0 and same["lone"] == 0
        hp = horo_ambient(ts, lam)
        amb = compare_patterns(pat, extract_pattern(ts, hp), ts.full, exclude_first_last=False)
        # detours start and end where the geodesic crosses the horosphere
        assert amb["entry_max"] == 0.0 and amb["exit_max"] == 0.0


def test_compare_disjoint_patterns_reports_lone_only(ts):
    a, b = crossing_geodesics(ts, 2, seed=11)
    pa, pb = extract_pattern(ts, a), extract_pattern(ts, b)
    ha = {r.horoball for r in pa.records}
    pb.records = [r for r in pb.records if r.horoball not in ha]
    rep = compare_patterns(pa, pb, ts.full, exclude_first_last=False)
    assert rep["shared"] == 0 and rep["entry_max"] == 0.0
    assert rep["lone"] == len(ha) + len({r.horoball for r in pb.records})


def test_neighborhood_check(ts):
    lam = crossing_geodesics(ts, 1, seed=13)[0]
    assert neighborhood_check(ts, lam, lam) == 0.0
    hp = horo_ambient(ts, lam)
    # the detours stay on horospheres of horoballs the geodesic meets
    assert neighborhood_check(ts, hp, lam) == 0.0
    other = ts.full.shortest_path(lam.start, int(outside(ts)[0]))
    with pytest.raises(ContractError):
        neighborhood_check(ts, other, lam)
