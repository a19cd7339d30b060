import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctladder.horoball_geom import horo_ambient
from ctladder.ladder import (build_ladder, build_ray, descent_constant, dump, measure_quasiconvexity,
                             measure_retraction, retract, split_b_c, vertical_descent)
from ctladder.maps import free_group_map_on_ball, identity_map, tree_automorphism
from ctladder.metric_graph import ContractError
from ctladder.models import build_cayley_ball, build_tree, build_truncated_h2
from ctladder.quasi import certify_qi
from ctladder.tree_of_spaces import assemble
from oracles import ladder_retraction_brute


@pytest.fixture(scope="module")
def tree_product():
    t = build_tree(3, 4)
    return assemble(t, certify_qi(identity_map(t), t, t), (-2, 2))


@pytest.fixture(scope="module")
def cayley_space():
    c = build_cayley_ball(2, 4)
    f, _ = free_group_map_on_ball(c)
    return assemble(c, certify_qi(f, c, c), (-1, 3))


def test_product_ladder_is_flat(tree_product):
    st_ = tree_product
    lam = st_.fiber.shortest_path(10, 40)
    lad = build_ladder(st_, lam)
    for j, rung in lad.levels.items():
        assert rung.vertex_seq == lam.vertex_seq
    rep = measure_retraction(lad)
    # exhaustive over all fiber edges and hops: projection onto a tree geodesic is 1-Lipschitz
    assert rep.C0 == 1.0 and rep.policy == "exhaustive"
    assert rep.case_count["b"] == 2 * st_.n and rep.case_count["c"] == 2 * st_.n
    assert measure_quasiconvexity(lad, 5, np.random.default_rng(0))["C"] == 0.0
    assert descent_constant(lad)[0] == 1.0


def test_retraction_matches_brute_force(cayley_space):
    st_ = cayley_space
    lad = build_ladder(st_, st_.fiber.shortest_path(3, 100))
    D = st_.fiber.distance_matrix()
    for j, rung in lad.levels.items():
        expect = ladder_retraction_brute(D, list(rung.vertex_seq))
        got = st_.fiber_of(lad.pi[st_.vid(np.arange(st_.n), j)])
        assert list(got) == expect


@given(st.integers(0, 160), st.integers(0, 160))
def test_retraction_idempotent_and_fixes_ladder(a, b):
    c = build_cayley_ball(2, 4)
    f, _ = free_group_map_on_ball(c)
    s = assemble(c, certify_qi(f, c, c), (0, 2))
    lad = build_ladder(s, c.shortest_path(a, b))
    pi = lad.pi
    assert np.array_equal(pi[pi], pi)
    assert np.array_equal(pi[lad.B], lad.B)
    assert retract(lad, int(lad.B[0])) == lad.B[0]


def test_rungs_join_images_of_endpoints(cayley_space):
    st_ = cayley_space
    lad = build_ladder(st_, st_.fiber.shortest_path(5, 150))
    phi = st_.phi.map
    for j in range(0, st_.hi):
        lo, hi = lad.levels[j], lad.levels[j + 1]
        assert (hi.start, hi.end) == (phi[lo.start], phi[lo.end])
        assert hi.geodesic


def test_vertical_descent_audit(cayley_space):
    st_ = cayley_space
    lad = build_ladder(st_, st_.fiber.shortest_path(5, 150))
    A, _ = descent_constant(lad)
    D, where = lad.table()
    for v in lad.B.tolist():
        b, audit = vertical_descent(lad, v)
        assert st_.level_of(b) == 0
        assert audit["distance"] <= audit["bound"] + 1e-9
        assert max(audit["steps"], default=0.0) <= A + 1e-9
    off = int(np.setdiff1d(np.arange(st_.total.n), lad.B)[0])
    with pytest.raises(ContractError):
        vertical_descent(lad, off)


def test_geodesic_flavor_needs_geodesic_seed(tree_product):
    st_ = tree_product
    with pytest.raises(ContractError):
        build_ladder(st_, st_.fiber.make_path([1, 0, 2, 0, 3]))


@pytest.fixture(scope="module")
def truncated_space():
    ts = build_truncated_h2(3, 0.3, 8, 0.4)
    st_ = assemble(ts.truncated, certify_qi(identity_map(ts.truncated), ts.truncated, ts.truncated), (0, 2))
    return ts, st_


def crossing_seed(ts):
    # a full geodesic whose interior excursion forces a horosphere detour
    outside = np.flatnonzero(~ts.system.interior_mask)
    rng = np.random.default_rng(0)
    for _ in range(500):
        a, b = rng.choice(outside, size=2, replace=False)
        lam = ts.full.shortest_path(int(a), int(b))
        if ts.system.interior_mask[list(lam.vertex_seq)].any():
            return horo_ambient(ts, lam)
    raise AssertionError("no crossing geodesic found")


def test_horo_ambient_ladder_split_and_rays(truncated_space):
    ts, st_ = truncated_space
    seed = crossing_seed(ts)
    lad = build_ladder(st_, seed, "horo_ambient", ts)
    assert lad.segments[0]
    assert all(k >= 1.0 for k in lad.ambient_K.values())
    split = split_b_c(lad)
    assert split.Bb | split.Bc == set(lad.B.tolist())
    assert split.junctions <= split.Bb
    for x in sorted(split.Bb)[:10]:
        ray, audit = build_ray(lad, x, split)
        assert sorted(ray) == list(st_.levels)
        assert audit["bound_holds"]
    lone_c = sorted(split.Bc - split.Bb)
    if lone_c:
        with pytest.raises(ContractError):
            build_ray(lad, lone_c[0], split)


def test_horo_ambient_seed_must_match(truncated_space):
    ts, st_ = truncated_space
    seed = crossing_seed(ts)
    with pytest.raises(ContractError):
        build_ladder(st_, ts.truncated.shortest_path(seed.path.start, seed.path.end), "horo_ambient", ts)


def test_dump_lists_rungs(tree_product):
    lad = build_ladder(tree_product, tree_product.fiber.shortest_path(1, 2))
    text = dump(lad)
    assert text.count("\n") == 3 + 5


def test_automorphism_ladder_constants_small():
    t = build_tree(3, 5)
    f = tree_automorphism(t, np.random.default_rng(3))
    s = assemble(t, certify_qi(f, t, t), (0, 4))
    lad = build_ladder(s, t.shortest_path(30, 90))
    assert measure_retraction(lad).C0 <= 2.0
