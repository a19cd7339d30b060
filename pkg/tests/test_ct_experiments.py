import numpy as np
import pytest

from ctladder.ct_experiments import (ModulusCurve, ModulusRow, PuncturedModel, boundary_map_sample,
                                     ct_modulus_closed, ct_modulus_punctured, horoball_chord_bound,
                                     properness_verdict, sample_seeds)
from ctladder.maps import identity_map, invariant_subsystem, mobius_map, tree_automorphism
from ctladder.metric_graph import ContractError, GraphInputError
from ctladder.models import build_tree, build_truncated_h2
from ctladder.quasi import certify_qi
from ctladder.tree_of_spaces import assemble


def curve(values):
    return ModulusCurve([ModulusRow(float(i), 0.0, v, 0.0, 1) for i, v in enumerate(values)], 0, {})


@pytest.mark.parametrize("values,verdict", [
    ([1, 2, 3, 4], "PASS"),
    ([1, 3, 2.5, 5], "PASS"),  # a dip within the slack
    ([2, 2, 2, 2], "FAIL"),
    ([5, 3, 1, 0], "FAIL"),
    ([1, 2], "INCONCLUSIVE"),
])
def test_properness_verdict(values, verdict):
    assert properness_verdict(curve(values)) == verdict


@pytest.fixture(scope="module")
def tree_product():
    t = build_tree(3, 6)
    return assemble(t, certify_qi(identity_map(t), t, t), (0, 3))


def test_sample_seeds_avoid_ball(tree_product):
    t = tree_product.fiber
    d = t.row(0)
    seeds = sample_seeds(t, 0, 3, 6, np.random.default_rng(1))
    assert len(seeds) == 6
    assert len({(s.start, s.end) for s in seeds}) == 6
    for lam in seeds:
        assert d[list(lam.vertex_seq)].min() >= 3
    assert sample_seeds(t, 0, 100, 3, np.random.default_rng(1)) == []


def test_closed_identity_product_modulus(tree_product):
    st_ = tree_product
    c, per_seed = ct_modulus_closed(st_, 0, [1, 2, 3, 4, 5], 4, np.random.default_rng(0))
    # level 0 is a convex copy of the tree, so the total geodesic never leaves it
    for r in c.rows:
        assert r.M_observed >= r.N
        assert r.f == r.N
        assert r.M_observed >= r.M_bound
    assert c.constants["A"] == 1.0 and c.constants["C"] == 0.0
    assert c.verdict == "PASS"
    assert all(s["M"] == s["d_fiber"] for s in per_seed)


def test_closed_modulus_is_deterministic(tree_product):
    a = ct_modulus_closed(tree_product, 0, [1, 2, 3], 3, np.random.default_rng(4))[0]
    b = ct_modulus_closed(tree_product, 0, [1, 2, 3], 3, np.random.default_rng(4))[0]
    assert a.table() == b.table()


def test_boundary_map_sample_product(tree_product):
    st_ = tree_product
    out = boundary_map_sample(st_, [(10, 180), (5, 5), (100, 150)])
    for rec in out:
        assert rec["min_level"] == 0 and rec["max_level"] == 0
        assert rec["length"] == rec["fiber_length"]
        assert rec["midpoint_drift"] == 0.0
    assert out == boundary_map_sample(st_, [(10, 180), (5, 5), (100, 150)])


def test_closed_automorphism_bound_holds():
    t = build_tree(3, 6)
    st_ = assemble(t, certify_qi(tree_automorphism(t, np.random.default_rng(2)), t, t), (0, 3))
    c, _ = ct_modulus_closed(st_, 0, [1, 2, 3, 4, 5, 6], 4, np.random.default_rng(0))
    assert c.constants["bound_holds"]
    assert all(r.M_observed >= r.M_bound - 1.0 for r in c.rows)


@pytest.fixture(scope="module")
def small_fiber():
    return invariant_subsystem(build_truncated_h2(4, 0.4, 16, 0.4))


def test_mobius_rotation_permutes_horoballs(small_fiber):
    ts = small_fiber
    m = mobius_map(ts)
    hmap = m.horoball_map
    # w -> -1/w is an involution, so the horoball permutation is too
    assert sorted(hmap.tolist()) == list(range(len(ts.system)))
    assert np.array_equal(hmap[hmap], np.arange(len(hmap)))
    sysm = ts.system
    for v in np.flatnonzero(sysm.interior_mask)[:200]:
        w = m.full[v]
        assert sysm.interior_mask[w] and sysm.owner[w] == hmap[sysm.owner[v]]
    assert np.array_equal(ts.to_full[m.trunc], m.full[ts.to_full])
    assert m.unmatched == 0
    with pytest.raises(GraphInputError):
        mobius_map(ts, (1, 1, 1, 1))


def test_invariant_subsystem_drops_unmatched_horoballs():
    raw = build_truncated_h2(3, 0.3, 8, 0.4)
    inv = invariant_subsystem(raw)
    assert len(inv.system) + inv.meta["dropped_noninvariant"] == len(raw.system)
    assert np.all(mobius_map(inv).horoball_map >= 0)
    assert invariant_subsystem(inv).meta["dropped_noninvariant"] == 0


def test_horoball_chord_bound(small_fiber):
    ts = small_fiber
    sphere = sorted(ts.system[0].horosphere)
    u, v = sphere[0], sphere[-1]
    assert horoball_chord_bound(ts, 0, 5, u, u) == ts.full.distance(5, u)
    chord = ts.full.shortest_path(u, v)
    assert horoball_chord_bound(ts, 0, 5, u, v) == min(ts.full.distance(5, w) for w in chord.vertex_seq)
    off = int(np.flatnonzero(ts.system.owner < 0)[0])
    with pytest.raises(ContractError):
        horoball_chord_bound(ts, 0, 5, off, u)


@pytest.fixture(scope="module")
def punctured(small_fiber):
    m = mobius_map(small_fiber)
    model = PuncturedModel.build(small_fiber, m.full, m.trunc, 2)
    return model, ct_modulus_punctured(model, 0, [1, 2, 3], 2, np.random.default_rng(0))


def test_punctured_run_bookkeeping(punctured):
    model, (c, records) = punctured
    assert c.verdict == "PASS" and c.constants["stages_ok"]
    assert len(records) == 6
    for r in records:
        assert r.f_n == min(r.beta_b_min, r.beta_c_min)
        assert r.beta_b_min >= r.m_n
        assert r.far1_min >= r.far1_bound
        assert r.far2_ok and r.ambient_K >= 1.0
        assert set(r.stages) == {"lambda", "beta_amb0", "beta_amb", "beta1_dots", "beta"}
    for row in c.rows:
        recs = [r for r in records if r.n == row.N]
        assert row.f == min(r.f_n for r in recs)
        assert row.M_bound == max(0.0, max(r.m_n for r in recs))


def test_punctured_rejects_interior_basepoint(punctured):
    model, _ = punctured
    inside = int(np.flatnonzero(model.fiber.system.interior_mask)[0])
    with pytest.raises(ContractError):
        ct_modulus_punctured(model, inside, [1], 1)
