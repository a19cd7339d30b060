import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctladder.metric_graph import ContractError, GraphInputError
from ctladder.models import (build_cayley_ball, build_h2_net, build_tree, build_truncated_h2,
                             disk_distance, disk_to_halfplane, distortion_report, halfplane_to_disk,
                             horospherical_path, reduce_word, word_index)


@pytest.fixture(scope="module")
def small_ts():
    return build_truncated_h2(3, 0.3, 8, 0.4)


@pytest.mark.parametrize("valence,radius", [(3, 0), (3, 1), (3, 4), (4, 3)])
def test_tree_counts(valence, radius):
    t = build_tree(valence, radius)
    # 1 + v (1 + (v-1) + ... + (v-1)^(R-1))
    expect = 1 + sum(valence * (valence - 1) ** k for k in range(radius))
    assert t.n == expect
    assert t.num_edges == t.n - 1
    assert t.diameter() == 2 * radius


@pytest.mark.parametrize("radius", range(0, 7))
def test_cayley_ball_counts(radius):
    g = build_cayley_ball(2, radius)
    assert g.n == 1 + 2 * (3 ** radius - 1)
    if g.n < 200:
        assert g.estimate_delta().value == 0.0


def test_cayley_words_are_reduced_and_indexed():
    g = build_cayley_ball(2, 3)
    idx = word_index(g)
    assert all(reduce_word(w) == w for w in idx)
    assert g.distance(idx[""], idx["abA"]) == 3
    assert g.has_edge(idx["ab"], idx["abA"])


@given(st.text(alphabet="aAbB", max_size=12))
def test_reduce_word_is_idempotent_and_cancels(w):
    r = reduce_word(w)
    assert reduce_word(r) == r
    assert all(x != y.swapcase() for x, y in zip(r, r[1:]))


@given(st.complex_numbers(max_magnitude=0.95), st.complex_numbers(max_magnitude=0.95))
def test_disk_distance_matches_half_plane_formula(z, w):
    if abs(z) >= 0.95 or abs(w) >= 0.95:
        return
    a, b = disk_to_halfplane(z), disk_to_halfplane(w)
    ref = math.acosh(1 + abs(a - b) ** 2 / (2 * a.imag * b.imag))
    assert disk_distance(np.array(z), np.array(w)) == pytest.approx(ref, abs=1e-7)
    assert halfplane_to_disk(a) == pytest.approx(z)


def test_h2_net_edges_carry_true_lengths_and_distortion_is_small():
    g = build_h2_net(2, 0.4)
    z = g.coords[:, 0] + 1j * g.coords[:, 1]
    for u, v, length in list(g.edges())[:50]:
        assert length == pytest.approx(float(disk_distance(z[u], z[v])))
    # path distance never undercuts the true distance
    D = g.distance_matrix()
    true = disk_distance(z[:, None], z[None, :])
    assert np.all(D >= true - 1e-9)
    rep = distortion_report(g, n_pairs=50)
    assert 1.0 <= rep["max_ratio"] < 1.3


def test_h2_net_distortion_stable_under_refinement():
    coarse = distortion_report(build_h2_net(3, 0.3))
    fine = distortion_report(build_h2_net(3, 0.15))
    assert fine["eps_mesh"] <= 2 * coarse["eps_mesh"]


def test_truncated_space_layers(small_ts):
    ts = small_ts
    sysm = ts.system
    g = ts.full
    assert len(sysm) == 8
    for h in sysm.horoballs:
        assert h.interior and h.horosphere
        assert not (h.interior & h.horosphere)
        for v in h.horosphere:
            assert any(int(w) in h.interior for w in g.neighbors(v))
    # interiors only touch their own closure
    own = sysm.owner
    for u, v, _ in g.edges():
        if sysm.interior_mask[u]:
            assert own[v] == own[u]
    assert ts.truncated.n == int((~sysm.interior_mask).sum())
    assert np.array_equal(ts.to_trunc[ts.to_full], np.arange(ts.truncated.n))


def test_horospherical_path_stays_on_horosphere(small_ts):
    ts = small_ts
    h = 0
    sphere = ts.horosphere_t(h)
    p = horospherical_path(ts, h, int(sphere[0]), int(sphere[-1]))
    assert set(p.vertex_seq) <= set(sphere.tolist())
    assert p.length >= ts.truncated.distance(int(sphere[0]), int(sphere[-1])) - 1e-9
    outside = int(np.flatnonzero(ts.owner_t < 0)[0])
    with pytest.raises(ContractError):
        horospherical_path(ts, h, outside, int(sphere[0]))


def test_zero_cusp_density_gives_no_horoballs():
    ts = build_truncated_h2(2, 0.4, 0, 0.4)
    assert len(ts.system) == 0 and ts.truncated.n == ts.full.n


def test_generator_input_errors():
    with pytest.raises(GraphInputError):
        build_tree(1, 3)
    with pytest.raises(GraphInputError):
        build_cayley_ball(0, 2)
    with pytest.raises(GraphInputError):
        build_h2_net(0, 0.3)
    with pytest.raises(GraphInputError):
        build_truncated_h2(2, 0.3, 4, 1.5)
