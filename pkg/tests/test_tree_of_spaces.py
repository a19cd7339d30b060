import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctladder.maps import free_group_map_on_ball, identity_map, tree_automorphism
from ctladder.metric_graph import ContractError, GraphInputError
from ctladder.models import build_cayley_ball, build_tree
from ctladder.quasi import certify_qi
from ctladder.tree_of_spaces import (admissible_approximation, assemble, dump, level_modulus,
                                     proper_embedding_profile)


@pytest.fixture(scope="module")
def tree():
    return build_tree(3, 3)


@pytest.fixture(scope="module")
def product(tree):
    return assemble(tree, certify_qi(identity_map(tree), tree, tree), (-2, 2))


@pytest.fixture(scope="module")
def cayley_line():
    c = build_cayley_ball(2, 3)
    f, _ = free_group_map_on_ball(c)
    return assemble(c, certify_qi(f, c, c), (-1, 2))


def test_ids_and_vertical_edges(product, tree):
    st_ = product
    assert st_.total.n == 5 * tree.n
    assert st_.vid(3, -2) == 3 and st_.vid(3, 2) == 4 * tree.n + 3
    assert st_.level_of(st_.vid(7, 1)) == 1 and st_.fiber_of(st_.vid(7, 1)) == 7
    # up-edges for j = 0, 1 and down-edges for j = 0, -1
    assert len(st_.vertical_edges()) == 4 * tree.n
    assert st_.total.num_edges == 5 * tree.num_edges + 4 * tree.n
    with pytest.raises(GraphInputError):
        st_.vid(0, 3)


def test_product_distance_is_l1(product, tree):
    D = tree.distance_matrix()
    X = product.total
    for y1, y2, j1, j2 in [(0, 5, -2, 2), (3, 20, 0, 1), (21, 21, -1, 2)]:
        assert X.distance(product.vid(y1, j1), product.vid(y2, j2)) == D[y1, y2] + abs(j1 - j2)


def test_down_edges_use_coarse_inverse(cayley_line):
    st_ = cayley_line
    kinds = {k for _, _, k in st_.vertical_edges()}
    assert kinds == {"up", "down"}
    psi = st_.psi.map
    for lo, hi, kind in st_.vertical_edges():
        if kind == "down":
            assert psi[st_.fiber_of(hi)] == st_.fiber_of(lo)
            assert st_.level_of(lo) == st_.level_of(hi) - 1 <= -1


@given(st.integers(0, 5 * 22 - 1), st.integers(0, 5 * 22 - 1))
def test_level_distance_bound(a, b):
    t = build_tree(3, 3)
    s = assemble(t, certify_qi(identity_map(t), t, t), (-2, 2))
    assert s.total.distance(a, b) >= abs(s.level_of(a) - s.level_of(b))


def test_assemble_rejects_bad_input(tree):
    q = certify_qi(identity_map(tree), tree, tree, ("sampled", 10), np.random.default_rng(0))
    with pytest.raises(ContractError):
        assemble(tree, q, (0, 2))
    good = certify_qi(identity_map(tree), tree, tree)
    with pytest.raises(GraphInputError):
        assemble(tree, good, (1, 3))


def test_level_modulus_brute_force(product, tree):
    D = tree.distance_matrix()
    X = product.total
    for N in range(0, 5):
        far = [y for y in range(tree.n) if D[0, y] >= N]
        expect = min(X.distance(product.vid(0, 0), product.vid(y, 0)) for y in far) if far else np.inf
        assert level_modulus(product, 0, N) == expect


def test_proper_embedding_profile_product(product):
    prof = proper_embedding_profile(product, 0, [0, 1, 2, 3])
    # level 0 is isometrically embedded in the product
    assert prof == [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]


def test_admissible_decomposition_reproduces_path(cayley_line):
    st_ = cayley_line
    a, b = st_.vid(5, -1), st_.vid(40, 2)
    p = st_.total.shortest_path(a, b)
    adm = admissible_approximation(st_, p)
    assert adm.path.vertex_seq == p.vertex_seq and adm.deviation == 0.0
    assert adm.hops >= 3
    assert sum(piece[2].length for piece in adm.pieces if piece[0] == "h") + adm.hops == pytest.approx(p.length)


def test_dump_is_deterministic(tree):
    f = tree_automorphism(tree, np.random.default_rng(1))
    s1 = assemble(tree, certify_qi(f, tree, tree), (0, 2))
    s2 = assemble(tree, certify_qi(f, tree, tree), (0, 2))
    assert dump(s1) == dump(s2)
    assert "# phi 0 0" in dump(s1)
