from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from losstopo import LandscapeGrid, UsageError, build_merge_tree, simplify, stable_manifolds
from losstopo.topology import filtration_rank, neighbor_table
from oracles import bfs_components, descent_sizes, ndimage_components, threshold_pairs

WELL = LandscapeGrid.from_array([0.0, 2.0, 1.0, 2.0, 0.0])

shapes = st.sampled_from([(7,), (30,), (5, 6), (8, 8), (3, 4, 5), (4, 4, 4)])


@st.composite
def grids(draw, max_level=None):
    shape = draw(shapes)
    if max_level is None:
        elements = st.floats(-10, 10, allow_nan=False, width=32)
    else:
        elements = st.integers(0, max_level).map(float)
    values = draw(arrays(np.float64, shape, elements=elements))
    return LandscapeGrid.from_array(values)


adjacencies = st.sampled_from(["axis", "full"])


def positive_pairs(bars):
    return Counter((p.birth, p.death) for p in bars.finite if p.persistence > 0)


def test_double_well_example():
    tree, bars = build_merge_tree(WELL)
    nodes = {n.id: n for n in tree.nodes}
    assert sorted(nodes[m].index for m in tree.minima) == [0, 2, 4]
    assert sorted(n.index for n in tree.nodes if n.kind == "saddle") == [1, 3]
    finite = sorted((p.min_index, p.saddle_index, p.persistence) for p in bars.finite)
    assert finite == [(2, 1, 1.0), (4, 3, 2.0)]
    (ess,) = bars.essential
    assert (ess.min_index, ess.birth, ess.death) == (0, 0.0, 2.0)
    man = stable_manifolds(WELL)
    by_index = {int(man.min_index[m]): int(man.sizes[m]) for m in range(len(man.sizes))}
    assert by_index == {0: 2, 2: 1, 4: 2}
    np.testing.assert_array_equal(man.min_index[man.assignment], [0, 0, 2, 4, 4])


def test_constant_and_ramp():
    const = LandscapeGrid.from_array(np.full((3, 4), 7.0))
    tree, bars = build_merge_tree(const)
    assert len(tree.minima) == 1 and tree.node(tree.minima[0]).index == 0
    assert not [n for n in tree.nodes if n.kind == "saddle"]
    assert len(bars.pairs) == 1 and bars.pairs[0].persistence == 0
    man = stable_manifolds(const)
    assert man.sizes.tolist() == [12]
    ramp = LandscapeGrid.from_array(np.arange(10.0))
    tree, bars = build_merge_tree(ramp)
    assert [tree.node(m).index for m in tree.minima] == [0]
    assert len(bars.pairs) == 1 and bars.pairs[0].essential


def test_convex_grid_single_basin():
    a = np.linspace(-1, 1, 9)
    bowl = LandscapeGrid.from_array(a[:, None] ** 2 + 2 * a[None, :] ** 2)
    for adj in ("axis", "full"):
        man = stable_manifolds(bowl, adj)
        assert man.sizes.tolist() == [81]
        assert man.min_index.tolist() == [40]


def test_simplify_examples():
    tree, bars = build_merge_tree(WELL)
    man = stable_manifolds(WELL)
    same = simplify(tree, bars, 0.0, man)
    assert same.tree is tree and same.barcode is bars and same.manifolds is man
    t2, b2, m2 = simplify(tree, bars, 1.5, man)
    assert [(p.min_index, p.persistence) for p in b2.finite] == [(4, 2.0)]
    assert m2.sizes.tolist() == [3, 2, 0]
    assert m2.sizes.sum() == 5
    assert len(t2.minima) == 2
    t3, b3, m3 = simplify(tree, bars, WELL.R + 1, man)
    assert len(b3.pairs) == 1 and b3.pairs[0].essential
    assert m3.sizes.tolist() == [5, 0, 0]
    assert len(t3.nodes) == 2 and len(t3.edges) == 1
    with pytest.raises(UsageError):
        simplify(tree, bars, -1.0)


def test_neighbor_table():
    nb = neighbor_table((3, 4), "axis")
    assert nb.shape[0] == 4
    counts = (nb >= 0).sum(axis=0)
    assert counts.max() == 4 and counts.min() == 2  # corners have two neighbours
    full = neighbor_table((3, 3, 3), "full")
    assert full.shape[0] == 26
    assert (full[:, 13] >= 0).sum() == 26 and (full[:, 0] >= 0).sum() == 7
    for table in (nb, full):
        pairs = {(int(v), int(u)) for v in range(table.shape[1]) for u in table[:, v] if u >= 0}
        assert all((u, v) in pairs for v, u in pairs)
    with pytest.raises(UsageError):
        neighbor_table((3,), "diagonal")


def test_empty_grid():
    with pytest.raises(UsageError):
        LandscapeGrid(shape=(0,), values=[], ranges=(1.0,))


def test_component_labellers_agree():
    rng = np.random.default_rng(0)
    for shape in [(20,), (9, 11), (5, 6, 7)]:
        mask = rng.random(shape) < 0.5
        for adj in ("axis", "full"):
            a, na = bfs_components(mask, adj)
            b, nb = ndimage_components(mask, adj)
            assert na == nb
            # same partition up to relabelling
            assert len(set(zip(a[mask].tolist(), b[mask].tolist()))) == na


@settings(max_examples=60, deadline=None)
@given(grid=grids(), adjacency=adjacencies)
def test_pairs_match_threshold_oracle(grid, adjacency):
    _, bars = build_merge_tree(grid, adjacency)
    finite, essential = threshold_pairs(grid.as_array(), adjacency)
    assert positive_pairs(bars) == finite
    (ess,) = bars.essential
    assert (ess.birth, ess.death) == essential


@settings(max_examples=60, deadline=None)
@given(grid=grids(max_level=3), adjacency=adjacencies)
def test_pairs_match_oracle_with_plateaus(grid, adjacency):
    _, bars = build_merge_tree(grid, adjacency)
    finite, _ = threshold_pairs(grid.as_array(), adjacency, labeller="bfs")
    assert positive_pairs(bars) == finite


@settings(max_examples=60, deadline=None)
@given(grid=grids(max_level=4), adjacency=adjacencies)
def test_manifolds_match_descent_walks(grid, adjacency):
    man = stable_manifolds(grid, adjacency)
    ref = descent_sizes(grid.as_array(), adjacency)
    got = {int(man.min_index[m]): int(man.sizes[m]) for m in range(len(man.sizes))}
    assert got == dict(ref)
    # every minimum is assigned to itself
    assert np.array_equal(man.assignment[man.min_index], np.arange(len(man.min_index)))


@settings(max_examples=80, deadline=None)
@given(grid=grids(), adjacency=adjacencies)
def test_structural_invariants(grid, adjacency):
    tree, bars = build_merge_tree(grid, adjacency)
    man = stable_manifolds(grid, adjacency)
    nodes = {n.id: n for n in tree.nodes}
    kids = tree.children()
    # a tree: |E| = |V| - 1 and every node reaches the root
    assert len(tree.edges) == len(tree.nodes) - 1
    parents = tree.parents()
    for nid in nodes:
        seen = set()
        while nid != tree.root:
            assert nid not in seen
            seen.add(nid)
            nid = parents[nid]
    for e in tree.edges:
        assert nodes[e.parent].value >= nodes[e.child].value
        assert e.weight == abs(nodes[e.parent].value - nodes[e.child].value)
    for nid, ch in kids.items():
        if nodes[nid].kind == "saddle":
            assert len(ch) >= 2
        if not ch:
            assert nodes[nid].kind == "minimum"
    # pairs: one per minimum, one essential, Euler count
    assert len(bars.pairs) == len(tree.minima)
    assert len(bars.essential) == 1
    assert len(tree.minima) == len(bars.finite) + 1
    assert sorted(int(i) for i in man.min_index) == sorted(nodes[m].index for m in tree.minima)
    assert man.sizes.sum() == grid.N
    for p in bars.finite:
        assert p.persistence >= 0
        absorber_birth = nodes[p.absorber].value
        assert p.death >= max(p.birth, absorber_birth)
        assert p.death == grid.values[p.saddle_index]


@settings(max_examples=40, deadline=None)
@given(grid=grids(), adjacency=adjacencies, c=st.floats(-100, 100))
def test_value_shift(grid, adjacency, c):
    shifted = LandscapeGrid.from_array(grid.as_array() + c)
    _, a = build_merge_tree(grid, adjacency)
    _, b = build_merge_tree(shifted, adjacency)
    order_a, _ = filtration_rank(grid.values)
    order_b, _ = filtration_rank(shifted.values)
    if not np.array_equal(order_a, order_b):
        return  # rounding reordered near-ties; pairing legitimately differs
    assert len(a.pairs) == len(b.pairs)
    for p, q in zip(a.pairs, b.pairs):
        assert (p.min_index, p.saddle_index) == (q.min_index, q.saddle_index)
        assert q.birth == pytest.approx(p.birth + c, abs=1e-9)
        assert q.death == pytest.approx(p.death + c, abs=1e-9)
        assert q.persistence == pytest.approx(p.persistence, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(grid=grids(), adjacency=adjacencies, tau=st.floats(0, 25))
def test_simplify_invariants(grid, adjacency, tau):
    tree, bars = build_merge_tree(grid, adjacency)
    man = stable_manifolds(grid, adjacency)
    t2, b2, m2 = simplify(tree, bars, tau, man)
    assert m2.sizes.sum() == grid.N
    kept = sorted(p.minimum for p in b2.pairs)
    assert kept == sorted(p.minimum for p in bars.pairs if p.essential or p.persistence >= tau)
    assert sorted(t2.minima) == kept
    assert set(np.flatnonzero(m2.sizes).tolist()) == set(kept)
    assert len(t2.edges) == len(t2.nodes) - 1
    kids = t2.children()
    for n in t2.nodes:
        if n.kind == "saddle":
            assert len(kids[n.id]) >= 2
    # weight of a survivor = its own points plus everything it absorbed
    absorbed = Counter()
    for m in range(len(man.sizes)):
        absorbed[m] = 0
    final = {p.minimum: p.absorber for p in bars.finite if p.persistence < tau}

    def resolve(m):
        while m in final:
            m = final[m]
        return m

    for m, w in enumerate(man.sizes):
        absorbed[resolve(m)] += int(w)
    assert [absorbed[m] for m in range(len(man.sizes))] == m2.sizes.tolist()
