import numpy as np
from hypothesis import given, settings, strategies as st

from lattice_epidemics._tree import new_tree, tree_build, tree_sample, tree_set


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.data())
def test_root_matches_rebuild_after_updates(weights, data):
    tree, size = new_tree(len(weights))
    tree[size:size + len(weights)] = weights
    tree_build(tree, size)
    for _ in range(20):
        i = data.draw(st.integers(0, len(weights) - 1))
        tree_set(tree, size, i, data.draw(st.floats(0, 10)))
    fresh = tree.copy()
    tree_build(fresh, size)
    assert fresh[1] == tree[1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=30), st.floats(0, 1, exclude_max=True))
def test_sample_lands_on_positive_leaf(weights, u):
    tree, size = new_tree(len(weights))
    tree[size:size + len(weights)] = weights
    tree_build(tree, size)
    if tree[1] > 0:
        i = tree_sample(tree, size, u * tree[1])
        assert 0 <= i < len(weights) and weights[i] > 0


def test_sampling_frequencies():
    w = np.array([1.0, 0.0, 3.0, 6.0])
    tree, size = new_tree(4)
    tree[size:size + 4] = w
    tree_build(tree, size)
    rng = np.random.default_rng(0)
    draws = [tree_sample(tree, size, u * tree[1]) for u in rng.random(20000)]
    freq = np.bincount(draws, minlength=4) / 20000
    assert np.allclose(freq, w / w.sum(), atol=0.015)
