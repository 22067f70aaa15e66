"""Binary sum tree over event rates, for O(log n) weighted selection.

Leaves live at ``tree[size:2*size]``; every internal node is recomputed from
its two children on update, so the root is always bit-identical to a fresh
rebuild from the leaves (no accumulated drift from incremental deltas).
"""
import numpy as np
from numba import njit


def tree_size(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


def new_tree(n: int) -> tuple[np.ndarray, int]:
    size = tree_size(max(n, 1))
    return np.zeros(2 * size), size


@njit(cache=True)
def tree_build(tree, size):
    for i in range(size - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True)
def tree_set(tree, size, idx, value):
    i = idx + size
    tree[i] = value
    i >>= 1
    while i >= 1:
        tree[i] = tree[2 * i] + tree[2 * i + 1]
        i >>= 1


@njit(cache=True)
def tree_sample(tree, size, target):
    # only descends into subtrees with positive mass, so the leaf is always live
    i = 1
    while i < size:
        left = tree[2 * i]
        if target < left or tree[2 * i + 1] <= 0.0:
            i = 2 * i
        else:
            target -= left
            i = 2 * i + 1
    return i - size
