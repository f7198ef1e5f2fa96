"""Independent generators of projective trees used as test oracles."""

import itertools

import numpy as np


def crossing_free(heads) -> bool:
    """Brute-force pairwise arc crossing check, ROOT arcs included."""
    arcs = [tuple(sorted((h, d))) for d, h in enumerate(heads, start=1)]
    for (a, b), (c, d) in itertools.combinations(arcs, 2):
        if a < c < b < d or c < a < d < b:
            return False
    return True


def acyclic(heads) -> bool:
    for start in range(1, len(heads) + 1):
        seen, node = set(), start
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = heads[node - 1]
    return True


def all_projective_trees(n: int):
    """All single-rooted projective head vectors of length ``n``, by enumeration."""
    for heads in itertools.product(range(n + 1), repeat=n):
        if sum(h == 0 for h in heads) != 1 or any(h == i + 1 for i, h in enumerate(heads)):
            continue
        if acyclic(heads) and crossing_free(heads):
            yield list(heads)


def random_projective_tree(n: int, rng: np.random.Generator) -> list[int]:
    """Random single-rooted projective tree built by recursive span splitting."""
    heads = [0] * n

    def build(lo: int, hi: int, parent: int):
        # tokens lo..hi form consecutive sibling subtrees under ``parent``
        while lo <= hi:
            end = int(rng.integers(lo, hi + 1)) if parent != 0 else hi
            root = int(rng.integers(lo, end + 1))
            heads[root - 1] = parent
            build(lo, root - 1, root)
            build(root + 1, end, root)
            lo = end + 1

    build(1, n, 0)
    return heads
