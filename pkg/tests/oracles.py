"""Brute-force references shared by unit and acceptance tests."""

import math

import numpy as np

from poreid.matching import TIE_TOLERANCE, PoreCandidateGraph


def exhaustive_matching(g: PoreCandidateGraph):
    """(best score, lexicographically smallest optimal edge list) by enumerating every matching."""
    edges = list(g.edges)
    best = [None, None]

    def rec(k, used_l, used_r, cur):
        if k == len(edges):
            val = math.fsum(e[2] for e in cur)
            key = [(e[0], e[1]) for e in cur]
            if best[0] is None or val > best[0] + TIE_TOLERANCE:
                best[0], best[1] = val, key
            elif abs(val - best[0]) <= TIE_TOLERANCE and key < best[1]:
                best[1] = key
            return
        rec(k + 1, used_l, used_r, cur)
        l, r, _ = edges[k]
        if l not in used_l and r not in used_r:
            rec(k + 1, used_l | {l}, used_r | {r}, cur + [edges[k]])

    rec(0, frozenset(), frozenset(), [])
    return best[0], best[1]


def random_graph(seed, max_side=6, max_edges=20):
    rng = np.random.default_rng(seed)
    nl, nr = (int(v) for v in rng.integers(1, max_side + 1, 2))
    cells = [(l, r) for l in range(nl) for r in range(nr)]
    k = int(rng.integers(0, min(max_edges, len(cells)) + 1))
    pick = rng.choice(len(cells), size=k, replace=False)
    # odd seeds use coarse weights so exact ties are common
    w = rng.integers(1, 4, size=k) / 4 if seed % 2 else rng.uniform(0.01, 1, size=k)
    return PoreCandidateGraph(nl, nr, tuple(sorted((cells[i][0], cells[i][1], float(x))
                                                   for i, x in zip(pick, w))))
