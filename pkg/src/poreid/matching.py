"""Pore matching: transform-guided candidate graph, max-weight bipartite refinement,
and a shape-context fallback when too few minutiae agree."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .extraction import PoreTemplate
from .minutiae import (MinutiaeTemplate, MinutiaPairSet, SimilarityTransform, TransformError,
                       estimate_transform, fit_points)

TRANSFORM_GUIDED = "transform-guided"
SHAPE_FALLBACK = "shape-fallback"
MIN_PAIRS_FOR_TRANSFORM = 3
MIN_FALLBACK_PORES = 4
# two matchings whose totals differ by at most this are treated as equally good
TIE_TOLERANCE = 1e-9
# shape-context radii, in units of the median inter-pore distance
SC_INNER = 0.125
SC_OUTER = 2.0


@dataclass(frozen=True)
class MatchParams:
    delta_at_1000ppi: float = 10.0
    shape_context_bins: tuple[int, int] = (5, 12)
    fallback_ransac_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.delta_at_1000ppi <= 0:
            raise ValueError("delta_at_1000ppi must be positive")
        if min(self.shape_context_bins) < 1 or self.fallback_ransac_iters < 1:
            raise ValueError("shape_context_bins and fallback_ransac_iters must be positive")

    @property
    def min_minutiae_pairs_for_transform(self) -> int:
        return MIN_PAIRS_FOR_TRANSFORM

    def delta(self, ppi: int) -> float:
        return self.delta_at_1000ppi * ppi / 1000.0


@dataclass(frozen=True)
class PoreCandidateGraph:
    n_left: int
    n_right: int
    # (l, r, weight) sorted by (l, r)
    edges: tuple[tuple[int, int, float], ...] = ()

    @property
    def left(self) -> range:
        return range(self.n_left)

    @property
    def right(self) -> range:
        return range(self.n_right)

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class PoreMatchResult:
    matches: tuple[tuple[int, int, float], ...]
    score: float
    mode: str
    transform_used: SimilarityTransform | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ls = [m[0] for m in self.matches]
        rs = [m[1] for m in self.matches]
        if len(set(ls)) != len(ls) or len(set(rs)) != len(rs):
            raise ValueError("matching is not one-to-one")

    def __len__(self):
        return len(self.matches)


def _check_ppi(a: PoreTemplate, b: PoreTemplate) -> None:
    if a.ppi != b.ppi:
        raise ValueError(f"templates at different resolutions: {a.ppi} vs {b.ppi} ppi")


def build_candidate_graph(latent: PoreTemplate, rolled: PoreTemplate, t: SimilarityTransform,
                          delta: float) -> PoreCandidateGraph:
    """Edges between transformed latent pores and rolled pores closer than ``delta``."""
    _check_ppi(latent, rolled)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(latent) == 0 or len(rolled) == 0:
        return PoreCandidateGraph(len(latent), len(rolled))
    src = t.apply(latent.xy)
    pairs = cKDTree(src).sparse_distance_matrix(cKDTree(rolled.xy), delta, output_type="ndarray")
    keep = pairs["v"] < delta
    li, ri, d = pairs["i"][keep], pairs["j"][keep], pairs["v"][keep]
    # exact distances; the tree may report zero-distance pairs with rounding
    d = np.hypot(*(src[li] - rolled.xy[ri]).T)
    ok = d < delta
    order = np.lexsort((ri[ok], li[ok]))
    edges = tuple((int(a), int(b), float(1.0 - c / delta))
                  for a, b, c in zip(li[ok][order], ri[ok][order], d[ok][order]))
    return PoreCandidateGraph(len(latent), len(rolled), edges)


# ---------------------------------------------------------------------------
# Maximum-weight bipartite matching

def _hungarian(cost: np.ndarray):
    """Min-cost assignment of every row (rows <= cols) with dual potentials.

    Returns (column per row, row potentials u, column potentials v) with
    cost[i, j] - u[i] - v[j] >= 0 everywhere and == 0 on the assignment.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # row (1-based) assigned to each column, 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    js = np.flatnonzero(p[1:])
    col[p[1:][js] - 1] = js
    return col, u[1:], v[1:]


def _solve(w: np.ndarray):
    """Max-weight matching on a dense weight block (0 = no edge).

    Returns (value, matched (i, j) list, reduced-cost matrix in w's orientation).
    """
    flip = w.shape[0] > w.shape[1]
    a = w.T if flip else w
    if a.shape[0] == 0:
        return 0.0, [], np.zeros(w.shape)
    col, u, v = _hungarian(-a)
    reduced = -a - u[:, None] - v[None, :]
    pairs = [(i, int(j)) for i, j in enumerate(col) if a[i, j] > 0]
    if flip:
        pairs = [(j, i) for i, j in pairs]
        reduced = reduced.T
    value = math.fsum(w[i, j] for i, j in pairs)
    return value, sorted(pairs), reduced


def _lexmin_component(w: np.ndarray):
    """Optimal matching of one component; among optima the lexicographically smallest
    (row, col) edge set. Rows and columns are assumed already in global index order."""
    best, pairs, reduced = _solve(w)
    edges = np.argwhere(w > 0)
    tight = reduced[edges[:, 0], edges[:, 1]] <= TIE_TOLERANCE + 1e-12 * max(1.0, best)
    if tight.sum() == len(pairs):
        # every optimum uses tight edges only, and a strict subset would score less
        return pairs
    cur = np.where(reduced <= TIE_TOLERANCE + 1e-12 * max(1.0, best), w, 0.0)
    chosen: list[tuple[int, int]] = []
    taken_r, taken_c = set(), set()
    gained = 0.0
    for i, j in map(tuple, edges[tight]):  # argwhere is already (row, col) sorted
        if i in taken_r or j in taken_c:
            continue
        rows = [r for r in range(w.shape[0]) if r not in taken_r and r != i]
        cols = [c for c in range(w.shape[1]) if c not in taken_c and c != j]
        rest, _, _ = _solve(cur[np.ix_(rows, cols)])
        if gained + w[i, j] + rest >= best - TIE_TOLERANCE:
            chosen.append((int(i), int(j)))
            taken_r.add(i)
            taken_c.add(j)
            gained += w[i, j]
        else:
            cur[i, j] = 0.0
    return chosen


def max_weight_matching(g: PoreCandidateGraph, mode: str = TRANSFORM_GUIDED,
                        transform: SimilarityTransform | None = None) -> PoreMatchResult:
    """Maximum-weight one-to-one matching; ties go to the lexicographically smallest
    (l, r) edge set."""
    if not g.edges:
        return PoreMatchResult((), 0.0, mode, transform)
    e = np.array([(l, r) for l, r, _ in g.edges], dtype=np.int64)
    wts = np.array([x for _, _, x in g.edges])
    nl, nr = g.n_left, g.n_right
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], nl + e[:, 1])), shape=(nl + nr, nl + nr))
    _, label = connected_components(adj, directed=False)
    comp = label[e[:, 0]]
    matched = []
    for c in np.unique(comp):
        sel = np.flatnonzero(comp == c)
        if len(sel) == 1:
            k = sel[0]
            matched.append((int(e[k, 0]), int(e[k, 1]), float(wts[k])))
            continue
        ls, li = np.unique(e[sel, 0], return_inverse=True)
        rs, ri = np.unique(e[sel, 1], return_inverse=True)
        block = np.zeros((len(ls), len(rs)))
        block[li, ri] = wts[sel]
        for i, j in _lexmin_component(block):
            matched.append((int(ls[i]), int(rs[j]), float(block[i, j])))
    matched.sort()
    return PoreMatchResult(tuple(matched), math.fsum(m[2] for m in matched), mode, transform)


# ---------------------------------------------------------------------------
# Shape fallback

def hamiltonian_order(pores: PoreTemplate | np.ndarray) -> list[int]:
    """Nearest-neighbour tour starting at the pore farthest from the centroid.

    Ties (start or next hop) go to the lower index.
    """
    xy = pores.xy if isinstance(pores, PoreTemplate) else np.asarray(pores, dtype=np.float64).reshape(-1, 2)
    n = len(xy)
    if n == 0:
        return []
    d0 = np.hypot(*(xy - xy.mean(axis=0)).T)
    cur = int(np.argmax(d0))
    order = [cur]
    visited = np.zeros(n, dtype=bool)
    visited[cur] = True
    for _ in range(n - 1):
        d = np.hypot(*(xy - xy[cur]).T)
        d[visited] = np.inf
        cur = int(np.argmin(d))
        visited[cur] = True
        order.append(cur)
    return order


def _reference_angles(xy: np.ndarray) -> np.ndarray:
    """Per-pore direction of the incoming tour edge (outgoing for the first pore)."""
    order = hamiltonian_order(xy)
    ref = np.zeros(len(xy))
    for k, idx in enumerate(order):
        a, b = (order[0], order[1]) if k == 0 else (order[k - 1], idx)
        dx, dy = xy[b] - xy[a]
        ref[idx] = math.atan2(dy, dx)
    return ref


def shape_contexts(xy: np.ndarray, bins: tuple[int, int] = (5, 12)) -> np.ndarray:
    """Normalized log-polar histograms of every other pore, (n, radial * angular)."""
    n = len(xy)
    nr, na = bins
    scale = float(np.median(pdist(xy)))
    ref = _reference_angles(xy)
    diff = xy[None, :, :] - xy[:, None, :]
    r = np.hypot(diff[..., 0], diff[..., 1]) / scale
    theta = (np.arctan2(diff[..., 1], diff[..., 0]) - ref[:, None]) % (2 * np.pi)
    edges = np.geomspace(SC_INNER, SC_OUTER, nr + 1)
    rb = np.searchsorted(edges, r, side="right") - 1
    ab = np.minimum((theta / (2 * np.pi) * na).astype(np.int64), na - 1)
    ok = (rb >= 0) & (rb < nr) & ~np.eye(n, dtype=bool)
    hist = np.zeros((n, nr * na))
    rows = np.broadcast_to(np.arange(n)[:, None], r.shape)
    np.add.at(hist, (rows[ok], rb[ok] * na + ab[ok]), 1.0)
    total = hist.sum(axis=1, keepdims=True)
    return np.divide(hist, total, out=np.zeros_like(hist), where=total > 0)


def chi2_costs(a: np.ndarray, b: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = np.empty((len(a), len(b)))
    for s in range(0, len(a), chunk):
        x = a[s:s + chunk, None, :]
        num = (x - b[None]) ** 2
        den = x + b[None]
        out[s:s + chunk] = 0.5 * np.divide(num, den, out=np.zeros_like(num), where=den > 0).sum(axis=2)
    return out


def _empty(mode=SHAPE_FALLBACK, **info) -> PoreMatchResult:
    return PoreMatchResult((), 0.0, mode, None, info)


def shape_fallback_match(latent: PoreTemplate, rolled: PoreTemplate,
                         params: MatchParams = MatchParams()) -> PoreMatchResult:
    """Correspondences from shape contexts, a consensus similarity fit, then the
    usual candidate graph and matching under that transform."""
    _check_ppi(latent, rolled)
    if len(latent) < MIN_FALLBACK_PORES or len(rolled) < MIN_FALLBACK_PORES:
        return _empty(reason="too few pores")
    lxy, rxy = latent.xy, rolled.xy
    if np.ptp(lxy, axis=0).max() <= 1.0 or np.ptp(rxy, axis=0).max() <= 1.0:
        return _empty(reason="degenerate geometry")
    cost = chi2_costs(shape_contexts(lxy, params.shape_context_bins),
                      shape_contexts(rxy, params.shape_context_bins))
    best = np.argmin(cost, axis=1)
    delta = params.delta(latent.ppi)
    try:
        t, inliers = fit_points(lxy, rxy[best], seed=params.seed,
                                iterations=params.fallback_ransac_iters, inlier_radius=delta)
    except TransformError as exc:
        return _empty(reason=str(exc))
    g = build_candidate_graph(latent, rolled, t, delta)
    res = max_weight_matching(g, SHAPE_FALLBACK, t)
    res.info.update(candidates=len(g), consensus_inliers=int(inliers.sum()))
    return res


def match_pores(latent: PoreTemplate, rolled: PoreTemplate, minutiae_pairs: MinutiaPairSet,
                mt_latent: MinutiaeTemplate, mt_rolled: MinutiaeTemplate,
                params: MatchParams = MatchParams()) -> PoreMatchResult:
    """Transform-guided matching with at least three minutiae pairs, shape fallback otherwise."""
    _check_ppi(latent, rolled)
    reason = f"{len(minutiae_pairs)} minutiae pairs"
    if len(minutiae_pairs) >= MIN_PAIRS_FOR_TRANSFORM:
        try:
            t = estimate_transform(minutiae_pairs, mt_latent, mt_rolled, seed=params.seed)
        except TransformError as exc:
            reason = f"transform rejected: {exc}"
        else:
            g = build_candidate_graph(latent, rolled, t, params.delta(latent.ppi))
            res = max_weight_matching(g, TRANSFORM_GUIDED, t)
            res.info.update(candidates=len(g), minutiae_pairs=len(minutiae_pairs))
            return res
    res = shape_fallback_match(latent, rolled, params)
    res.info.setdefault("fallback_reason", reason)
    return res
