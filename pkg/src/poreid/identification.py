"""Gallery search: minutiae rank list, the pore gate, top-N pore re-ranking and CMC."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .extraction import PoreTemplate, load_pores
from .matching import MatchParams, PoreMatchResult, match_pores
from .minutiae import MinutiaeTemplate, load_minutiae, match_minutiae

DEFAULT_TOP_N = 5
DEFAULT_WEIGHT = 0.5
MINUTIAE_COUNT_THRESHOLD = 15
SCORE_GAP = 0.1
EPS = 1e-12


@dataclass(frozen=True)
class GalleryEntry:
    id: str
    minutiae: MinutiaeTemplate
    pores: PoreTemplate


@dataclass(frozen=True)
class Gallery:
    ppi: int
    entries: tuple[GalleryEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("gallery ids must be unique")
        for e in self.entries:
            if e.minutiae.ppi != self.ppi or e.pores.ppi != self.ppi:
                raise ValueError(f"entry {e.id} is not at the gallery resolution {self.ppi} ppi")

    def __len__(self):
        return len(self.entries)

    def get(self, id_: str) -> GalleryEntry:
        for e in self.entries:
            if e.id == id_:
                return e
        raise KeyError(id_)


def load_gallery(manifest, ppi: int | None = None) -> Gallery:
    """Manifest lines: ``id minutiae_path pore_path``; relative paths resolve against the manifest."""
    manifest = Path(manifest)
    entries = []
    for n, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{manifest}:{n}: expected 'id minutiae_path pore_path'")
        id_, mp, pp = parts
        m = load_minutiae(manifest.parent / mp)
        p = load_pores(manifest.parent / pp)
        entries.append(GalleryEntry(id_, m, p))
    if not entries:
        return Gallery(ppi or 1000)
    ppi = ppi or entries[0].minutiae.ppi
    entries = [GalleryEntry(e.id, e.minutiae.rescaled(ppi) if e.minutiae.ppi != ppi else e.minutiae,
                            e.pores.rescaled(ppi) if e.pores.ppi != ppi else e.pores) for e in entries]
    return Gallery(ppi, tuple(entries))


def load_scores(path) -> dict[str, float]:
    """External minutiae scores, one ``id score`` per line."""
    scores = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected 'id score'")
        scores[parts[0]] = float(parts[1])
    return scores


@dataclass(frozen=True)
class RankedCandidate:
    id: str
    minutiae_score: float
    minutiae_index: int
    pore_score: float | None = None
    pore_index: int | None = None
    final_index: int = 0
    pore_mode: str | None = None


def _map(fn, items, jobs: int):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def identify_minutiae(latent: MinutiaeTemplate, g: Gallery, external_scores: dict | None = None,
                      jobs: int = 1) -> list[RankedCandidate]:
    """Score every gallery entry and rank by descending score, ties by id."""
    if len(g) == 0:
        return []
    if latent.ppi != g.ppi:
        latent = latent.rescaled(g.ppi)
    if external_scores is not None:
        missing = [e.id for e in g.entries if e.id not in external_scores]
        if missing:
            raise KeyError(f"external scores missing for {len(missing)} gallery ids, e.g. {missing[0]}")
        scores = [float(external_scores[e.id]) for e in g.entries]
    else:
        scores = _map(lambda e: match_minutiae(latent, e.minutiae).total_score, g.entries, jobs)
    order = sorted(range(len(g)), key=lambda i: (-scores[i], g.entries[i].id))
    return [RankedCandidate(g.entries[i].id, scores[i], k, final_index=k)
            for k, i in enumerate(order, start=1)]


def should_apply_pores(latent: MinutiaeTemplate, ranked: list[RankedCandidate],
                       t_m: int = MINUTIAE_COUNT_THRESHOLD, gap: float = SCORE_GAP) -> bool:
    """Consult pores when the latent has few minutiae or the top score is not clearly ahead."""
    if len(latent) < t_m:
        return True
    if not ranked:
        return False
    s1 = ranked[0].minutiae_score
    s2 = ranked[1].minutiae_score if len(ranked) > 1 else 0.0
    return (s1 - s2) / max(s1, EPS) < gap


def pore_scores(latent_minutiae: MinutiaeTemplate, latent_pores: PoreTemplate, g: Gallery,
                ids, params: MatchParams = MatchParams(), jobs: int = 1) -> dict[str, PoreMatchResult]:
    if latent_minutiae.ppi != g.ppi:
        latent_minutiae = latent_minutiae.rescaled(g.ppi)
    if latent_pores.ppi != g.ppi:
        latent_pores = latent_pores.rescaled(g.ppi)

    def one(id_):
        e = g.get(id_)
        pairs = match_minutiae(latent_minutiae, e.minutiae)
        return match_pores(latent_pores, e.pores, pairs, latent_minutiae, e.minutiae, params)

    ids = list(ids)
    return dict(zip(ids, _map(one, ids, jobs)))


def fuse_ranks(ranked: list[RankedCandidate], scores: dict[str, float], n: int = DEFAULT_TOP_N,
               w: float = DEFAULT_WEIGHT, modes: dict[str, str] | None = None) -> list[RankedCandidate]:
    """Reorder the top-n block by w * minutiae_index + (1 - w) * pore_index."""
    if n < 1:
        raise ValueError("N must be >= 1")
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must be in [0, 1]")
    ranked = sorted(ranked, key=lambda c: c.minutiae_index)
    k = min(n, len(ranked))
    head, tail = ranked[:k], ranked[k:]
    by_pore = sorted(head, key=lambda c: (-scores[c.id], c.minutiae_index))
    pidx = {c.id: i for i, c in enumerate(by_pore, start=1)}
    combined = {c.id: w * c.minutiae_index + (1 - w) * pidx[c.id] for c in head}
    head = sorted(head, key=lambda c: (combined[c.id], c.minutiae_index))
    modes = modes or {}
    out = [replace(c, pore_score=float(scores[c.id]), pore_index=pidx[c.id], final_index=i,
                   pore_mode=modes.get(c.id)) for i, c in enumerate(head, start=1)]
    out += [replace(c, final_index=i) for i, c in enumerate(tail, start=k + 1)]
    return out


def rerank(ranked: list[RankedCandidate], latent_minutiae: MinutiaeTemplate, latent_pores: PoreTemplate,
           g: Gallery, n: int = DEFAULT_TOP_N, w: float = DEFAULT_WEIGHT,
           params: MatchParams = MatchParams(), jobs: int = 1) -> list[RankedCandidate]:
    """Pore-match the top-n candidates and fuse pore and minutiae rank indices."""
    if not ranked:
        raise ValueError("cannot re-rank an empty list")
    head = sorted(ranked, key=lambda c: c.minutiae_index)[:min(n, len(ranked))]
    results = pore_scores(latent_minutiae, latent_pores, g, [c.id for c in head], params, jobs)
    return fuse_ranks(ranked, {k: r.score for k, r in results.items()}, n, w,
                      {k: r.mode for k, r in results.items()})


@dataclass(frozen=True)
class IdentifyParams:
    top_n: int = DEFAULT_TOP_N
    weight: float = DEFAULT_WEIGHT
    minutiae_threshold: int = MINUTIAE_COUNT_THRESHOLD
    score_gap: float = SCORE_GAP
    gate: bool = True
    match: MatchParams = MatchParams()


def identify(latent_minutiae: MinutiaeTemplate, latent_pores: PoreTemplate, g: Gallery,
             params: IdentifyParams = IdentifyParams(), external_scores: dict | None = None,
             jobs: int = 1) -> tuple[list[RankedCandidate], bool]:
    """Full search; returns the final list and whether pores were consulted."""
    ranked = identify_minutiae(latent_minutiae, g, external_scores, jobs)
    if not ranked:
        return ranked, False
    apply = not params.gate or should_apply_pores(latent_minutiae, ranked, params.minutiae_threshold,
                                                   params.score_gap)
    if not apply:
        return ranked, False
    return rerank(ranked, latent_minutiae, latent_pores, g, params.top_n, params.weight,
                  params.match, jobs), True


@dataclass(frozen=True)
class CmcCurve:
    hits_at_rank: tuple[float, ...]

    def at(self, r: int) -> float:
        return self.hits_at_rank[min(r, len(self.hits_at_rank)) - 1]


def compute_cmc(trials, max_rank: int | None = None) -> CmcCurve:
    """``trials`` are (rank of the genuine mate, gallery size) pairs."""
    trials = list(trials)
    if not trials:
        raise ValueError("no trials")
    ranks = np.array([t[0] for t in trials])
    sizes = np.array([t[1] for t in trials])
    if (ranks < 1).any() or (ranks > sizes).any():
        raise ValueError("genuine ranks must lie in 1..gallery size")
    r_max = max_rank or int(sizes.max())
    hits = [(ranks <= r).mean() for r in range(1, r_max + 1)]
    return CmcCurve(tuple(float(h) for h in hits))


def format_ranking(ranked: list[RankedCandidate]) -> str:
    """CSV rows in final order; ``rank`` is the minutiae-only rank, ``final_index`` the fused one."""
    lines = ["rank,id,minutiae_score,pore_score,final_index"]
    for c in sorted(ranked, key=lambda c: c.final_index):
        ps = "" if c.pore_score is None else f"{c.pore_score:.6f}"
        lines.append(f"{c.minutiae_index},{c.id},{c.minutiae_score:.6f},{ps},{c.final_index}")
    return "\n".join(lines) + "\n"


def parse_ranking(text: str) -> list[RankedCandidate]:
    """Inverse of ``format_ranking``; ``#`` lines are skipped."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].strip() != "rank,id,minutiae_score,pore_score,final_index":
        raise ValueError("not a ranking CSV (bad or missing header)")
    out = []
    for ln in rows[1:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise ValueError(f"bad ranking row {ln!r}")
        r, id_, ms, ps, fi = parts
        out.append(RankedCandidate(id_, float(ms), int(r), float(ps) if ps else None, final_index=int(fi)))
    ranks = sorted(c.minutiae_index for c in out)
    if ranks != list(range(1, len(out) + 1)):
        raise ValueError("ranking rows must carry ranks 1..K")
    return out
