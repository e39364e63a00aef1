"""Pore extraction: binarize, clean, label background components, keep small round ones on ridges."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .enhancement import EnhancementParams, STFTEnhancer
from .imaging import (DEFAULT_WINDOW_FRACTION, BinaryImage, GrayImage, adaptive_threshold, dilate,
                      morphology_open_close)

MERGE_DISTANCE = 1.0


@dataclass(frozen=True)
class Pore:
    x: float
    y: float
    area: float
    circularity: float
    confidence: float


@dataclass(frozen=True)
class PoreTemplate:
    """Canonical pore set: sorted by (y, x) with near-duplicates (< 1 px) merged."""

    source_id: str
    ppi: int
    pores: tuple[Pore, ...] = ()

    def __post_init__(self):
        if not self.source_id or any(c.isspace() for c in self.source_id):
            raise ValueError(f"source_id must be a non-empty token, got {self.source_id!r}")
        object.__setattr__(self, "pores", _canonical(self.pores))

    def __len__(self):
        return len(self.pores)

    @property
    def xy(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.pores], dtype=np.float64).reshape(-1, 2)

    def rescaled(self, ppi: int) -> PoreTemplate:
        f = ppi / self.ppi
        return PoreTemplate(self.source_id, ppi, tuple(
            Pore(p.x * f, p.y * f, p.area * f * f, p.circularity, p.confidence) for p in self.pores))


def _canonical(pores) -> tuple[Pore, ...]:
    pores = sorted(pores, key=lambda p: (p.y, p.x))
    if len(pores) < 2:
        return tuple(pores)
    xy = np.array([(p.x, p.y) for p in pores])
    close = cKDTree(xy).query_pairs(MERGE_DISTANCE, output_type="ndarray")
    close = close[np.linalg.norm(xy[close[:, 0]] - xy[close[:, 1]], axis=1) < MERGE_DISTANCE]
    if len(close) == 0:
        return tuple(pores)
    # keep the most confident member of each duplicate, ties to the larger area then sort order
    rank = sorted(range(len(pores)), key=lambda i: (-pores[i].confidence, -pores[i].area, i))
    neighbours = [[] for _ in pores]
    for a, b in close:
        neighbours[a].append(b)
        neighbours[b].append(a)
    dropped = np.zeros(len(pores), dtype=bool)
    for i in rank:
        if dropped[i]:
            continue
        for j in neighbours[i]:
            dropped[j] = True
    return tuple(p for p, d in zip(pores, dropped) if not d)


@dataclass(frozen=True)
class ExtractionParams:
    p_max_at_1000ppi: float = 100.0
    circularity_min: float = 0.4
    ridge_context_min: float = 0.6
    confidence: float = 50.0
    morphology_radius: int = 1
    window_fraction: float = DEFAULT_WINDOW_FRACTION
    context_width: int = 2

    def __post_init__(self):
        if self.p_max_at_1000ppi <= 0:
            raise ValueError("p_max_at_1000ppi must be positive")
        if not 0.0 <= self.circularity_min <= 1.0:
            raise ValueError("circularity_min must be in [0, 1]")
        if not 0.0 <= self.ridge_context_min <= 1.0:
            raise ValueError("ridge_context_min must be in [0, 1]")
        if not 0.0 <= self.confidence <= 100.0:
            raise ValueError("confidence must be in [0, 100]")
        if self.morphology_radius < 0 or self.context_width < 1:
            raise ValueError("morphology_radius must be >= 0 and context_width >= 1")

    def p_max(self, ppi: int) -> float:
        """Maximum pore area in pixels; area scales with the square of resolution."""
        return self.p_max_at_1000ppi * (ppi / 1000.0) ** 2


@dataclass(frozen=True)
class Component:
    label: int
    ys: np.ndarray
    xs: np.ndarray
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)

    @property
    def area(self) -> int:
        return len(self.ys)


class Components(list):
    """Components in raster discovery order, plus the label raster they came from."""

    def __init__(self, items, labels: np.ndarray):
        super().__init__(items)
        self.labels = labels


EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(img: BinaryImage, polarity: str = "foreground") -> Components:
    """Maximal 8-connected sets of pixels of the given polarity, labelled 1.. in raster order."""
    if polarity not in ("foreground", "background"):
        raise ValueError(f"polarity must be 'foreground' or 'background', got {polarity!r}")
    mask = img.bits if polarity == "foreground" else ~img.bits
    labels, n = ndimage.label(mask, structure=EIGHT)
    if n == 0:
        return Components([], labels)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.cumsum(counts)
    w = img.width
    out = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        idx = order[starts[lab - 1]:starts[lab]]
        ys, xs = np.divmod(idx, w)
        out.append(Component(lab, ys, xs, (sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)))
    return Components(out, labels)


def edge_perimeter(mask: np.ndarray) -> int:
    """Number of 4-connected boundary edge segments of a pixel set (image edge counts)."""
    p = np.pad(mask, 1)
    core = p[1:-1, 1:-1]
    return int((core & ~p[:-2, 1:-1]).sum() + (core & ~p[2:, 1:-1]).sum()
               + (core & ~p[1:-1, :-2]).sum() + (core & ~p[1:-1, 2:]).sum())


def circularity(area: float, perimeter: float) -> float:
    return 4.0 * math.pi * area / (perimeter * perimeter) if perimeter > 0 else 0.0


def filter_pore_components(components, binary: BinaryImage,
                           params: ExtractionParams = ExtractionParams()) -> list[Pore]:
    """Keep components that are small, round, and surrounded by ridge pixels.

    ``components`` must be background-polarity components of ``binary``.
    """
    p_max = params.p_max(binary.ppi)
    ridge = binary.bits
    h, w = ridge.shape
    cw = params.context_width
    pores = []
    for comp in components:
        area = comp.area
        if area < 1 or area > p_max:
            continue
        x0, y0, x1, y1 = comp.bbox
        # local window with room for the context annulus
        wx0, wy0 = max(0, x0 - cw), max(0, y0 - cw)
        wx1, wy1 = min(w, x1 + cw), min(h, y1 + cw)
        local = np.zeros((wy1 - wy0, wx1 - wx0), dtype=bool)
        local[comp.ys - wy0, comp.xs - wx0] = True
        circ = circularity(area, edge_perimeter(local))
        if circ < params.circularity_min:
            continue
        ring = dilate(local, cw) & ~local
        n_ring = ring.sum()
        if n_ring == 0:
            continue
        context = float(ridge[wy0:wy1, wx0:wx1][ring].sum()) / n_ring
        if context < params.ridge_context_min:
            continue
        pores.append(Pore(float(comp.xs.mean()), float(comp.ys.mean()), float(area), circ,
                          min(1.0, circ * context)))
    return pores


def binarize(img: GrayImage, params: ExtractionParams = ExtractionParams()) -> BinaryImage:
    """Adaptive threshold followed by opening/closing."""
    binary = adaptive_threshold(img, params.window_fraction, params.confidence)
    return morphology_open_close(binary, params.morphology_radius)


def extract_pores(img: GrayImage, eparams: EnhancementParams = EnhancementParams(),
                  xparams: ExtractionParams = ExtractionParams(), source_id: str = "image",
                  enhancer=None) -> PoreTemplate:
    """enhance -> adaptive threshold -> morphology -> background components -> filter."""
    enhancer = enhancer or STFTEnhancer(eparams)
    enhanced = enhancer.enhance(img)
    binary = binarize(enhanced, xparams)
    comps = connected_components(binary, "background")
    return PoreTemplate(source_id, img.ppi, tuple(filter_pore_components(comps, binary, xparams)))


# ---------------------------------------------------------------------------

def format_pores(t: PoreTemplate) -> str:
    lines = [f"PORETPL 1 {t.source_id} {t.ppi} {len(t)}"]
    lines += [f"{p.x:.6f} {p.y:.6f} {p.area:.6f} {p.circularity:.6f} {p.confidence:.6f}" for p in t.pores]
    return "\n".join(lines) + "\n"


def parse_pores(text: str) -> PoreTemplate:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty pore template")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "PORETPL" or head[1] != "1":
        raise ValueError(f"bad pore template header {lines[0]!r}")
    count = int(head[4])
    if count != len(lines) - 1:
        raise ValueError(f"header declares {count} pores, found {len(lines) - 1}")
    pores = []
    for ln in lines[1:]:
        vals = [float(v) for v in ln.split()]
        if len(vals) != 5:
            raise ValueError(f"expected 5 fields per pore, got {ln!r}")
        pores.append(Pore(*vals))
    return PoreTemplate(head[2], int(head[3]), tuple(pores))


def load_pores(path) -> PoreTemplate:
    return parse_pores(Path(path).read_text(encoding="utf-8"))


def save_pores(t: PoreTemplate, path) -> None:
    Path(path).write_text(format_pores(t), encoding="utf-8")
