"""Ground-truth pore scoring and corpus benchmarks."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .enhancement import EnhancementParams, STFTEnhancer
from .extraction import ExtractionParams, PoreTemplate, extract_pores
from .imaging import load_image
from .matching import PoreCandidateGraph, max_weight_matching


@dataclass(frozen=True)
class GroundTruthPores:
    source_id: str
    ppi: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


def format_truth(gt: GroundTruthPores) -> str:
    lines = [f"POREGT 1 {gt.source_id} {gt.ppi} {len(gt)}"]
    lines += [f"{x:.6f} {y:.6f}" for x, y in gt.points]
    return "\n".join(lines) + "\n"


def parse_truth(text: str) -> GroundTruthPores:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty ground-truth file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "POREGT" or head[1] != "1":
        raise ValueError(f"bad ground-truth header {lines[0]!r}")
    count = int(head[4])
    if count != len(lines) - 1:
        raise ValueError(f"header declares {count} points, found {len(lines) - 1}")
    pts = [tuple(map(float, ln.split())) for ln in lines[1:]]
    return GroundTruthPores(head[2], int(head[3]), np.array(pts).reshape(-1, 2))


def load_truth(path) -> GroundTruthPores:
    return parse_truth(Path(path).read_text(encoding="utf-8"))


def save_truth(gt: GroundTruthPores, path) -> None:
    Path(path).write_text(format_truth(gt), encoding="utf-8")


# ---------------------------------------------------------------------------
# Detection scoring

MATCH_RADIUS_AT_1000PPI = 5.0
REPORT_COLUMNS = ("image", "confidence", "tp", "fp", "fn", "precision", "recall", "f1", "extract_ms")


def match_radius(ppi: int, radius_at_1000ppi: float = MATCH_RADIUS_AT_1000PPI) -> float:
    return radius_at_1000ppi * ppi / 1000.0


def f1_score(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass(frozen=True)
class DetectionReport:
    tp: int
    fp: int
    fn: int
    match_radius: float

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)

    @property
    def degenerate(self) -> bool:
        """True when any of the three ratios had a zero denominator."""
        return self.tp + self.fp == 0 or self.tp + self.fn == 0 or self.precision + self.recall == 0

    def __add__(self, other: DetectionReport) -> DetectionReport:
        return DetectionReport(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.match_radius)


def assign_points(a: np.ndarray, b: np.ndarray, radius: float) -> list[tuple[int, int]]:
    """One-to-one pairs (i, j) with |a_i - b_j| <= radius, as many as possible, then closest."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        return []
    pairs = cKDTree(a).sparse_distance_matrix(cKDTree(b), radius, output_type="ndarray")
    if len(pairs) == 0:
        return []
    li, ri = pairs["i"], pairs["j"]
    d = np.hypot(*(a[li] - b[ri]).T)
    ok = d <= radius
    li, ri, d = li[ok], ri[ok], d[ok]
    # each edge is worth 1 plus a closeness bonus too small to ever trade away an edge
    k = min(len(a), len(b))
    wts = 1.0 + (radius - d) / (radius * (k + 1))
    order = np.lexsort((ri, li))
    g = PoreCandidateGraph(len(a), len(b), tuple(
        (int(li[i]), int(ri[i]), float(wts[i])) for i in order))
    return [(l, r) for l, r, _ in max_weight_matching(g).matches]


def score_detections(detected: PoreTemplate, truth: GroundTruthPores,
                     radius: float | None = None) -> DetectionReport:
    if detected.ppi != truth.ppi:
        raise ValueError(f"detections at {detected.ppi} ppi, truth at {truth.ppi} ppi")
    r = match_radius(truth.ppi) if radius is None else float(radius)
    if r <= 0:
        raise ValueError("radius must be positive")
    tp = len(assign_points(detected.xy, truth.points, r))
    return DetectionReport(tp, len(detected) - tp, len(truth) - tp, r)


# ---------------------------------------------------------------------------
# Corpus benchmark

@dataclass(frozen=True)
class BenchmarkRow:
    image: str
    confidence: float
    report: DetectionReport
    extract_ms: float


@dataclass
class BenchmarkResult:
    rows: list
    aggregate: dict
    failures: list

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def read_manifest(path) -> list[tuple[Path, Path]]:
    """``image_path truth_path`` per line, relative to the manifest."""
    path = Path(path)
    items = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected 'image_path truth_path'")
        items.append((path.parent / parts[0], path.parent / parts[1]))
    return items


def _bench_one(item, confidences, eparams, xparams, ppi, radius):
    img_path, truth_path = item
    img = load_image(img_path, ppi)
    truth = load_truth(truth_path)
    if truth.ppi != img.ppi:
        truth = GroundTruthPores(truth.source_id, img.ppi, truth.points * img.ppi / truth.ppi)
    enhancer = STFTEnhancer(eparams)
    rows = []
    for c in confidences:
        t0 = time.perf_counter()
        det = extract_pores(img, eparams, replace(xparams, confidence=float(c)), enhancer=enhancer)
        ms = (time.perf_counter() - t0) * 1000.0
        rows.append(BenchmarkRow(str(img_path), float(c), score_detections(det, truth, radius), ms))
    return rows


def run_benchmark(manifest, confidences=(50.0,), eparams: EnhancementParams = EnhancementParams(),
                  xparams: ExtractionParams = ExtractionParams(), ppi: int | None = None,
                  radius: float | None = None, jobs: int = 1) -> BenchmarkResult:
    """Per-image rows in manifest order plus micro-averaged totals per confidence.

    Items that cannot be read are listed in ``failures`` and skipped.
    """
    confidences = [float(c) for c in confidences]
    items = read_manifest(manifest)

    def one(item):
        try:
            return _bench_one(item, confidences, eparams, xparams, ppi, radius), None
        except (OSError, ValueError) as exc:
            return None, f"{item[0]}: {exc}"

    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            out = list(ex.map(one, items))
    else:
        out = [one(it) for it in items]
    rows, failures = [], []
    for r, err in out:
        if err:
            failures.append(err)
        else:
            rows.extend(r)
    aggregate = {}
    for c in confidences:
        sel = [r.report for r in rows if r.confidence == c]
        if sel:
            aggregate[c] = sum(sel[1:], sel[0])
    return BenchmarkResult(rows, aggregate, failures)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def format_report(result: BenchmarkResult, header: str = "", timing: bool = True) -> str:
    """CSV with fixed columns; aggregate rows use image ``ALL`` and an empty time."""
    lines = [f"# {ln}" if ln else "#" for ln in header.splitlines()]
    lines.append(",".join(REPORT_COLUMNS))
    for row in result.rows:
        r = row.report
        ms = f"{row.extract_ms:.3f}" if timing else ""
        lines.append(",".join([row.image, f"{row.confidence:g}", str(r.tp), str(r.fp), str(r.fn),
                               _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), ms]))
    for c, r in result.aggregate.items():
        lines.append(",".join(["ALL", f"{c:g}", str(r.tp), str(r.fp), str(r.fn),
                               _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), ""]))
    return "\n".join(lines) + "\n"
