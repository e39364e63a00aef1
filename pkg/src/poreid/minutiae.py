"""Minutiae templates, an alignment-based correspondence finder, and similarity-transform fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("ending", "bifurcation", "unknown")

# Weight of angular residuals, in pixels per radian.
ANGLE_WEIGHT = 10.0
# Residual scale of the pair score exp(-d / tau); any value gives self-score 1.
SCORE_TAU = 25.0
# Alignment tolerances: position in pixels at 1000 ppi, direction in radians.
RIGID_TOLERANCE = 15.0
ALIGN_ANGLE = math.radians(30.0)

CONSENSUS_ITERATIONS = 200
INLIER_RADIUS = 10.0
COLLINEAR_TOLERANCE = 1.0
SCALE_RANGE = (0.5, 2.0)


class TransformError(ValueError):
    pass


class InsufficientPairsError(TransformError):
    pass


class DegenerateGeometryError(TransformError):
    pass


class TransformRejectedError(TransformError):
    pass


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class Minutia:
    x: float
    y: float
    angle: float
    kind: str = "unknown"
    quality: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown minutia kind {self.kind!r}")
        object.__setattr__(self, "angle", float(self.angle) % (2 * math.pi))
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"quality must be in [0, 1], got {self.quality}")


@dataclass(frozen=True)
class MinutiaeTemplate:
    source_id: str
    ppi: int
    minutiae: tuple[Minutia, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        if not self.source_id or any(c.isspace() for c in self.source_id):
            raise ValueError(f"source_id must be a non-empty token, got {self.source_id!r}")

    def __len__(self):
        return len(self.minutiae)

    @property
    def xy(self) -> np.ndarray:
        return np.array([(m.x, m.y) for m in self.minutiae], dtype=np.float64).reshape(-1, 2)

    @property
    def angles(self) -> np.ndarray:
        return np.array([m.angle for m in self.minutiae], dtype=np.float64)

    def rescaled(self, ppi: int) -> MinutiaeTemplate:
        f = ppi / self.ppi
        return MinutiaeTemplate(self.source_id, ppi, tuple(
            Minutia(m.x * f, m.y * f, m.angle, m.kind, m.quality) for m in self.minutiae))


@dataclass(frozen=True)
class MinutiaPairSet:
    """One-to-one (latent index, rolled index, score) correspondences."""

    pairs: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        pairs = tuple((int(a), int(b), float(s)) for a, b, s in self.pairs)
        lat = [p[0] for p in pairs]
        rol = [p[1] for p in pairs]
        if len(set(lat)) != len(lat) or len(set(rol)) != len(rol):
            raise ValueError("pair set must be one-to-one")
        if any(p[0] < 0 or p[1] < 0 for p in pairs):
            raise ValueError("pair indices must be non-negative")
        object.__setattr__(self, "pairs", pairs)

    @property
    def total_score(self) -> float:
        return float(sum(p[2] for p in self.pairs))

    def __len__(self):
        return len(self.pairs)

    def validate(self, latent: MinutiaeTemplate, rolled: MinutiaeTemplate) -> None:
        for a, b, _ in self.pairs:
            if a >= len(latent) or b >= len(rolled):
                raise IndexError(f"pair ({a}, {b}) out of range for templates "
                                 f"of size {len(latent)} and {len(rolled)}")


@dataclass(frozen=True)
class SimilarityTransform:
    """Maps (x, y) to scale * R(theta) (x, y) + (tx, ty)."""

    scale: float = 1.0
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        for name in ("scale", "theta", "tx", "ty"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls()

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self.matrix.T + np.array([self.tx, self.ty])

    def inverse(self) -> SimilarityTransform:
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.theta), math.sin(-self.theta)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(inv_scale, -self.theta, tx, ty)

    def then(self, other: SimilarityTransform) -> SimilarityTransform:
        """The transform applying ``self`` first, then ``other``."""
        t = other.apply([[self.tx, self.ty]])[0]
        return SimilarityTransform(self.scale * other.scale, self.theta + other.theta, t[0], t[1])


# ---------------------------------------------------------------------------
# Correspondences

def _alignments(latent: MinutiaeTemplate, rolled: MinutiaeTemplate):
    """Residual distance and angle of every latent minutia against every rolled one, under
    each rigid alignment that maps latent minutia i onto rolled minutia j.

    Returns arrays of shape (nl * nr, nl, nr); hypothesis h = i * nr + j.
    """
    scale = rolled.ppi / latent.ppi
    lxy, rxy = latent.xy * scale, rolled.xy
    la, ra = latent.angles, rolled.angles
    nl, nr = len(lxy), len(rxy)
    dtheta = (ra[None, :] - la[:, None]).ravel()
    c, s = np.cos(dtheta)[:, None], np.sin(dtheta)[:, None]
    ai, aj = np.divmod(np.arange(nl * nr), nr)
    rel = lxy[None, :, :] - lxy[ai][:, None, :]
    x = c * rel[..., 0] - s * rel[..., 1] + rxy[aj, 0][:, None]
    y = s * rel[..., 0] + c * rel[..., 1] + rxy[aj, 1][:, None]
    dist = np.hypot(x[:, :, None] - rxy[None, None, :, 0], y[:, :, None] - rxy[None, None, :, 1])
    dang = np.abs(wrap_angle(ra[None, None, :] - la[None, :, None] - dtheta[:, None, None]))
    return dist, dang


def _greedy_pairs(cost: np.ndarray, ok: np.ndarray):
    li, ri = np.nonzero(ok)
    order = np.lexsort((ri, li, cost[li, ri]))
    used_l, used_r, out = set(), set(), []
    for k in order:
        i, j = int(li[k]), int(ri[k])
        if i in used_l or j in used_r:
            continue
        used_l.add(i)
        used_r.add(j)
        out.append((i, j, float(np.exp(-cost[i, j] / SCORE_TAU))))
    return out


def match_minutiae(latent: MinutiaeTemplate, rolled: MinutiaeTemplate) -> MinutiaPairSet:
    """Pairs from the best anchor alignment.

    Each latent/rolled pair proposes the rigid alignment that superimposes the two minutiae.
    Minutiae landing within RIGID_TOLERANCE and ALIGN_ANGLE of a rolled minutia are paired
    greedily by residual; the alignment with the largest total pair score wins. Unlike
    neighbourhood descriptors this does not depend on minutiae outside a latent's crop.
    """
    if len(latent) < 2 or len(rolled) < 2:
        return MinutiaPairSet()
    tol = RIGID_TOLERANCE * rolled.ppi / 1000.0
    dist, dang = _alignments(latent, rolled)
    ok = (dist <= tol) & (dang <= ALIGN_ANGLE)
    cost = dist + ANGLE_WEIGHT * dang
    cost[cost < 1e-9] = 0.0  # exact self-alignments score exactly 1
    w = np.where(ok, np.exp(-cost / SCORE_TAU), 0.0)
    bound = w.max(axis=2).sum(axis=1)
    best, best_score = [], 0.0
    for h in np.argsort(-bound, kind="stable"):
        if bound[h] <= best_score + 1e-12:
            break
        pairs = _greedy_pairs(cost[h], ok[h])
        score = sum(p[2] for p in pairs)
        if score > best_score + 1e-12:
            best, best_score = pairs, score
    return MinutiaPairSet(tuple(sorted(best)))


# ---------------------------------------------------------------------------
# Transform estimation

def procrustes(src: np.ndarray, dst: np.ndarray) -> SimilarityTransform:
    """Closed-form similarity fit: centroid alignment, scale from the norm ratio,
    rotation from the angle of the cross-covariance."""
    z = src[:, 0] + 1j * src[:, 1]
    w = dst[:, 0] + 1j * dst[:, 1]
    zm, wm = z.mean(), w.mean()
    zc, wc = z - zm, w - wm
    nz = np.sum(np.abs(zc) ** 2)
    if nz == 0:
        raise DegenerateGeometryError("source points coincide")
    nw = np.sum(np.abs(wc) ** 2)
    if nw == 0:
        raise DegenerateGeometryError("target points coincide")
    scale = math.sqrt(nw / nz)
    theta = float(np.angle(np.sum(np.conj(zc) * wc)))
    rot = complex(math.cos(theta), math.sin(theta))
    t = wm - scale * rot * zm
    return SimilarityTransform(scale, theta, t.real, t.imag)


def _batch_procrustes(src: np.ndarray, dst: np.ndarray):
    """Vectorized ``procrustes`` over a batch of (m, k, 2) point sets."""
    z = src[..., 0] + 1j * src[..., 1]
    w = dst[..., 0] + 1j * dst[..., 1]
    zm = z.mean(axis=1, keepdims=True)
    wm = w.mean(axis=1, keepdims=True)
    zc, wc = z - zm, w - wm
    nz = np.sum(np.abs(zc) ** 2, axis=1)
    nw = np.sum(np.abs(wc) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.sqrt(nw / nz)
    theta = np.angle(np.sum(np.conj(zc) * wc, axis=1))
    rot = np.cos(theta) + 1j * np.sin(theta)
    t = wm[:, 0] - scale * rot * zm[:, 0]
    return scale, theta, t


def _collinear(pts: np.ndarray) -> np.ndarray:
    """(m, 3, 2) triples whose third point lies within tolerance of the line through
    the farthest pair (coincident points included)."""
    a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
    cross = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    longest = np.max(np.stack([np.linalg.norm(b - a, axis=1), np.linalg.norm(c - a, axis=1),
                               np.linalg.norm(c - b, axis=1)]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        height = np.where(longest > 0, cross / longest, 0.0)
    return height < COLLINEAR_TOLERANCE


def _check_scale(t: SimilarityTransform) -> SimilarityTransform:
    lo, hi = SCALE_RANGE
    if not lo <= t.scale <= hi:
        raise TransformRejectedError(f"fitted scale {t.scale:.3f} outside [{lo}, {hi}]")
    return t


def fit_points(src, dst, seed: int = 0, iterations: int = CONSENSUS_ITERATIONS,
               inlier_radius: float = INLIER_RADIUS) -> tuple[SimilarityTransform, np.ndarray]:
    """Consensus similarity fit of ``src`` onto ``dst``; returns the transform and inlier mask.

    Candidate models are ranked by (inlier count, -RMS, iteration index).
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = len(src)
    if n < 3:
        raise InsufficientPairsError(f"need at least 3 pairs, got {n}")
    if n == 3:
        if _collinear(src[None])[0] or _collinear(dst[None])[0]:
            raise DegenerateGeometryError("the three pairs are collinear")
        return _check_scale(procrustes(src, dst)), np.ones(3, dtype=bool)

    rng = np.random.default_rng(seed)
    samples = np.argsort(rng.random((iterations, n)), axis=1)[:, :3]
    ok = ~(_collinear(src[samples]) | _collinear(dst[samples]))
    if not ok.any():
        raise DegenerateGeometryError("every consensus sample was collinear")
    scale, theta, t = _batch_procrustes(src[samples], dst[samples])
    z = src[:, 0] + 1j * src[:, 1]
    w = dst[:, 0] + 1j * dst[:, 1]
    mapped = (scale * (np.cos(theta) + 1j * np.sin(theta)))[:, None] * z[None, :] + t[:, None]
    resid = np.abs(mapped - w[None, :])
    inl = resid < inlier_radius
    counts = np.where(ok, inl.sum(axis=1), -1)
    sq = np.where(inl, resid ** 2, 0.0).sum(axis=1)
    rms = np.sqrt(sq / np.maximum(counts, 1))
    best = None
    for it in np.flatnonzero(counts == counts.max()):
        key = (-rms[it], -it)
        if best is None or key > best[0]:
            best = (key, it)
    mask = inl[best[1]]
    if mask.sum() >= 3:
        model = procrustes(src[mask], dst[mask])
    else:
        model = SimilarityTransform(float(scale[best[1]]), float(theta[best[1]]),
                                    float(t[best[1]].real), float(t[best[1]].imag))
    return _check_scale(model), mask


def estimate_transform(pairs: MinutiaPairSet, latent: MinutiaeTemplate, rolled: MinutiaeTemplate,
                       seed: int = 0) -> SimilarityTransform:
    """Latent-to-rolled similarity transform from matched minutiae."""
    if len(pairs) < 3:
        raise InsufficientPairsError(f"need at least 3 minutiae pairs, got {len(pairs)}")
    pairs.validate(latent, rolled)
    # sort so the result does not depend on pair order
    ordered = sorted(pairs.pairs)
    li = [p[0] for p in ordered]
    ri = [p[1] for p in ordered]
    model, _ = fit_points(latent.xy[li], rolled.xy[ri], seed=seed)
    return model


# ---------------------------------------------------------------------------
# File formats

def format_minutiae(t: MinutiaeTemplate) -> str:
    lines = [f"MNTTPL 1 {t.source_id} {t.ppi} {len(t)}"]
    lines += [f"{m.x:.6f} {m.y:.6f} {m.angle:.6f} {m.kind} {m.quality:.6f}" for m in t.minutiae]
    return "\n".join(lines) + "\n"


def parse_minutiae(text: str) -> MinutiaeTemplate:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty minutiae template")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "MNTTPL" or head[1] != "1":
        raise ValueError(f"bad minutiae template header {lines[0]!r}")
    count = int(head[4])
    if len(lines) - 1 != count:
        raise ValueError(f"header declares {count} minutiae, found {len(lines) - 1}")
    mins = []
    for ln in lines[1:]:
        x, y, a, kind, q = ln.split()
        mins.append(Minutia(float(x), float(y), float(a), kind, float(q)))
    return MinutiaeTemplate(head[2], int(head[3]), tuple(mins))


def format_pairs(p: MinutiaPairSet) -> str:
    lines = [f"PAIRS 1 {len(p)}"] + [f"{a} {b} {s:.6f}" for a, b, s in p.pairs]
    return "\n".join(lines) + "\n"


def parse_pairs(text: str) -> MinutiaPairSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty pairs file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "PAIRS" or head[1] != "1":
        raise ValueError(f"bad pairs header {lines[0]!r}")
    if int(head[2]) != len(lines) - 1:
        raise ValueError(f"header declares {head[2]} pairs, found {len(lines) - 1}")
    pairs = []
    for ln in lines[1:]:
        a, b, s = ln.split()
        pairs.append((int(a), int(b), float(s)))
    return MinutiaPairSet(tuple(pairs))


def load_minutiae(path) -> MinutiaeTemplate:
    return parse_minutiae(Path(path).read_text(encoding="utf-8"))


def save_minutiae(t: MinutiaeTemplate, path) -> None:
    Path(path).write_text(format_minutiae(t), encoding="utf-8")


def load_pairs(path) -> MinutiaPairSet:
    return parse_pairs(Path(path).read_text(encoding="utf-8"))
