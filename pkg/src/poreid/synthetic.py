"""Deterministic synthetic fingerprints with pore, minutiae and alignment ground truth.

Ridges are the level sets of a phase field: a plane wave, a few low-frequency
bending terms running along the ridges, and one spiral term per minutia. Dark
ridges occupy the band ``|wrap(phase)| < pi * ridge_fraction`` so ridge
centrelines sit at ``phase = 0 (mod 2 pi)``; pores are bright disks stamped on
those centrelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import GroundTruthPores
from .imaging import GrayImage
from .minutiae import Minutia, MinutiaeTemplate, SimilarityTransform, wrap_angle

RIDGE_LEVEL = 50.0
VALLEY_LEVEL = 205.0
# Rolled-print minutiae density giving ~58 minutiae on an 800 x 800 image at 1000 ppi.
DEFAULT_MINUTIAE_DENSITY = 58.0 / 640_000.0
LATENT_MINUTIAE_TARGET = 13


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    width: int = 512
    height: int = 512
    ppi: int = 1000
    ridge_period: float = 18.0
    orientation_field: str = "smooth-random"
    orientation: float | None = None
    pore_rate: float = 0.028
    pore_radius: float = 2.5
    noise_level: float = 0.0
    salt_pepper: float = 0.0
    crop: tuple[int, int, int, int] | None = None
    deformation_amplitude: float = 0.0
    minutiae_density: float = DEFAULT_MINUTIAE_DENSITY
    ridge_fraction: float = 0.65
    bend: float = 0.35
    # pores open to a random fraction of the ridge-to-valley contrast
    pore_depth: tuple[float, float] = (1.0, 1.0)

    def validate(self):
        if self.orientation_field not in ("constant", "smooth-random"):
            raise ValueError(f"orientation_field must be 'constant' or 'smooth-random', "
                             f"got {self.orientation_field!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.ridge_period <= 2 or min(self.width, self.height) < self.ridge_period:
            raise ValueError("parameters produce less than one ridge period in the image")
        if not 0.0 < self.ridge_fraction < 1.0:
            raise ValueError("ridge_fraction must be in (0, 1)")
        if not 0.0 <= self.noise_level <= 1.0 or not 0.0 <= self.salt_pepper <= 1.0:
            raise ValueError("noise levels must be in [0, 1]")
        if self.pore_radius <= 0 or self.pore_rate < 0:
            raise ValueError("pore_radius must be positive and pore_rate non-negative")
        lo, hi = self.pore_depth
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"pore_depth must satisfy 0 < low <= high <= 1, got {self.pore_depth}")
        if self.crop is not None:
            x0, y0, w, h = self.crop
            if x0 < 0 or y0 < 0 or w < 1 or h < 1 or x0 + w > self.width or y0 + h > self.height:
                raise ValueError(f"crop {self.crop} outside the {self.width}x{self.height} canvas")


class RidgeField:
    """Analytic phase field with minutia spirals and pore centres, in field coordinates."""

    def __init__(self, wave, bend_amp, bend_freq, bend_phase, minutiae_xy, charges,
                 ridge_fraction, pore_radius):
        self.wave = np.asarray(wave, dtype=np.float64)
        self.bend_amp = np.asarray(bend_amp, dtype=np.float64)
        self.bend_freq = np.asarray(bend_freq, dtype=np.float64).reshape(-1, 2)
        self.bend_phase = np.asarray(bend_phase, dtype=np.float64)
        self.minutiae_xy = np.asarray(minutiae_xy, dtype=np.float64).reshape(-1, 2)
        self.charges = np.asarray(charges, dtype=np.float64)
        self.ridge_fraction = ridge_fraction
        self.pore_radius = pore_radius
        self.minutiae_angle = np.zeros(len(self.minutiae_xy))
        self.minutiae_kind: list[str] = []
        self.pores = np.zeros((0, 2))
        self.pore_depth = np.zeros(0)

    def smooth_phase(self, x, y, skip=None):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        phi = self.wave[0] * x + self.wave[1] * y
        for a, w, p in zip(self.bend_amp, self.bend_freq, self.bend_phase):
            phi = phi + a * np.sin(w[0] * x + w[1] * y + p)
        for m, ((mx, my), q) in enumerate(zip(self.minutiae_xy, self.charges)):
            if m != skip:
                phi = phi + q * np.arctan2(y - my, x - mx)
        return phi

    def phase(self, x, y):
        return self.smooth_phase(x, y)

    def gradient(self, x, y, skip=None):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gx = np.full(np.broadcast(x, y).shape, self.wave[0])
        gy = np.full(gx.shape, self.wave[1])
        for a, w, p in zip(self.bend_amp, self.bend_freq, self.bend_phase):
            c = a * np.cos(w[0] * x + w[1] * y + p)
            gx = gx + c * w[0]
            gy = gy + c * w[1]
        for m, ((mx, my), q) in enumerate(zip(self.minutiae_xy, self.charges)):
            if m == skip:
                continue
            dx, dy = x - mx, y - my
            r2 = np.maximum(dx * dx + dy * dy, 1e-9)
            gx = gx - q * dy / r2
            gy = gy + q * dx / r2
        return gx, gy

    def project_to_centreline(self, pts, iterations=6):
        p = np.array(pts, dtype=np.float64).reshape(-1, 2)
        for _ in range(iterations):
            phi = wrap_angle(self.phase(p[:, 0], p[:, 1]))
            gx, gy = self.gradient(p[:, 0], p[:, 1])
            g2 = np.maximum(gx * gx + gy * gy, 1e-12)
            p[:, 0] -= phi * gx / g2
            p[:, 1] -= phi * gy / g2
        return p

    def phase_and_gradient(self, x, y):
        """``phase`` and ``gradient`` in one pass over the minutiae."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        phi = self.wave[0] * x + self.wave[1] * y
        gx = np.full(phi.shape, self.wave[0])
        gy = np.full(phi.shape, self.wave[1])
        for a, w, p in zip(self.bend_amp, self.bend_freq, self.bend_phase):
            arg = w[0] * x + w[1] * y + p
            phi += a * np.sin(arg)
            c = a * np.cos(arg)
            gx += c * w[0]
            gy += c * w[1]
        for (mx, my), q in zip(self.minutiae_xy, self.charges):
            dx, dy = x - mx, y - my
            phi += q * np.arctan2(dy, dx)
            r2 = np.maximum(dx * dx + dy * dy, 1e-9)
            gx -= q * dy / r2
            gy += q * dx / r2
        return phi, gx, gy

    def ridge_coverage(self, x, y, pixel_size=1.0):
        """Anti-aliased dark-ridge coverage in [0, 1] at field points."""
        phi, gx, gy = self.phase_and_gradient(x, y)
        psi = np.abs(wrap_angle(phi))
        g = np.maximum(np.hypot(gx, gy), 1e-9)
        dist = (np.pi * self.ridge_fraction - psi) / g / pixel_size
        return np.clip(0.5 + dist, 0.0, 1.0)


class Deformation:
    """Smooth displacement field: a sum of three low-frequency sinusoids, |d| <= amplitude."""

    def __init__(self, amplitude, size, rng):
        self.amplitude = float(amplitude)
        k = 3
        wavelengths = rng.uniform(1.5, 3.0, size=k) * size
        dirs = rng.uniform(0, 2 * np.pi, size=k)
        self.freq = np.stack([np.cos(dirs), np.sin(dirs)], axis=1) * (2 * np.pi / wavelengths)[:, None]
        self.phase = rng.uniform(0, 2 * np.pi, size=k)
        vdirs = rng.uniform(0, 2 * np.pi, size=k)
        weights = rng.uniform(0.5, 1.0, size=k)
        weights = weights / weights.sum() * self.amplitude
        self.vec = np.stack([np.cos(vdirs), np.sin(vdirs)], axis=1) * weights[:, None]

    def __call__(self, x, y):
        dx = np.zeros(np.broadcast(x, y).shape)
        dy = np.zeros(dx.shape)
        for f, p, v in zip(self.freq, self.phase, self.vec):
            s = np.sin(f[0] * x + f[1] * y + p)
            dx = dx + v[0] * s
            dy = dy + v[1] * s
        return dx, dy


@dataclass
class Frame:
    """Pixel-to-field mapping as a chain of steps applied in order.

    Steps: ("offset", dx, dy) adds a constant, ("deform", d) adds d(p),
    ("inverse", T) applies T^-1.
    """

    steps: list = field(default_factory=list)

    def to_field(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        for step in self.steps:
            kind = step[0]
            if kind == "offset":
                x, y = x + step[1], y + step[2]
            elif kind == "deform":
                dx, dy = step[1](x, y)
                x, y = x + dx, y + dy
            else:
                inv = step[1].inverse()
                m = inv.matrix
                x, y = m[0, 0] * x + m[0, 1] * y + inv.tx, m[1, 0] * x + m[1, 1] * y + inv.ty
        return x, y

    def to_pixel(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        for step in reversed(self.steps):
            kind = step[0]
            if kind == "offset":
                x, y = x - step[1], y - step[2]
            elif kind == "deform":
                # solve p + d(p) = q by fixed point; the field is a contraction
                px, py = x.copy(), y.copy()
                for _ in range(30):
                    dx, dy = step[1](px, py)
                    px, py = x - dx, y - dy
                x, y = px, py
            else:
                m = step[1].matrix
                x, y = (m[0, 0] * x + m[0, 1] * y + step[1].tx,
                        m[1, 0] * x + m[1, 1] * y + step[1].ty)
        return x, y

    def pixel_size(self) -> float:
        """Field units per pixel (deformations are treated as locally rigid)."""
        s = 1.0
        for step in self.steps:
            if step[0] == "inverse":
                s /= step[1].scale
        return s

    def then(self, *steps) -> Frame:
        return Frame(list(steps) + list(self.steps))


@dataclass
class SynthOutput:
    image: GrayImage
    truth_pores: GroundTruthPores
    truth_minutiae: MinutiaeTemplate
    applied_transform: SimilarityTransform
    deformation: Deformation | None
    field: RidgeField
    frame: Frame
    # indices into field.pores / field minutiae for each truth entry
    pore_ids: np.ndarray
    minutia_ids: np.ndarray
    crop: tuple[int, int, int, int] | None = None


# ---------------------------------------------------------------------------

def _place_minutiae(rng, n, w, h, min_sep, margin):
    pts = []
    for _ in range(n * 50):
        if len(pts) == n:
            break
        p = rng.uniform([margin, margin], [w - margin, h - margin])
        if all(np.hypot(*(p - q)) >= min_sep for q in pts):
            pts.append(p)
    return np.array(pts).reshape(-1, 2)


def _settle_minutiae(fld: RidgeField, kinds, period):
    """Shift each minutia across the flow so its stem runs along a ridge (bifurcation)
    or a valley (ending) centre, and record its direction (pointing along the stem)."""
    targets = np.array([0.0 if k == "bifurcation" else np.pi for k in kinds])
    for _ in range(6):
        for m in range(len(fld.minutiae_xy)):
            mx, my = fld.minutiae_xy[m]
            gx, gy = fld.gradient(mx, my, skip=m)
            g = math.hypot(gx, gy)
            nx, ny = gx / g, gy / g
            q = fld.charges[m]
            sx, sy = -ny * q, nx * q
            probe = np.array([mx + 0.5 * period * sx, my + 0.5 * period * sy])
            stem = fld.smooth_phase(probe[0], probe[1], skip=m) + q * math.atan2(sy, sx)
            delta = -float(wrap_angle(stem - targets[m])) / g
            fld.minutiae_xy[m] = (mx + delta * nx, my + delta * ny)
            fld.minutiae_angle[m] = math.atan2(sy, sx) % (2 * np.pi)
    fld.minutiae_kind = list(kinds)


def _place_pores(fld: RidgeField, rng, w, h, rate, period, radius):
    n = rng.poisson(rate * w * h / period)
    cand = rng.uniform([0, 0], [w, h], size=(n, 2))
    cand = fld.project_to_centreline(cand)
    ok = np.abs(wrap_angle(fld.phase(cand[:, 0], cand[:, 1]))) < 1e-3
    margin = radius + 3
    ok &= (cand[:, 0] >= margin) & (cand[:, 0] <= w - 1 - margin)
    ok &= (cand[:, 1] >= margin) & (cand[:, 1] <= h - 1 - margin)
    gx, gy = fld.gradient(cand[:, 0], cand[:, 1])
    local_period = 2 * np.pi / np.maximum(np.hypot(gx, gy), 1e-9)
    # the pore must fit inside the ridge with a wall of at least 3 px on either side
    ok &= local_period * fld.ridge_fraction >= 2 * radius + 6
    if len(fld.minutiae_xy):
        d = np.linalg.norm(cand[:, None, :] - fld.minutiae_xy[None], axis=2).min(axis=1)
        ok &= d > 1.5 * period
    cand = cand[ok]
    min_sep = max(4.0 * radius, 0.75 * period)
    kept: list[np.ndarray] = []
    for p in cand:
        if not kept or np.min(np.linalg.norm(np.array(kept) - p, axis=1)) >= min_sep:
            kept.append(p)
    return np.array(kept).reshape(-1, 2)


def _build_field(params: SynthParams, rng) -> RidgeField:
    w, h, period = params.width, params.height, params.ridge_period
    alpha = rng.uniform(0, np.pi) if params.orientation is None else params.orientation
    k0 = 2 * np.pi / period
    wave = k0 * np.array([math.cos(alpha), math.sin(alpha)])
    if params.orientation_field == "smooth-random":
        k = 3
        lengths = rng.uniform(0.6, 1.2, size=k) * max(w, h)
        along = alpha + np.pi / 2 + rng.uniform(-0.35, 0.35, size=k)
        freqs = np.stack([np.cos(along), np.sin(along)], axis=1) * (2 * np.pi / lengths)[:, None]
        # bending amplitude giving roughly `bend` radians of orientation swing
        amps = params.bend * k0 / (2 * np.pi / lengths) / k
        phases = rng.uniform(0, 2 * np.pi, size=k)
    else:
        amps, freqs, phases = np.zeros(0), np.zeros((0, 2)), np.zeros(0)
    n_min = int(round(params.minutiae_density * w * h))
    mxy = _place_minutiae(rng, n_min, w, h, min_sep=2.5 * period, margin=period)
    charges = rng.choice([-1.0, 1.0], size=len(mxy))
    kinds = [("ending", "bifurcation")[i] for i in rng.integers(0, 2, size=len(mxy))]
    fld = RidgeField(wave, amps, freqs, phases, mxy, charges, params.ridge_fraction, params.pore_radius)
    _settle_minutiae(fld, kinds, period)
    fld.pores = _place_pores(fld, rng, w, h, params.pore_rate, period, params.pore_radius)
    fld.pore_depth = rng.uniform(*params.pore_depth, size=len(fld.pores))
    return fld


def _render(fld: RidgeField, frame: Frame, width, height, rng, noise_level, salt_pepper):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    fx, fy = frame.to_field(xs, ys)
    psize = frame.pixel_size()
    ridge = fld.ridge_coverage(fx, fy, psize)
    pore_cov = np.zeros((height, width))

    # truth pores: field pores whose stamped disk lies fully inside the image
    px, py = frame.to_pixel(fld.pores[:, 0], fld.pores[:, 1])
    r_px = fld.pore_radius / psize
    margin = r_px + 1
    inside = (px >= margin) & (px <= width - 1 - margin) & (py >= margin) & (py <= height - 1 - margin)
    pore_ids = np.flatnonzero(inside)
    half = int(math.ceil(r_px + 2))
    near = (px >= -half) & (px <= width - 1 + half) & (py >= -half) & (py <= height - 1 + half)
    if near.any():
        cx = np.rint(px[near]).astype(int)
        cy = np.rint(py[near]).astype(int)
        oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
        wx = cx[:, None] + ox.ravel()[None]
        wy = cy[:, None] + oy.ravel()[None]
        valid = (wx >= 0) & (wx < width) & (wy >= 0) & (wy < height)
        qx, qy = frame.to_field(wx.astype(float), wy.astype(float))
        centres = fld.pores[near]
        d = np.hypot(qx - centres[:, 0:1], qy - centres[:, 1:2])
        cov = np.clip(0.5 + (fld.pore_radius - d) / psize, 0.0, 1.0) * fld.pore_depth[near][:, None]
        np.maximum.at(pore_cov, (wy[valid], wx[valid]), cov[valid])

    dark = ridge * (1.0 - pore_cov)
    img = VALLEY_LEVEL + (RIDGE_LEVEL - VALLEY_LEVEL) * dark
    if noise_level > 0:
        img = img + rng.normal(0.0, noise_level * (VALLEY_LEVEL - RIDGE_LEVEL), size=img.shape)
    if salt_pepper > 0:
        u = rng.random(img.shape)
        img = np.where(u < salt_pepper / 2, 0.0, img)
        img = np.where((u >= salt_pepper / 2) & (u < salt_pepper), 255.0, img)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return img, pore_ids, np.stack([px, py], axis=1)


def _truth_minutiae(fld: RidgeField, frame: Frame, width, height, source_id, ppi):
    mx, my = frame.to_pixel(fld.minutiae_xy[:, 0], fld.minutiae_xy[:, 1])
    step = 2.0
    ax, ay = frame.to_pixel(fld.minutiae_xy[:, 0] + step * np.cos(fld.minutiae_angle),
                            fld.minutiae_xy[:, 1] + step * np.sin(fld.minutiae_angle))
    angles = np.arctan2(ay - my, ax - mx) % (2 * np.pi)
    ids = np.flatnonzero((mx >= 0) & (mx <= width - 1) & (my >= 0) & (my <= height - 1))
    mins = tuple(Minutia(float(mx[i]), float(my[i]), float(angles[i]), fld.minutiae_kind[i], 1.0)
                 for i in ids)
    return MinutiaeTemplate(source_id, ppi, mins), ids


def generate(params: SynthParams, source_id: str | None = None) -> SynthOutput:
    """Render a synthetic print; fully determined by ``params`` (including the seed)."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    fld = _build_field(params, rng)
    frame = Frame()
    deformation = None
    if params.deformation_amplitude > 0:
        deformation = Deformation(params.deformation_amplitude, max(params.width, params.height), rng)
        frame = frame.then(("deform", deformation))
    width, height = params.width, params.height
    if params.crop is not None:
        x0, y0, width, height = params.crop
        frame = frame.then(("offset", x0, y0))
    sid = source_id or f"synth{params.seed}"
    img, pore_ids, pore_px = _render(fld, frame, width, height, rng, params.noise_level, params.salt_pepper)
    truth = GroundTruthPores(sid, params.ppi, pore_px[pore_ids])
    mnt, mids = _truth_minutiae(fld, frame, width, height, sid, params.ppi)
    return SynthOutput(GrayImage(img, params.ppi), truth, mnt, SimilarityTransform.identity(),
                       deformation, fld, frame, pore_ids, mids, params.crop)


def derive_latent(parent: SynthOutput, transform: SimilarityTransform, crop, noise_level: float = 0.0,
                  seed: int = 0, deformation_amplitude: float = 0.0, salt_pepper: float = 0.0,
                  minutiae_jitter: float = 0.0, source_id: str | None = None) -> SynthOutput:
    """Latent impression of ``parent``: ``transform`` maps parent pixels into the latent
    frame, which is then cut to ``crop = (x0, y0, width, height)``.

    Ground-truth correspondences to the parent are kept in ``pore_ids`` /
    ``minutia_ids`` (both index the shared ridge field).
    """
    lo, hi = 0.5, 2.0
    if not lo <= transform.scale <= hi:
        raise ValueError(f"transform scale {transform.scale} outside [{lo}, {hi}]")
    x0, y0, w, h = crop
    if w < 1 or h < 1:
        raise ValueError("crop must have positive size")
    corners = np.array([[x0, y0], [x0 + w - 1, y0], [x0, y0 + h - 1], [x0 + w - 1, y0 + h - 1]], float)
    back = transform.inverse().apply(corners)
    pw, ph = parent.image.width, parent.image.height
    if (back < -1e-9).any() or (back[:, 0] > pw - 1 + 1e-9).any() or (back[:, 1] > ph - 1 + 1e-9).any():
        raise ValueError(f"crop {crop} falls outside the parent image under the given transform")
    rng = np.random.default_rng(seed)
    frame = parent.frame.then(("inverse", transform))
    deformation = None
    if deformation_amplitude > 0:
        deformation = Deformation(deformation_amplitude, max(w, h), rng)
        frame = frame.then(("deform", deformation))
    frame = frame.then(("offset", x0, y0))
    sid = source_id or f"{parent.truth_pores.source_id}_latent{seed}"
    fld = parent.field
    img, pore_ids, pore_px = _render(fld, frame, w, h, rng, noise_level, salt_pepper)
    # keep only pores the parent also reports as truth
    pore_ids = pore_ids[np.isin(pore_ids, parent.pore_ids)]
    truth = GroundTruthPores(sid, parent.image.ppi, pore_px[pore_ids])
    mnt, mids = _truth_minutiae(fld, frame, w, h, sid, parent.image.ppi)
    keep = np.isin(mids, parent.minutia_ids)
    mids = mids[keep]
    mins = [m for m, k in zip(mnt.minutiae, keep) if k]
    if minutiae_jitter > 0:
        mins = [Minutia(m.x + rng.normal(0, minutiae_jitter), m.y + rng.normal(0, minutiae_jitter),
                        m.angle + rng.normal(0, minutiae_jitter * 0.05), m.kind, m.quality)
                for m in mins]
    mnt = MinutiaeTemplate(sid, parent.image.ppi, tuple(mins))
    return SynthOutput(GrayImage(img, parent.image.ppi), truth, mnt, transform, deformation, fld, frame,
                       pore_ids, mids, (x0, y0, w, h))


def latent_window(parent: SynthOutput, transform: SimilarityTransform, rng,
                  target_minutiae: float = LATENT_MINUTIAE_TARGET,
                  density: float = DEFAULT_MINUTIAE_DENSITY):
    """A random crop, in the transformed frame, sized to hold ~``target_minutiae``
    minutiae and lying inside the parent."""
    side = int(round(math.sqrt(target_minutiae / density) * transform.scale))
    pw, ph = parent.image.width, parent.image.height
    corners = transform.apply([[0, 0], [pw - 1, 0], [0, ph - 1], [pw - 1, ph - 1]])
    inv = transform.inverse()
    for _ in range(500):
        x0 = int(rng.uniform(corners[:, 0].min(), corners[:, 0].max() - side))
        y0 = int(rng.uniform(corners[:, 1].min(), corners[:, 1].max() - side))
        box = np.array([[x0, y0], [x0 + side - 1, y0], [x0, y0 + side - 1], [x0 + side - 1, y0 + side - 1]], float)
        back = inv.apply(box)
        if (back >= 0).all() and (back[:, 0] <= pw - 1).all() and (back[:, 1] <= ph - 1).all():
            return (x0, y0, side, side)
    raise ValueError("could not fit a latent window of the requested size inside the parent")


def random_latent(parent: SynthOutput, seed: int, max_rotation: float = math.radians(20),
                  max_shift: float = 30.0, noise_level: float = 0.05, deformation_amplitude: float = 2.0,
                  target_minutiae: float = LATENT_MINUTIAE_TARGET, minutiae_jitter: float = 0.0,
                  source_id: str | None = None) -> SynthOutput:
    rng = np.random.default_rng([seed, 7919])
    theta = rng.uniform(-max_rotation, max_rotation)
    tx, ty = rng.uniform(-max_shift, max_shift, size=2)
    # rotate about the parent centre
    cx, cy = parent.image.width / 2, parent.image.height / 2
    rot = SimilarityTransform(1.0, theta, 0.0, 0.0)
    c = rot.apply([[cx, cy]])[0]
    t = SimilarityTransform(1.0, theta, cx - c[0] + tx, cy - c[1] + ty)
    crop = latent_window(parent, t, rng, target_minutiae)
    return derive_latent(parent, t, crop, noise_level=noise_level, seed=seed,
                         deformation_amplitude=deformation_amplitude,
                         minutiae_jitter=minutiae_jitter, source_id=source_id)


def default_params(**overrides) -> SynthParams:
    return replace(SynthParams(), **overrides)
