"""STFT contextual enhancement: per-block spectral analysis and directional filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .imaging import GrayImage

RIDGE_FREQ_MIN = 1.0 / 25.0
RIDGE_FREQ_MAX = 1.0 / 3.0
ENERGY_FLOOR_FRACTION = 0.1
FFT_SIZE_MIN = 64
MID_GRAY = 128.0
# isotropic blend of the filter above the ridge frequency, in multiples of f0
BLEND_START = 2.5
BLEND_SPAN = 2.0
CLIP_PERCENTILE = 99.5


@dataclass(frozen=True)
class EnhancementParams:
    block_size: int = 32
    overlap: int = 16
    orientation_smoothing_passes: int = 2
    bandpass_bandwidth: float = 0.5
    # width (cycles/px) of the Gaussian roll-off above the ridge frequency; wide enough for pores
    detail_sigma: float = 0.12
    angular_sigma: float = math.radians(30.0)
    # tanh saturation applied to the contrast-equalized output; 0 disables it
    saturation_gain: float = 1.5

    def __post_init__(self):
        b = self.block_size
        if b < 4 or b & (b - 1):
            raise ValueError(f"block_size must be a power of two >= 4, got {b}")
        if not 0 < self.overlap < b:
            raise ValueError(f"overlap must be in (0, block_size), got {self.overlap}")
        if self.orientation_smoothing_passes < 0:
            raise ValueError("orientation_smoothing_passes must be >= 0")
        if self.bandpass_bandwidth <= 0 or self.detail_sigma <= 0:
            raise ValueError("bandpass_bandwidth and detail_sigma must be positive")
        if self.saturation_gain < 0:
            raise ValueError("saturation_gain must be >= 0")

    @property
    def stride(self) -> int:
        return self.block_size - self.overlap


@dataclass(frozen=True)
class BlockSpectrum:
    x: int
    y: int
    dominant_orientation: float
    dominant_frequency: float
    energy: float
    is_ridge: bool


class BlockGrid:
    """Per-block ridge orientation (along the ridges, [0, pi)), frequency, energy and
    ridge flag, as arrays over the block grid. Block (i, j) starts at image
    pixel (j * stride - pad, i * stride - pad)."""

    def __init__(self, orientation, frequency, energy, is_ridge, origins, params, image_shape):
        self.image_shape = image_shape
        self.orientation = orientation
        self.frequency = frequency
        self.energy = energy
        self.is_ridge = is_ridge
        self.origins = origins
        self.params = params

    @property
    def shape(self):
        return self.orientation.shape

    def blocks(self) -> list[list[BlockSpectrum]]:
        pad = self.params.block_size // 2
        out = []
        for i in range(self.shape[0]):
            row = []
            for j in range(self.shape[1]):
                oy, ox = self.origins[0][i] - pad, self.origins[1][j] - pad
                row.append(BlockSpectrum(int(ox), int(oy), float(self.orientation[i, j]),
                                         float(self.frequency[i, j]), float(self.energy[i, j]),
                                         bool(self.is_ridge[i, j])))
            out.append(row)
        return out

    def interior(self) -> np.ndarray:
        """Mask of blocks lying entirely inside the original image."""
        return _interior(self.origins, self.params.block_size, self.image_shape)


def _interior(origins, b: int, shape) -> np.ndarray:
    pad = b // 2
    oy = origins[0] - pad
    ox = origins[1] - pad
    h, w = shape
    ry = (oy >= 0) & (oy + b <= h)
    rx = (ox >= 0) & (ox + b <= w)
    return ry[:, None] & rx[None, :]


def _window(b: int) -> np.ndarray:
    w1 = 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(b) + 0.5) / b)
    return np.outer(w1, w1)


def _blocks(img: np.ndarray, params: EnhancementParams):
    b, s = params.block_size, params.stride
    pad = b // 2
    h, w = img.shape
    ny = int(np.ceil((h + 2 * pad - b) / s)) + 1
    nx = int(np.ceil((w + 2 * pad - b) / s)) + 1
    H = (ny - 1) * s + b
    W = (nx - 1) * s + b
    padded = np.pad(img, ((pad, H - h - pad), (pad, W - w - pad)), mode="reflect")
    view = np.lib.stride_tricks.sliding_window_view(padded, (b, b))[::s, ::s]
    origins = (np.arange(ny) * s, np.arange(nx) * s)
    return padded, view, origins


def _fft_size(b: int) -> int:
    return max(FFT_SIZE_MIN, b)


def _spectra(img: np.ndarray, params: EnhancementParams):
    b = params.block_size
    padded, view, origins = _blocks(img, params)
    win = _window(b)
    data = view - view.mean(axis=(2, 3), keepdims=True)
    n = _fft_size(b)
    spectrum = sfft.rfft2((data * win).astype(np.float32), s=(n, n))
    return padded, spectrum, origins


def _freq_grid(n: int):
    fy = np.fft.fftfreq(n)[:, None]
    fx = np.fft.rfftfreq(n)[None, :]
    return np.broadcast_to(fx, (n, n // 2 + 1)), np.broadcast_to(fy, (n, n // 2 + 1))


def _smooth_orientation(normal, weight, passes):
    """Vector-average doubled angles over 3x3 block neighbourhoods."""
    c = np.cos(2 * normal) * weight
    s = np.sin(2 * normal) * weight
    wsum = weight.astype(np.float64)
    for _ in range(passes):
        c = ndimage.uniform_filter(c, 3, mode="nearest")
        s = ndimage.uniform_filter(s, 3, mode="nearest")
        wsum = ndimage.uniform_filter(wsum, 3, mode="nearest")
    smoothed = 0.5 * np.arctan2(s, c)
    return np.where(wsum > 0, smoothed, normal)


def _analyze(img: np.ndarray, params: EnhancementParams):
    b = params.block_size
    if img.shape[0] < b or img.shape[1] < b:
        raise ValueError(f"image {img.shape[1]}x{img.shape[0]} is smaller than one {b}x{b} block")
    padded, spectrum, origins = _spectra(img, params)
    n = spectrum.shape[-2]
    fx, fy = _freq_grid(n)
    radius = np.hypot(fx, fy)
    # rfft keeps fx >= 0, i.e. one half-plane; drop the duplicated fx == 0, fy < 0 column
    band = (radius >= RIDGE_FREQ_MIN) & (radius <= RIDGE_FREQ_MAX) & ~((fx == 0) & (fy < 0))
    mag = np.abs(spectrum)
    masked = np.where(band, mag, -1.0)
    ny, nx = mag.shape[:2]
    flat = masked.reshape(ny, nx, -1)
    peak = flat.argmax(axis=2)
    energy = np.take_along_axis(flat, peak[..., None], axis=2)[..., 0]
    energy = np.maximum(energy, 0.0)
    # refine the peak by fitting a parabola to log-magnitude along each axis
    py, px = np.unravel_index(peak, (n, n // 2 + 1))
    rows, cols = np.arange(ny)[:, None], np.arange(nx)[None, :]

    def logmag(dy, dx):
        qy, qx = py + dy, px + dx
        # neighbours across the fx = 0 edge are the conjugate mirror
        mirror = qx < 0
        qx_eff = np.minimum(np.where(mirror, -qx, qx), n // 2)
        qy_eff = np.where(mirror, -qy, qy) % n
        return np.log(np.maximum(mag[rows, cols, qy_eff, qx_eff], 1e-12))

    def offset(lm, l0, lp):
        den = lm - 2 * l0 + lp
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(den < 0, 0.5 * (lm - lp) / den, 0.0)
        return np.clip(d, -0.5, 0.5)

    l0 = logmag(0, 0)
    # at the Nyquist column there is no right neighbour; leave fx unrefined there
    dx = np.where(px < n // 2, offset(logmag(0, -1), l0, logmag(0, 1)), 0.0)
    dy = offset(logmag(-1, 0), l0, logmag(1, 0))
    cfx = (px + dx) / n
    cfy = (((py + n // 2) % n - n // 2) + dy) / n
    freq = np.clip(np.hypot(cfx, cfy), RIDGE_FREQ_MIN, RIDGE_FREQ_MAX)
    normal = np.arctan2(cfy, cfx)
    positive = energy[energy > 0]
    floor = ENERGY_FLOOR_FRACTION * np.median(energy) if positive.size else 0.0
    eps = 1e-9 * b * b
    is_ridge = (energy > floor) & (energy > eps)
    # blocks overhanging the border see mirrored ridges, so only interior blocks vote
    votes = is_ridge & _interior(origins, b, img.shape)
    normal = _smooth_orientation(normal, votes, params.orientation_smoothing_passes)
    if is_ridge.any():
        fsum = ndimage.uniform_filter(np.where(is_ridge, freq, 0.0), 3, mode="nearest")
        wsum = ndimage.uniform_filter(is_ridge.astype(float), 3, mode="nearest")
        freq = np.where(wsum > 0, fsum / np.maximum(wsum, 1e-12), freq)
    orientation = (normal + np.pi / 2) % np.pi
    grid = BlockGrid(orientation, freq, energy, is_ridge, origins, params, img.shape)
    return grid, padded, spectrum


def analyze_blocks(img: GrayImage, params: EnhancementParams = EnhancementParams()) -> BlockGrid:
    """Windowed 2-D Fourier analysis of overlapping blocks."""
    grid, _, _ = _analyze(img.pixels.astype(np.float64), params)
    return grid


def _filters(grid: BlockGrid, n: int, params: EnhancementParams) -> np.ndarray:
    """Per-block transfer functions on the rfft grid, shape (ny, nx, n, n // 2 + 1).

    Written with in-place float32 arithmetic; this is the hot loop of the enhancer.
    """
    f32 = np.float32
    fx, fy = _freq_grid(n)
    radius = np.hypot(fx, fy).astype(f32)
    angle = np.arctan2(fy, fx).astype(f32)
    f0 = grid.frequency.astype(f32)[..., None, None]
    normal = (grid.orientation - np.pi / 2).astype(f32)[..., None, None]

    # angular Gaussian around the ridge normal, folded to (-pi/2, pi/2]
    ang = angle - normal
    ang -= f32(np.pi) * np.rint(ang * f32(1 / np.pi))
    ang *= f32(1 / params.angular_sigma)
    ang *= ang
    ang *= f32(-0.5)
    np.exp(ang, out=ang)
    # selectivity fades out well above the ridge frequency so small isotropic structures
    # such as pores keep their spectrum: H = 1 - (1 - angular)(1 - blend)
    blend = radius * (f32(1 / BLEND_SPAN) / f0)
    blend -= f32(BLEND_START / BLEND_SPAN)
    np.clip(blend, 0, 1, out=blend)
    ang -= 1
    blend -= 1
    ang *= blend
    np.subtract(1, ang, out=ang)

    # log-Gaussian skirt below the ridge frequency, Gaussian roll-off above it
    octaves = np.log2(np.maximum(radius, f32(1e-12))) - np.log2(f0)
    below = octaves < 0
    octaves *= f32(1 / params.bandpass_bandwidth)
    radial = radius - f0
    radial *= f32(1 / params.detail_sigma)
    np.copyto(radial, octaves, where=below)
    radial *= radial
    radial *= f32(-0.5)
    np.exp(radial, out=radial)
    ang *= radial
    return ang


def _overlap_add(tiles: np.ndarray, shape, b: int, s: int) -> np.ndarray:
    acc = np.zeros(shape)
    ny, nx = tiles.shape[:2]
    if b % s:
        for i in range(ny):
            for j in range(nx):
                acc[i * s:i * s + b, j * s:j * s + b] += tiles[i, j]
        return acc
    # add one stride-sized sub-tile position at a time across all blocks
    for ti in range(b // s):
        for tj in range(b // s):
            sub = tiles[:, :, ti * s:(ti + 1) * s, tj * s:(tj + 1) * s]
            acc[ti * s:ti * s + ny * s, tj * s:tj * s + nx * s] += sub.transpose(0, 2, 1, 3).reshape(ny * s, nx * s)
    return acc


def stft_enhance(img: GrayImage, params: EnhancementParams = EnhancementParams()) -> GrayImage:
    """Directional band-pass filtering per block, overlap-added and rescaled around mid-gray."""
    data = img.pixels.astype(np.float64)
    grid, padded, spectrum = _analyze(data, params)
    b, s = params.block_size, params.stride
    n = _fft_size(b)
    win = _window(b)
    out = sfft.irfft2(spectrum * _filters(grid, n, params), s=(n, n))[..., :b, :b]
    # equalize local contrast: each ridge block is scaled to unit windowed RMS
    w2 = win * win
    rms = np.sqrt((out * out * w2).sum(axis=(2, 3)) / w2.sum())
    gain = np.where(grid.is_ridge & (rms > 1e-9), 1.0 / np.maximum(rms, 1e-9), 0.0)
    out = out * win * gain[..., None, None]
    acc = _overlap_add(out, padded.shape, b, s)
    norm = _overlap_add(np.broadcast_to(w2, out.shape), padded.shape, b, s)
    pad = b // 2
    h, w = data.shape
    acc = acc[pad:pad + h, pad:pad + w] / np.maximum(norm[pad:pad + h, pad:pad + w], 1e-12)
    if params.saturation_gain > 0:
        # steepen ridge flanks so the binarization is insensitive to the exact threshold
        acc = np.tanh(params.saturation_gain * acc)
    # dark and bright sides are stretched separately so zero stays at mid-gray and both
    # ridge troughs and valley crests reach the ends of the range
    lo, hi = np.percentile(acc, [100 - CLIP_PERCENTILE, CLIP_PERCENTILE])
    if max(hi, -lo) <= 1e-9:
        return GrayImage(np.full(data.shape, int(MID_GRAY), dtype=np.uint8), img.ppi)
    lo = min(lo, -1e-9 * max(hi, -lo))
    hi = max(hi, 1e-9 * max(hi, -lo))
    res = MID_GRAY + np.where(acc < 0, MID_GRAY * acc / -lo, 127.0 * acc / hi)
    return GrayImage(np.clip(np.rint(res), 0, 255).astype(np.uint8), img.ppi)


class STFTEnhancer:
    """Enhancement strategy object; other strategies only need an ``enhance`` method."""

    def __init__(self, params: EnhancementParams = EnhancementParams()):
        self.params = params

    def enhance(self, img: GrayImage) -> GrayImage:
        return stft_enhance(img, self.params)


class IdentityEnhancer:
    def enhance(self, img: GrayImage) -> GrayImage:
        return img
