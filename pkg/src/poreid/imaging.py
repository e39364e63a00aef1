"""Raster containers, P5 graymap I/O, integral-image thresholding, morphology, resampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

PPI_MIN = 250
PPI_MAX = 4000

# Maps a confidence percentage onto the Bradley threshold factor: 1 - confidence * k / 100.
CONFIDENCE_GAIN = 0.4
DEFAULT_WINDOW_FRACTION = 1.0 / 8.0


class PGMError(ValueError):
    """Base class for graymap parse failures; ``offset`` is the byte where parsing stopped."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MalformedHeaderError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


class UnsupportedDepthError(PGMError):
    pass


def _check_ppi(ppi) -> int:
    if int(ppi) != ppi or not PPI_MIN <= ppi <= PPI_MAX:
        raise ValueError(f"ppi must be an integer in [{PPI_MIN}, {PPI_MAX}], got {ppi}")
    return int(ppi)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, 0 = black. ``pixels`` is an (height, width) uint8 array."""

    pixels: np.ndarray
    ppi: int = 1000

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("pixel values must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "ppi", _check_ppi(self.ppi))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.ppi == other.ppi and np.array_equal(self.pixels, other.pixels)

    def inverted(self) -> GrayImage:
        return GrayImage(255 - self.pixels, self.ppi)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Foreground mask; True marks ridge (dark ink) pixels."""

    bits: np.ndarray
    ppi: int = 1000

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"bits must be a non-empty 2-D array, got shape {b.shape}")
        b = b.astype(bool, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "ppi", _check_ppi(self.ppi))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.ppi == other.ppi and np.array_equal(self.bits, other.bits)


class IntegralImage:
    """Summed-area table with a zero first row and column.

    ``table[y, x]`` is the sum of all pixels in columns [0, x) and rows [0, y).
    """

    def __init__(self, table: np.ndarray):
        self.table = table

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    def sum(self, x0, y0, x1, y1):
        """Sum over the half-open rectangle [x0, x1) x [y0, y1). Accepts arrays."""
        t = self.table
        return t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]


def integral(img) -> IntegralImage:
    values = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(values, axis=0, dtype=np.int64), axis=1, out=table[1:, 1:])
    return IntegralImage(table)


# ---------------------------------------------------------------------------
# P5 reader / writer

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _read_header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header", pos)
    return data[start:pos], pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a binary P5 graymap with maxval 255 into an (h, w) uint8 array."""
    if data[:2] != b"P5":
        raise MalformedHeaderError("missing P5 magic number", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok_start = pos
        tok, pos = _read_header_token(data, pos)
        if not tok.isdigit():
            raise MalformedHeaderError(f"invalid {name} field {tok!r}", tok_start)
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}", pos)
    if maxval != 255:
        raise UnsupportedDepthError(f"maxval {maxval} unsupported, only 255", pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise MalformedHeaderError("missing whitespace before raster", pos)
    pos += 1
    need = width * height
    have = len(data) - pos
    if have < need:
        raise TruncatedPayloadError(
            f"raster truncated: expected {need} bytes, found {have}", len(data))
    if have > need:
        raise MalformedHeaderError(f"{have - need} trailing bytes after raster", pos + need)
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def read_meta(path) -> dict[str, str]:
    meta = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def load_image(path, ppi: int | None = None) -> GrayImage:
    """Read a P5 file. ``ppi`` overrides the sidecar ``<path>.meta`` file."""
    path = Path(path)
    pixels = decode_pgm(path.read_bytes())
    if ppi is None:
        sidecar = meta_path(path)
        if not sidecar.exists():
            sidecar = path.with_suffix(".meta")
        if not sidecar.exists():
            raise FileNotFoundError(f"no ppi given and no sidecar metadata for {path}")
        meta = read_meta(sidecar)
        if "ppi" not in meta:
            raise ValueError(f"{sidecar}: missing required key 'ppi'")
        try:
            ppi = int(meta["ppi"])
        except ValueError:
            raise ValueError(f"{sidecar}: ppi must be an integer, got {meta['ppi']!r}") from None
    return GrayImage(pixels, ppi)


def save_image(img: GrayImage, path, write_meta: bool = True) -> None:
    path = Path(path)
    path.write_bytes(encode_pgm(img.pixels))
    if write_meta:
        meta_path(path).write_text(f"ppi={img.ppi}\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Binarization and morphology

def window_side(width: int, height: int, window_fraction: float) -> int:
    return max(3, int(round(window_fraction * min(width, height))))


def local_mean_sums(img: GrayImage, side: int):
    """Window sums and pixel counts for a side x side window clipped at borders."""
    h, w = img.height, img.width
    ii = integral(img)
    lo = side // 2
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - lo, 0, h)[:, None]
    y1 = np.clip(ys - lo + side, 0, h)[:, None]
    x0 = np.clip(xs - lo, 0, w)[None, :]
    x1 = np.clip(xs - lo + side, 0, w)[None, :]
    sums = ii.sum(x0, y0, x1, y1)
    counts = (y1 - y0) * (x1 - x0)
    return sums, counts


def adaptive_threshold(img: GrayImage, window_fraction: float = DEFAULT_WINDOW_FRACTION,
                       confidence: float = 50.0) -> BinaryImage:
    """Bradley-Roth local-mean binarization.

    A pixel is foreground (ridge) when ``I * 100 * count < sum * (100 - confidence * k)``,
    which is the integer-safe form of ``I < mean * (1 - confidence * k / 100)``.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window_fraction must be in (0, 1], got {window_fraction}")
    if not 0.0 <= confidence <= 100.0:
        raise ValueError(f"confidence must be in [0, 100], got {confidence}")
    side = window_side(img.width, img.height, window_fraction)
    sums, counts = local_mean_sums(img, side)
    factor = 100.0 - confidence * CONFIDENCE_GAIN
    lhs = img.pixels.astype(np.int64) * counts * 100
    return BinaryImage(lhs < sums * factor, img.ppi)


def _square(radius: int) -> int:
    return 2 * radius + 1


def erode(bits: np.ndarray, radius: int) -> np.ndarray:
    # Out-of-image pixels do not constrain erosion (adjoint of the clipped dilation).
    if radius == 0:
        return bits.copy()
    return ndimage.minimum_filter(bits, size=_square(radius), mode="constant", cval=True)


def dilate(bits: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return bits.copy()
    return ndimage.maximum_filter(bits, size=_square(radius), mode="constant", cval=False)


def morphology_open(bits: np.ndarray, radius: int) -> np.ndarray:
    return dilate(erode(bits, radius), radius)


def morphology_close(bits: np.ndarray, radius: int) -> np.ndarray:
    return erode(dilate(bits, radius), radius)


def morphology_open_close(img: BinaryImage, radius: int) -> BinaryImage:
    """Opening then closing with a (2r+1)-square structuring element."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return img
    return BinaryImage(morphology_close(morphology_open(img.bits, radius), radius), img.ppi)


# ---------------------------------------------------------------------------
# Resampling

def _axis_weights(n_in: int, n_out: int):
    # Pixel centres aligned: source coordinate of output pixel i is (i + .5) * n_in / n_out - .5
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def resample(img: GrayImage, target_ppi: int) -> GrayImage:
    """Bilinear resampling to ``target_ppi``; dimensions scale by target_ppi / ppi."""
    target_ppi = _check_ppi(target_ppi)
    if target_ppi == img.ppi:
        return img
    ratio = target_ppi / img.ppi
    out_h = int(round(img.height * ratio))
    out_w = int(round(img.width * ratio))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resampling {img.width}x{img.height} to {target_ppi} ppi gives an empty image")
    src = img.pixels.astype(np.float64)
    y0, y1, fy = _axis_weights(img.height, out_h)
    x0, x1, fx = _axis_weights(img.width, out_w)
    rows = src[y0] * (1 - fy)[:, None] + src[y1] * fy[:, None]
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8), target_ppi)
