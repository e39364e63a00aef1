import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from poreid.imaging import (BinaryImage, GrayImage, MalformedHeaderError, TruncatedPayloadError,
                            UnsupportedDepthError, adaptive_threshold, decode_pgm, dilate, encode_pgm,
                            erode, integral, load_image, morphology_open_close, resample, save_image,
                            window_side)


def test_pgm_2x2_bytes(tmp_path):
    f = tmp_path / "a.pgm"
    f.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(f, ppi=1000)
    assert (img.width, img.height) == (2, 2)
    assert img.pixels.ravel().tolist() == [0, 255, 128, 64]


@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
@settings(max_examples=40, deadline=None)
def test_pgm_byte_round_trip(px):
    data = encode_pgm(px)
    assert encode_pgm(decode_pgm(data)) == data


def test_save_load_save_identical(tmp_path):
    f = tmp_path / "b.pgm"
    f.write_bytes(b"P5\n3 2\n255\n" + bytes(range(6)))
    (tmp_path / "b.pgm.meta").write_text("ppi=500\n")
    img = load_image(f)
    assert img.ppi == 500
    g = tmp_path / "c.pgm"
    save_image(img, g)
    assert g.read_bytes() == f.read_bytes()
    assert load_image(g).ppi == 500


def test_truncated_payload_reports_offset():
    data = b"P5\n100 100\n255\n" + bytes(50)
    with pytest.raises(TruncatedPayloadError) as e:
        decode_pgm(data)
    assert e.value.offset == len(data)
    assert "offset" in str(e.value)


def test_distinct_parse_errors():
    with pytest.raises(MalformedHeaderError):
        decode_pgm(b"P2\n1 1\n255\n0")
    with pytest.raises(MalformedHeaderError):
        decode_pgm(b"P5\nx 1\n255\n\x00")
    with pytest.raises(UnsupportedDepthError):
        decode_pgm(b"P5\n1 1\n65535\n\x00\x00")


def test_missing_sidecar(tmp_path):
    f = tmp_path / "d.pgm"
    f.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(FileNotFoundError):
        load_image(f)
    assert load_image(f, ppi=1000).ppi == 1000


def test_integral_trivial():
    z = integral(GrayImage(np.zeros((5, 7), np.uint8)))
    assert not z.table.any()
    ones = integral(GrayImage(np.ones((4, 4), np.uint8)))
    assert ones.sum(0, 0, 4, 4) == 16


def test_integral_matches_naive(rng):
    px = rng.integers(0, 256, (16, 16)).astype(np.uint8)
    ii = integral(GrayImage(px))
    for _ in range(100):
        x0, x1 = sorted(rng.integers(0, 17, 2))
        y0, y1 = sorted(rng.integers(0, 17, 2))
        naive = sum(int(px[y, x]) for y in range(y0, y1) for x in range(x0, x1))
        assert ii.sum(x0, y0, x1, y1) == naive


def naive_threshold(px, fraction, confidence, k=0.4):
    h, w = px.shape
    side = window_side(w, h, fraction)
    lo = side // 2
    out = np.zeros_like(px, dtype=bool)
    for y in range(h):
        for x in range(w):
            win = px[max(0, y - lo):min(h, y - lo + side), max(0, x - lo):min(w, x - lo + side)]
            out[y, x] = int(px[y, x]) * 100 * win.size < int(win.astype(np.int64).sum()) * (100 - confidence * k)
    return out


def test_threshold_uniform_is_background():
    assert not adaptive_threshold(GrayImage(np.full((40, 40), 128, np.uint8))).bits.any()


def test_threshold_black_square():
    px = np.full((80, 80), 255, np.uint8)
    px[30:40, 30:40] = 0
    b = adaptive_threshold(GrayImage(px), 0.125, 50).bits
    assert np.array_equal(b, naive_threshold(px, 0.125, 50))
    # a window lying wholly inside the square has mean 0, so its centre stays background
    assert b[30:40, 30:40].sum() >= 95
    outside = np.ones_like(b)
    outside[29:41, 29:41] = False
    assert not b[outside].any()


def test_threshold_matches_naive_random(rng):
    px = rng.integers(0, 256, (23, 31)).astype(np.uint8)
    for c in (30, 50, 70):
        assert np.array_equal(adaptive_threshold(GrayImage(px), 0.25, c).bits, naive_threshold(px, 0.25, c))


@given(arrays(np.uint8, (20, 20)), st.floats(0, 100), st.floats(0, 100))
@settings(max_examples=40, deadline=None)
def test_threshold_monotone_in_confidence(px, c1, c2):
    lo, hi = sorted((c1, c2))
    a = adaptive_threshold(GrayImage(px), 0.25, lo).bits
    b = adaptive_threshold(GrayImage(px), 0.25, hi).bits
    assert not (b & ~a).any()


def test_threshold_domain_errors():
    img = GrayImage(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        adaptive_threshold(img, 0.0)
    with pytest.raises(ValueError):
        adaptive_threshold(img, 0.5, 101)


def naive_erode(m, r):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            win = m[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
            out[y, x] = win.all()
    return out


def naive_dilate(m, r):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            out[y, x] = m[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].any()
    return out


def test_morphology_radius_zero_identity(rng):
    img = BinaryImage(rng.random((10, 10)) < 0.5)
    assert morphology_open_close(img, 0) == img


def test_morphology_kills_singleton():
    m = np.zeros((9, 9), bool)
    m[4, 4] = True
    assert not morphology_open_close(BinaryImage(m), 1).bits.any()


def test_morphology_matches_naive(rng):
    m = rng.random((32, 32)) < 0.5
    for r in (1, 2):
        assert np.array_equal(erode(m, r), naive_erode(m, r))
        assert np.array_equal(dilate(m, r), naive_dilate(m, r))
        opened = naive_dilate(naive_erode(m, r), r)
        expected = naive_erode(naive_dilate(opened, r), r)
        assert np.array_equal(morphology_open_close(BinaryImage(m), r).bits, expected)


@given(arrays(np.bool_, (24, 24)), st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_morphology_idempotent(m, r):
    once = morphology_open_close(BinaryImage(m), r)
    assert morphology_open_close(once, r) == once
    opened = dilate(erode(m, r), r)
    closed = erode(dilate(m, r), r)
    assert not (opened & ~m).any()
    assert not (m & ~closed).any()


def test_resample_identity_and_constant():
    img = GrayImage(np.full((10, 12), 77, np.uint8), 500)
    assert resample(img, 500) is img
    up = resample(img, 1000)
    assert (up.width, up.height) == (24, 20)
    assert (up.pixels == 77).all()


def test_resample_round_trip_gradient():
    y, x = np.mgrid[0:64, 0:80]
    img = GrayImage((x * 2 + y).astype(np.uint8), 500)
    back = resample(resample(img, 1000), 500)
    assert np.abs(back.pixels.astype(int) - img.pixels.astype(int)).max() <= 2


def test_imaging_deterministic(rng):
    px = rng.integers(0, 256, (30, 30)).astype(np.uint8)
    a = morphology_open_close(adaptive_threshold(GrayImage(px)), 1)
    b = morphology_open_close(adaptive_threshold(GrayImage(px.copy())), 1)
    assert a == b
