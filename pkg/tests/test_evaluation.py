import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cloud
from poreid.evaluation import (REPORT_COLUMNS, DetectionReport, GroundTruthPores, f1_score, format_report,
                               format_truth, parse_truth, run_benchmark, save_truth, score_detections)
from poreid.extraction import Pore, PoreTemplate, extract_pores
from poreid.imaging import save_image

TABLE2 = [(0.478, 0.282, 0.355), (0.739, 0.437, 0.549), (0.653, 0.495, 0.563)]


@pytest.mark.parametrize("p,r,f", TABLE2)
def test_f1_reference_rows(p, r, f):
    assert f1_score(p, r) == pytest.approx(f, abs=1e-3)
    assert min(p, r) <= f1_score(p, r) <= max(p, r)


@given(st.floats(1e-6, 1), st.floats(1e-6, 1))
def test_f1_between_precision_and_recall(p, r):
    f = f1_score(p, r)
    assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12


def truth_of(t: PoreTemplate) -> GroundTruthPores:
    return GroundTruthPores(t.source_id, t.ppi, t.xy)


def test_identical_detections(rng):
    t = cloud(rng, 40)
    r = score_detections(t, truth_of(t))
    assert (r.tp, r.fp, r.fn) == (40, 0, 0)
    assert r.precision == r.recall == r.f1 == 1.0
    assert not r.degenerate


def test_degenerate_flag():
    r = score_detections(PoreTemplate("a", 1000), GroundTruthPores("a", 1000, np.zeros((0, 2))))
    assert r.degenerate and r.f1 == 0.0
    r = DetectionReport(0, 3, 2, 5.0)
    assert r.degenerate and r.precision == 0.0


def test_ppi_mismatch_and_radius_scaling(rng):
    t = cloud(rng, 5)
    with pytest.raises(ValueError):
        score_detections(t, GroundTruthPores("x", 500, t.xy))
    assert score_detections(t.rescaled(500), GroundTruthPores("x", 500, t.xy / 2)).match_radius == 2.5


def test_one_to_one_assignment():
    det = PoreTemplate("d", 1000, (Pore(0, 0, 1, 1, 1), Pore(1, 0, 1, 1, 1)))
    r = score_detections(det, GroundTruthPores("t", 1000, [[0.5, 0.0]]))
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)


def greedy_tp(a, b, radius):
    d = np.hypot(*(a[:, None, :] - b[None, :, :]).transpose(2, 0, 1))
    used = set()
    tp = 0
    for i in range(len(a)):
        order = [j for j in np.argsort(d[i]) if d[i, j] <= radius and j not in used]
        if order:
            used.add(order[0])
            tp += 1
    return tp


def test_symmetry_and_greedy_bound():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0, 60, (25, 2))
        b = rng.uniform(0, 60, (20, 2))
        ta = PoreTemplate("a", 1000, tuple(Pore(x, y, 1, 1, 1) for x, y in a))
        tb = PoreTemplate("b", 1000, tuple(Pore(x, y, 1, 1, 1) for x, y in b))
        ab = score_detections(ta, truth_of(tb))
        ba = score_detections(tb, truth_of(ta))
        assert ab.tp == ba.tp and (ab.fp, ab.fn) == (ba.fn, ba.fp)
        assert ab.tp >= greedy_tp(ta.xy, tb.xy, 5.0)


def test_truth_round_trip():
    gt = GroundTruthPores("t", 1000, [[1.5, 2.25], [3, 4]])
    assert format_truth(parse_truth(format_truth(gt))) == format_truth(gt)
    with pytest.raises(ValueError):
        parse_truth("POREGT 1 t 1000 3\n1 2\n")


def _corpus(tmp_path, clean_print):
    save_image(clean_print.image, tmp_path / "a.pgm")
    det = extract_pores(clean_print.image)
    save_truth(truth_of(det), tmp_path / "a.poregt")
    (tmp_path / "MANIFEST").write_text("a.pgm a.poregt\n")
    return tmp_path / "MANIFEST"


def test_benchmark_single_perfect_image(tmp_path, clean_print):
    res = run_benchmark(_corpus(tmp_path, clean_print), [50])
    assert len(res.rows) == 1 and not res.partial
    assert res.rows[0].report.f1 == 1.0
    assert res.rows[0].extract_ms > 0
    lines = format_report(res, "k = v").splitlines()
    assert lines[0] == "# k = v"
    assert lines[1] == ",".join(REPORT_COLUMNS)
    assert lines[-1].startswith("ALL,50,")


def test_benchmark_partial_failure(tmp_path, clean_print):
    m = _corpus(tmp_path, clean_print)
    m.write_text("a.pgm a.poregt\nmissing.pgm a.poregt\n")
    res = run_benchmark(m, [30, 70], jobs=2)
    assert res.partial and len(res.failures) == 1 and "missing.pgm" in res.failures[0]
    assert [r.confidence for r in res.rows] == [30, 70]
    assert set(res.aggregate) == {30.0, 70.0}
