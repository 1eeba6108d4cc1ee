import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyspot import evalkit as ev

T = ev.GroundTruthSpan
D = ev.Detection


def test_match_examples():
    t = [T("l1", "kw", 10, 30)]
    assert ev.match_hypotheses([D("l1", "kw", 10, 30, 1.0)], t)[:3] == (1, 0, 0)
    assert ev.match_hypotheses([D("l1", "kw", 50, 60, 1.0)], t)[:3] == (0, 1, 1)
    assert ev.iou(10, 30, 20, 40) == pytest.approx(1 / 3)
    assert ev.match_hypotheses([D("l1", "kw", 20, 40, 1.0)], t)[:3] == (0, 1, 1)
    assert ev.match_hypotheses([D("l2", "kw", 10, 30, 1.0)], t)[:3] == (0, 1, 1)
    assert ev.match_hypotheses([D("l1", "other", 10, 30, 1.0)], t)[:3] == (0, 1, 1)


def test_one_truth_per_hypothesis():
    t = [T("l", "k", 0, 10)]
    h = [D("l", "k", 0, 10, 1.0), D("l", "k", 1, 10, 0.5)]
    tp, fp, fn, pairs = ev.match_hypotheses(h, t)
    assert (tp, fp, fn) == (1, 1, 0) and pairs == [(0, 0)]


def test_span_validation():
    with pytest.raises(ValueError):
        T("l", "k", 5, 5)
    with pytest.raises(ValueError):
        ev.MatchConfig(0.0)


def test_prf_examples():
    f = ev.harmonic_mean(74.23, 75.01)
    assert f == pytest.approx(74.61, abs=0.01)
    assert ev.harmonic_mean(73.36, 74.21) == pytest.approx(73.78, abs=0.01)
    assert ev.precision_recall_f(3, 1, 1) == pytest.approx((0.75, 0.75, 0.75))
    assert ev.precision_recall_f(0, 0, 0) == (0.0, 0.0, 0.0)
    assert ev.harmonic_mean(0.4, 0.4) == pytest.approx(0.4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f_between_p_and_r(tp, fp, fn):
    p, r, f = ev.precision_recall_f(tp, fp, fn)
    assert 0 <= f <= 1
    if p > 0 and r > 0:
        assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12


def test_ap_examples():
    t = [T("l", "k", 0, 10)]
    assert ev.average_precision([D("l", "k", 0, 10, 2.0)], t) == 1.0
    two = [D("l", "k", 30, 40, 2.0), D("l", "k", 0, 10, 1.0)]
    assert ev.average_precision(two, t) == 0.5
    t2 = t + [T("m", "k", 0, 10)]
    h = [D("l", "k", 0, 10, 3), D("m", "k", 0, 10, 2), D("x", "k", 0, 10, 1)]
    assert ev.average_precision(h, t2) == 1.0
    # a truth never retrieved costs its share of the average
    assert ev.average_precision(h[:1], t2) == 0.5
    with pytest.raises(ValueError):
        ev.average_precision(h, [])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ap_rank_only(seed):
    rng = np.random.default_rng(seed)
    truths = [T(f"l{i}", "k", 0, 10) for i in range(5)]
    hyps = [D(f"l{rng.integers(0, 8)}", "k", 0, 10, float(s)) for s in rng.normal(size=8)]
    mono = [D(h.line_id, h.keyword, h.start, h.end, np.exp(3 * h.score) + 1) for h in hyps]
    assert ev.average_precision(hyps, truths) == ev.average_precision(mono, truths)


def test_map_excludes_keywords_without_truth():
    t = [T("l", "a", 0, 10)]
    h = [D("l", "a", 0, 10, 1.0), D("l", "b", 0, 10, 1.0)]
    m, aps, excl = ev.mean_average_precision(h, t)
    assert m == 1.0 and excl == ["b"] and list(aps) == ["a"]


def test_boundary_error_examples():
    assert ev.boundary_error((10, 50), (12, 48)) == pytest.approx(10.0)
    assert ev.boundary_error((10, 50), (10, 50)) == 0.0
    assert ev.boundary_error((0, 100), (10, 100)) == pytest.approx(10.0)
    assert ev.boundary_error((10, 50), (8, 52)) == ev.boundary_error((10, 50), (12, 48)) * 40 / 44


def test_pr_curve_and_csv(tmp_path):
    t = [T("l", "k", 0, 10), T("m", "k", 0, 10)]
    h = [D("l", "k", 0, 10, 3.0), D("x", "k", 0, 10, 2.0), D("m", "k", 0, 10, 1.0)]
    rows = ev.pr_curve(h, t)
    assert rows == [(3.0, 1.0, 0.5), (2.0, 0.5, 0.5), (1.0, 2 / 3, 1.0)]
    assert ev.precision_at_recall(rows, 0.5) == 1.0
    assert ev.precision_at_recall(rows, 1.0) == pytest.approx(2 / 3)
    p = tmp_path / "pr.csv"
    ev.write_pr_csv(rows, p)
    assert p.read_text().splitlines()[0] == "threshold,precision,recall"


def test_evaluate_report():
    t = [T("l", "k", 10, 50)]
    rep = ev.evaluate([D("l", "k", 12, 48, 1.0)], t)
    assert (rep.tp, rep.fp, rep.fn) == (1, 0, 0)
    assert rep.boundary_error == pytest.approx(10.0)
    assert '"map": 1.0' in rep.to_json()
