import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdn3d.detector import Detection, decode, evaluate
from rdn3d.network import BoxField
from rdn3d.volume import BoxAnnotation

RATES = (8, 8, 4)


def field_with(shape=(3, 4, 5), l=1, p=0.0):
    v = np.zeros((7 * l,) + shape, np.float32)
    for b in range(l):
        v[7 * b] = p
    return v


def test_below_threshold_is_empty():
    assert decode(BoxField(field_with(p=0.05), RATES)) == []


def test_hand_decoded_center():
    v = field_with(shape=(3, 4, 5))
    v[0, 1, 2, 3] = 0.9  # (z, y, x) = (1, 2, 3) -> cell (3, 2, 1)
    v[1:4, 1, 2, 3] = [0.25, -0.5, 0.0]
    v[4:7, 1, 2, 3] = [2.0, 1.5, -1.0]
    (d,) = decode(BoxField(v, RATES), spacing=(1.0, 1.0, 2.0))
    assert d.cell == (3, 2, 1)
    assert d.center == (26.0, 24.0, 6.0)
    assert d.size == (16.0, 12.0, 0.0)
    assert d.center_mm == (26.0, 24.0, 12.0)
    assert d.probability == pytest.approx(0.9)


def test_zero_offset_gives_cell_center():
    v = field_with(shape=(2, 2, 2))
    v[0, 1, 0, 1] = 0.5
    (d,) = decode(BoxField(v, RATES))
    assert d.center == (12.0, 4.0, 6.0)


def test_ties_pick_first_in_scan_order():
    (d,) = decode(BoxField(field_with(p=0.125), RATES))
    assert d.cell == (0, 0, 0)


def test_one_detection_per_structure():
    v = field_with(l=2, p=0.0)
    v[0, 0, 0, 1] = 0.8
    v[7, 2, 3, 4] = 0.3
    dets = decode(BoxField(v, RATES))
    assert [(d.label, d.cell) for d in dets] == [(0, (1, 0, 0)), (1, (4, 3, 2))]


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2 ** 31 - 1))
def test_threshold_monotone(t1, t2, seed):
    v = np.random.default_rng(seed).uniform(size=(14, 2, 3, 3)).astype(np.float32)
    f = BoxField(v, RATES)
    lo, hi = sorted((t1, t2))
    assert len(decode(f, hi)) <= len(decode(f, lo))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_argmax_invariant_under_monotone_transform(seed):
    v = np.random.default_rng(seed).uniform(0.2, 1, size=(7, 3, 3, 3)).astype(np.float32)
    w = v.copy()
    w[0] = np.sqrt(v[0])
    (a,), (b,) = decode(BoxField(v, RATES)), decode(BoxField(w, RATES))
    assert a.cell == b.cell and a.center == b.center and a.size == b.size


class TestEvaluate:
    def det(self, center):
        return Detection(0, 0.9, center, (1, 1, 1), (0, 0, 0))

    def test_perfect(self):
        boxes = [BoxAnnotation(0, (10, 10, 10), (4, 4, 4)), BoxAnnotation(0, (5, 6, 7), (2, 2, 2))]
        stats = evaluate([(self.det(b.center), b) for b in boxes])
        assert stats.axis_mean == (0, 0, 0) and stats.axis_std == (0, 0, 0)
        assert stats.total_mean == 0 and stats.total_std == 0 and stats.failures == 0

    def test_three_four_five(self):
        box = BoxAnnotation(0, (10, 10, 10), (4, 4, 4))
        stats = evaluate([(self.det((13.0, 10.0, 12.0)), box)], spacing=(1.0, 1.0, 2.0))
        assert stats.total_mean == pytest.approx(5.0)
        assert stats.axis_mean == pytest.approx((3.0, 0.0, 4.0))

    def test_sample_std(self):
        box = BoxAnnotation(0, (10, 10, 10), (4, 4, 4))
        stats = evaluate([(self.det((11.0, 10, 10)), box), (self.det((9.0, 10, 10)), box)])
        assert stats.axis_mean[0] == 0
        assert stats.axis_std[0] == pytest.approx(np.sqrt(2))

    def test_failures_excluded(self):
        box = BoxAnnotation(0, (10, 10, 10), (4, 4, 4))
        stats = evaluate([(None, box), (self.det((10.0, 10.0, 12.0)), box)])
        assert stats.failures == 1 and stats.count == 2
        assert stats.total_mean == 2.0
        assert np.array_equal(stats.distances, [2.0])

    def test_all_failed(self):
        box = BoxAnnotation(0, (10, 10, 10), (4, 4, 4))
        stats = evaluate([(None, box)] * 3)
        assert stats.failures == 3 and len(stats.distances) == 0
        assert "detected 0/3" in stats.table()
        assert "mu" not in stats.table()

    def test_total_is_norm_of_axis_errors(self, rng):
        boxes = [BoxAnnotation(0, tuple(rng.uniform(5, 20, 3)), (3, 3, 3)) for _ in range(10)]
        res = [(self.det(tuple(np.add(b.center, rng.normal(0, 2, 3)))), b) for b in boxes]
        stats = evaluate(res, spacing=(0.8, 0.8, 2.0))
        np.testing.assert_allclose(stats.distances, np.linalg.norm(stats.axis_errors, axis=1))

    def test_table_layout(self):
        box = BoxAnnotation(0, (10, 10, 10), (4, 4, 4))
        text = evaluate([(self.det((11.0, 10, 10)), box), (self.det((9.0, 10, 10)), box)]).table()
        assert "Left-Right" in text and "Superior-Inferior" in text and "Total Distance" in text
        assert text.splitlines()[2].startswith("mu") and text.splitlines()[3].startswith("sigma")

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate([])
