import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdn3d.core import Tensor, grad_check
from rdn3d.losses import loss_c, loss_p, loss_s, loss_terms, loss_total
from rdn3d.network import BoxField


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64).reshape((-1, 1, 1, 1)) if np.ndim(a) <= 1 else a,
                  requires_grad=grad, dtype=np.float64)


def random_field(rng, l=1, shape=(3, 4, 5), zero_frac=0.5):
    v = rng.standard_normal((7 * l,) + shape)
    for b in range(l):
        v[7 * b] = rng.uniform(0, 1, shape)
    v[:, rng.uniform(size=shape) < zero_frac] = 0
    return v


class TestLossP:
    def test_equal_fields(self, rng):
        p = rng.uniform(0.1, 1, (1, 3, 3, 3))
        assert loss_p(T(p), T(p)).item() == 0.0

    def test_no_detection_is_one(self, rng):
        target = rng.uniform(0, 1, (1, 3, 3, 3))
        assert loss_p(T(np.zeros_like(target)), T(target)).item() == pytest.approx(1.0, abs=1e-6)

    def test_hand_value(self):
        # 1 - 2*0.5*1 / (0.25 + 1) = 0.2
        assert loss_p(T([0.5]), T([1.0])).item() == pytest.approx(0.2, abs=1e-6)

    def test_disjoint_support_is_one(self):
        p = np.zeros((1, 2, 2, 2))
        q = np.zeros((1, 2, 2, 2))
        p[0, 0, 0, 0] = 0.7
        q[0, 1, 1, 1] = 0.4
        assert loss_p(T(p), T(q)).item() == pytest.approx(1.0, abs=1e-6)

    def test_both_zero(self):
        assert loss_p(T(np.zeros(4)), T(np.zeros(4))).item() == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
    def test_range(self, pairs):
        p, q = np.array(pairs).T
        v = loss_p(T(p), T(q)).item()
        assert -1e-12 <= v <= 1 + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            loss_p(T(np.zeros(3)), T(np.zeros(4)))


class TestVectorLosses:
    def test_equal(self, rng):
        t = rng.standard_normal((3, 2, 2, 2))
        assert loss_c(T(t), T(t)).item() == 0.0

    def test_hand_value(self):
        t = np.zeros((3, 1, 1, 1))
        t[0] = 1.0
        assert loss_c(T(t), T(np.zeros_like(t))).item() == pytest.approx(1.0, abs=1e-6)

    def test_per_cell_norms(self):
        # cells with differences (3,4,0) and (0,0,1): numerator 5 + 1; denominators 5 + 1 + 0
        t = np.zeros((3, 1, 1, 2))
        t[:, 0, 0, 0] = [3, 4, 0]
        t[:, 0, 0, 1] = [0, 0, 1]
        assert loss_s(T(t), T(np.zeros_like(t))).item() == pytest.approx(1.0, abs=1e-6)
        half = t / 2
        # |t - t/2| summed = 3, norms 6 + 3
        assert loss_s(T(t), T(half)).item() == pytest.approx(3.0 / 9.0, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(7)
        t, u = rng.standard_normal((2, 3, 2, 3, 2))
        assert loss_c(T(c * t), T(c * u)).item() == pytest.approx(loss_c(T(t), T(u)).item(), rel=1e-6)
        assert loss_s(T(c * t), T(c * u)).item() == pytest.approx(loss_s(T(t), T(u)).item(), rel=1e-6)

    def test_cell_permutation_invariance(self, rng):
        t, u = rng.standard_normal((2, 3, 1, 1, 12))
        perm = rng.permutation(12)
        assert loss_c(T(t[..., perm]), T(u[..., perm])).item() == pytest.approx(loss_c(T(t), T(u)).item())


class TestTotal:
    def test_equal_output_and_target(self, rng):
        v = random_field(rng)
        _, report = loss_total(BoxField(T(v), (8, 8, 4)), BoxField(T(v), (8, 8, 4)))
        assert report.L_total == 0.0

    def test_zero_output(self, rng):
        target = random_field(rng, zero_frac=0.0)
        target[0] = np.abs(target[0]) + 0.1
        _, r = loss_total(BoxField(T(np.zeros_like(target)), (8, 8, 4)), BoxField(T(target), (8, 8, 4)))
        assert (r.L_p, r.L_c, r.L_s, r.L_total) == pytest.approx((1, 1, 1, 3), abs=1e-6)

    def test_report_consistency(self, rng):
        _, r = loss_total(BoxField(T(random_field(rng, l=2)), (8, 8, 4)),
                          BoxField(T(random_field(rng, l=2)), (8, 8, 4)))
        assert abs(r.L_total - (r.L_p + r.L_c + r.L_s)) <= 1e-6
        assert r.L_p >= 0 and r.L_c >= 0 and r.L_s >= 0 and r.L_p <= 1

    def test_log_line(self):
        from rdn3d.losses import LossReport
        line = LossReport(0.5, 0.25, 0.125, 0.875).log_line(3)
        assert line == "step=3 L_p=0.5 L_c=0.25 L_s=0.125 L_total=0.875"

    @pytest.mark.parametrize("term", [0, 1, 2, 3])
    def test_gradients_match_finite_differences(self, term, rng):
        out = Tensor(random_field(rng, l=2, zero_frac=0.0), requires_grad=True, dtype=np.float64)
        target = BoxField(T(random_field(rng, l=2)), (8, 8, 4))
        fn = lambda: loss_terms(BoxField(out, (8, 8, 4)), target)[term]
        assert grad_check(fn, {"out": out}, eps=1e-6, samples=60) < 1e-3
