import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hwseg.errors import NumericError, ShapeError
from hwseg.numerics import elementwise, finite_diff_grad, reduce_sum, rel_error, tensor_new


class TestTensorNew:
    def test_zero_fill(self):
        t = tensor_new([2, 2], 0.0)
        assert t.shape == (2, 2) and np.all(t == 0)

    def test_constant_fill(self):
        t = tensor_new([1, 2, 3, 4], 1.5)
        assert t.size == 24 and np.all(t == 1.5)

    @pytest.mark.parametrize("shape", [[2, 0], [], [-1, 3]])
    def test_invalid_shape(self, shape):
        with pytest.raises(ShapeError):
            tensor_new(shape, 0.0)

    def test_precision(self):
        assert tensor_new([2], precision="high").dtype == np.float64
        assert tensor_new([2]).dtype == np.float32


class TestElementwise:
    def test_add(self):
        np.testing.assert_array_equal(elementwise(np.array([1, 2]), np.array([3, 4]), np.add), [4, 6])

    def test_identity(self, rng):
        x = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(elementwise(x, np.zeros_like(x), np.add), x)

    def test_multiply(self):
        np.testing.assert_array_equal(elementwise(np.array([2, 3]), np.array([4, 5]), np.multiply), [8, 15])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise(np.zeros(2), np.zeros(3), np.add)

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_commutative_associative(self, data):
        shape = data.draw(hnp.array_shapes(max_dims=3, max_side=4))
        floats = st.floats(-1e3, 1e3, allow_nan=False)
        a, b, c = (data.draw(hnp.arrays(np.float64, shape, elements=floats)) for _ in range(3))
        for f in (np.add, np.multiply):
            np.testing.assert_array_equal(elementwise(a, b, f), elementwise(b, a, f))
            left = elementwise(elementwise(a, b, f), c, f)
            right = elementwise(a, elementwise(b, c, f), f)
            np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(left).max(initial=0)))


class TestReduceSum:
    def test_axis0(self):
        np.testing.assert_array_equal(reduce_sum(np.array([[1, 2], [3, 4]]), [0]), [4, 6])

    def test_axis1(self):
        np.testing.assert_array_equal(reduce_sum(np.array([[1, 2], [3, 4]]), [1]), [3, 7])

    def test_total(self, rng):
        x = rng.integers(-5, 5, size=(2, 3, 4))
        assert reduce_sum(x, [0, 1, 2]) == x.sum()

    def test_axis_order_irrelevant(self, rng):
        x = rng.integers(-5, 5, size=(2, 3, 4))
        assert reduce_sum(x, [2, 0, 1]) == reduce_sum(x, [0, 1, 2])

    def test_bad_axis(self):
        with pytest.raises(ShapeError):
            reduce_sum(np.zeros((2, 2)), [2])
        with pytest.raises(ShapeError):
            reduce_sum(np.zeros((2, 2)), [0, 0])


class TestFiniteDiff:
    def test_square(self):
        g = finite_diff_grad(lambda x: float((x ** 2).sum()), np.array([3.0]), 1e-5)
        assert abs(g[0] - 6.0) < 1e-6

    def test_constant(self, rng):
        g = finite_diff_grad(lambda x: 4.2, rng.normal(size=(3, 2)))
        np.testing.assert_allclose(g, 0.0, atol=1e-9)

    def test_linear(self, rng):
        w = rng.normal(size=7)
        g = finite_diff_grad(lambda x: float(w @ x), rng.normal(size=7))
        np.testing.assert_allclose(g, w, atol=1e-6)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: float("nan"), np.zeros(2))

    def test_requires_high_precision(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: 0.0, np.zeros(2, np.float32))

    def test_restores_input(self, rng):
        x = rng.normal(size=5)
        before = x.copy()
        finite_diff_grad(lambda v: float(np.sin(v).sum()), x)
        np.testing.assert_array_equal(x, before)


def test_rel_error_floor():
    assert rel_error(np.array([0.0]), np.array([1e-12])) == pytest.approx(1e-4)
    assert rel_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
