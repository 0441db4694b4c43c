import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hwseg.errors import NumericError, ShapeError
from hwseg.network import layers as L
from hwseg.network.layers import LayerSpec


def direct_conv(x, w, b, stride, padding):
    """Loop-nest reference convolution."""
    B, C, H, W = x.shape
    Co, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    out = np.zeros((B, Co, Ho, Wo))
    for i in range(Ho):
        for j in range(Wo):
            patch = xp[:, :, i * sh:i * sh + kh, j * sw:j * sw + kw]
            out[:, :, i, j] = np.einsum("bchw,ochw->bo", patch, w) + b
    return out


def direct_transposed(x, w, b):
    """Scatter reference: each input pixel stamps its weighted kernel."""
    B, Ci, H, W = x.shape
    Co = w.shape[1]
    full = np.zeros((B, Co, 2 * H + 2, 2 * W + 2))
    for i in range(H):
        for j in range(W):
            full[:, :, 2 * i:2 * i + 4, 2 * j:2 * j + 4] += np.einsum("bc,cohw->bohw", x[:, :, i, j], w)
    return full[:, :, 1:-1, 1:-1] + b[:, None, None]


class TestLayerSpec:
    def test_param_count(self):
        assert LayerSpec("conv", 3, 8, (3, 3), (1, 1), (1, 1)).param_count() == 8 * 3 * 9 + 8
        assert LayerSpec("maxpool", kernel=(2, 2), stride=(2, 2)).param_count() == 0

    def test_fixed_geometry(self):
        with pytest.raises(ValueError):
            LayerSpec("maxpool", kernel=(3, 3), stride=(2, 2))
        with pytest.raises(ValueError):
            LayerSpec("transposed_conv", 2, 2, (3, 3), (2, 2))


class TestConv:
    @pytest.mark.parametrize("kernel,stride,padding", [
        ((3, 3), (1, 1), (1, 1)),
        ((1, 1), (1, 1), (0, 0)),
        ((4, 4), (2, 2), (1, 1)),
        ((3, 3), (2, 2), (0, 0)),
    ])
    def test_matches_direct(self, rng, kernel, stride, padding):
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3) + kernel)
        b = rng.normal(size=4)
        out, _ = L.conv2d_forward(x, w, b, stride, padding)
        np.testing.assert_allclose(out, direct_conv(x, w, b, stride, padding), rtol=1e-10, atol=1e-10)

    def test_same_padding_keeps_shape(self, rng):
        out, _ = L.conv2d_forward(rng.normal(size=(1, 2, 5, 7)), rng.normal(size=(3, 2, 3, 3)), np.zeros(3), (1, 1), (1, 1))
        assert out.shape == (1, 3, 5, 7)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            L.conv2d_forward(rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(3, 5, 3, 3)), np.zeros(3))

    @pytest.mark.parametrize("kernel,stride,padding", [((3, 3), (1, 1), (1, 1)), ((4, 4), (2, 2), (1, 1))])
    def test_backward_is_adjoint(self, rng, kernel, stride, padding):
        # <conv(x), g> == <x, conv^T(g)> with zero bias
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3) + kernel)
        out, cache = L.conv2d_forward(x, w, np.zeros(4), stride, padding)
        g = rng.normal(size=out.shape)
        dx, dw, db = L.conv2d_backward(g, cache)
        assert np.vdot(out, g) == pytest.approx(np.vdot(x, dx), rel=1e-10)
        assert np.vdot(out, g) == pytest.approx(np.vdot(w, dw), rel=1e-10)
        np.testing.assert_allclose(db, g.sum(axis=(0, 2, 3)))

    def test_float32_preserved(self, rng):
        x = rng.normal(size=(1, 1, 4, 4)).astype(np.float32)
        w = rng.normal(size=(2, 1, 3, 3)).astype(np.float32)
        out, cache = L.conv2d_forward(x, w, np.zeros(2, np.float32), (1, 1), (1, 1))
        assert out.dtype == np.float32
        assert all(a.dtype == np.float32 for a in L.conv2d_backward(out, cache))


class TestTransposedConv:
    def test_matches_scatter_reference(self, rng):
        x = rng.normal(size=(2, 3, 4, 5))
        w = rng.normal(size=(3, 2, 4, 4))
        b = rng.normal(size=2)
        out, _ = L.transposed_conv4x4s2_forward(x, w, b)
        assert out.shape == (2, 2, 8, 10)
        np.testing.assert_allclose(out, direct_transposed(x, w, b), rtol=1e-10, atol=1e-10)

    def test_adjoint_of_strided_conv(self, rng):
        # the transposed conv with weight W is the adjoint of conv(k4, s2, p1) with the same W
        w = rng.normal(size=(3, 2, 4, 4))
        u = rng.normal(size=(2, 2, 8, 8))
        v = rng.normal(size=(2, 3, 4, 4))
        conv_u, _ = L.conv2d_forward(u, w, np.zeros(3), (2, 2), (1, 1))
        tconv_v, _ = L.transposed_conv4x4s2_forward(v, w, np.zeros(2))
        assert np.vdot(conv_u, v) == pytest.approx(np.vdot(u, tconv_v), rel=1e-10)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            L.transposed_conv4x4s2_forward(rng.normal(size=(1, 2, 2, 2)), rng.normal(size=(3, 1, 4, 4)), np.zeros(1))


class TestMaxPool:
    def test_values(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out, _ = L.maxpool2x2_forward(x)
        np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])

    def test_tie_routes_to_first(self):
        x = np.ones((1, 1, 2, 2))
        out, cache = L.maxpool2x2_forward(x)
        dx = L.maxpool2x2_backward(np.full(out.shape, 3.0), cache)
        np.testing.assert_array_equal(dx[0, 0], [[3, 0], [0, 0]])

    def test_odd_dims(self):
        with pytest.raises(ShapeError):
            L.maxpool2x2_forward(np.zeros((1, 1, 3, 4)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_gradient_mass_conserved(self, seed):
        r = np.random.default_rng(seed)
        x = r.integers(0, 4, size=(2, 3, 6, 4)).astype(float)
        out, cache = L.maxpool2x2_forward(x)
        g = r.normal(size=out.shape)
        dx = L.maxpool2x2_backward(g, cache)
        assert dx.sum() == pytest.approx(g.sum())
        # exactly one nonzero slot per block receives each upstream value
        blocks = (dx != 0).reshape(2, 3, 3, 2, 2, 2).sum(axis=(3, 5))
        assert blocks.max() <= 1


class TestElementwiseLayers:
    def test_relu_zero_subgradient(self):
        x = np.array([-1.0, 0.0, 2.0])
        out, mask = L.relu_forward(x)
        np.testing.assert_array_equal(out, [0, 0, 2])
        np.testing.assert_array_equal(L.relu_backward(np.ones(3), mask), [0, 0, 1])

    def test_concat_roundtrip(self, rng):
        a = rng.normal(size=(2, 1, 4, 4))
        b = rng.normal(size=(2, 3, 4, 4))
        out, split = L.concat_channels_forward(a, b)
        assert out.shape == (2, 4, 4, 4)
        da, db = L.concat_channels_backward(out, split)
        np.testing.assert_array_equal(da, a)
        np.testing.assert_array_equal(db, b)

    def test_concat_mismatch(self):
        with pytest.raises(ShapeError):
            L.concat_channels_forward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 2)))

    def test_softmax_uniform(self):
        y, _ = L.softmax_channels_forward(np.zeros((1, 2, 3, 3)))
        np.testing.assert_allclose(y, 0.5)

    def test_softmax_stable_for_large_logits(self):
        z = np.array([1000.0, 0.0]).reshape(1, 2, 1, 1)
        y, _ = L.softmax_channels_forward(z)
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y.ravel(), [1.0, 0.0], atol=1e-300)

    def test_softmax_shift_invariant(self, rng):
        z = rng.normal(size=(2, 2, 3, 3))
        np.testing.assert_allclose(L.softmax_channels_forward(z)[0], L.softmax_channels_forward(z + 7.5)[0], rtol=1e-12)

    def test_softmax_rejects_nan(self):
        with pytest.raises(NumericError):
            L.softmax_channels_forward(np.full((1, 2, 1, 1), np.nan))

    def test_softmax_backward_sums_to_zero(self, rng):
        # shifting all logits equally cannot change the output
        y, cache = L.softmax_channels_forward(rng.normal(size=(2, 3, 4, 4)))
        dz = L.softmax_channels_backward(rng.normal(size=y.shape), cache)
        np.testing.assert_allclose(dz.sum(axis=1), 0.0, atol=1e-12)


class TestWorkedExamples:
    def test_scalar_kernel(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out, _ = L.conv2d_forward(x, np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        np.testing.assert_array_equal(out[0, 0], [[2, 4], [6, 8]])

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 1, 5, 5))
        out, _ = L.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_ones_kernel_counts_neighbours(self):
        out, _ = L.conv2d_forward(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), np.zeros(1), (1, 1), (1, 1))
        expected = np.array([[4, 6, 6, 4], [6, 9, 9, 6], [6, 9, 9, 6], [4, 6, 6, 4]])
        np.testing.assert_array_equal(out[0, 0], expected)

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            L.conv2d_forward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 5, 5)), np.zeros(1))

    def test_maxpool_single_block(self):
        out, _ = L.maxpool2x2_forward(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert out.ravel().tolist() == [4.0]

    def test_tconv_single_pixel_stamps_kernel(self, rng):
        k = rng.normal(size=(1, 1, 4, 4))
        x = np.zeros((1, 1, 3, 3))
        x[0, 0, 1, 1] = 2.5
        out, _ = L.transposed_conv4x4s2_forward(x, k, np.zeros(1))
        # input (1, 1) lands at output rows/cols 2*1-1 .. 2*1+2
        expected = np.zeros((6, 6))
        expected[1:5, 1:5] = 2.5 * k[0, 0]
        np.testing.assert_allclose(out[0, 0], expected, atol=1e-15)

    def test_tconv_zero_input_gives_bias(self, rng):
        out, _ = L.transposed_conv4x4s2_forward(np.zeros((1, 2, 2, 2)), rng.normal(size=(2, 3, 4, 4)), np.array([1.0, -2.0, 0.5]))
        for c, v in enumerate([1.0, -2.0, 0.5]):
            np.testing.assert_array_equal(out[0, c], v)

    def test_relu_examples(self):
        np.testing.assert_array_equal(L.relu_forward(np.array([-1.0, 2.0]))[0], [0, 2])
        np.testing.assert_array_equal(L.relu_forward(-np.ones(4))[0], 0)

    def test_concat_with_empty(self, rng):
        x = rng.normal(size=(1, 2, 3, 3))
        out, _ = L.concat_channels_forward(x, np.zeros((1, 0, 3, 3)))
        np.testing.assert_array_equal(out, x)

    def test_concat_single_channels(self):
        out, _ = L.concat_channels_forward(np.zeros((1, 1, 2, 2)), np.ones((1, 1, 2, 2)))
        assert out.shape == (1, 2, 2, 2)

    def test_softmax_ln3(self):
        y, _ = L.softmax_channels_forward(np.array([np.log(3.0), 0.0]).reshape(1, 2, 1, 1))
        np.testing.assert_allclose(y.ravel(), [0.75, 0.25], atol=1e-9)

    def test_tconv_origin_pixel_is_cropped(self, rng):
        k = rng.normal(size=(1, 1, 4, 4))
        x = np.zeros((1, 1, 2, 2))
        x[0, 0, 0, 0] = -1.5
        out, _ = L.transposed_conv4x4s2_forward(x, k, np.zeros(1))
        expected = np.zeros((4, 4))
        expected[:3, :3] = -1.5 * k[0, 0, 1:, 1:]
        np.testing.assert_allclose(out[0, 0], expected, atol=1e-15)
