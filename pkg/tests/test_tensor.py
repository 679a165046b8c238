"""Tensor primitive tests: direct-summation and finite-difference oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthima.tensor import (
    ConvGeometry,
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    make_tensor,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
)


def conv_ref(x, kernels, bias, stride, padding):
    """Direct summation over all taps, float64; out-of-range input reads 0."""
    o, c, kh, kw = kernels.shape
    _, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for y in range(oh):
            for xx in range(ow):
                acc = float(bias[oc]) if bias is not None else 0.0
                for ic in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            yy = y * stride - padding + i
                            xj = xx * stride - padding + j
                            if 0 <= yy < h and 0 <= xj < w:
                                acc += float(x[ic, yy, xj]) * float(kernels[oc, ic, i, j])
                out[oc, y, xx] = acc
    return out


def fd_grad(f, x, h=1e-3, indices=None):
    """Central finite differences of scalar f at the given flat indices of x."""
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    g = np.zeros(len(list(idx)) if indices is not None else flat.size)
    out_idx = list(range(flat.size)) if indices is None else list(indices)
    for n, i in enumerate(out_idx):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        g[n] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return g, out_idx


def rel_err(a, b):
    """Vector-relative max error: ||a - b||_inf / max(||a||_inf, ||b||_inf)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return np.abs(a - b).max() / scale


def delta_kernel(channels=1, size=3):
    k = np.zeros((channels, channels, size, size), dtype=np.float32)
    for c in range(channels):
        k[c, c, size // 2, size // 2] = 1.0
    return k


class TestMakeTensor:
    def test_layout_matches_flat_indexing(self):
        t = make_tensor((2, 3, 4), np.arange(24))
        h, w = 3, 4
        flat = t.ravel()
        for c in range(2):
            for y in range(h):
                for x in range(w):
                    assert t[c, y, x] == flat[c * h * w + y * w + x]

    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeError):
            make_tensor((0, 3), np.zeros(0))
        with pytest.raises(ShapeError):
            make_tensor((2, 2), np.zeros(3))
        with pytest.raises(ShapeError):
            make_tensor((1, 1, 1, 1, 1), np.zeros(1))

    def test_dtype_is_float32(self):
        assert make_tensor((2,), [1, 2]).dtype == np.float32


class TestConvGeometry:
    @pytest.mark.parametrize("kernel", [1, 2, 3, 4])
    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("padding", [0, 1, 2])
    def test_out_extent_matches_enumeration(self, kernel, stride, padding):
        # Count the window start positions that fit inside the padded extent.
        for extent in range(1, 10):
            starts = [
                y
                for y in range(0, extent + 2 * padding - kernel + 1, stride)
            ]
            geom = ConvGeometry(1, 1, kernel, kernel, stride=stride, padding=padding)
            if len(starts) == 0:
                with pytest.raises(ShapeError):
                    geom.out_extent(extent, kernel)
            else:
                assert geom.out_extent(extent, kernel) == len(starts)

    def test_rejects_invalid_fields(self):
        with pytest.raises(ShapeError):
            ConvGeometry(0, 1, 3, 3)
        with pytest.raises(ShapeError):
            ConvGeometry(1, 1, 3, 3, stride=0)
        with pytest.raises(ShapeError):
            ConvGeometry(1, 1, 3, 3, padding=-1)


class TestConvForward:
    def test_zero_input_gives_zero_output(self):
        geom = ConvGeometry(1, 1, 3, 3, padding=1)
        x = np.zeros((1, 3, 3), dtype=np.float32)
        k = np.random.default_rng(0).normal(size=(1, 1, 3, 3)).astype(np.float32)
        out = conv2d_forward(x, k, np.zeros(1, dtype=np.float32), geom)
        assert np.all(out == 0)

    def test_delta_kernel_is_identity(self):
        geom = ConvGeometry(1, 1, 3, 3, stride=1, padding=1)
        x = np.random.default_rng(1).normal(size=(1, 5, 5)).astype(np.float32)
        out = conv2d_forward(x, delta_kernel(), np.zeros(1, dtype=np.float32), geom)
        np.testing.assert_array_equal(out, x)

    def test_ones_kernel_center_element(self):
        x = make_tensor((1, 3, 3), [1, 2, 3, 4, 5, 6, 7, 8, 9])
        k = np.ones((1, 1, 3, 3), dtype=np.float32)
        geom = ConvGeometry(1, 1, 3, 3, stride=1, padding=1)
        out = conv2d_forward(x, k, np.zeros(1, dtype=np.float32), geom)
        ref = conv_ref(x, k, np.zeros(1), 1, 1)
        assert ref[0, 1, 1] == 45  # frozen from the summation oracle
        assert out[0, 1, 1] == 45
        np.testing.assert_allclose(out, ref, rtol=1e-6)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_matches_direct_summation(self, stride, padding):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 6, 7)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        geom = ConvGeometry(2, 3, 3, 3, stride=stride, padding=padding)
        out = conv2d_forward(x, k, b, geom)
        ref = conv_ref(x, k, b, stride, padding)
        assert out.shape == ref.shape
        assert rel_err(out, ref) < 1e-6

    def test_shape_mismatch_raises(self):
        geom = ConvGeometry(2, 3, 3, 3)
        with pytest.raises(ShapeError):
            conv2d_forward(np.zeros((1, 5, 5), np.float32), np.zeros((3, 2, 3, 3), np.float32), None, geom)
        with pytest.raises(ShapeError):
            conv2d_forward(np.zeros((2, 5, 5), np.float32), np.zeros((3, 2, 2, 3), np.float32), None, geom)

    @given(
        a=st.floats(-3, 3),
        b=st.floats(-3, 3),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=30, deadline=None)
    def test_linearity_with_zero_bias(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 5, 5)).astype(np.float32)
        y = rng.normal(size=(2, 5, 5)).astype(np.float32)
        k = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
        geom = ConvGeometry(2, 2, 3, 3, padding=1)
        lhs = conv2d_forward(a * x + b * y, k, None, geom)
        rhs = a * conv2d_forward(x, k, None, geom) + b * conv2d_forward(y, k, None, geom)
        assert rel_err(lhs, rhs) < 1e-5


class TestConvBackward:
    def test_zero_cotangent(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 4, 4)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        geom = ConvGeometry(2, 3, 3, 3, padding=1)
        g = conv2d_backward(x, k, np.zeros((3, 4, 4), np.float32), geom)
        assert np.all(g == 0)

    def test_identity_kernel_passes_gradient(self):
        geom = ConvGeometry(1, 1, 3, 3, padding=1)
        x = np.random.default_rng(4).normal(size=(1, 5, 5)).astype(np.float32)
        g = np.random.default_rng(5).normal(size=(1, 5, 5)).astype(np.float32)
        grad_in = conv2d_backward(x, delta_kernel(), g, geom)
        np.testing.assert_array_equal(grad_in, g)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 4, 4)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        cot = rng.normal(size=(3, 4, 4)).astype(np.float32)
        geom = ConvGeometry(2, 3, 3, 3, padding=1)

        def loss(xx):
            out = conv2d_forward(xx.astype(np.float32), k, None, geom)
            return float(np.sum(out.astype(np.float64) * cot))

        analytic = conv2d_backward(x, k, cot, geom)
        numeric, idx = fd_grad(loss, x, h=1e-3)
        assert rel_err(analytic.reshape(-1)[idx], numeric) < 1e-3

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_adjoint_consistency(self, seed):
        # <conv(X), G> == <X, conv_backward(G)> for zero bias. Relative to the
        # inner products' natural scale ||.||*||.||, since the products
        # themselves can cancel arbitrarily close to zero for random data.
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 6, 6)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        geom = ConvGeometry(2, 3, 3, 3, stride=1, padding=1)
        g = rng.normal(size=(3, 6, 6)).astype(np.float32)
        fwd = conv2d_forward(x, k, None, geom).astype(np.float64)
        bwd = conv2d_backward(x, k, g, geom).astype(np.float64)
        lhs = float(np.sum(fwd * g))
        rhs = float(np.sum(x.astype(np.float64) * bwd))
        scale = max(np.linalg.norm(fwd) * np.linalg.norm(g), 1e-9)
        assert abs(lhs - rhs) <= 1e-4 * scale

    def test_grad_out_shape_mismatch(self):
        geom = ConvGeometry(1, 1, 3, 3, padding=1)
        x = np.zeros((1, 4, 4), np.float32)
        with pytest.raises(ShapeError):
            conv2d_backward(x, delta_kernel(), np.zeros((1, 3, 3), np.float32), geom)


class TestRelu:
    def test_definition(self):
        out = relu_forward(np.array([-1.0, 0.0, 2.0], dtype=np.float32))
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])

    def test_all_positive_passthrough(self):
        x = np.abs(np.random.default_rng(0).normal(size=(2, 3, 3))).astype(np.float32) + 0.1
        g = np.random.default_rng(1).normal(size=(2, 3, 3)).astype(np.float32)
        np.testing.assert_array_equal(relu_forward(x), x)
        np.testing.assert_array_equal(relu_backward(x, g), g)

    def test_finite_differences_away_from_kink(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(3, 4)).astype(np.float32)
        x[np.abs(x) < 0.05] = 0.1  # keep the 1e-3 probe clear of the kink
        cot = rng.normal(size=(3, 4)).astype(np.float32)

        def loss(xx):
            return float(np.sum(relu_forward(xx).astype(np.float64) * cot))

        analytic = relu_backward(x, cot)
        numeric, idx = fd_grad(loss, x, h=1e-3)
        assert rel_err(analytic.reshape(-1)[idx], numeric) < 1e-3


class TestMaxPool:
    def test_single_window(self):
        out, _ = maxpool2x2_forward(make_tensor((1, 2, 2), [1, 2, 3, 4]))
        np.testing.assert_array_equal(out, [[[4.0]]])

    def test_ties_route_to_first_index(self):
        x = np.full((1, 4, 4), 2.5, dtype=np.float32)
        out, rec = maxpool2x2_forward(x)
        np.testing.assert_array_equal(out, np.full((1, 2, 2), 2.5, dtype=np.float32))
        assert np.all(rec.window_argmax == 0)
        g = np.ones((1, 2, 2), dtype=np.float32)
        grad_in = maxpool2x2_backward(rec, g)
        # All gradient lands on the top-left corner of each window.
        expected = np.zeros((1, 4, 4), dtype=np.float32)
        expected[0, ::2, ::2] = 1.0
        np.testing.assert_array_equal(grad_in, expected)

    def test_odd_extent_rejected_then_padded(self):
        x = np.random.default_rng(0).normal(size=(1, 3, 4)).astype(np.float32)
        with pytest.raises(ShapeError):
            maxpool2x2_forward(x)
        out, rec = maxpool2x2_forward(x, pad_odd=True)
        assert out.shape == (1, 2, 2)
        grad_in = maxpool2x2_backward(rec, np.ones((1, 2, 2), np.float32))
        assert grad_in.shape == (1, 3, 4)

    def test_finite_differences_random(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 6, 6)).astype(np.float32)
        cot = rng.normal(size=(2, 3, 3)).astype(np.float32)

        def loss(xx):
            out, _ = maxpool2x2_forward(xx.astype(np.float32))
            return float(np.sum(out.astype(np.float64) * cot))

        _, rec = maxpool2x2_forward(x)
        analytic = maxpool2x2_backward(rec, cot)
        numeric, idx = fd_grad(loss, x, h=1e-3)
        assert rel_err(analytic.reshape(-1)[idx], numeric) < 1e-3

    def test_forward_matches_window_maximum(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(3, 8, 6)).astype(np.float32)
        out, _ = maxpool2x2_forward(x)
        for c in range(3):
            for y in range(4):
                for xx in range(3):
                    assert out[c, y, xx] == x[c, 2 * y : 2 * y + 2, 2 * xx : 2 * xx + 2].max()
