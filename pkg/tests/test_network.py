"""Feature-network tests: hand-composed oracles and finite differences."""

import numpy as np
import pytest

from synthima.network import (
    ActivationTrace,
    ConvGeometry,
    LayerSpec,
    NetworkSpec,
    backward_to_input,
    bind_weights,
    forward,
    parameter_count,
    random_weights,
    toy_spec,
    vgg16_spec,
    zero_weights,
)
from synthima.tensor import ShapeError, conv2d_forward, maxpool2x2_forward, relu_forward

from test_tensor import fd_grad, rel_err


def make_toy_with_pool(seed=0):
    spec = NetworkSpec(
        (
            LayerSpec("conv1", "conv", ConvGeometry(3, 4, 3, 3, padding=1)),
            LayerSpec("pool1", "pool"),
            LayerSpec("conv2", "conv", ConvGeometry(4, 5, 3, 3, padding=1)),
        ),
        in_channels=3,
    )
    return spec, random_weights(spec, seed=seed)


class TestSpecs:
    def test_vgg16_block_structure(self):
        spec = vgg16_spec()
        conv_names = [l.name for l in spec.conv_layers()]
        assert conv_names == [
            "conv1_1", "conv1_2",
            "conv2_1", "conv2_2",
            "conv3_1", "conv3_2", "conv3_3",
            "conv4_1", "conv4_2", "conv4_3",
            "conv5_1", "conv5_2", "conv5_3",
        ]
        widths = [l.geometry.out_channels for l in spec.conv_layers()]
        assert widths == [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512]
        pools = [l.name for l in spec.layers if l.kind == "pool"]
        assert pools == ["pool1", "pool2", "pool3", "pool4", "pool5"]

    def test_vgg16_parameter_count(self):
        # Architecture-derived sum O*C*kh*kw + O over the 13 conv layers.
        expected = 0
        c = 3
        for depth, width in ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512)):
            for _ in range(depth):
                expected += width * c * 9 + width
                c = width
        assert expected == 14_714_688
        assert parameter_count(vgg16_spec()) == 14_714_688

    def test_channel_chaining_validated(self):
        with pytest.raises(ValueError):
            NetworkSpec(
                (
                    LayerSpec("a", "conv", ConvGeometry(3, 4, 3, 3)),
                    LayerSpec("b", "conv", ConvGeometry(5, 4, 3, 3)),
                )
            )

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            NetworkSpec(
                (
                    LayerSpec("a", "conv", ConvGeometry(3, 3, 1, 1)),
                    LayerSpec("a", "conv", ConvGeometry(3, 3, 1, 1)),
                )
            )

    def test_bind_rejects_shape_conflicts(self):
        spec = toy_spec(depth=1, channels=4)
        store = random_weights(spec, 0)
        bind_weights(spec, store)
        bad = dict(store)
        k, b = bad["conv1"]
        bad["conv1"] = (k[:, :, :1, :], b)
        with pytest.raises(ShapeError):
            bind_weights(spec, bad)
        with pytest.raises(ShapeError):
            bind_weights(spec, {})


class TestForward:
    def test_vgg16_conv1_1_shape_at_224(self):
        spec = vgg16_spec()
        weights = random_weights(spec, seed=1)
        x = np.random.default_rng(0).normal(size=(3, 224, 224)).astype(np.float32)
        trace = forward(spec, weights, x, capture={"conv1_1"})
        assert trace["conv1_1"].shape == (64, 224, 224)
        # Truncation: only conv1_1 was executed.
        assert [r.layer.name for r in trace.records] == ["conv1_1"]

    def test_zero_weights_give_zero_activations(self):
        spec, _ = make_toy_with_pool()
        x = np.random.default_rng(2).normal(size=(3, 8, 8)).astype(np.float32)
        trace = forward(spec, zero_weights(spec), x, capture={"conv1", "conv2"})
        assert np.all(trace["conv1"] == 0)
        assert np.all(trace["conv2"] == 0)

    def test_trace_matches_hand_composition(self):
        spec, weights = make_toy_with_pool(seed=3)
        x = np.random.default_rng(4).normal(size=(3, 8, 8)).astype(np.float32)
        trace = forward(spec, weights, x, capture={"conv1", "pool1", "conv2"})

        h1 = relu_forward(conv2d_forward(x, *weights["conv1"], spec.layers[0].geometry))
        p1, _ = maxpool2x2_forward(h1)
        h2 = relu_forward(conv2d_forward(p1, *weights["conv2"], spec.layers[2].geometry))
        np.testing.assert_array_equal(trace["conv1"], h1)
        np.testing.assert_array_equal(trace["pool1"], p1)
        np.testing.assert_array_equal(trace["conv2"], h2)

    def test_deterministic(self):
        spec, weights = make_toy_with_pool(seed=5)
        x = np.random.default_rng(6).normal(size=(3, 8, 8)).astype(np.float32)
        t1 = forward(spec, weights, x, capture={"conv2"})
        t2 = forward(spec, weights, x, capture={"conv2"})
        np.testing.assert_array_equal(t1["conv2"], t2["conv2"])

    def test_truncation_soundness(self):
        spec, weights = make_toy_with_pool(seed=7)
        x = np.random.default_rng(8).normal(size=(3, 8, 8)).astype(np.float32)
        shallow = forward(spec, weights, x, capture={"conv1"})
        deep = forward(spec, weights, x, capture={"conv1", "conv2"})
        np.testing.assert_array_equal(shallow["conv1"], deep["conv1"])

    def test_unknown_capture_name(self):
        spec, weights = make_toy_with_pool()
        x = np.zeros((3, 8, 8), np.float32)
        with pytest.raises(KeyError):
            forward(spec, weights, x, capture={"conv9"})

    def test_divisibility_enforced(self):
        spec, weights = make_toy_with_pool()
        x = np.zeros((3, 7, 8), np.float32)
        with pytest.raises(ShapeError):
            forward(spec, weights, x, capture={"conv2"})


class TestBackward:
    def test_zero_cotangents(self):
        spec, weights = make_toy_with_pool(seed=9)
        x = np.random.default_rng(10).normal(size=(3, 8, 8)).astype(np.float32)
        trace = forward(spec, weights, x, capture={"conv2"})
        g = backward_to_input(spec, weights, trace, {"conv2": np.zeros_like(trace["conv2"])})
        assert np.all(g == 0)

    def test_identity_kernel_masks_by_active_set(self):
        spec = toy_spec(depth=1, channels=3, in_channels=3)
        k = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            k[c, c, 1, 1] = 1.0
        weights = {"conv1": (k, np.zeros(3, dtype=np.float32))}
        x = np.random.default_rng(11).normal(size=(3, 6, 6)).astype(np.float32)
        trace = forward(spec, weights, x, capture={"conv1"})
        g = np.random.default_rng(12).normal(size=(3, 6, 6)).astype(np.float32)
        grad = backward_to_input(spec, weights, trace, {"conv1": g})
        np.testing.assert_array_equal(grad, g * (x > 0))

    def test_cotangent_for_uncaptured_layer_rejected(self):
        spec, weights = make_toy_with_pool()
        x = np.zeros((3, 8, 8), np.float32)
        trace = forward(spec, weights, x, capture={"conv2"})
        with pytest.raises(KeyError):
            backward_to_input(spec, weights, trace, {"conv1": np.zeros((4, 8, 8), np.float32)})

    def test_matches_finite_differences_three_layers(self):
        spec, weights = make_toy_with_pool(seed=13)
        rng = np.random.default_rng(14)
        x = rng.normal(size=(3, 8, 8)).astype(np.float32)
        capture = {"conv1", "conv2"}
        trace = forward(spec, weights, x, capture=capture)
        cots = {name: rng.normal(size=trace[name].shape).astype(np.float32) for name in capture}

        def loss(xx):
            t = forward(spec, weights, xx.astype(np.float32), capture=capture)
            return sum(float(np.sum(t[n].astype(np.float64) * cots[n])) for n in capture)

        analytic = backward_to_input(spec, weights, trace, cots)
        numeric, idx = fd_grad(loss, x, h=1e-3)
        assert rel_err(analytic.reshape(-1)[idx], numeric) < 1e-3

    def test_concurrent_runs_match_sequential(self):
        # Specs and weight stores are shared read-only; each run owns its trace.
        from concurrent.futures import ThreadPoolExecutor

        spec, weights = make_toy_with_pool(seed=17)
        rng = np.random.default_rng(18)
        inputs = [rng.normal(size=(3, 8, 8)).astype(np.float32) for _ in range(4)]
        sequential = [forward(spec, weights, x, {"conv2"})["conv2"] for x in inputs]
        with ThreadPoolExecutor(max_workers=4) as pool:
            threaded = list(pool.map(lambda x: forward(spec, weights, x, {"conv2"})["conv2"], inputs))
        for a, b in zip(sequential, threaded):
            np.testing.assert_array_equal(a, b)

    def test_linear_in_cotangents(self):
        spec, weights = make_toy_with_pool(seed=15)
        rng = np.random.default_rng(16)
        x = rng.normal(size=(3, 8, 8)).astype(np.float32)
        trace = forward(spec, weights, x, capture={"conv2"})
        g1 = rng.normal(size=trace["conv2"].shape).astype(np.float32)
        g2 = rng.normal(size=trace["conv2"].shape).astype(np.float32)
        lhs = backward_to_input(spec, weights, trace, {"conv2": 2.0 * g1 + 0.5 * g2})
        rhs = 2.0 * backward_to_input(spec, weights, trace, {"conv2": g1}) + 0.5 * backward_to_input(
            spec, weights, trace, {"conv2": g2}
        )
        assert rel_err(lhs, rhs) < 1e-5
