import numpy as np
import pytest

from kernelinr.engine.cnn import conv2d_forward, evaluate_accuracy, forward_net
from kernelinr.engine.fixtures import make_blob_dataset, make_tiny_fixture, tiny_netspec
from kernelinr.engine.validator import validate_binding
from kernelinr.engine.weights import apply_permutation, invert_permutation, with_layers
from kernelinr.exceptions import InvalidInputError
from kernelinr.models.network import AvgPoolLayer, ConvLayer, LabeledDataset, LinearLayer, NetSpec, ReluLayer
from kernelinr.models.weights import WeightBundle
from tests.conftest import make_table


def _loop_conv(x, kernels, stride, pad, bias=None):
    """Scalar nested-loop cross-correlation in float32."""
    xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    f, c, k, _ = kernels.shape
    out_h = (xpad.shape[1] - k) // stride + 1
    out_w = (xpad.shape[2] - k) // stride + 1
    out = np.zeros((f, out_h, out_w), dtype=np.float32)
    for fi in range(f):
        for i in range(out_h):
            for j in range(out_w):
                acc = np.float32(0.0)
                for ci in range(c):
                    for u in range(k):
                        for v in range(k):
                            acc += kernels[fi, ci, u, v] * xpad[ci, i * stride + u, j * stride + v]
                if bias is not None:
                    acc += bias[fi]
                out[fi, i, j] = acc
    return out


def _toy_net() -> tuple[NetSpec, WeightBundle]:
    """1x1 conv (x2), relu, pool, linear head [1, -1] with bias [0, 0.5]."""
    spec = NetSpec(
        layers=[
            ConvLayer(filters=1, channels=1, kernel=1, bundle_layer=0),
            ReluLayer(),
            AvgPoolLayer(),
            LinearLayer(in_features=1, out_features=2, weight_blob=0, bias_blob=1),
        ]
    )
    bundle = WeightBundle(
        layers=[np.full((1, 1, 1, 1), 2.0, dtype=np.float32)],
        residuals=[np.array([[1.0], [-1.0]], dtype="<f4").tobytes(), np.array([0.0, 0.5], dtype="<f4").tobytes()],
    )
    return spec, bundle


class TestConv2d:
    def test_matches_loop_oracle_bit_for_bit(self):
        rng = np.random.default_rng(0)
        cases = 0
        while cases < 100:
            c, f = rng.integers(1, 4, size=2)
            k = int(rng.choice([1, 3]))
            stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
            out_side = int(rng.integers(1, 5))
            side = (out_side - 1) * stride + k - 2 * pad
            if side < 1:
                continue
            x = rng.standard_normal((c, side, side)).astype(np.float32)
            kernels = rng.standard_normal((f, c, k, k)).astype(np.float32)
            bias = rng.standard_normal(f).astype(np.float32)
            got = conv2d_forward(x, kernels, stride, pad, bias)
            assert np.array_equal(got, _loop_conv(x, kernels, stride, pad, bias))
            cases += 1

    def test_identity_kernel(self):
        x = np.random.default_rng(1).standard_normal((3, 5, 5)).astype(np.float32)
        kernels = np.eye(3, dtype=np.float32)[:, :, None, None]
        assert np.array_equal(conv2d_forward(x, kernels), x)

    def test_all_ones(self):
        out = conv2d_forward(np.ones((4, 5, 5)), np.ones((2, 4, 3, 3)))
        assert out.shape == (2, 3, 3)
        assert np.all(out == 36.0)

    def test_zero_kernels_give_bias(self):
        out = conv2d_forward(np.ones((2, 4, 4)), np.zeros((3, 2, 3, 3)), pad=1, bias=[1.0, 2.0, 3.0])
        assert out[:, 0, 0].tolist() == [1.0, 2.0, 3.0]

    def test_padding_keeps_size(self):
        assert conv2d_forward(np.ones((1, 6, 6)), np.ones((1, 1, 3, 3)), pad=1).shape == (1, 6, 6)

    def test_non_integer_output_size(self):
        with pytest.raises(InvalidInputError):
            conv2d_forward(np.ones((1, 4, 4)), np.ones((1, 1, 3, 3)), stride=2)

    def test_channel_mismatch(self):
        with pytest.raises(InvalidInputError):
            conv2d_forward(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))


class TestForwardNet:
    def test_toy_net_logits(self):
        spec, bundle = _toy_net()
        assert forward_net(spec, bundle, np.ones((1, 2, 2))).tolist() == [2.0, -1.5]

    def test_unbound_layer_rejected(self):
        spec, bundle = _toy_net()
        extra = with_layers(bundle, list(bundle.layers) + [np.ones((1, 1, 1, 1), dtype=np.float32)])
        with pytest.raises(InvalidInputError):
            forward_net(spec, extra, np.ones((1, 2, 2)))


class TestEvaluateAccuracy:
    def test_toy_dataset(self):
        spec, bundle = _toy_net()
        images = np.stack([np.ones((1, 2, 2)), -np.ones((1, 2, 2))])
        assert evaluate_accuracy(spec, bundle, LabeledDataset(images=images, labels=[0, 1], classes=2)) == 1.0
        assert evaluate_accuracy(spec, bundle, LabeledDataset(images=images, labels=[0, 0], classes=2)) == 0.5

    def test_class_count_mismatch(self):
        spec, bundle = _toy_net()
        dataset = LabeledDataset(images=np.ones((1, 1, 2, 2)), labels=[2], classes=3)
        with pytest.raises(InvalidInputError):
            evaluate_accuracy(spec, bundle, dataset)

    def test_permute_then_invert_is_lossless(self, tiny):
        spec, bundle, dataset = tiny
        rng = np.random.default_rng(0)
        table = make_table(*(rng.permutation(n) for n in bundle.slot_counts))
        restored = apply_permutation(apply_permutation(bundle, table), invert_permutation(table))
        assert evaluate_accuracy(spec, restored, dataset) == bundle.source_accuracy

    def test_scaling_head_keeps_predictions(self, tiny):
        spec, bundle, dataset = tiny
        scaled = [(np.frombuffer(blob, dtype="<f4") * 2.0).astype("<f4").tobytes() for blob in bundle.residuals]
        assert evaluate_accuracy(spec, bundle.model_copy(update={"residuals": scaled}), dataset) == bundle.source_accuracy


class TestTinyFixture:
    def test_binding_is_valid(self, tiny):
        spec, bundle, _ = tiny
        assert validate_binding(spec, bundle).valid

    def test_shapes(self, tiny):
        _, bundle, dataset = tiny
        assert bundle.shapes == [(8, 3, 3, 3), (8, 8, 3, 3), (8, 8, 3, 3)]
        assert dataset.images.shape == (256, 3, 8, 8)

    def test_head_beats_chance(self, tiny):
        spec, bundle, dataset = tiny
        assert bundle.source_accuracy == evaluate_accuracy(spec, bundle, dataset)
        assert bundle.source_accuracy > 0.6

    def test_seeded(self):
        _, a, _ = make_tiny_fixture(seed=3, samples=16)
        _, b, _ = make_tiny_fixture(seed=3, samples=16)
        assert all(np.array_equal(x, y) for x, y in zip(a.layers, b.layers))
        assert a.residuals == b.residuals

    def test_blob_dataset_balanced(self):
        dataset = make_blob_dataset(n=30, classes=3, seed=2)
        assert np.bincount(dataset.labels).tolist() == [10, 10, 10]

    def test_netspec_classes(self):
        assert tiny_netspec(classes=4).classes == 4
